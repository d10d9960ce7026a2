"""Dense 2-D multi-channel grids and bilinear point sampling.

Coordinates are normalised to [0, 1]^2 with x running left to right and y
top to bottom. Cell ``(row, col)`` of an ``H x W`` grid is centred at
``((col + 0.5) / W, (row + 0.5) / H)``. Queries outside the lattice of cell
centres are clamped onto it, so a 1x1 grid is constant everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROB_SUM_TOL = 1e-5
PROB_RENORM_LIMIT = 1e-3


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """``C x H x W`` real-valued grid stored channel-major, row-major."""

    values: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.values)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ValueError(f"feature map must be a non-empty (C, H, W) array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature map values must be finite")
        object.__setattr__(self, "values", arr)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape


@dataclass(frozen=True, eq=False)
class ProbGrid:
    """``K x H x W`` probability grid.

    ``K == 1`` holds an independent foreground probability. For ``K > 1``
    every pixel lies on the probability simplex within ``PROB_SUM_TOL``.
    """

    values: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.values)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ValueError(f"probability grid must be a non-empty (K, H, W) array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("probabilities must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        if arr.shape[0] > 1:
            dev = np.abs(arr.sum(axis=0) - 1.0).max()
            if dev > PROB_SUM_TOL:
                raise ValueError(f"class probabilities do not sum to 1 (max deviation {dev:.3g})")
        object.__setattr__(self, "values", arr)

    @classmethod
    def from_unnormalized(cls, values) -> "ProbGrid":
        """Renormalise per-pixel sums that drifted by at most ``PROB_RENORM_LIMIT``."""
        arr = np.array(values, dtype=np.float64)
        if arr.ndim == 3 and arr.shape[0] > 1:
            sums = arr.sum(axis=0)
            if np.abs(sums - 1.0).max() > PROB_RENORM_LIMIT:
                raise ValueError("class probabilities deviate from the simplex by more than 1e-3")
            arr = np.clip(arr / sums, 0.0, 1.0)
        return cls(arr)

    @property
    def classes(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape


def cell_center(row: int, col: int, height: int, width: int) -> tuple[float, float]:
    if not (0 <= row < height and 0 <= col < width):
        raise IndexError(f"cell ({row}, {col}) outside a {height}x{width} grid")
    return ((col + 0.5) / width, (row + 0.5) / height)


def cell_centers(cells, height: int, width: int) -> np.ndarray:
    """Vectorised :func:`cell_center` for an ``(n, 2)`` array of ``(row, col)``."""
    cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
    if cells.size and (cells.min() < 0 or np.any(cells[:, 0] >= height) or np.any(cells[:, 1] >= width)):
        raise IndexError("cell index outside grid")
    pts = np.empty((len(cells), 2), dtype=np.float64)
    pts[:, 0] = (cells[:, 1] + 0.5) / width
    pts[:, 1] = (cells[:, 0] + 0.5) / height
    return pts


def as_points(pts) -> np.ndarray:
    arr = np.asarray(pts, dtype=np.float64)
    if arr.size == 0:
        return arr.reshape(0, 2)
    arr = arr.reshape(-1, 2)
    if not np.all(np.isfinite(arr)):
        raise ValueError("point coordinates must be finite")
    return arr


def _axis_weights(coord: np.ndarray, size: int):
    # continuous pixel coordinate, clamped to the lattice of cell centres
    u = np.clip(coord * size - 0.5, 0.0, size - 1.0)
    i0 = np.minimum(np.floor(u).astype(np.int64), max(size - 2, 0))
    frac = u - i0
    i1 = np.minimum(i0 + 1, size - 1)
    return i0, i1, frac


def bilinear_sample(grid, pts) -> np.ndarray:
    """Sample a FeatureMap/ProbGrid (or raw ``(C,H,W)`` array) at points.

    Returns an ``(n, C)`` array in the order of ``pts``.
    """
    values = grid.values if hasattr(grid, "values") else np.asarray(grid, dtype=np.float64)
    if values.ndim != 3 or values.size == 0:
        raise ValueError("cannot sample an empty grid")
    pts = as_points(pts)
    _, h, w = values.shape
    x0, x1, fx = _axis_weights(pts[:, 0], w)
    y0, y1, fy = _axis_weights(pts[:, 1], h)
    v00 = values[:, y0, x0]
    v01 = values[:, y0, x1]
    v10 = values[:, y1, x0]
    v11 = values[:, y1, x1]
    top = v00 + (v01 - v00) * fx
    bottom = v10 + (v11 - v10) * fx
    return (top + (bottom - top) * fy).T


def _upsample_axis(values: np.ndarray, axis: int) -> np.ndarray:
    size = values.shape[axis]
    out_coords = (np.arange(2 * size) + 0.5) / (2 * size)
    i0, i1, frac = _axis_weights(out_coords, size)
    a = np.take(values, i0, axis=axis)
    b = np.take(values, i1, axis=axis)
    shape = [1] * values.ndim
    shape[axis] = -1
    return a + (b - a) * frac.reshape(shape)


def bilinear_upsample_x2(grid: ProbGrid) -> ProbGrid:
    """Double both grid dimensions by sampling at the new cell centres."""
    up = _upsample_axis(_upsample_axis(grid.values, 2), 1)
    up = np.clip(up, 0.0, 1.0)
    return ProbGrid(up)


def upsample_to(grid: ProbGrid, size: int) -> ProbGrid:
    """Repeated x2 upsampling until ``size``; must be ``grid size * 2**j``."""
    while grid.height < size:
        grid = bilinear_upsample_x2(grid)
    if grid.height != size or grid.width != size:
        raise ValueError(f"cannot reach {size}x{size} by doubling a {grid.height}x{grid.width} grid")
    return grid


def scatter(grid: ProbGrid, cells, values) -> ProbGrid:
    """Return a copy of ``grid`` with the listed cells replaced by ``values``."""
    cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
    vals = np.asarray(values, dtype=np.float64).reshape(len(cells), -1) if len(cells) else np.zeros((0, grid.classes))
    if len(cells) == 0:
        return grid
    if vals.shape != (len(cells), grid.classes):
        raise ValueError(f"expected {len(cells)}x{grid.classes} values, got {vals.shape}")
    k, h, w = grid.shape
    if cells.min() < 0 or np.any(cells[:, 0] >= h) or np.any(cells[:, 1] >= w):
        raise IndexError("scatter cell outside grid")
    flat = cells[:, 0] * w + cells[:, 1]
    if len(np.unique(flat)) != len(flat):
        raise ValueError("duplicate cells in scatter")
    out = grid.values.copy()
    out[:, cells[:, 0], cells[:, 1]] = vals.T
    return ProbGrid(out)


def concat_features(a, b) -> np.ndarray:
    """Per-point concatenation, ``a``'s channels first."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if b.ndim == 1:
        b = b.reshape(-1, 1)
    if len(a) != len(b):
        raise ValueError(f"point count mismatch: {len(a)} vs {len(b)}")
    return np.concatenate([a, b], axis=1)
