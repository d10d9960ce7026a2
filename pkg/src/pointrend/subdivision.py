"""Adaptive subdivision inference with point-evaluation accounting."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import ProbGrid, bilinear_upsample_x2, cell_centers, scatter
from .head import PointHeadParams, assemble_point_features, forward
from .sampling import select_top_n, uncertainty_map
from .scenes import Scene


def _log2_ratio(m0: int, m: int) -> int:
    if m0 < 1 or m < m0 or m % m0:
        raise ValueError(f"target {m} is not a power-of-two multiple of {m0}")
    ratio = m // m0
    if ratio & (ratio - 1):
        raise ValueError(f"target {m} is not a power-of-two multiple of {m0}")
    return ratio.bit_length() - 1


def point_budget(m0: int, m: int, n: int) -> tuple[int, int]:
    """Steps and the maximum number of point predictions to go from m0 to m."""
    steps = _log2_ratio(m0, m)
    return steps, sum(min(n, (m0 * 2 ** i) ** 2) for i in range(1, steps + 1))


@dataclass(frozen=True)
class SubdivisionConfig:
    target_resolution: int = 224
    points_per_step: int = 784

    def __post_init__(self):
        if self.points_per_step < 1 or self.target_resolution < 1:
            raise ValueError("invalid subdivision config")


@dataclass
class StepRecord:
    step: int
    grid_h: int
    grid_w: int
    candidates: int
    evaluated: int
    min_uncertainty: float
    max_uncertainty: float
    cells: np.ndarray = field(repr=False, default=None)


@dataclass
class SubdivisionTrace:
    madds_per_point: int = 0
    steps: list = field(default_factory=list)

    @property
    def total_evaluations(self) -> int:
        return sum(s.evaluated for s in self.steps)

    @property
    def total_madds(self) -> int:
        return self.total_evaluations * self.madds_per_point

    def rows(self) -> list[dict]:
        out, cum = [], 0
        for s in self.steps:
            cum += s.evaluated
            out.append({"step": s.step, "grid_h": s.grid_h, "grid_w": s.grid_w, "evaluated": s.evaluated,
                        "cum_evaluated": cum, "cum_madds": cum * self.madds_per_point})
        return out

    def to_csv(self, config_hash: str | None = None) -> str:
        cols = ["step", "grid_h", "grid_w", "evaluated", "cum_evaluated", "cum_madds"]
        if config_hash is not None:
            cols.append("config_hash")
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        writer.writeheader()
        for row in self.rows():
            if config_hash is not None:
                row["config_hash"] = config_hash
            writer.writerow(row)
        return buf.getvalue()


class HeadPredictor:
    """Point predictor backed by a trained point head."""

    needs_features = True

    def __init__(self, params: PointHeadParams):
        self.params = params
        self.madds_per_point = params.config.madds_per_point()

    def __call__(self, pts: np.ndarray, features: np.ndarray) -> np.ndarray:
        return forward(self.params, features)


class OraclePredictor:
    """Exact scene occupancy as a (binary or one-hot) point predictor."""

    needs_features = False
    madds_per_point = 0

    def __init__(self, scene: Scene, target_class: int | None = 1, num_classes: int = 2):
        self.scene = scene
        self.target_class = target_class
        self.num_classes = num_classes

    def __call__(self, pts: np.ndarray, features=None) -> np.ndarray:
        labels = self.scene.labels(pts)
        if self.target_class is not None:
            return (labels == self.target_class).astype(np.float64)[:, None]
        return np.eye(self.num_classes)[labels]


def _predict(predictor, pts, fine_maps, coarse):
    feats = None
    if getattr(predictor, "needs_features", True):
        feats = assemble_point_features(fine_maps, coarse, pts)
    probs = np.asarray(predictor(pts, feats), dtype=np.float64)
    if probs.shape != (len(pts), coarse.classes):
        raise ValueError(f"predictor returned {probs.shape}, expected {(len(pts), coarse.classes)}")
    return np.clip(probs, 0.0, 1.0)


def subdivide_infer(coarse: ProbGrid, predictor, fine_maps, cfg: SubdivisionConfig,
                    class_index: int | None = None, keep_steps: bool = False):
    """Refine ``coarse`` to ``cfg.target_resolution`` by adaptive subdivision.

    Returns ``(grid, trace)``; with ``keep_steps`` also the grid after every
    step. Point features always read the original coarse grid.
    """
    if coarse.height != coarse.width:
        raise ValueError("coarse grid must be square")
    steps, _ = point_budget(coarse.height, cfg.target_resolution, cfg.points_per_step)
    trace = SubdivisionTrace(madds_per_point=getattr(predictor, "madds_per_point", 0))
    grid = coarse
    history = [grid]
    for t in range(1, steps + 1):
        grid = bilinear_upsample_x2(grid)
        umap = uncertainty_map(grid, class_index)
        cells = select_top_n(umap, cfg.points_per_step)
        pts = cell_centers(cells, grid.height, grid.width)
        probs = _predict(predictor, pts, fine_maps, coarse)
        grid = scatter(grid, cells, probs)
        picked = umap.scores[cells[:, 0], cells[:, 1]]
        trace.steps.append(StepRecord(t, grid.height, grid.width, grid.height * grid.width, len(cells),
                                      float(picked.min()) if len(picked) else math.nan,
                                      float(picked.max()) if len(picked) else math.nan, cells))
        history.append(grid)
    if keep_steps:
        return grid, trace, history
    return grid, trace


def dense_infer(predictor, fine_maps, coarse: ProbGrid, m: int) -> ProbGrid:
    """Evaluate the predictor at every cell centre of an ``m x m`` grid."""
    if m < 1:
        raise ValueError("resolution must be positive")
    rr, cc = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    cells = np.stack([rr.ravel(), cc.ravel()], axis=1)
    probs = _predict(predictor, cell_centers(cells, m, m), fine_maps, coarse)
    return ProbGrid(probs.T.reshape(coarse.classes, m, m))
