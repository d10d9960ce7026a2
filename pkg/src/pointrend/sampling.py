"""Uncertainty scores and point selection for inference and training."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import PROB_SUM_TOL, ProbGrid, bilinear_sample
from .rng import Xoshiro256


@dataclass(frozen=True)
class SamplerConfig:
    """Training point sampler.

    ``strategy="biased"`` is the over-generate / importance / coverage
    sampler driven by ``oversample_k`` and ``importance_beta``;
    ``strategy="regular"`` ignores both and returns a square lattice.
    """

    n_points: int = 196
    oversample_k: float = 3.0
    importance_beta: float = 0.75
    strategy: str = "biased"

    def __post_init__(self):
        if self.n_points < 1:
            raise ValueError("n_points must be positive")
        if self.strategy not in ("biased", "regular"):
            raise ValueError(f"unknown sampler strategy {self.strategy!r}")
        if self.strategy == "regular":
            if math.isqrt(self.n_points) ** 2 != self.n_points:
                raise ValueError("regular sampling needs a perfect-square n_points")
            return
        if self.oversample_k < 1:
            raise ValueError("oversample_k must be >= 1")
        if not 0.0 <= self.importance_beta <= 1.0:
            raise ValueError("importance_beta must lie in [0, 1]")
        if self.n_importance > 0 and self.n_candidates < self.n_points:
            raise ValueError("floor(k*N) must be at least N when beta > 0")

    @property
    def n_candidates(self) -> int:
        return math.floor(self.oversample_k * self.n_points)

    @property
    def n_importance(self) -> int:
        # round half up
        return math.floor(self.importance_beta * self.n_points + 0.5)

    @property
    def n_coverage(self) -> int:
        return self.n_points - self.n_importance


@dataclass(frozen=True, eq=False)
class UncertaintyMap:
    scores: np.ndarray  # (H, W), larger = more uncertain

    @property
    def height(self) -> int:
        return self.scores.shape[0]

    @property
    def width(self) -> int:
        return self.scores.shape[1]


def uncertainty_binary(p):
    """``0.5 - |p - 0.5|``; works on scalars and arrays."""
    arr = np.asarray(p, dtype=np.float64)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError("probability outside [0, 1]")
    out = 0.5 - np.abs(arr - 0.5)
    return float(out) if out.ndim == 0 else out


def uncertainty_multiclass(probs, axis: int = -1):
    """Negated gap between the two most confident classes.

    ``probs`` holds class probabilities along ``axis``.
    """
    arr = np.asarray(probs, dtype=np.float64)
    if arr.shape[axis] < 2:
        raise ValueError("multiclass uncertainty needs at least two classes")
    if np.abs(arr.sum(axis=axis) - 1.0).max() > PROB_SUM_TOL:
        raise ValueError("class probabilities are not on the simplex")
    top2 = -np.partition(-arr, 1, axis=axis)
    first = np.take(top2, 0, axis=axis)
    second = np.take(top2, 1, axis=axis)
    out = -(first - second)
    return float(out) if out.ndim == 0 else out


def score_probs(probs: np.ndarray, class_index: int | None = None) -> np.ndarray:
    """Uncertainty for an ``(n, K)`` array of per-point probabilities."""
    probs = np.asarray(probs, dtype=np.float64)
    k = probs.shape[1]
    if class_index is not None:
        if not 0 <= class_index < k:
            raise ValueError(f"class index {class_index} out of range for K={k}")
        return uncertainty_binary(probs[:, class_index])
    if k == 1:
        return uncertainty_binary(probs[:, 0])
    return uncertainty_multiclass(probs, axis=1)


def uncertainty_map(grid: ProbGrid, gt_class: int | None = None) -> UncertaintyMap:
    k, h, w = grid.shape
    flat = grid.values.reshape(k, -1).T
    return UncertaintyMap(np.asarray(score_probs(flat, gt_class)).reshape(h, w))


def select_top_n(umap: UncertaintyMap, n: int) -> np.ndarray:
    """The ``min(n, H*W)`` most uncertain cells as an ``(m, 2)`` array of (row, col).

    Sorted by descending score, ties by ascending row-major index.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    flat = umap.scores.reshape(-1)
    m = min(n, flat.size)
    order = np.argsort(-flat, kind="stable")[:m]
    return np.stack([order // umap.width, order % umap.width], axis=1).astype(np.int64)


def regular_grid_points(n: int) -> np.ndarray:
    side = math.isqrt(n) if n >= 0 else -1
    if n < 1 or side * side != n:
        raise ValueError(f"regular grid needs a positive perfect square, got {n}")
    c = (np.arange(side) + 0.5) / side
    xs, ys = np.meshgrid(c, c)
    return np.stack([xs.ravel(), ys.ravel()], axis=1)


def sample_training_points(coarse: ProbGrid, cfg: SamplerConfig, gt_class: int | None = None,
                           rng_seed: int | Xoshiro256 = 0) -> np.ndarray:
    """Draw ``cfg.n_points`` training points biased towards uncertain coarse cells.

    Candidates are scored on the bilinearly interpolated coarse prediction.
    The retained importance points keep their draw order and precede the
    uniform coverage points.
    """
    if cfg.strategy == "regular":
        return regular_grid_points(cfg.n_points)
    rng = rng_seed if isinstance(rng_seed, Xoshiro256) else Xoshiro256(rng_seed)
    parts = []
    n_imp = cfg.n_importance
    if n_imp > 0:
        cand = rng.uniform_points(cfg.n_candidates)
        scores = score_probs(bilinear_sample(coarse, cand), gt_class)
        keep = np.sort(np.argsort(-scores, kind="stable")[:n_imp])
        parts.append(cand[keep])
    if cfg.n_coverage > 0:
        parts.append(rng.uniform_points(cfg.n_coverage))
    return np.concatenate(parts, axis=0)

