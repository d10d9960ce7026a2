"""Coarse M0 x M0 predictions that seed subdivision.

``oracle_pool`` estimates per-cell area fractions from the analytic scene
(optionally with Gaussian noise to mimic an imperfect head); the
``trained_affine`` head maps per-cell pooled features through an affine
layer and is trained jointly with the point head.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, softmax

from .grid import FeatureMap, ProbGrid
from .rng import numpy_rng
from .scenes import Scene, label_raster

PROB_CLAMP = 1e-7


@dataclass(frozen=True)
class CoarseConfig:
    resolution: int = 7
    mode: str = "oracle_pool"
    noise_sigma: float = 0.0
    supersample: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.resolution < 1 or self.supersample < 1 or self.noise_sigma < 0:
            raise ValueError("invalid coarse head config")
        if self.mode not in ("oracle_pool", "trained_affine"):
            raise ValueError(f"unknown coarse mode {self.mode!r}")


def _area_fractions(scene: Scene, m0: int, s: int, classes) -> np.ndarray:
    # s x s sub-cell centres per coarse cell == label raster at m0 * s
    labels = label_raster(scene, m0 * s).reshape(m0, s, m0, s)
    return np.stack([(labels == c).mean(axis=(1, 3)) for c in classes])


def oracle_coarse(scene: Scene, cfg: CoarseConfig, target_class: int | None = 1,
                  num_classes: int = 2, noise_seed: int = 0) -> ProbGrid:
    """Pooled occupancy on the coarse grid.

    Binary mode (``target_class`` set) returns one channel; otherwise one
    channel per scene class, renormalised onto the simplex after noise.
    """
    m0 = cfg.resolution
    classes = [target_class] if target_class is not None else list(range(num_classes))
    frac = _area_fractions(scene, m0, cfg.supersample, classes)
    if cfg.noise_sigma > 0:
        frac = frac + numpy_rng(cfg.seed, noise_seed).normal(0.0, cfg.noise_sigma, size=frac.shape)
        frac = np.clip(frac, 0.0, 1.0)
        if len(classes) > 1:
            sums = frac.sum(axis=0, keepdims=True)
            frac = np.where(sums > 0, frac / np.where(sums > 0, sums, 1.0), 1.0 / len(classes))
    return ProbGrid(frac)


def pool_features(fine_maps: list[FeatureMap], m0: int) -> np.ndarray:
    """Per-cell channel means, ``(m0 * m0, sum C)`` in row-major cell order.

    Each fine cell is assigned to the coarse cell containing its centre.
    """
    cols = []
    for fm in fine_maps:
        c, h, w = fm.shape
        rows = ((np.arange(h) + 0.5) / h * m0).astype(np.int64)
        cs = ((np.arange(w) + 0.5) / w * m0).astype(np.int64)
        cell = (rows[:, None] * m0 + cs[None, :]).ravel()
        counts = np.bincount(cell, minlength=m0 * m0).astype(np.float64)
        if np.any(counts == 0):
            raise ValueError(f"feature map {h}x{w} is coarser than the {m0}x{m0} coarse grid")
        flat = fm.values.reshape(c, -1)
        sums = np.stack([np.bincount(cell, weights=flat[k], minlength=m0 * m0) for k in range(c)], axis=1)
        cols.append(sums / counts[:, None])
    return np.concatenate(cols, axis=1)


@dataclass
class AffineCoarseParams:
    weight: np.ndarray  # (pooled width, K)
    bias: np.ndarray  # (K,)

    @classmethod
    def zeros(cls, in_width: int, k: int) -> "AffineCoarseParams":
        return cls(np.zeros((in_width, k)), np.zeros(k))

    def arrays(self) -> list[np.ndarray]:
        return [self.weight, self.bias]


def _activate(z: np.ndarray) -> np.ndarray:
    if z.shape[1] == 1:
        return expit(z)
    return softmax(z, axis=1)


def trained_coarse_forward(params: AffineCoarseParams, pooled: np.ndarray, m0: int) -> ProbGrid:
    pooled = np.asarray(pooled, dtype=np.float64)
    if pooled.shape != (m0 * m0, params.weight.shape[0]):
        raise ValueError(f"pooled features {pooled.shape} do not match params {params.weight.shape}")
    p = _activate(pooled @ params.weight + params.bias)
    return ProbGrid(np.clip(p, 0.0, 1.0).T.reshape(-1, m0, m0))


def _targets(gt: ProbGrid) -> np.ndarray:
    """Thresholded ground truth: binary mask for K=1, class index otherwise."""
    v = gt.values
    if gt.classes == 1:
        return (v[0] >= 0.5).astype(np.float64).ravel()
    return v.reshape(gt.classes, -1).argmax(axis=0)


def coarse_loss(pred: ProbGrid, gt: ProbGrid) -> float:
    """Mean per-cell cross-entropy against the thresholded ground truth."""
    if pred.shape != gt.shape:
        raise ValueError(f"coarse shapes differ: {pred.shape} vs {gt.shape}")
    y = _targets(gt)
    if pred.classes == 1:
        p = np.clip(pred.values[0].ravel(), PROB_CLAMP, 1 - PROB_CLAMP)
        return float(np.mean(-(y * np.log(p) + (1 - y) * np.log(1 - p))))
    flat = pred.values.reshape(pred.classes, -1)
    p = np.clip(flat[y, np.arange(flat.shape[1])], PROB_CLAMP, 1 - PROB_CLAMP)
    return float(np.mean(-np.log(p)))


def coarse_loss_and_grad(params: AffineCoarseParams, pooled: np.ndarray, gt: ProbGrid):
    """Loss of the affine head and its gradient ``(d_weight, d_bias)``."""
    m0 = gt.height
    pred = trained_coarse_forward(params, pooled, m0)
    loss = coarse_loss(pred, gt)
    y = _targets(gt)
    n = pooled.shape[0]
    p = pred.values.reshape(pred.classes, -1).T
    if pred.classes == 1:
        dz = (p[:, 0] - y)[:, None]
        live = (p[:, 0] > PROB_CLAMP) & (p[:, 0] < 1 - PROB_CLAMP)
        dz = dz * live[:, None]
    else:
        onehot = np.zeros_like(p)
        onehot[np.arange(n), y] = 1.0
        py = p[np.arange(n), y]
        live = (py > PROB_CLAMP) & (py < 1 - PROB_CLAMP)
        dz = (p - onehot) * live[:, None]
    dz /= n
    return loss, (pooled.T @ dz, dz.sum(axis=0))
