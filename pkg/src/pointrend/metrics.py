"""Mask quality metrics: IoU, boundary F-score and multiclass mIoU."""

from __future__ import annotations

import numpy as np
from scipy import ndimage


def binarize(probs, threshold: float = 0.5) -> np.ndarray:
    """Foreground where ``p >= threshold`` (exact 0.5 counts as foreground)."""
    return np.asarray(probs) >= threshold


def _pair(pred, gt):
    pred = np.asarray(pred).astype(bool)
    gt = np.asarray(gt).astype(bool)
    if pred.shape != gt.shape:
        raise ValueError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    return pred, gt


def iou(pred, gt) -> float:
    pred, gt = _pair(pred, gt)
    union = np.count_nonzero(pred | gt)
    if union == 0:
        return 1.0
    return np.count_nonzero(pred & gt) / union


def boundary(mask) -> np.ndarray:
    """Mask cells with a 4-neighbour outside the mask.

    Cells beyond the grid edge are not treated as background.
    """
    m = np.asarray(mask).astype(bool)
    if m.ndim == 1:
        m = m[None, :]
    padded = np.pad(m, 1, mode="edge")
    interior = (padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:])
    return m & ~interior


def _within(src: np.ndarray, dst: np.ndarray, d: float) -> int:
    """Number of ``src`` cells within Chebyshev distance ``d`` of any ``dst`` cell."""
    if np.isinf(d):
        return int(np.count_nonzero(src)) if dst.any() else 0
    r = int(np.floor(d))
    reach = ndimage.maximum_filter(dst.astype(np.uint8), size=2 * r + 1, mode="constant", cval=0) > 0
    return int(np.count_nonzero(src & reach))


def boundary_f(pred, gt, d: float = 1) -> float:
    """Boundary F-score with a Chebyshev pixel tolerance ``d``."""
    if d < 0:
        raise ValueError("tolerance must be non-negative")
    pred, gt = _pair(pred, gt)
    bp = boundary(pred)
    bg = boundary(gt)
    n_p, n_g = np.count_nonzero(bp), np.count_nonzero(bg)
    if n_p == 0 and n_g == 0:
        return 1.0
    if n_p == 0 or n_g == 0:
        return 0.0
    precision = _within(bp, bg, d) / n_p
    recall = _within(bg, bp, d) / n_g
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def multiclass_miou(pred, gt, num_classes: int) -> float:
    """Mean IoU over the classes present in ``gt``."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"label map shapes differ: {pred.shape} vs {gt.shape}")
    present = [k for k in range(num_classes) if np.any(gt == k)]
    if not present:
        return 1.0
    return float(np.mean([iou(pred == k, gt == k) for k in present]))
