"""Matplotlib figures written next to the CSV outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# no timestamps or version strings, so re-runs give identical files
_META = {"Software": None}


def _save(fig, path):
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)


def plot_loss(path, point_losses, coarse_losses=None):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    steps = np.arange(len(point_losses))
    ax.plot(steps, point_losses, lw=1, label="point head")
    if coarse_losses is not None and np.any(np.asarray(coarse_losses) != 0):
        ax.plot(steps, coarse_losses, lw=1, label="coarse head")
        ax.legend(frameon=False)
    ax.set_xlabel("step")
    ax.set_ylabel("mean loss")
    ax.set_yscale("log")
    fig.tight_layout()
    _save(fig, path)


def plot_refinement(path, history, trace, scene_gt=None):
    """One panel per subdivision level, with the re-predicted cells marked."""
    n = len(history)
    fig, axes = plt.subplots(1, n, figsize=(2.2 * n, 2.4), squeeze=False)
    for i, (ax, grid) in enumerate(zip(axes[0], history)):
        img = grid.values[0] if grid.classes == 1 else grid.values.argmax(axis=0)
        ax.imshow(img, cmap="gray", vmin=0, vmax=1 if grid.classes == 1 else grid.classes - 1,
                  extent=(0, 1, 1, 0), interpolation="nearest")
        if i > 0:
            cells = trace.steps[i - 1].cells
            ys = (cells[:, 0] + 0.5) / grid.height
            xs = (cells[:, 1] + 0.5) / grid.width
            ax.scatter(xs, ys, s=0.5, c="red", linewidths=0)
        if scene_gt is not None and i == n - 1:
            ax.contour(np.linspace(0, 1, scene_gt.shape[1]), np.linspace(0, 1, scene_gt.shape[0]),
                       scene_gt, levels=[0.5], colors="lime", linewidths=0.5)
        ax.set_title(f"{grid.height}x{grid.width}", fontsize=8)
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    _save(fig, path)


def plot_sweep(path, summary_rows):
    """Mean IoU / boundary F against output resolution, per N."""
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(8, 3.2))
    coarse = [r for r in summary_rows if r["method"] == "coarse"]
    for n in sorted({r["N"] for r in summary_rows if r["method"] == "pointrend"}):
        rows = sorted((r for r in summary_rows if r["method"] == "pointrend" and r["N"] == n),
                      key=lambda r: r["resolution"])
        res = [r["resolution"] for r in rows]
        a1.plot(res, [r["mean_iou"] for r in rows], "o-", label=f"N={n}")
        a2.plot(res, [r["mean_boundary_f"] for r in rows], "o-", label=f"N={n}")
    dense = sorted((r for r in summary_rows if r["method"] == "dense"), key=lambda r: r["resolution"])
    if dense:
        a1.plot([r["resolution"] for r in dense], [r["mean_iou"] for r in dense], "s--", label="dense")
        a2.plot([r["resolution"] for r in dense], [r["mean_boundary_f"] for r in dense], "s--", label="dense")
    for r in coarse:
        a1.axhline(r["mean_iou"], color="gray", ls=":", label="coarse")
        a2.axhline(r["mean_boundary_f"], color="gray", ls=":", label="coarse")
    for ax, name in ((a1, "mean IoU"), (a2, "mean boundary F")):
        ax.set_xscale("log", base=2)
        ax.set_xlabel("output resolution")
        ax.set_ylabel(name)
    a1.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def plot_ablation(path, rows):
    names = [r["strategy"] for r in rows]
    x = np.arange(len(rows))
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.bar(x - 0.2, [r["mean_iou"] for r in rows], 0.4, label="IoU")
    ax.bar(x + 0.2, [r["mean_boundary_f"] for r in rows], 0.4, label="boundary F")
    ax.set_xticks(x)
    ax.set_xticklabels(names)
    ax.set_ylim(0, 1)
    ax.legend(frameon=False, loc="lower right")
    fig.tight_layout()
    _save(fig, path)


def plot_sampling(path, coarse, point_sets: dict):
    """Training point sets drawn by several strategies over one coarse prediction."""
    n = len(point_sets)
    fig, axes = plt.subplots(1, n, figsize=(2.4 * n, 2.6), squeeze=False)
    img = coarse.values[0] if coarse.classes == 1 else coarse.values.max(axis=0)
    for ax, (name, pts) in zip(axes[0], point_sets.items()):
        ax.imshow(img, cmap="gray", vmin=0, vmax=1, extent=(0, 1, 1, 0), interpolation="bilinear")
        ax.scatter(pts[:, 0], pts[:, 1], s=3, c="red", linewidths=0)
        ax.set_title(name, fontsize=8)
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    _save(fig, path)
