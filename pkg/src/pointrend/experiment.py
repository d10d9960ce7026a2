"""Dataset construction, training and evaluation pipelines shared by the CLI."""

from __future__ import annotations

import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .coarse import AffineCoarseParams, CoarseConfig, oracle_coarse, pool_features, trained_coarse_forward
from .config import ExperimentConfig
from .grid import ProbGrid, upsample_to
from .head import PointHeadParams, TrainResult, TrainSample, init_params, train
from .metrics import binarize, boundary_f, iou, multiclass_miou
from .rng import derive_seed
from .scenes import Scene, generate_dataset, label_raster, rasterize, synth_features
from .subdivision import HeadPredictor, SubdivisionConfig, dense_infer, subdivide_infer

STRATEGIES = {
    "regular": {"sampler.strategy": "regular", "sampler.k": 1.0, "sampler.beta": 0.0},
    "uniform": {"sampler.strategy": "biased", "sampler.k": 1.0, "sampler.beta": 0.0},
    "mild": {"sampler.strategy": "biased", "sampler.k": 3.0, "sampler.beta": 0.75},
    "heavy": {"sampler.strategy": "biased", "sampler.k": 10.0, "sampler.beta": 1.0},
}


def _map(fn, items, threads: int):
    """Ordered map, optionally on a thread pool."""
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def scenes_for(cfg: ExperimentConfig, split: str) -> list[Scene]:
    count = cfg["data.train_count"] if split == "train" else cfg["data.test_count"]
    return generate_dataset(count, cfg["data.classes"], cfg["data.shape_mix"], cfg.seed(f"{split}_scenes"),
                            (cfg["data.shapes_min"], cfg["data.shapes_max"]))


@dataclass
class Region:
    scene_id: int
    scene: Scene
    fine_maps: list
    coarse: ProbGrid  # oracle coarse prediction (possibly noisy)
    coarse_target: ProbGrid  # noise-free pooled occupancy
    pooled: np.ndarray | None = None

    def as_train_sample(self) -> TrainSample:
        return TrainSample(self.scene, self.fine_maps, self.coarse, self.coarse_target, self.pooled)


def build_region(cfg: ExperimentConfig, scene: Scene, scene_id: int, split: str, trial: int = 0) -> Region:
    split_tag = 0 if split == "train" else 1
    # fine features are class-agnostic: the sign marks any object
    fine = synth_features(scene, cfg.features(), derive_seed(cfg.seed("features"), split_tag, scene_id),
                          None, cfg["data.classes"])
    ccfg = cfg.coarse(trial)
    noise_seed = derive_seed(split_tag, scene_id)
    coarse = oracle_coarse(scene, ccfg, cfg.target_class, cfg["data.classes"], noise_seed)
    clean = CoarseConfig(ccfg.resolution, "oracle_pool", 0.0, ccfg.supersample)
    target = oracle_coarse(scene, clean, cfg.target_class, cfg["data.classes"])
    pooled = pool_features(fine, ccfg.resolution) if ccfg.mode == "trained_affine" else None
    return Region(scene_id, scene, fine, coarse, target, pooled)


def build_regions(cfg: ExperimentConfig, split: str, trial: int = 0, threads: int = 1,
                  scenes: list[Scene] | None = None) -> list[Region]:
    scenes = scenes_for(cfg, split) if scenes is None else scenes
    return _map(lambda item: build_region(cfg, item[1], item[0], split, trial), list(enumerate(scenes)), threads)


def initial_coarse_params(cfg: ExperimentConfig) -> AffineCoarseParams | None:
    if cfg["coarse.mode"] != "trained_affine":
        return None
    width = cfg.head().fine_channels
    return AffineCoarseParams.zeros(width, cfg.prob_channels)


def train_head(cfg: ExperimentConfig, regions: list[Region], threads: int = 1) -> TrainResult:
    params = init_params(cfg.head(), cfg.seed("init"))
    return train(params, [r.as_train_sample() for r in regions], cfg.train(), cfg.target_class,
                 initial_coarse_params(cfg), threads)


def region_coarse(region: Region, coarse_params: AffineCoarseParams | None) -> ProbGrid:
    if coarse_params is None:
        return region.coarse
    pooled = region.pooled if region.pooled is not None else pool_features(region.fine_maps, region.coarse.height)
    return trained_coarse_forward(coarse_params, pooled, region.coarse.height)


def ground_truth(cfg: ExperimentConfig, scene: Scene, m: int) -> np.ndarray:
    if cfg.target_class is not None:
        return rasterize(scene, m, cfg.target_class)
    return label_raster(scene, m)


def to_mask(cfg: ExperimentConfig, grid: ProbGrid) -> np.ndarray:
    """Binary mask (binary task) or argmax label map (semantic task)."""
    if cfg.target_class is not None:
        return binarize(grid.values[0])
    return grid.values.argmax(axis=0)


def score(cfg: ExperimentConfig, pred: np.ndarray, gt: np.ndarray) -> tuple[float, float]:
    d = cfg["bench.boundary_tolerance"]
    if cfg.target_class is not None:
        return iou(pred, gt), boundary_f(pred, gt, d)
    k = cfg["data.classes"]
    classes = [c for c in range(1, k) if np.any(gt == c) or np.any(pred == c)]
    bf = float(np.mean([boundary_f(pred == c, gt == c, d) for c in classes])) if classes else 1.0
    return multiclass_miou(pred, gt, k), bf


def predict(cfg: ExperimentConfig, method: str, region: Region, params: PointHeadParams | None,
            coarse_params: AffineCoarseParams | None, m: int, n: int):
    """Output grid at resolution ``m`` and the number of point evaluations."""
    coarse = region_coarse(region, coarse_params)
    if method == "coarse":
        return upsample_to(coarse, m), 0
    predictor = HeadPredictor(params)
    if method == "dense":
        return dense_infer(predictor, region.fine_maps, coarse, m), m * m
    if method == "pointrend":
        grid, trace = subdivide_infer(coarse, predictor, region.fine_maps, SubdivisionConfig(m, n))
        return grid, trace.total_evaluations
    raise ValueError(f"unknown method {method!r}")


def evaluate(cfg: ExperimentConfig, regions: list[Region], params: PointHeadParams | None,
             coarse_params: AffineCoarseParams | None = None, methods=None, resolutions=None,
             points=None, threads: int = 1, trial: int = 0) -> list[dict]:
    """Metric rows per (scene, method, resolution, N), in deterministic order."""
    methods = methods or cfg["bench.methods"]
    resolutions = resolutions or cfg["bench.resolutions"]
    points = points or cfg["bench.points"]
    eval_m = cfg["bench.eval_resolution"]
    madds = params.config.madds_per_point() if params is not None else 0
    combos = []
    for method in methods:
        if method == "coarse":
            combos.append((method, cfg["coarse.resolution"], 0))
            continue
        for m in resolutions:
            for n in (points if method == "pointrend" else (0,)):
                combos.append((method, m, n))

    def run(region: Region) -> list[dict]:
        gt = ground_truth(cfg, region.scene, eval_m)
        rows = []
        for method, m, n in combos:
            grid, evals = predict(cfg, method, region, params, coarse_params, m, n)
            pred = to_mask(cfg, upsample_to(grid, eval_m))
            a, b = score(cfg, pred, gt)
            rows.append({"scene_id": region.scene_id, "method": method, "resolution": m, "N": n,
                         "iou": a, "boundary_f": b, "evals": evals, "madds": evals * madds, "trial": trial})
        return rows

    out = []
    for rows in _map(run, regions, threads):
        out.extend(rows)
    return out


def summarize(rows: list[dict]) -> list[dict]:
    """Per-configuration means, with the median taken over trials."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["method"], r["resolution"], r["N"]), {}).setdefault(r["trial"], []).append(r)
    out = []
    for (method, m, n), trials in groups.items():
        per = [(np.mean([r["iou"] for r in rs]), np.mean([r["boundary_f"] for r in rs]),
                np.mean([r["evals"] for r in rs]), np.mean([r["madds"] for r in rs])) for rs in trials.values()]
        out.append({"method": method, "resolution": m, "N": n,
                    "mean_iou": float(statistics.median(p[0] for p in per)),
                    "mean_boundary_f": float(statistics.median(p[1] for p in per)),
                    "mean_evals": float(statistics.median(p[2] for p in per)),
                    "mean_madds": float(statistics.median(p[3] for p in per)),
                    "scenes": len(next(iter(trials.values()))), "trials": len(trials)})
    return out
