"""Command-line entry point: gen, train, refine, bench, ablate.

Exit codes: 0 success, 2 configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiment as ex
from .config import ConfigError, ExperimentConfig, describe_keys
from .fileio import FormatError, save_feature_maps, save_prob_grid, write_pgm, write_ppm
from .head import load_checkpoint, save_checkpoint
from .metrics import binarize
from .sampling import sample_training_points
from .scenes import load_scene, save_scene
from .subdivision import HeadPredictor, OraclePredictor, SubdivisionConfig, subdivide_infer

log = logging.getLogger("pointrend")

EXIT_CONFIG = 2
EXIT_IO = 3


def _write_csv(path: Path, rows: list[dict], cfg: ExperimentConfig, columns: list[str]) -> None:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns + ["config_hash"], lineterminator="\n",
                            extrasaction="ignore")
    writer.writeheader()
    h = cfg.config_hash()
    for row in rows:
        writer.writerow({**{k: _fmt(v) for k, v in row.items()}, "config_hash": h})
    path.write_text(buf.getvalue())


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.defaults()
    if args.seed is not None:
        cfg = cfg.with_values({"seed": args.seed})
    return cfg


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen(args, cfg: ExperimentConfig) -> None:
    out = _out(args)
    for sub in ("scenes", "features", "coarse"):
        (out / sub).mkdir(exist_ok=True)
    manifest = []
    for split in ("train", "test"):
        regions = ex.build_regions(cfg, split, threads=args.threads)
        for r in regions:
            stem = f"{split}_{r.scene_id:05d}"
            save_scene(out / "scenes" / f"{stem}.txt", r.scene)
            save_feature_maps(out / "features" / f"{stem}.srt", r.fine_maps)
            save_prob_grid(out / "coarse" / f"{stem}.srt", r.coarse)
            manifest.append(f"{split} {r.scene_id} scenes/{stem}.txt features/{stem}.srt coarse/{stem}.srt")
    (out / "manifest.txt").write_text("".join(line + "\n" for line in manifest))
    (out / "config.txt").write_text(cfg.dump())
    log.info("wrote %d scenes to %s", len(manifest), out)


def cmd_train(args, cfg: ExperimentConfig) -> None:
    out = _out(args)
    regions = ex.build_regions(cfg, "train", threads=args.threads)
    result = ex.train_head(cfg, regions, threads=args.threads)
    save_checkpoint(out / "checkpoint.ckpt", result.params, result.coarse_params)
    rows = [{"step": i, "point_loss": a, "coarse_loss": b, "total_loss": a + b}
            for i, (a, b) in enumerate(zip(result.point_losses, result.coarse_losses))]
    _write_csv(out / "loss.csv", rows, cfg, ["step", "point_loss", "coarse_loss", "total_loss"])
    (out / "config.txt").write_text(cfg.dump())
    if not args.no_figures and rows:
        from .plotting import plot_loss

        plot_loss(out / "loss.png", result.point_losses, result.coarse_losses)
    log.info("trained %d steps; checkpoint at %s", len(rows), out / "checkpoint.ckpt")


def _overlay(grid, cells) -> np.ndarray:
    prob = grid.values[0] if grid.classes == 1 else grid.values.max(axis=0)
    gray = np.round(prob * 200).astype(np.uint8)
    rgb = np.stack([gray, gray, gray], axis=-1)
    if cells is not None and len(cells):
        rgb[cells[:, 0], cells[:, 1]] = (255, 0, 0)
    return rgb


def cmd_refine(args, cfg: ExperimentConfig) -> None:
    out = _out(args)
    try:
        scene = load_scene(args.scene)
    except ValueError as exc:
        raise FormatError(f"{args.scene}: {exc}") from exc
    m = args.resolution or cfg["subdiv.resolution"]
    n = args.points or cfg["subdiv.points"]
    region = ex.build_region(cfg, scene, 0, "test")
    if args.predictor == "oracle":
        predictor = OraclePredictor(scene, cfg.target_class, cfg["data.classes"])
        coarse = region.coarse
    else:
        if not args.checkpoint:
            raise ConfigError("refine with the head predictor needs --checkpoint")
        params, coarse_params = load_checkpoint(args.checkpoint)
        if params.config.in_width != cfg.head().in_width:
            raise ConfigError("checkpoint does not match the configured feature layout")
        predictor = HeadPredictor(params)
        coarse = ex.region_coarse(region, coarse_params)
    grid, trace, history = subdivide_infer(coarse, predictor, region.fine_maps, SubdivisionConfig(m, n),
                                           keep_steps=True)
    write_pgm(out / "coarse.pgm", _mask_image(cfg, coarse))
    for i, g in enumerate(history[1:], start=1):
        write_pgm(out / f"step_{i}.pgm", _mask_image(cfg, g))
    write_pgm(out / "mask.pgm", _mask_image(cfg, grid))
    last = trace.steps[-1].cells if trace.steps else None
    write_ppm(out / "overlay.ppm", _overlay(grid, last))
    (out / "trace.csv").write_text(trace.to_csv(cfg.config_hash()))
    if not args.no_figures:
        from .plotting import plot_refinement

        plot_refinement(out / "refine.png", history, trace, ex.ground_truth(cfg, scene, m) if
                        cfg.target_class is not None else None)
    log.info("refined to %dx%d with %d point evaluations", m, m, trace.total_evaluations)


def _mask_image(cfg: ExperimentConfig, grid) -> np.ndarray:
    if grid.classes == 1:
        return binarize(grid.values[0])
    labels = grid.values.argmax(axis=0)
    return (labels * (255 // max(1, grid.classes - 1))).astype(np.uint8)


SUMMARY_COLUMNS = ["method", "resolution", "N", "mean_iou", "mean_boundary_f", "mean_evals", "mean_madds",
                   "scenes", "trials"]
ROW_COLUMNS = ["scene_id", "method", "resolution", "N", "iou", "boundary_f", "evals", "madds", "trial"]


def cmd_bench(args, cfg: ExperimentConfig) -> None:
    out = _out(args)
    if not args.checkpoint:
        raise ConfigError("bench needs --checkpoint")
    params, coarse_params = load_checkpoint(args.checkpoint)
    rows = []
    for trial in range(cfg["bench.trials"]):
        regions = ex.build_regions(cfg, "test", trial=trial, threads=args.threads)
        rows += ex.evaluate(cfg, regions, params, coarse_params, threads=args.threads, trial=trial)
    summary = ex.summarize(rows)
    _write_csv(out / "bench.csv", rows, cfg, ROW_COLUMNS)
    _write_csv(out / "bench_summary.csv", summary, cfg, SUMMARY_COLUMNS)
    if not args.no_figures:
        from .plotting import plot_sweep

        plot_sweep(out / "bench.png", summary)
    log.info("benchmarked %d configurations", len(summary))


def cmd_ablate(args, cfg: ExperimentConfig) -> None:
    out = _out(args)
    train_regions = ex.build_regions(cfg, "train", threads=args.threads)
    test_regions = ex.build_regions(cfg, "test", threads=args.threads)
    rows, point_sets = [], {}
    m, n = cfg["subdiv.resolution"], cfg["subdiv.points"]
    for name, overrides in ex.STRATEGIES.items():
        scfg = cfg.with_values(overrides)
        result = ex.train_head(scfg, train_regions, threads=args.threads)
        evals = ex.evaluate(scfg, test_regions, result.params, result.coarse_params, methods=("pointrend",),
                            resolutions=(m,), points=(n,), threads=args.threads)
        s = ex.summarize(evals)[0]
        tail = result.point_losses[-20:]
        rows.append({"strategy": name, "k": scfg["sampler.k"], "beta": scfg["sampler.beta"],
                     "mean_iou": s["mean_iou"], "mean_boundary_f": s["mean_boundary_f"],
                     "final_loss": float(np.mean(tail)) if tail else float("nan")})
        if train_regions:
            point_sets[name] = sample_training_points(train_regions[0].coarse, scfg.sampler(), None,
                                                      scfg.seed("train"))
        log.info("%s: IoU %.4f boundary F %.4f", name, s["mean_iou"], s["mean_boundary_f"])
    _write_csv(out / "ablation.csv", rows, cfg,
               ["strategy", "k", "beta", "mean_iou", "mean_boundary_f", "final_loss"])
    if not args.no_figures:
        from .plotting import plot_ablation, plot_sampling

        plot_ablation(out / "ablation.png", rows)
        if point_sets:
            plot_sampling(out / "sampling.png", train_regions[0].coarse, point_sets)


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "refine": cmd_refine, "bench": cmd_bench, "ablate": cmd_ablate}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pointrend", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter,
                                     epilog="config keys:\n" + describe_keys())
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--threads", type=int, default=0, help="worker threads, 0 = auto")
        p.add_argument("--no-figures", action="store_true", help="skip matplotlib figures")
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("refine", "bench"):
            p.add_argument("--checkpoint", help="point head checkpoint")
        if name == "refine":
            p.add_argument("--scene", required=True, help="scene text file")
            p.add_argument("--resolution", type=int, help="output size (default subdiv.resolution)")
            p.add_argument("--points", type=int, help="points per step (default subdiv.points)")
            p.add_argument("--predictor", choices=("head", "oracle"), default="head")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 0:
        print("error: --threads must be >= 0", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads == 0:
        import os

        args.threads = os.cpu_count() or 1
    try:
        cfg = _load_config(args)
        # BLAS stays single-threaded so results do not depend on --threads
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=1):
            COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, FormatError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
