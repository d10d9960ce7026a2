"""Flat ``section.key=value`` experiment configuration.

Every key, its type, default and meaning is listed in :data:`KEYS`. Lines
starting with ``#`` and blank lines are ignored. The canonical dump (all
keys, sorted) is hashed to tag every emitted CSV.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

from .coarse import CoarseConfig
from .head import PointHeadConfig, TrainConfig
from .rng import derive_seed
from .sampling import SamplerConfig
from .scenes import SHAPE_KINDS, FeatureSpec
from .subdivision import SubdivisionConfig


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _ints(s: str) -> tuple:
    return tuple(int(p) for p in s.split(",") if p.strip())


def _strs(s: str) -> tuple:
    return tuple(p.strip() for p in s.split(",") if p.strip())


def _mix(s: str) -> dict:
    out = {}
    for part in _strs(s):
        name, _, w = part.partition(":")
        if name not in SHAPE_KINDS:
            raise ValueError(f"unknown shape kind {name!r}")
        out[name] = float(w or 1)
    return out


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, dict):
        return ",".join(f"{k}:{w:g}" for k, w in v.items())
    return str(v)


# key -> (parser, default, description)
KEYS = {
    "seed": (int, 0, "master seed; every other seed is derived from it"),
    "data.task": (str, "binary", "binary (one foreground class) or semantic (all classes)"),
    "data.classes": (int, 2, "scene classes including background 0"),
    "data.target_class": (int, 1, "foreground class for the binary task"),
    "data.train_count": (int, 200, "training scenes"),
    "data.test_count": (int, 100, "held-out evaluation scenes"),
    "data.shape_mix": (_mix, {k: 1.0 for k in SHAPE_KINDS}, "shape kinds with sampling weights"),
    "data.shapes_min": (int, 1, "minimum shapes per scene"),
    "data.shapes_max": (int, 2, "maximum shapes per scene"),
    "features.resolutions": (_ints, (56,), "fine feature map sizes"),
    "features.class_indicators": (_bool, False, "append per-class indicator channels"),
    "features.noise_sigma": (float, 0.0, "Gaussian noise on distance/indicator channels"),
    "features.smoothing_radius": (int, 0, "box filter half width in cells"),
    "features.distance_clamp": (float, 0.25, "signed distance clamp"),
    "features.distance_scale": (float, 1.0, "gain applied to the clamped distance channel"),
    "coarse.resolution": (int, 7, "coarse grid size M0"),
    "coarse.mode": (str, "oracle_pool", "oracle_pool or trained_affine"),
    "coarse.noise_sigma": (float, 0.05, "noise on oracle area fractions"),
    "coarse.supersample": (int, 8, "s x s stratified samples per coarse cell"),
    "head.hidden_layers": (int, 3, "point head hidden layers"),
    "head.hidden_width": (int, 256, "point head hidden width"),
    "head.reappend_coarse": (_bool, True, "append coarse features to every hidden layer"),
    "sampler.strategy": (str, "biased", "biased or regular"),
    "sampler.n_points": (int, 196, "training points per region N"),
    "sampler.k": (float, 3.0, "over-generation factor k"),
    "sampler.beta": (float, 0.75, "importance fraction beta"),
    "train.lr": (float, 0.05, "SGD learning rate"),
    "train.momentum": (float, 0.9, "SGD momentum"),
    "train.steps": (int, 500, "SGD steps"),
    "train.batch_scenes": (int, 4, "regions per step"),
    "subdiv.resolution": (int, 224, "refinement output size M"),
    "subdiv.points": (int, 784, "points per subdivision step N"),
    "bench.resolutions": (_ints, (28, 56, 112, 224), "output sizes for the bench sweep"),
    "bench.points": (_ints, (784,), "points per step for the bench sweep"),
    "bench.methods": (_strs, ("coarse", "pointrend"), "coarse, pointrend and/or dense"),
    "bench.eval_resolution": (int, 224, "metrics resolution; outputs are bilinearly pasted to it"),
    "bench.boundary_tolerance": (int, 1, "boundary F tolerance in pixels"),
    "bench.trials": (int, 1, "coarse-noise trials; the summary reports the median"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict

    @classmethod
    def defaults(cls) -> "ExperimentConfig":
        return cls({k: d for k, (_, d, _) in KEYS.items()})

    @classmethod
    def from_text(cls, text: str, base: "ExperimentConfig | None" = None) -> "ExperimentConfig":
        values = dict((base or cls.defaults()).values)
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            key = key.strip()
            if not sep:
                raise ConfigError(f"line {lineno}: expected key=value")
            values[key] = cls._parse(key, val.strip())
        cfg = cls(values)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text())

    @staticmethod
    def _parse(key: str, val: str):
        if key not in KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            return KEYS[key][0](val)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from exc

    def with_values(self, mapping: dict) -> "ExperimentConfig":
        """Copy with some keys replaced; string values are parsed."""
        values = dict(self.values)
        for key, v in mapping.items():
            if key not in KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = self._parse(key, v) if isinstance(v, str) else v
        cfg = ExperimentConfig(values)
        cfg.validate()
        return cfg

    def __getitem__(self, key):
        return self.values[key]

    def dump(self) -> str:
        return "".join(f"{k}={_fmt(self.values[k])}\n" for k in sorted(self.values))

    def config_hash(self) -> str:
        return hashlib.sha256(self.dump().encode()).hexdigest()[:12]

    def validate(self) -> None:
        v = self.values
        if v["data.task"] not in ("binary", "semantic"):
            raise ConfigError("data.task must be binary or semantic")
        if v["data.classes"] < 2:
            raise ConfigError("data.classes must be >= 2")
        if v["data.task"] == "binary" and not 0 <= v["data.target_class"] < v["data.classes"]:
            raise ConfigError("data.target_class out of range")
        if not 1 <= v["data.shapes_min"] <= v["data.shapes_max"]:
            raise ConfigError("need 1 <= data.shapes_min <= data.shapes_max")
        if min(v["data.train_count"], v["data.test_count"]) < 0:
            raise ConfigError("scene counts must be non-negative")
        for m in v["bench.methods"]:
            if m not in ("coarse", "pointrend", "dense"):
                raise ConfigError(f"unknown bench method {m!r}")
        try:
            self.sampler()
            self.train()
            self.coarse()
            self.features()
            self.head()
            self.subdivision()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    # -- derived seeds and component configs

    def seed(self, purpose: str) -> int:
        tags = {"train_scenes": 1, "test_scenes": 2, "train": 3, "coarse": 4, "features": 5, "init": 6}
        return derive_seed(self["seed"], tags[purpose])

    @property
    def target_class(self) -> int | None:
        return self["data.target_class"] if self["data.task"] == "binary" else None

    @property
    def prob_channels(self) -> int:
        return 1 if self["data.task"] == "binary" else self["data.classes"]

    def sampler(self) -> SamplerConfig:
        return SamplerConfig(self["sampler.n_points"], self["sampler.k"], self["sampler.beta"],
                             self["sampler.strategy"])

    def train(self) -> TrainConfig:
        return TrainConfig(self["train.lr"], self["train.momentum"], self["train.steps"],
                           self["train.batch_scenes"], self.sampler(), self.seed("train"))

    def coarse(self, trial: int = 0) -> CoarseConfig:
        return CoarseConfig(self["coarse.resolution"], self["coarse.mode"], self["coarse.noise_sigma"],
                            self["coarse.supersample"], derive_seed(self.seed("coarse"), trial))

    def features(self) -> FeatureSpec:
        return FeatureSpec(self["features.resolutions"], self["features.class_indicators"],
                           self["features.noise_sigma"], self["features.smoothing_radius"],
                           self["features.distance_clamp"], self["features.distance_scale"])

    def head(self) -> PointHeadConfig:
        fine = sum(self.features().channels(self["data.classes"]) for _ in self["features.resolutions"])
        return PointHeadConfig(fine, self.prob_channels, self["head.hidden_layers"],
                               self["head.hidden_width"], self["head.reappend_coarse"])

    def subdivision(self) -> SubdivisionConfig:
        return SubdivisionConfig(self["subdiv.resolution"], self["subdiv.points"])


def describe_keys() -> str:
    """Documentation table of every key with its default."""
    return "\n".join(f"{k}={_fmt(d)}  # {doc}" for k, (_, d, doc) in KEYS.items())
