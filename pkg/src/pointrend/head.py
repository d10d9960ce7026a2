"""Point head MLP: features, forward/backward, losses, SGD and training."""

from __future__ import annotations

import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit, softmax

from .coarse import AffineCoarseParams, coarse_loss_and_grad, pool_features, trained_coarse_forward
from .fileio import FormatError, read_tensor, write_tensor
from .grid import FeatureMap, ProbGrid, bilinear_sample, concat_features
from .rng import Xoshiro256, numpy_rng
from .sampling import SamplerConfig, sample_training_points
from .scenes import Scene

PROB_CLAMP = 1e-7


@dataclass(frozen=True)
class PointHeadConfig:
    fine_channels: int
    coarse_channels: int = 1
    hidden_layers: int = 3
    hidden_width: int = 256
    reappend_coarse: bool = True

    def __post_init__(self):
        if min(self.fine_channels, self.coarse_channels, self.hidden_layers, self.hidden_width) < 1:
            raise ValueError("point head dimensions must be positive")

    @property
    def output_classes(self) -> int:
        return self.coarse_channels

    @property
    def in_width(self) -> int:
        return self.fine_channels + self.coarse_channels

    def layer_shapes(self) -> list[tuple[int, int]]:
        k = self.coarse_channels
        hidden_in = self.hidden_width + (k if self.reappend_coarse else 0)
        shapes = [(self.in_width, self.hidden_width)]
        shapes += [(hidden_in, self.hidden_width)] * (self.hidden_layers - 1)
        shapes.append((hidden_in, k))
        return shapes

    def madds_per_point(self) -> int:
        """Multiply-adds of the affine layers for one point."""
        return sum(i * o for i, o in self.layer_shapes())


@dataclass
class PointHeadParams:
    config: PointHeadConfig
    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)

    def __post_init__(self):
        shapes = self.config.layer_shapes()
        if len(self.weights) != len(shapes) or len(self.biases) != len(shapes):
            raise ValueError("layer count does not match config")
        for w, b, (i, o) in zip(self.weights, self.biases, shapes):
            if w.shape != (i, o) or b.shape != (o,):
                raise ValueError(f"layer shape {w.shape}/{b.shape} does not match ({i}, {o})")

    @classmethod
    def zeros(cls, config: PointHeadConfig) -> "PointHeadParams":
        shapes = config.layer_shapes()
        return cls(config, [np.zeros(s) for s in shapes], [np.zeros(s[1]) for s in shapes])

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def with_arrays(self, arrays) -> "PointHeadParams":
        return PointHeadParams(self.config, list(arrays[0::2]), list(arrays[1::2]))

    def copy(self) -> "PointHeadParams":
        return self.with_arrays([a.copy() for a in self.arrays()])


def init_params(config: PointHeadConfig, seed: int) -> PointHeadParams:
    """Glorot-uniform weights, zero biases."""
    rng = numpy_rng(seed, 0x4EAD)
    weights, biases = [], []
    for fan_in, fan_out in config.layer_shapes():
        a = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-a, a, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return PointHeadParams(config, weights, biases)


def assemble_point_features(fine_maps: list[FeatureMap], coarse: ProbGrid, pts) -> np.ndarray:
    """Concatenate fine samples (in map order) then the K coarse values per point."""
    if not fine_maps:
        raise ValueError("at least one fine feature map is required")
    feats = bilinear_sample(fine_maps[0], pts)
    for fm in fine_maps[1:]:
        feats = concat_features(feats, bilinear_sample(fm, pts))
    return concat_features(feats, bilinear_sample(coarse, pts))


def _output(z: np.ndarray) -> np.ndarray:
    if z.shape[1] == 1:
        return expit(z)
    return softmax(z, axis=1)


def _forward(params: PointHeadParams, features):
    cfg = params.config
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != cfg.in_width:
        raise ValueError(f"expected (n, {cfg.in_width}) features, got {x.shape}")
    coarse = x[:, cfg.fine_channels:]
    inputs, pre = [], []
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ w + b
        pre.append(z)
        if i < last:
            h = np.maximum(z, 0.0)
            if cfg.reappend_coarse:
                h = np.concatenate([h, coarse], axis=1)
    return _output(pre[-1]), inputs, pre


def forward(params: PointHeadParams, features) -> np.ndarray:
    """Per-point class probabilities, ``(n, K)``."""
    return _forward(params, features)[0]


def _check_binary_labels(labels, n) -> np.ndarray:
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if len(y) != n:
        raise ValueError("label count does not match predictions")
    if np.any((y != 0) & (y != 1)):
        raise ValueError("binary labels must be 0 or 1")
    return y


def _check_class_labels(labels, n, k) -> np.ndarray:
    y = np.asarray(labels).reshape(-1)
    if len(y) != n:
        raise ValueError("label count does not match predictions")
    if not np.all(np.equal(np.mod(y, 1), 0)) or y.min(initial=0) < 0 or y.max(initial=0) >= k:
        raise ValueError(f"class labels must be integers in [0, {k})")
    return y.astype(np.int64)


def loss_bce(probs, labels) -> float:
    p = np.asarray(probs, dtype=np.float64).reshape(-1)
    y = _check_binary_labels(labels, len(p))
    p = np.clip(p, PROB_CLAMP, 1 - PROB_CLAMP)
    return float(np.mean(-(y * np.log(p) + (1 - y) * np.log(1 - p))))


def loss_ce_multiclass(probs, labels) -> float:
    p = np.asarray(probs, dtype=np.float64)
    y = _check_class_labels(labels, len(p), p.shape[1])
    py = np.clip(p[np.arange(len(p)), y], PROB_CLAMP, 1 - PROB_CLAMP)
    return float(np.mean(-np.log(py)))


def loss(params: PointHeadParams, features, labels) -> float:
    probs = forward(params, features)
    if probs.shape[1] == 1:
        return loss_bce(probs, labels)
    return loss_ce_multiclass(probs, labels)


def loss_and_grad(params: PointHeadParams, features, labels):
    """Mean loss and its exact gradient as a :class:`PointHeadParams`."""
    probs, inputs, pre = _forward(params, features)
    n, k = probs.shape
    if k == 1:
        value = loss_bce(probs, labels)
        y = _check_binary_labels(labels, n)
        p = probs[:, 0]
        live = (p > PROB_CLAMP) & (p < 1 - PROB_CLAMP)
        dz = ((p - y) * live)[:, None]
    else:
        value = loss_ce_multiclass(probs, labels)
        y = _check_class_labels(labels, n, k)
        py = probs[np.arange(n), y]
        live = (py > PROB_CLAMP) & (py < 1 - PROB_CLAMP)
        dz = probs.copy()
        dz[np.arange(n), y] -= 1.0
        dz *= live[:, None]
    dz /= n
    width = params.config.hidden_width
    dws, dbs = [None] * len(params.weights), [None] * len(params.weights)
    for i in range(len(params.weights) - 1, -1, -1):
        dws[i] = inputs[i].T @ dz
        dbs[i] = dz.sum(axis=0)
        if i > 0:
            dh = (dz @ params.weights[i].T)[:, :width]
            dz = dh * (pre[i - 1] > 0)
    return value, PointHeadParams(params.config, dws, dbs)


def backward(params: PointHeadParams, features, labels) -> PointHeadParams:
    return loss_and_grad(params, features, labels)[1]


def sgd_step(params: list, grads: list, lr: float, momentum: float, state: list | None = None):
    """Classical momentum: ``v <- mu*v + g``; ``theta <- theta - lr*v``.

    ``params``/``grads`` are matching lists of arrays; returns new lists.
    """
    if len(params) != len(grads):
        raise ValueError("parameter and gradient lists differ in length")
    if state is None:
        state = [np.zeros_like(p) for p in params]
    new_params, new_state = [], []
    for p, g, v in zip(params, grads, state):
        if p.shape != g.shape or p.shape != v.shape:
            raise ValueError(f"shape mismatch: {p.shape} vs {g.shape} vs {v.shape}")
        v = momentum * v + g
        new_state.append(v)
        new_params.append(p - lr * v)
    return new_params, new_state


# ---------------------------------------------------------------- training


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    momentum: float = 0.9
    steps: int = 500
    batch_scenes: int = 4
    sampler: SamplerConfig = SamplerConfig()
    rng_seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0 or self.steps < 0 or self.batch_scenes < 1:
            raise ValueError("invalid training config")

    @property
    def points_per_region(self) -> int:
        return self.sampler.n_points


@dataclass
class TrainSample:
    """One training region: its scene, fine features and coarse inputs.

    ``coarse`` is a fixed coarse prediction (oracle mode); ``coarse_target``
    is the noise-free pooled occupancy supervising a trained coarse head.
    """

    scene: Scene
    fine_maps: list
    coarse: ProbGrid | None = None
    coarse_target: ProbGrid | None = None
    pooled: np.ndarray | None = None


@dataclass
class TrainResult:
    params: PointHeadParams
    coarse_params: AffineCoarseParams | None
    point_losses: list
    coarse_losses: list

    @property
    def losses(self) -> list:
        return [a + b for a, b in zip(self.point_losses, self.coarse_losses)]


def point_labels(scene: Scene, pts, target_class: int | None) -> np.ndarray:
    """Binary occupancy of ``target_class``, or class ids when it is None."""
    labels = scene.labels(pts)
    if target_class is None:
        return labels
    return (labels == target_class).astype(np.float64)


def train(params: PointHeadParams, samples: list[TrainSample], cfg: TrainConfig,
          target_class: int | None = 1, coarse_params: AffineCoarseParams | None = None,
          threads: int = 1) -> TrainResult:
    """SGD on points drawn by the training sampler.

    Each step draws ``batch_scenes`` regions, samples N points per region
    from its coarse prediction and labels them with the exact scene
    occupancy. With ``coarse_params`` the affine coarse head is trained on
    its own loss and the two losses are summed. Coarse features enter the
    point head as constants.
    """
    rng = Xoshiro256(cfg.rng_seed)
    head_arrays = params.copy().arrays()
    head_state = None
    coarse_arrays = [a.copy() for a in coarse_params.arrays()] if coarse_params is not None else None
    coarse_state = None
    point_losses, coarse_losses = [], []
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None

    def prepare(job):
        sample, seed, cparams = job
        if cparams is not None:
            coarse = trained_coarse_forward(cparams, sample.pooled, sample.coarse_target.height)
        else:
            coarse = sample.coarse
        pts = sample_training_points(coarse, cfg.sampler, None, seed)
        feats = assemble_point_features(sample.fine_maps, coarse, pts)
        return feats, point_labels(sample.scene, pts, target_class)

    try:
        for _ in range(cfg.steps):
            picks = [samples[rng.randbelow(len(samples))] for _ in range(cfg.batch_scenes)]
            seeds = [rng.next_u64() for _ in picks]
            cparams = AffineCoarseParams(*coarse_arrays) if coarse_arrays is not None else None
            jobs = [(s, seed, cparams) for s, seed in zip(picks, seeds)]
            prepared = list(pool.map(prepare, jobs)) if pool else [prepare(j) for j in jobs]
            feats = np.concatenate([f for f, _ in prepared])
            labels = np.concatenate([y for _, y in prepared])
            current = params.with_arrays(head_arrays)
            value, grads = loss_and_grad(current, feats, labels)
            head_arrays, head_state = sgd_step(head_arrays, grads.arrays(), cfg.learning_rate,
                                               cfg.momentum, head_state)
            point_losses.append(value)
            if coarse_arrays is not None:
                closs, cw, cb = 0.0, 0.0, 0.0
                for s in picks:
                    l, (gw, gb) = coarse_loss_and_grad(cparams, s.pooled, s.coarse_target)
                    closs += l / len(picks)
                    cw = cw + gw / len(picks)
                    cb = cb + gb / len(picks)
                coarse_arrays, coarse_state = sgd_step(coarse_arrays, [cw, cb], cfg.learning_rate,
                                                       cfg.momentum, coarse_state)
                coarse_losses.append(closs)
            else:
                coarse_losses.append(0.0)
    finally:
        if pool:
            pool.shutdown()
    trained_coarse = AffineCoarseParams(*coarse_arrays) if coarse_arrays is not None else None
    return TrainResult(params.with_arrays(head_arrays), trained_coarse, point_losses, coarse_losses)


def make_train_sample(scene: Scene, fine_maps: list, coarse: ProbGrid | None = None,
                      coarse_target: ProbGrid | None = None) -> TrainSample:
    pooled = pool_features(fine_maps, coarse_target.height) if coarse_target is not None else None
    return TrainSample(scene, fine_maps, coarse, coarse_target, pooled)


# ---------------------------------------------------------------- checkpoints

_CKPT_MAGIC = "POINTHEAD-CKPT 1"


def save_checkpoint(path, params: PointHeadParams, coarse_params: AffineCoarseParams | None = None) -> None:
    """Text manifest of layer shapes followed by SRT1 float64 tensors."""
    cfg = params.config
    tensors = []
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        tensors += [(f"head.W{i}", w), (f"head.b{i}", b)]
    if coarse_params is not None:
        tensors += [("coarse.W", coarse_params.weight), ("coarse.b", coarse_params.bias)]
    lines = [
        _CKPT_MAGIC,
        f"fine_channels {cfg.fine_channels}",
        f"coarse_channels {cfg.coarse_channels}",
        f"hidden_layers {cfg.hidden_layers}",
        f"hidden_width {cfg.hidden_width}",
        f"reappend_coarse {int(cfg.reappend_coarse)}",
        f"tensors {len(tensors)}",
    ]
    for name, arr in tensors:
        a2 = np.atleast_2d(arr)
        lines.append(f"tensor {name} {a2.shape[0]} {a2.shape[1]}")
    lines.append("end")
    buf = io.BytesIO()
    buf.write(("\n".join(lines) + "\n").encode("ascii"))
    for _, arr in tensors:
        write_tensor(buf, np.atleast_2d(arr)[None], "f64")
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path) -> tuple[PointHeadParams, AffineCoarseParams | None]:
    fh = io.BytesIO(Path(path).read_bytes())
    if fh.readline().decode("ascii").strip() != _CKPT_MAGIC:
        raise FormatError("not a point head checkpoint")
    header, names = {}, []
    while True:
        line = fh.readline().decode("ascii")
        if not line:
            raise FormatError("truncated checkpoint manifest")
        tok = line.split()
        if tok == ["end"]:
            break
        if tok[0] == "tensor":
            names.append((tok[1], (int(tok[2]), int(tok[3]))))
        else:
            header[tok[0]] = int(tok[1])
    cfg = PointHeadConfig(header["fine_channels"], header["coarse_channels"], header["hidden_layers"],
                          header["hidden_width"], bool(header["reappend_coarse"]))
    arrays = {}
    for name, shape in names:
        arr = read_tensor(fh)[0]
        if arr.shape != shape:
            raise FormatError(f"tensor {name} has shape {arr.shape}, manifest says {shape}")
        arrays[name] = arr
    n = len(cfg.layer_shapes())
    params = PointHeadParams(cfg, [arrays[f"head.W{i}"] for i in range(n)],
                             [arrays[f"head.b{i}"][0] for i in range(n)])
    coarse = None
    if "coarse.W" in arrays:
        coarse = AffineCoarseParams(arrays["coarse.W"], arrays["coarse.b"][0])
    return params, coarse

