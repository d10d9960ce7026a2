"""Analytic scenes with exact occupancy and synthetic backbone features.

A scene is an ordered list of shapes over the unit square; later shapes
occlude earlier ones and uncovered points belong to background class 0.
Shape boundaries are closed (a boundary point is inside).

Scene text format, one shape per line, floats written with ``repr``::

    disk <class> <cx> <cy> <r>
    rect <class> <cx> <cy> <half_w> <half_h> <angle>
    polygon <class> <n> <x1> <y1> ... <xn> <yn>
    blob <class> <cx> <cy> <base_r> <n> <a1> <phi1> ... <an> <phin>

Blank lines and lines starting with ``#`` are ignored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .grid import FeatureMap
from .rng import Xoshiro256, derive_seed, numpy_rng

BOUNDARY_EPS = 1e-12
BLOB_POLYLINE_VERTICES = 1024


def _points(pts) -> np.ndarray:
    return np.asarray(pts, dtype=np.float64).reshape(-1, 2)


def _segment_distance(pts: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each point to the closest of the segments ``a[j] -> b[j]``."""
    d = b - a
    len2 = np.maximum((d * d).sum(axis=1), 1e-300)
    best = np.full(len(pts), np.inf)
    # chunk over segments to bound memory at (points x chunk)
    for s in range(0, len(a), 256):
        ax, ay = a[s:s + 256, 0], a[s:s + 256, 1]
        dx, dy = d[s:s + 256, 0], d[s:s + 256, 1]
        px = pts[:, 0:1] - ax
        py = pts[:, 1:2] - ay
        t = np.clip((px * dx + py * dy) / len2[s:s + 256], 0.0, 1.0)
        ex = px - t * dx
        ey = py - t * dy
        best = np.minimum(best, np.sqrt(ex * ex + ey * ey).min(axis=1))
    return best


@dataclass(frozen=True)
class Disk:
    cx: float
    cy: float
    radius: float
    class_id: int = 1

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("disk radius must be positive")

    def contains(self, pts) -> np.ndarray:
        p = _points(pts)
        return np.hypot(p[:, 0] - self.cx, p[:, 1] - self.cy) <= self.radius

    def boundary_distance(self, pts) -> np.ndarray:
        p = _points(pts)
        return np.abs(np.hypot(p[:, 0] - self.cx, p[:, 1] - self.cy) - self.radius)

    def to_line(self) -> str:
        return f"disk {self.class_id} {self.cx!r} {self.cy!r} {self.radius!r}"


@dataclass(frozen=True)
class RotatedRect:
    cx: float
    cy: float
    half_w: float
    half_h: float
    angle: float = 0.0
    class_id: int = 1

    def __post_init__(self):
        if not (self.half_w > 0 and self.half_h > 0):
            raise ValueError("rectangle half extents must be positive")

    def _local(self, pts):
        p = _points(pts)
        c, s = math.cos(self.angle), math.sin(self.angle)
        dx = p[:, 0] - self.cx
        dy = p[:, 1] - self.cy
        return c * dx + s * dy, -s * dx + c * dy

    def contains(self, pts) -> np.ndarray:
        u, v = self._local(pts)
        return (np.abs(u) <= self.half_w) & (np.abs(v) <= self.half_h)

    def boundary_distance(self, pts) -> np.ndarray:
        u, v = self._local(pts)
        qx = np.abs(u) - self.half_w
        qy = np.abs(v) - self.half_h
        outside = np.hypot(np.maximum(qx, 0.0), np.maximum(qy, 0.0))
        inside = -np.maximum(qx, qy)
        return np.where((qx <= 0) & (qy <= 0), inside, outside)

    def corners(self) -> np.ndarray:
        c, s = math.cos(self.angle), math.sin(self.angle)
        local = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=np.float64) * [self.half_w, self.half_h]
        return np.stack([self.cx + c * local[:, 0] - s * local[:, 1],
                         self.cy + s * local[:, 0] + c * local[:, 1]], axis=1)

    def to_line(self) -> str:
        return (f"rect {self.class_id} {self.cx!r} {self.cy!r} {self.half_w!r} "
                f"{self.half_h!r} {self.angle!r}")


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if abs(v) <= BOUNDARY_EPS else (1 if v > 0 else -1)

    def on_segment(a, b, c):
        return min(a[0], b[0]) - BOUNDARY_EPS <= c[0] <= max(a[0], b[0]) + BOUNDARY_EPS and \
            min(a[1], b[1]) - BOUNDARY_EPS <= c[1] <= max(a[1], b[1]) + BOUNDARY_EPS

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    return ((o1 == 0 and on_segment(p1, p2, q1)) or (o2 == 0 and on_segment(p1, p2, q2))
            or (o3 == 0 and on_segment(q1, q2, p1)) or (o4 == 0 and on_segment(q1, q2, p2)))


def is_simple_polygon(vertices) -> bool:
    v = [tuple(map(float, p)) for p in vertices]
    n = len(v)
    if n < 3:
        return False
    for i in range(n):
        a1, a2 = v[i], v[(i + 1) % n]
        if a1 == a2:
            return False
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if _segments_intersect(a1, a2, v[j], v[(j + 1) % n]):
                return False
    return True


@dataclass(frozen=True)
class Polygon:
    vertices: tuple
    class_id: int = 1

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        object.__setattr__(self, "vertices", verts)
        if not is_simple_polygon(verts):
            raise ValueError("polygon must be simple with at least 3 vertices")

    def _edges(self):
        a = np.asarray(self.vertices)
        return a, np.roll(a, -1, axis=0)

    def contains(self, pts) -> np.ndarray:
        p = _points(pts)
        a, b = self._edges()
        # winding number, with points on an edge counted as inside
        winding = np.zeros(len(p), dtype=np.int64)
        for (ax, ay), (bx, by) in zip(a, b):
            cross = (bx - ax) * (p[:, 1] - ay) - (p[:, 0] - ax) * (by - ay)
            up = (ay <= p[:, 1]) & (by > p[:, 1]) & (cross > 0)
            down = (ay > p[:, 1]) & (by <= p[:, 1]) & (cross < 0)
            winding += up.astype(np.int64) - down.astype(np.int64)
        on_edge = _segment_distance(p, a, b) <= BOUNDARY_EPS
        return (winding != 0) | on_edge

    def boundary_distance(self, pts) -> np.ndarray:
        a, b = self._edges()
        return _segment_distance(_points(pts), a, b)

    def to_line(self) -> str:
        coords = " ".join(f"{x!r} {y!r}" for x, y in self.vertices)
        return f"polygon {self.class_id} {len(self.vertices)} {coords}"


@dataclass(frozen=True)
class FourierBlob:
    """Star-shaped blob with radius ``base * (1 + sum a_k cos(k*theta + phi_k))``."""

    cx: float
    cy: float
    base_radius: float
    harmonics: tuple = ()  # ((a_1, phi_1), (a_2, phi_2), ...), order k = position + 1
    class_id: int = 1

    def __post_init__(self):
        h = tuple((float(a), float(p)) for a, p in self.harmonics)
        object.__setattr__(self, "harmonics", h)
        if not self.base_radius > 0:
            raise ValueError("blob base radius must be positive")
        if len(h) > 8:
            raise ValueError("blob harmonics are limited to order 8")
        if sum(abs(a) for a, _ in h) >= 1.0:
            raise ValueError("blob amplitudes must satisfy sum |a_k| < 1")

    def radius_at(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64)
        r = np.ones_like(theta)
        for k, (a, phi) in enumerate(self.harmonics, start=1):
            r = r + a * np.cos(k * theta + phi)
        return self.base_radius * r

    def contains(self, pts) -> np.ndarray:
        p = _points(pts)
        dx = p[:, 0] - self.cx
        dy = p[:, 1] - self.cy
        return np.hypot(dx, dy) <= self.radius_at(np.arctan2(dy, dx))

    def outline(self, n: int = BLOB_POLYLINE_VERTICES) -> np.ndarray:
        theta = np.arange(n) * (2 * math.pi / n)
        r = self.radius_at(theta)
        return np.stack([self.cx + r * np.cos(theta), self.cy + r * np.sin(theta)], axis=1)

    def boundary_distance(self, pts) -> np.ndarray:
        # dense polyline approximation of the analytic outline
        a = self.outline()
        return _segment_distance(_points(pts), a, np.roll(a, -1, axis=0))

    def to_line(self) -> str:
        parts = " ".join(f"{a!r} {p!r}" for a, p in self.harmonics)
        tail = f" {parts}" if parts else ""
        return (f"blob {self.class_id} {self.cx!r} {self.cy!r} {self.base_radius!r} "
                f"{len(self.harmonics)}{tail}")


Shape = Disk | RotatedRect | Polygon | FourierBlob


@dataclass(frozen=True)
class Scene:
    shapes: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "shapes", tuple(self.shapes))
        for s in self.shapes:
            if s.class_id < 0:
                raise ValueError("class ids must be non-negative")

    @property
    def max_class(self) -> int:
        return max((s.class_id for s in self.shapes), default=0)

    def labels(self, pts) -> np.ndarray:
        """Class of the topmost shape covering each point (0 where uncovered)."""
        p = _points(pts)
        out = np.zeros(len(p), dtype=np.int64)
        for shape in self.shapes:
            out[shape.contains(p)] = shape.class_id
        return out

    def boundary_distance(self, pts) -> np.ndarray:
        p = _points(pts)
        out = np.full(len(p), np.inf)
        for shape in self.shapes:
            out = np.minimum(out, shape.boundary_distance(p))
        return out

    def to_text(self) -> str:
        return "".join(s.to_line() + "\n" for s in self.shapes)


def _check_domain(p: np.ndarray) -> None:
    if p.size and (p.min() < 0.0 or p.max() > 1.0 or not np.all(np.isfinite(p))):
        raise ValueError("query point outside [0, 1]^2")


def occupancy(scene: Scene, point, class_id: int) -> int:
    """1 if the topmost shape at ``point`` has ``class_id`` (background is 0)."""
    p = _points(point)
    _check_domain(p)
    return int(scene.labels(p)[0] == class_id)


def occupancy_many(scene: Scene, pts, class_id: int) -> np.ndarray:
    p = _points(pts)
    _check_domain(p)
    return (scene.labels(p) == class_id).astype(np.uint8)


def _centers(m: int) -> np.ndarray:
    c = (np.arange(m) + 0.5) / m
    xs, ys = np.meshgrid(c, c)
    return np.stack([xs.ravel(), ys.ravel()], axis=1)


def label_raster(scene: Scene, m: int) -> np.ndarray:
    return scene.labels(_centers(m)).reshape(m, m)


def rasterize(scene: Scene, m: int, class_id: int) -> np.ndarray:
    """Binary ``m x m`` occupancy at cell centres."""
    if m < 1:
        raise ValueError("resolution must be positive")
    return (label_raster(scene, m) == class_id).astype(np.uint8)


# ---------------------------------------------------------------- features


@dataclass(frozen=True)
class FeatureSpec:
    """Synthetic stand-in for backbone feature maps.

    Each map has channels ``x, y, signed distance`` and, with
    ``class_indicators``, one indicator channel per scene class.
    ``smoothing_radius`` is a box-filter half width in cells of each map.
    The distance channel is clamped to ``distance_clamp`` and then multiplied
    by ``distance_scale``; noise is added after scaling.
    """

    resolutions: tuple = (56,)
    class_indicators: bool = False
    noise_sigma: float = 0.0
    smoothing_radius: int = 0
    distance_clamp: float = 0.25
    distance_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "resolutions", tuple(int(r) for r in self.resolutions))
        if not self.resolutions or min(self.resolutions) < 1:
            raise ValueError("feature resolutions must be positive")
        if self.noise_sigma < 0 or self.smoothing_radius < 0 or self.distance_clamp <= 0 or self.distance_scale <= 0:
            raise ValueError("invalid feature corruption settings")

    def channels(self, num_classes: int) -> int:
        return 3 + (num_classes if self.class_indicators else 0)


def signed_distance(scene: Scene, pts, target_class: int | None = None, clamp: float | None = None) -> np.ndarray:
    """Distance to the nearest shape boundary, positive inside the target.

    ``target_class=None`` treats every non-background class as inside.
    """
    p = _points(pts)
    labels = scene.labels(p)
    inside = labels != 0 if target_class is None else labels == target_class
    sd = np.where(inside, 1.0, -1.0) * scene.boundary_distance(p)
    if not scene.shapes:
        sd = np.full(len(p), -np.inf)
    if clamp is not None:
        sd = np.clip(sd, -clamp, clamp)
    return sd


def synth_features(scene: Scene, spec: FeatureSpec, seed: int, target_class: int | None = None,
                   num_classes: int = 2) -> list[FeatureMap]:
    maps = []
    for level, m in enumerate(spec.resolutions):
        pts = _centers(m)
        c = (np.arange(m) + 0.5) / m
        chans = [np.tile(c, (m, 1)), np.tile(c[:, None], (1, m)),
                 spec.distance_scale * signed_distance(scene, pts, target_class, spec.distance_clamp).reshape(m, m)]
        if spec.class_indicators:
            labels = scene.labels(pts).reshape(m, m)
            chans.extend((labels == k).astype(np.float64) for k in range(num_classes))
        values = np.stack(chans)
        corrupt = slice(2, None)
        if spec.smoothing_radius > 0:
            size = 2 * spec.smoothing_radius + 1
            values[corrupt] = ndimage.uniform_filter(values[corrupt], size=(1, size, size), mode="nearest")
        if spec.noise_sigma > 0:
            noise = numpy_rng(seed, level, m).normal(0.0, spec.noise_sigma, size=values[corrupt].shape)
            values[corrupt] += noise
        maps.append(FeatureMap(values))
    return maps


# ---------------------------------------------------------------- datasets

SHAPE_KINDS = ("disk", "rect", "polygon", "blob")


def _uniform(rng: Xoshiro256, lo: float, hi: float) -> float:
    return lo + (hi - lo) * rng.random()


def _random_shape(rng: Xoshiro256, kind: str, class_id: int):
    cx, cy = _uniform(rng, 0.2, 0.8), _uniform(rng, 0.2, 0.8)
    if kind == "disk":
        return Disk(cx, cy, _uniform(rng, 0.05, 0.4), class_id)
    if kind == "rect":
        return RotatedRect(cx, cy, _uniform(rng, 0.05, 0.3), _uniform(rng, 0.05, 0.3),
                           _uniform(rng, 0.0, math.pi), class_id)
    if kind == "polygon":
        n = 5 + rng.randbelow(5)
        base = _uniform(rng, 0.1, 0.35)
        step = 2 * math.pi / n
        verts = []
        for i in range(n):
            theta = (i + _uniform(rng, 0.1, 0.9)) * step
            r = base * _uniform(rng, 0.5, 1.0)
            verts.append((cx + r * math.cos(theta), cy + r * math.sin(theta)))
        return Polygon(tuple(verts), class_id)
    if kind == "blob":
        order = 2 + rng.randbelow(7)
        raw = [rng.random() / k for k in range(1, order + 1)]
        total = _uniform(rng, 0.1, 0.6)
        scale = total / sum(raw)
        harmonics = tuple((a * scale, _uniform(rng, 0.0, 2 * math.pi)) for a in raw)
        return FourierBlob(cx, cy, _uniform(rng, 0.08, 0.3), harmonics, class_id)
    raise ValueError(f"unknown shape kind {kind!r}")


def generate_dataset(count: int, num_classes: int = 2, shape_mix: dict | None = None, seed: int = 0,
                     shapes_per_scene: tuple = (1, 2)) -> list[Scene]:
    """Deterministic random scenes.

    Shape centres lie in [0.2, 0.8]^2; disk radii in [0.05, 0.4]; rectangle
    half extents in [0.05, 0.3]; star polygons with 5-9 vertices and radii in
    [0.05, 0.35]; blobs with base radius in [0.08, 0.3], orders 2-8 and
    ``sum |a_k|`` in [0.1, 0.6]. Class ids are drawn from ``[1, num_classes)``.
    """
    if num_classes < 2:
        raise ValueError("need at least background plus one class")
    mix = shape_mix or {k: 1.0 for k in SHAPE_KINDS}
    kinds = [k for k in SHAPE_KINDS if mix.get(k, 0) > 0]
    unknown = set(mix) - set(SHAPE_KINDS)
    if unknown or not kinds:
        raise ValueError(f"bad shape mix {mix!r}")
    weights = np.cumsum([mix[k] for k in kinds])
    lo, hi = shapes_per_scene
    scenes = []
    for i in range(count):
        rng = Xoshiro256(derive_seed(seed, i))
        n = lo + rng.randbelow(hi - lo + 1)
        shapes = []
        for _ in range(n):
            u = rng.random() * weights[-1]
            kind = kinds[int(np.searchsorted(weights, u, side="right"))]
            cls = 1 + rng.randbelow(num_classes - 1)
            shapes.append(_random_shape(rng, kind, cls))
        scenes.append(Scene(tuple(shapes)))
    return scenes


# ---------------------------------------------------------------- text I/O


def parse_shape(line: str):
    tok = line.split()
    kind, cls = tok[0], int(tok[1])
    nums = [float(t) for t in tok[2:]]
    if kind == "disk":
        cx, cy, r = nums
        return Disk(cx, cy, r, cls)
    if kind == "rect":
        cx, cy, hw, hh, ang = nums
        return RotatedRect(cx, cy, hw, hh, ang, cls)
    if kind == "polygon":
        n = int(nums[0])
        if len(nums) != 1 + 2 * n:
            raise ValueError("polygon vertex count mismatch")
        return Polygon(tuple(zip(nums[1::2], nums[2::2])), cls)
    if kind == "blob":
        cx, cy, base, n = nums[:4]
        rest = nums[4:]
        if len(rest) != 2 * int(n):
            raise ValueError("blob harmonic count mismatch")
        return FourierBlob(cx, cy, base, tuple(zip(rest[0::2], rest[1::2])), cls)
    raise ValueError(f"unknown shape variant {kind!r}")


def parse_scene(text: str) -> Scene:
    shapes = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            shapes.append(parse_shape(line))
        except (ValueError, IndexError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    return Scene(tuple(shapes))


def save_scene(path, scene: Scene) -> None:
    Path(path).write_text(scene.to_text())


def load_scene(path) -> Scene:
    return parse_scene(Path(path).read_text())
