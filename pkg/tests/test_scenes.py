import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pointrend.scenes import (
    Disk,
    FeatureSpec,
    FourierBlob,
    Polygon,
    RotatedRect,
    Scene,
    generate_dataset,
    is_simple_polygon,
    label_raster,
    load_scene,
    occupancy,
    occupancy_many,
    parse_scene,
    rasterize,
    save_scene,
    signed_distance,
    synth_features,
)

DISK = Scene((Disk(0.5, 0.5, 0.25),))


def test_occupancy_disk_examples():
    assert occupancy(DISK, (0.5, 0.5), 1) == 1
    assert occupancy(DISK, (0.8, 0.5), 1) == 0
    assert occupancy(DISK, (0.8, 0.5), 0) == 1
    # closed boundary
    assert occupancy(DISK, (0.75, 0.5), 1) == 1
    with pytest.raises(ValueError):
        occupancy(DISK, (1.2, 0.5), 1)


def test_later_shapes_occlude_earlier():
    scene = Scene((Disk(0.5, 0.5, 0.3, 1), Disk(0.5, 0.5, 0.1, 2)))
    assert scene.labels([(0.5, 0.5), (0.5, 0.25), (0.0, 0.0)]).tolist() == [2, 1, 0]


def test_square_polygon_agrees_with_axis_aligned_rect():
    cx, cy, hw, hh = 0.45, 0.55, 0.2, 0.15
    poly = Scene((Polygon(((cx - hw, cy - hh), (cx + hw, cy - hh), (cx + hw, cy + hh), (cx - hw, cy + hh))),))
    rect = Scene((RotatedRect(cx, cy, hw, hh, 0.0),))
    pts = np.random.default_rng(0).uniform(0, 1, (100_000, 2))
    assert np.array_equal(occupancy_many(poly, pts, 1), occupancy_many(rect, pts, 1))


def test_rotated_rect_corners_and_polygon_agree():
    rect = RotatedRect(0.5, 0.5, 0.2, 0.1, 0.7)
    poly = Polygon(tuple(map(tuple, rect.corners())))
    pts = np.random.default_rng(1).uniform(0, 1, (20_000, 2))
    assert np.array_equal(rect.contains(pts), poly.contains(pts))
    assert np.allclose(rect.boundary_distance(pts), poly.boundary_distance(pts), atol=1e-12)


def test_polygon_simplicity_and_on_edge_points():
    assert not is_simple_polygon([(0, 0), (1, 1), (1, 0), (0, 1)])
    with pytest.raises(ValueError):
        Polygon(((0, 0), (1, 1)))
    tri = Polygon(((0.1, 0.1), (0.9, 0.1), (0.5, 0.9)))
    assert tri.contains([(0.5, 0.1), (0.1, 0.1)]).all()


def test_blob_validation():
    with pytest.raises(ValueError):
        FourierBlob(0.5, 0.5, 0.2, ((0.6, 0.0), (0.5, 0.0)))
    blob = FourierBlob(0.5, 0.5, 0.2, ((0.3, 1.0),))
    assert blob.contains([(0.5, 0.5)])[0]


def test_rasterize_examples():
    assert not rasterize(Scene(()), 8, 1).any()
    assert rasterize(Scene((RotatedRect(0.5, 0.5, 0.6, 0.6),)), 8, 1).all()
    r, m = 0.3, 64
    count = int(rasterize(Scene((Disk(0.5, 0.5, r),)), m, 1).sum())
    assert abs(count - math.pi * r * r * m * m) <= 4 * m


def test_rasterize_uses_cell_centres():
    scene = Scene((RotatedRect(0.25, 0.5, 0.25, 0.5),))  # covers x in [0, 0.5]
    assert rasterize(scene, 4, 1)[0].tolist() == [1, 1, 0, 0]
    assert label_raster(scene, 2).tolist() == [[1, 0], [1, 0]]


smooth_shapes = st.one_of(
    st.builds(Disk, st.floats(0.2, 0.8), st.floats(0.2, 0.8), st.floats(0.05, 0.4)),
    st.builds(RotatedRect, st.floats(0.2, 0.8), st.floats(0.2, 0.8), st.floats(0.05, 0.3), st.floats(0.05, 0.3),
              st.floats(0, math.pi)),
)


@settings(max_examples=40, deadline=None)
@given(smooth_shapes, st.sampled_from([16, 32, 64]))
def test_raster_scale_consistency(shape, m):
    scene = Scene((shape,))
    fine = rasterize(scene, 2 * m, 1).reshape(m, 2, m, 2).sum(axis=(1, 3))
    coarse = rasterize(scene, m, 1)
    # 2x2 majority, ties resolved towards foreground
    assert np.mean((fine >= 2) == coarse.astype(bool)) >= 0.95


def test_feature_channels():
    spec = FeatureSpec(resolutions=(5, 8))
    maps = synth_features(Scene((Disk(0.5, 0.5, 0.2),)), spec, seed=0)
    assert [m.shape for m in maps] == [(3, 5, 5), (3, 8, 8)]
    fm = maps[1].values
    assert np.array_equal(fm[0, 3], (np.arange(8) + 0.5) / 8)
    assert np.array_equal(fm[1, :, 3], (np.arange(8) + 0.5) / 8)
    # disk centre sits on the middle cell of the 5x5 map
    assert maps[0].values[2, 2, 2] == pytest.approx(0.2, abs=1e-15)
    big = synth_features(Scene((Disk(0.5, 0.5, 0.4),)), spec, seed=0)
    assert big[0].values[2, 2, 2] == 0.25


def test_feature_options():
    scene = Scene((Disk(0.4, 0.5, 0.2, 1), Disk(0.7, 0.5, 0.1, 2)))
    spec = FeatureSpec((16,), class_indicators=True, distance_scale=4.0)
    fm = synth_features(scene, spec, 0, num_classes=3)[0].values
    assert fm.shape == (6, 16, 16)
    labels = label_raster(scene, 16)
    for k in range(3):
        assert np.array_equal(fm[3 + k], (labels == k).astype(float))
    plain = synth_features(scene, FeatureSpec((16,)), 0)[0].values
    assert np.allclose(fm[2], 4.0 * plain[2])
    noisy = synth_features(scene, FeatureSpec((16,), noise_sigma=0.1, smoothing_radius=1), 3)[0].values
    assert np.array_equal(noisy[:2], plain[:2])
    assert not np.array_equal(noisy[2], plain[2])


def test_features_are_deterministic_per_seed():
    scene = generate_dataset(1, 3, seed=4)[0]
    spec = FeatureSpec((16, 32), class_indicators=True, noise_sigma=0.2, smoothing_radius=2)
    a = synth_features(scene, spec, 9, num_classes=3)
    b = synth_features(scene, spec, 9, num_classes=3)
    c = synth_features(scene, spec, 10, num_classes=3)
    assert all(np.array_equal(x.values, y.values) for x, y in zip(a, b))
    assert not np.array_equal(a[0].values, c[0].values)


def test_disk_signed_distance_matches_analytic():
    cx, cy, r = 0.45, 0.55, 0.27
    scene = Scene((Disk(cx, cy, r),))
    pts = np.random.default_rng(2).uniform(0, 1, (10_000, 2))
    d = np.hypot(pts[:, 0] - cx, pts[:, 1] - cy)
    want = np.where(d <= r, 1.0, -1.0) * np.abs(d - r)
    assert np.abs(signed_distance(scene, pts) - want).max() <= 1e-12


def test_signed_distance_target_class():
    scene = Scene((Disk(0.3, 0.5, 0.1, 1), Disk(0.7, 0.5, 0.1, 2)))
    assert signed_distance(scene, [(0.7, 0.5)])[0] == pytest.approx(0.1)
    assert signed_distance(scene, [(0.7, 0.5)], target_class=1)[0] == pytest.approx(-0.1)
    assert signed_distance(scene, [(0.7, 0.5)], clamp=0.05)[0] == 0.05


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_signed_distance_is_one_lipschitz(seed):
    scene = generate_dataset(1, 3, seed=seed, shapes_per_scene=(1, 3))[0]
    rng = np.random.default_rng(seed)
    p = rng.uniform(0, 1, (300, 2))
    q = np.clip(p + rng.normal(0, 0.05, p.shape), 0, 1)
    diff = np.abs(signed_distance(scene, p) - signed_distance(scene, q))
    # blob outlines are evaluated on a 1024-gon; its sagitta is far below 1e-5
    assert np.all(diff <= np.hypot(*(p - q).T) + 1e-5)


def test_generate_dataset_examples():
    assert generate_dataset(0) == []
    a = generate_dataset(5, 3, seed=1)
    assert a == generate_dataset(5, 3, seed=1)
    assert a != generate_dataset(5, 3, seed=2)
    assert all(1 <= s.class_id < 3 for scene in a for s in scene.shapes)


def test_dataset_validator_sweep():
    scenes = generate_dataset(1000, 4, seed=123, shapes_per_scene=(1, 3))
    theta = np.linspace(0, 2 * np.pi, 720, endpoint=False)
    kinds = set()
    for scene in scenes:
        assert 1 <= len(scene.shapes) <= 3
        for s in scene.shapes:
            kinds.add(type(s).__name__)
            if isinstance(s, FourierBlob):
                assert sum(abs(a) for a, _ in s.harmonics) < 1
                assert s.radius_at(theta).min() > 0
                assert 0.08 <= s.base_radius <= 0.3
            elif isinstance(s, Polygon):
                assert 5 <= len(s.vertices) <= 9
                assert is_simple_polygon(s.vertices)
            elif isinstance(s, Disk):
                assert 0.05 <= s.radius <= 0.4
            else:
                assert 0.05 <= min(s.half_w, s.half_h) <= max(s.half_w, s.half_h) <= 0.3
    assert kinds == {"Disk", "RotatedRect", "Polygon", "FourierBlob"}


def test_shape_mix_restricts_kinds():
    scenes = generate_dataset(20, 2, {"disk": 1.0}, seed=0)
    assert all(isinstance(s, Disk) for sc in scenes for s in sc.shapes)
    with pytest.raises(ValueError):
        generate_dataset(1, 2, {"hexagon": 1.0})


def test_scene_text_round_trip(tmp_path):
    scenes = generate_dataset(30, 4, seed=8, shapes_per_scene=(1, 3))
    for i, scene in enumerate(scenes):
        save_scene(tmp_path / f"{i}.txt", scene)
        assert load_scene(tmp_path / f"{i}.txt") == scene


def test_parse_scene_errors():
    assert parse_scene("# comment\n\ndisk 1 0.5 0.5 0.2\n").shapes == (Disk(0.5, 0.5, 0.2, 1),)
    with pytest.raises(ValueError, match="line 1"):
        parse_scene("hexagon 1 0.5")
    with pytest.raises(ValueError):
        parse_scene("polygon 1 3 0 0 1 0")
    with pytest.raises(ValueError):
        parse_scene("disk 1 0.5 0.5 -0.2")
