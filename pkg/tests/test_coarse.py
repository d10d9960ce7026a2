import math

import numpy as np
import pytest

from pointrend.coarse import (
    AffineCoarseParams,
    CoarseConfig,
    coarse_loss,
    coarse_loss_and_grad,
    oracle_coarse,
    pool_features,
    trained_coarse_forward,
)
from pointrend.grid import FeatureMap, ProbGrid
from pointrend.scenes import Disk, RotatedRect, Scene

CLEAN = CoarseConfig(7, "oracle_pool", 0.0, 8)


def test_oracle_full_and_empty():
    full = Scene((RotatedRect(0.5, 0.5, 0.6, 0.6),))
    assert np.all(oracle_coarse(full, CLEAN).values == 1.0)
    assert np.all(oracle_coarse(Scene(()), CLEAN).values == 0.0)


def test_oracle_half_plane():
    # boundary at y = 0.5 runs through the middle of row 3 of a 7x7 grid
    half = Scene((RotatedRect(0.5, 0.75, 2.0, 0.25),))
    v = oracle_coarse(half, CLEAN).values[0]
    assert np.all(v[:3] == 0.0) and np.all(v[4:] == 1.0)
    assert np.all(np.abs(v[3] - 0.5) <= 1 / 16)


def test_oracle_multiclass_is_on_the_simplex():
    scene = Scene((Disk(0.4, 0.5, 0.3, 1), Disk(0.6, 0.5, 0.2, 2)))
    g = oracle_coarse(scene, CoarseConfig(7, noise_sigma=0.2, seed=3), None, 3)
    assert g.shape == (3, 7, 7)
    assert np.allclose(g.values.sum(axis=0), 1.0)


def test_oracle_noise_is_seeded():
    scene = Scene((Disk(0.5, 0.5, 0.3),))
    cfg = CoarseConfig(7, noise_sigma=0.1, seed=1)
    a = oracle_coarse(scene, cfg, noise_seed=4).values
    assert np.array_equal(a, oracle_coarse(scene, cfg, noise_seed=4).values)
    assert not np.array_equal(a, oracle_coarse(scene, cfg, noise_seed=5).values)
    assert np.array_equal(oracle_coarse(scene, CLEAN).values, oracle_coarse(scene, CLEAN).values)


def test_oracle_monotone_in_disk_size():
    prev = None
    for r in np.linspace(0.05, 0.45, 9):
        v = oracle_coarse(Scene((Disk(0.47, 0.52, r),)), CLEAN).values
        if prev is not None:
            assert np.all(v >= prev)
        prev = v


def test_trained_forward_zero_params():
    pooled = np.random.default_rng(0).normal(size=(49, 4))
    assert np.all(trained_coarse_forward(AffineCoarseParams.zeros(4, 1), pooled, 7).values == 0.5)
    assert np.allclose(trained_coarse_forward(AffineCoarseParams.zeros(4, 3), pooled, 7).values, 1 / 3)


def test_trained_forward_matches_per_cell_oracle():
    rng = np.random.default_rng(1)
    pooled = rng.normal(size=(9, 4))
    params = AffineCoarseParams(rng.normal(size=(4, 3)), rng.normal(size=3))
    got = trained_coarse_forward(params, pooled, 3).values
    for cell in range(9):
        z = [sum(pooled[cell, i] * params.weight[i, k] for i in range(4)) + params.bias[k] for k in range(3)]
        e = [math.exp(v - max(z)) for v in z]
        want = [v / sum(e) for v in e]
        assert np.allclose(got[:, cell // 3, cell % 3], want, atol=1e-12)


def test_coarse_loss_examples():
    gt = ProbGrid(np.array([[[0.9, 0.2], [0.6, 0.0]]]))
    exact = ProbGrid((gt.values >= 0.5).astype(float))
    assert coarse_loss(exact, gt) <= 1.2e-7
    assert coarse_loss(ProbGrid(np.full((1, 2, 2), 0.5)), gt) == pytest.approx(math.log(2))


def test_coarse_loss_vs_scalar_oracle():
    rng = np.random.default_rng(2)
    pred = ProbGrid(rng.uniform(0.01, 0.99, size=(1, 4, 4)))
    gt = ProbGrid(rng.uniform(size=(1, 4, 4)))
    total = 0.0
    for p, g in zip(pred.values.ravel(), gt.values.ravel()):
        y = 1.0 if g >= 0.5 else 0.0
        total += -(y * math.log(p) + (1 - y) * math.log(1 - p))
    assert coarse_loss(pred, gt) == pytest.approx(total / 16, abs=1e-12)


@pytest.mark.parametrize("k", [1, 3])
def test_coarse_gradient_finite_differences(k):
    rng = np.random.default_rng(k)
    pooled = rng.normal(size=(16, 5))
    gt = ProbGrid(rng.dirichlet(np.ones(k), size=(4, 4)).transpose(2, 0, 1)) if k > 1 else \
        ProbGrid(rng.uniform(size=(1, 4, 4)))
    params = AffineCoarseParams(rng.normal(scale=0.5, size=(5, k)), rng.normal(scale=0.5, size=k))
    _, (gw, gb) = coarse_loss_and_grad(params, pooled, gt)
    h = 1e-6
    for arr, grad in ((params.weight, gw), (params.bias, gb)):
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            up = coarse_loss(trained_coarse_forward(params, pooled, 4), gt)
            arr[idx] = old - h
            down = coarse_loss(trained_coarse_forward(params, pooled, 4), gt)
            arr[idx] = old
            assert grad[idx] == pytest.approx((up - down) / (2 * h), rel=1e-5, abs=1e-9)


def test_pool_features():
    values = np.arange(16.0).reshape(1, 4, 4)
    pooled = pool_features([FeatureMap(values)], 2)
    assert pooled[:, 0].tolist() == [2.5, 4.5, 10.5, 12.5]
    with pytest.raises(ValueError):
        pool_features([FeatureMap(np.zeros((1, 2, 2)))], 3)
