import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import bilinear_point
from pointrend.grid import (
    FeatureMap,
    ProbGrid,
    bilinear_sample,
    bilinear_upsample_x2,
    cell_center,
    cell_centers,
    concat_features,
    scatter,
    upsample_to,
)

SQUARE = np.array([[[0.0, 1.0], [2.0, 3.0]]])


def grids(max_side=6, channels=st.integers(1, 3)):
    return st.tuples(channels, st.integers(1, max_side), st.integers(1, max_side)).flatmap(
        lambda s: arrays(np.float64, s, elements=st.floats(0, 1, allow_nan=False)))


@pytest.mark.parametrize("args, expected", [((0, 0, 2, 2), (0.25, 0.25)), ((1, 1, 2, 2), (0.75, 0.75)),
                                            ((0, 0, 1, 1), (0.5, 0.5)), ((2, 0, 3, 5), (0.1, 5 / 6))])
def test_cell_center(args, expected):
    assert cell_center(*args) == pytest.approx(expected, abs=1e-15)


def test_cell_center_out_of_range():
    with pytest.raises(IndexError):
        cell_center(2, 0, 2, 2)
    with pytest.raises(IndexError):
        cell_centers([[0, -1]], 2, 2)


def test_constant_map_samples_constant():
    fm = FeatureMap(np.full((1, 3, 4), 5.0))
    pts = np.random.default_rng(0).uniform(0, 1, (50, 2))
    assert np.all(bilinear_sample(fm, pts) == 5.0)


def test_square_map_examples():
    assert bilinear_sample(SQUARE, [(0.5, 0.5)])[0, 0] == pytest.approx(1.5)
    assert bilinear_sample(SQUARE, [(0.0, 0.0)])[0, 0] == 0.0
    assert bilinear_sample(SQUARE, [(1.0, 1.0)])[0, 0] == 3.0
    # x moves along columns, y along rows
    assert bilinear_sample(SQUARE, [(0.75, 0.25)])[0, 0] == 1.0
    assert bilinear_sample(SQUARE, [(0.25, 0.75)])[0, 0] == 2.0


def test_sample_matches_closed_form_oracle():
    rng = np.random.default_rng(1)
    values = rng.normal(size=(2, 5, 7))
    pts = rng.uniform(-0.1, 1.1, (2000, 2))
    got = bilinear_sample(values, pts)
    want = np.array([bilinear_point(values, x, y) for x, y in pts])
    assert np.abs(got - want).max() <= 1e-12


def test_sample_rejects_bad_input():
    with pytest.raises(ValueError):
        bilinear_sample(SQUARE, [(np.nan, 0.5)])
    with pytest.raises(ValueError):
        FeatureMap(np.zeros((2, 2)))
    assert bilinear_sample(SQUARE, np.zeros((0, 2))).shape == (0, 1)


@settings(max_examples=60, deadline=None)
@given(grids())
def test_cell_centres_reproduce_cells(values):
    c, h, w = values.shape
    rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    cells = np.stack([rr.ravel(), cc.ravel()], axis=1)
    got = bilinear_sample(values, cell_centers(cells, h, w))
    assert np.abs(got - values.reshape(c, -1).T).max() <= 1e-6


@settings(max_examples=60, deadline=None)
@given(grids(), st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=20))
def test_sample_is_convex_combination(values, pts):
    c, h, w = values.shape
    got = bilinear_sample(values, pts)
    for (x, y), v in zip(pts, got):
        u = min(max(x * w - 0.5, 0), w - 1)
        t = min(max(y * h - 0.5, 0), h - 1)
        cols = sorted({min(int(np.floor(u)), w - 1), min(int(np.ceil(u)), w - 1)})
        rows = sorted({min(int(np.floor(t)), h - 1), min(int(np.ceil(t)), h - 1)})
        nb = values[:, rows][:, :, cols].reshape(c, -1)
        assert np.all(v >= nb.min(axis=1) - 1e-12)
        assert np.all(v <= nb.max(axis=1) + 1e-12)


def test_upsample_examples():
    up = bilinear_upsample_x2(ProbGrid(np.full((1, 1, 1), 0.3)))
    assert up.shape == (1, 2, 2) and np.all(up.values == 0.3)
    const = bilinear_upsample_x2(ProbGrid(np.full((2, 3, 3), 0.5)))
    assert const.shape == (2, 6, 6) and np.allclose(const.values, 0.5)


def test_upsample_square_matches_per_cell_sampling():
    grid = ProbGrid(SQUARE / 3.0)
    up = bilinear_upsample_x2(grid)
    rr, cc = np.meshgrid(np.arange(4), np.arange(4), indexing="ij")
    want = bilinear_sample(grid, cell_centers(np.stack([rr.ravel(), cc.ravel()], 1), 4, 4)).T.reshape(1, 4, 4)
    assert np.abs(up.values - want).max() <= 1e-12
    # frozen: the inner 2x2 block is 3/4-1/4 blends of the corners
    expected = np.array([[0.0, 0.25, 0.75, 1.0], [0.5, 0.75, 1.25, 1.5],
                         [1.5, 1.75, 2.25, 2.5], [2.0, 2.25, 2.75, 3.0]]) / 3.0
    assert np.allclose(up.values[0], expected, atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(grids())
def test_upsample_agrees_with_sampling(values):
    grid = ProbGrid(values) if values.shape[0] == 1 else ProbGrid(values[:1])
    up = bilinear_upsample_x2(grid)
    _, h, w = up.shape
    rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    want = bilinear_sample(grid, cell_centers(np.stack([rr.ravel(), cc.ravel()], 1), h, w)).T.reshape(up.shape)
    assert np.abs(up.values - want).max() <= 1e-6


def test_upsample_to():
    g = ProbGrid(np.full((1, 7, 7), 0.2))
    assert upsample_to(g, 28).shape == (1, 28, 28)
    assert upsample_to(g, 7) is g
    with pytest.raises(ValueError):
        upsample_to(g, 30)


def test_prob_grid_validation():
    with pytest.raises(ValueError):
        ProbGrid(np.full((1, 2, 2), 1.5))
    with pytest.raises(ValueError):
        ProbGrid(np.full((2, 2, 2), 0.4))
    ok = ProbGrid.from_unnormalized(np.full((2, 2, 2), 0.5004))
    assert np.allclose(ok.values.sum(axis=0), 1.0)
    with pytest.raises(ValueError):
        ProbGrid.from_unnormalized(np.full((2, 2, 2), 0.51))
    g = ProbGrid(np.zeros((1, 2, 2)))
    with pytest.raises(ValueError):
        g.values[0, 0, 0] = 1.0


def test_scatter_examples():
    g = ProbGrid(np.full((1, 3, 3), 0.5))
    assert scatter(g, np.zeros((0, 2), int), np.zeros((0, 1))) is g
    one = scatter(ProbGrid(np.zeros((1, 1, 1))), [(0, 0)], [[0.9]])
    assert one.values[0, 0, 0] == 0.9
    with pytest.raises(ValueError):
        scatter(g, [(0, 0), (0, 0)], [[0.1], [0.2]])
    with pytest.raises(IndexError):
        scatter(g, [(3, 0)], [[0.1]])
    with pytest.raises(ValueError):
        scatter(g, [(0, 0)], [[0.1], [0.2]])


def test_scatter_read_back_random():
    rng = np.random.default_rng(2)
    for _ in range(100):
        k, h, w = rng.integers(1, 4), rng.integers(1, 9), rng.integers(1, 9)
        base = rng.dirichlet(np.ones(k), size=(h, w)).transpose(2, 0, 1) if k > 1 else rng.uniform(size=(1, h, w))
        g = ProbGrid(base)
        n = rng.integers(0, h * w + 1)
        flat = rng.choice(h * w, size=n, replace=False)
        cells = np.stack([flat // w, flat % w], axis=1)
        vals = rng.dirichlet(np.ones(k), size=n) if k > 1 else rng.uniform(size=(n, 1))
        out = scatter(g, cells, vals)
        assert np.array_equal(out.values[:, cells[:, 0], cells[:, 1]].T, vals.reshape(n, k))
        untouched = np.ones((h, w), bool)
        untouched[cells[:, 0], cells[:, 1]] = False
        assert np.array_equal(out.values[:, untouched], g.values[:, untouched])


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 6), st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_disjoint_scatters_commute(h, w, seed):
    rng = np.random.default_rng(seed)
    g = ProbGrid(rng.uniform(size=(1, h, w)))
    flat = rng.permutation(h * w)
    cut = rng.integers(0, h * w + 1)
    a, b = flat[:cut], flat[cut:]
    ca, cb = np.stack([a // w, a % w], 1), np.stack([b // w, b % w], 1)
    va, vb = rng.uniform(size=(len(a), 1)), rng.uniform(size=(len(b), 1))
    one = scatter(scatter(g, ca, va), cb, vb)
    two = scatter(scatter(g, cb, vb), ca, va)
    assert np.array_equal(one.values, two.values)


def test_concat_features():
    a = np.array([[1.0, 2.0]])
    assert concat_features(a, [[3.0]]).tolist() == [[1.0, 2.0, 3.0]]
    assert np.array_equal(concat_features(a, np.zeros((1, 0))), a)
    assert concat_features(np.zeros((4, 2)), np.zeros(4)).shape == (4, 3)
    with pytest.raises(ValueError):
        concat_features(np.zeros((3, 2)), np.zeros((2, 1)))
