import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bartinfluence.reweighting import (
    DegenerateWeightsError,
    Reweighter,
    normalize_log_weights,
    weighted_prediction,
    weighted_quantiles,
    write_weights,
)


@pytest.fixture(scope="module")
def rw(toy_sample, toy_data):
    return Reweighter(toy_sample, toy_data)


@pytest.fixture(scope="module")
def grid_points():
    return np.random.default_rng(4).uniform(0, 1, (600, 2))


@given(arrays(np.float64, 20, elements=st.floats(-50, 50)))
def test_normalization_shift(lw):
    out = normalize_log_weights(lw)
    assert out.max() == 0.0
    m1, _ = weighted_prediction(np.arange(20.0), lw)
    m2, _ = weighted_prediction(np.arange(20.0), lw + 7.0)
    assert m1 == pytest.approx(m2, rel=1e-12)


def test_weighted_quantiles_equal_weights_and_point_mass():
    v = np.arange(1.0, 11.0)
    assert weighted_quantiles(v, np.ones(10), [0.5])[0] == pytest.approx(5.5)
    w = np.zeros(10)
    w[3] = 1.0
    assert np.all(weighted_quantiles(v, w, [0.1, 0.9]) == 4.0)


def test_weighted_prediction_degenerate():
    with pytest.raises(DegenerateWeightsError):
        weighted_prediction(np.ones(3), np.full(3, -np.inf))
    with pytest.raises(ValueError):
        weighted_prediction(np.ones(3), weights=[1.0, -1.0, 0.0])


def test_global_weights_are_inverse_density(rw):
    lw = rw.draw_log_weights(5, "global")
    assert np.array_equal(lw, rw.neglogf[:, 5])


@pytest.mark.parametrize("method", ["union", "int", "union-int", "l1"])
def test_locality(rw, grid_points, method):
    i = 0 if rw.valid[:, 0].any() else int(np.flatnonzero(rw.valid.any(axis=0))[0])
    mask = rw.region_mask(method, i, grid_points, delta=0.1).any(axis=0)
    res = rw.predict(method, [i], grid_points, delta=0.1, on_degenerate="nan")
    out = ~mask
    assert np.array_equal(res.weighted_mean[out], res.unweighted_mean[out])
    assert np.array_equal(res.weighted_q[out], rw.predict("none", [i], grid_points).weighted_q[out])


def test_nesting(rw, grid_points):
    i = 2
    m_int = rw.region_mask("int", i, grid_points)
    m_ui = rw.region_mask("union-int", i, grid_points)
    assert np.all(m_ui[0] >= m_int.any(axis=0))
    assert rw.region_mask("l1", i, grid_points, delta=5.0).all()


def test_multiple_holdouts_add(rw, grid_points):
    a = rw.log_weights("union-int", [1], grid_points)
    b = rw.log_weights("union-int", [4], grid_points)
    both = rw.log_weights("union-int", [1, 4], grid_points)
    assert np.array_equal(both, a + b)
    with pytest.raises(ValueError):
        rw.log_weights("union-int", [1, 1], grid_points)


def test_degenerate_handling(toy_sample, toy_data):
    rw = Reweighter(toy_sample, toy_data)
    rw.base = np.full_like(rw.base, -np.inf)
    x = toy_data.predictors[:3]
    with pytest.raises(DegenerateWeightsError):
        rw.predict("int", [0], x)
    res = rw.predict("int", [0], x, on_degenerate="nan")
    assert np.isnan(res.weighted_mean[0]) and res.errors[0]
    fb = rw.predict("int", [0], x, on_degenerate="fallback")
    assert fb.weighted_mean[0] == fb.unweighted_mean[0]


def test_l1_needs_delta(rw, grid_points):
    with pytest.raises(ValueError):
        rw.predict("l1", [0], grid_points)


def test_csv_outputs(rw, grid_points, tmp_path):
    res = rw.predict("union-int", [3], grid_points[:10], on_degenerate="nan")
    f = tmp_path / "p.csv"
    res.to_csv(f, ("a", "b"))
    header = f.read_text().splitlines()[0]
    assert header == "a,b,unweighted_mean,weighted_mean,q025,q975,method,error"
    g = tmp_path / "w.csv"
    write_weights(g, rw, "union-int", [3])
    lines = g.read_text().splitlines()
    assert lines[0] == "holdout,draw,log_weight,n_region_train"
    assert len(lines) == 1 + rw.ndraws
