import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bartinfluence.diagnostics import (
    CooksComponents,
    DiagnosticReport,
    cooks_cutoff,
    cooks_posterior,
    cooks_single,
    cpo_from_logf,
    detect,
    diagnose,
    kl_from_logf,
    log_densities,
    thresholds,
)


def test_cooks_single():
    c = CooksComponents(B=4, e=0.5, sigma=0.25, n_at=3)
    assert cooks_single(c) == pytest.approx(0.25 * 4 * 3 / 4)
    assert math.isinf(cooks_single(CooksComponents(B=4, e=0.5, sigma=0.25, n_at=1)))


def test_cooks_cutoffs_exact():
    assert cooks_cutoff(2) == 0.15625
    assert cooks_cutoff(3) == 0.3515625


@given(arrays(np.float64, (50, 3), elements=st.floats(-30, 5)))
def test_kl_nonnegative(logf):
    assert np.all(kl_from_logf(logf) >= -1e-9)


def test_constant_density_limits():
    logf = np.full((100, 2), -1.3)
    assert np.allclose(kl_from_logf(logf), 0.0)
    assert np.allclose(cpo_from_logf(logf), 1.3)
    assert np.isinf(cpo_from_logf(logf, violates=np.array([True, False])))[0]


def test_thresholds_cpo_is_log_mean_exp():
    sigma = np.array([0.5, 1.0, 2.0])
    t = thresholds(sigma, 2, kl_values=np.arange(100.0))
    inner = 0.5 * math.log(2 * math.pi) + np.log(sigma) + 2.0
    assert t["cpo"] == pytest.approx(math.log(np.mean(np.exp(inner))))
    assert t["kl"] == pytest.approx(np.quantile(np.arange(100.0), 0.975))
    with pytest.raises(ValueError):
        thresholds(sigma, 2)
    sub = thresholds(sigma, 2, kl_rule="substitution")
    assert sub["kl"] == pytest.approx(np.mean(-inner) + t["cpo"])


def test_report_consistency(toy_sample, toy_data, tmp_path):
    rep = diagnose(toy_sample, toy_data)
    assert rep.n == toy_data.n
    fin = np.isfinite(rep.cooks_mean) & np.isfinite(rep.cooks_max)
    assert np.all(rep.cooks_mean[fin] <= rep.cooks_max[fin] + 1e-15)
    logf = log_densities(toy_sample, toy_data)
    assert logf.shape == (toy_sample.ndraws, toy_data.n)
    assert np.array_equal(cooks_posterior(toy_sample, toy_data, "mean"), rep.cooks_mean)
    f = tmp_path / "d.csv"
    rep.to_csv(f)
    assert DiagnosticReport.from_csv(f) == rep
    combined = detect(rep, "combined", 2)
    assert combined == detect(rep, "cooks", 2) | detect(rep, "cpo", 2)
    assert detect(rep, "cpo", 3) <= detect(rep, "cpo", 2)


def test_n0_tolerance_controls_infinities(toy_sample, toy_data):
    strict = diagnose(toy_sample, toy_data, exact=False)
    loose = diagnose(toy_sample, toy_data, exact=False, n0_tolerance=1.0)
    assert not np.any(np.isinf(loose.cpo))
    inf = np.isinf(strict.cpo)
    assert np.array_equal(inf, strict.violation_rate > 0)
    assert np.array_equal(strict.cpo[~inf], loose.cpo[~inf])
