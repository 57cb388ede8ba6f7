"""Per-observation influence diagnostics for tree posteriors.

Three families are computed over the posterior draws:

* conditional Cook's distance ``D = (1/B) (e/sigma)^2 n / (n - 1)^2``
  per tree, aggregated over trees by mean or max, or taken on the
  supertree partition (``B^S``, ``n^S``);
* the case-deletion KL divergence estimate
  ``mean_k log f_k + log mean_k 1/f_k``;
* the log inverse conditional predictive ordinate ``log mean_k 1/f_k``.

``f_k`` is the Gaussian density of ``y_i`` under draw ``k``.  All density
averages are taken in log space.  An observation whose terminal would drop
below ``n0`` rows on deletion (``n - 1 < n0`` in any tree of any draw) gets
infinite KL and CPO values.  ``n0_tolerance`` relaxes "any draw" to "more
than this fraction of the draws".
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from ._kernels import node_counts_forest, training_stats
from .data_model import Dataset, PosteriorDraw, PosteriorSample, _as_points
from .supertree import supertree_counts

LOG_2PI = math.log(2.0 * math.pi)
DIAGNOSTICS = ("cooks_mean", "cooks_max", "cooks_exact", "kl", "cpo")
KSD = (2, 3)
KL_QUANTILES = {2: 0.975, 3: 0.995}
# prior imputations for the Cook's cutoff: tree complexity 1/B and node purity n/(n-1)^2
COOKS_COMPLEXITY = 1.0 / 8.0
COOKS_PURITY = 5.0 / 16.0


@dataclass(frozen=True)
class CooksComponents:
    """Inputs of a single conditional Cook's distance."""

    B: int
    e: float
    sigma: float
    n_at: int

    def __post_init__(self):
        if self.B < 1:
            raise ValueError("B must be at least 1")
        if self.n_at < 1:
            raise ValueError("terminal count must be at least 1")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


def cooks_single(components: CooksComponents) -> float:
    """``(1/B) (e/sigma)^2 n / (n-1)^2``; infinite when ``n = 1``."""
    c = components
    if c.n_at <= 1:
        return math.inf
    return (c.e / c.sigma) ** 2 * c.n_at / (c.n_at - 1) ** 2 / c.B


def log_density(y_i: float, draw: PosteriorDraw, x_i) -> float:
    """Gaussian log density of ``y_i`` at the draw's fitted mean."""
    from .data_model import predict_draw

    fit = predict_draw(draw, x_i)
    s = draw.sigma
    return -0.5 * LOG_2PI - math.log(s) - (y_i - fit) ** 2 / (2.0 * s * s)


def _check(sample: PosteriorSample, data: Dataset):
    if data.d != sample.d:
        raise ValueError(f"data has {data.d} predictors, posterior expects {sample.d}")


class _Stats:
    """Per (draw, row) quantities shared by all diagnostics."""

    def __init__(self, sample: PosteriorSample, data: Dataset, n0_tolerance: float = 0.0):
        _check(sample, data)
        f = sample.forest
        X = _as_points(data.predictors, sample.d)
        y = np.ascontiguousarray(data.response, dtype=np.float64)
        counts = node_counts_forest(f.var, f.value, f.left, f.right, f.start, f.m, X)
        nterm = f.n_terminals()
        fit, mincount, cmean, cmax = training_stats(
            f.var, f.value, f.left, f.right, f.mu, f.start, f.m, sample.offset, counts, nterm, sample.sigma, X, y
        )
        s = sample.sigma[:, None]
        self.X = X
        self.fit = fit
        self.resid = y[None, :] - fit
        self.logf = -0.5 * LOG_2PI - np.log(s) - self.resid**2 / (2.0 * s * s)
        self.mincount = mincount
        self.cooks_mean_draws = cmean
        self.cooks_max_draws = cmax
        self.n0 = sample.config.n0
        # deletion would leave fewer than n0 rows in some terminal
        self.violation_rate = np.mean(mincount - 1 < self.n0, axis=0)
        self.violates = self.violation_rate > n0_tolerance


def log_densities(sample: PosteriorSample, data: Dataset) -> np.ndarray:
    """``log f(y_i | Theta^(k))`` for every draw and row, shape (N, n)."""
    return _Stats(sample, data).logf


def _posterior_mean(per_draw: np.ndarray) -> np.ndarray:
    # any infinite draw makes the average infinite
    with np.errstate(invalid="ignore"):
        out = per_draw.mean(axis=0)
    out[np.any(np.isinf(per_draw), axis=0)] = np.inf
    return out


def _exact_cooks_draws(sample: PosteriorSample, X: np.ndarray, resid: np.ndarray) -> np.ndarray:
    out = np.empty_like(resid)
    for k in range(sample.ndraws):
        B, ns = supertree_counts(sample, X, k)
        e2 = (resid[k] / sample.sigma[k]) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            d = e2 * ns / (ns - 1.0) ** 2 / B
        d[ns <= 1] = np.inf
        out[k] = d
    return out


def cooks_posterior(sample: PosteriorSample, data: Dataset, variant: str = "mean") -> np.ndarray:
    """Posterior mean of the conditional Cook's distance for every row.

    ``variant``: ``"mean"`` or ``"max"`` over trees, or ``"exact"`` on
    the occupied supertree cells.
    """
    st = _Stats(sample, data)
    if variant == "mean":
        return _posterior_mean(st.cooks_mean_draws)
    if variant == "max":
        return _posterior_mean(st.cooks_max_draws)
    if variant == "exact":
        return _posterior_mean(_exact_cooks_draws(sample, st.X, st.resid))
    raise ValueError(f"unknown Cook's variant {variant!r}")


def kl_from_logf(logf: np.ndarray, violates=False) -> np.ndarray:
    """``mean log f + log mean 1/f`` along axis 0 (draws)."""
    logf = np.asarray(logf, dtype=np.float64)
    N = logf.shape[0]
    out = logf.mean(axis=0) + logsumexp(-logf, axis=0) - math.log(N)
    return np.where(violates, np.inf, out)


def cpo_from_logf(logf: np.ndarray, violates=False) -> np.ndarray:
    """``log mean 1/f`` along axis 0 (draws)."""
    logf = np.asarray(logf, dtype=np.float64)
    out = logsumexp(-logf, axis=0) - math.log(logf.shape[0])
    return np.where(violates, np.inf, out)


def kl_diagnostic(sample: PosteriorSample, data: Dataset, i: int, n0_tolerance: float = 0.0) -> float:
    st = _Stats(sample, data, n0_tolerance)
    return float(kl_from_logf(st.logf[:, i], st.violates[i]))


def cpo_diagnostic(sample: PosteriorSample, data: Dataset, i: int, n0_tolerance: float = 0.0) -> float:
    st = _Stats(sample, data, n0_tolerance)
    return float(cpo_from_logf(st.logf[:, i], st.violates[i]))


def cooks_cutoff(k_sd: float) -> float:
    """Cook's cutoff with ``e = k sigma`` and the prior imputations 1/8 and 5/16."""
    return COOKS_COMPLEXITY * k_sd**2 * COOKS_PURITY


def _substituted_logf(sigma: np.ndarray, k_sd: float) -> np.ndarray:
    return -(0.5 * LOG_2PI + np.log(sigma) + 0.5 * k_sd**2)


def thresholds(sample: PosteriorSample, k_sd: int, kl_values=None, kl_rule: str = "quantile") -> dict:
    """Detection cutoffs for every diagnostic at ``k_sd`` standard deviations.

    Parameters
    ----------
    sample : PosteriorSample
    k_sd : {2, 3}
    kl_values : array, optional
        KL values of the training rows, needed by the quantile rule.
    kl_rule : {"quantile", "substitution"}
        ``"quantile"`` takes the 97.5% (2 sd) or 99.5% (3 sd) quantile of
        the finite KL values; ``"substitution"`` plugs ``e = k sigma`` into
        the KL estimator, draw by draw.
    """
    sigma = np.asarray(sample.sigma if isinstance(sample, PosteriorSample) else sample, dtype=np.float64)
    lf = _substituted_logf(sigma, k_sd)
    cpo = float(logsumexp(-lf) - math.log(lf.size))
    if kl_rule == "substitution":
        kl = float(lf.mean() + cpo)
    elif kl_rule == "quantile":
        if kl_values is None:
            raise ValueError("the quantile rule needs the KL values")
        finite = np.asarray(kl_values, dtype=np.float64)
        finite = finite[np.isfinite(finite)]
        kl = float(np.quantile(finite, KL_QUANTILES[int(k_sd)])) if finite.size else math.inf
    else:
        raise ValueError(f"unknown KL rule {kl_rule!r}")
    c = cooks_cutoff(k_sd)
    return {"cooks_mean": c, "cooks_max": c, "cooks_exact": c, "kl": kl, "cpo": cpo}


@dataclass(eq=False)
class DiagnosticReport:
    """Diagnostic values per observation, their cutoffs and flags."""

    cooks_mean: np.ndarray
    cooks_max: np.ndarray
    cooks_exact: np.ndarray
    kl: np.ndarray
    cpo: np.ndarray
    cutoffs: dict = field(default_factory=dict)
    kl_rule: str = "quantile"
    violation_rate: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.cpo.size

    def values(self, name: str) -> np.ndarray:
        if name not in DIAGNOSTICS:
            raise KeyError(name)
        return getattr(self, name)

    def flags(self, name: str, k_sd: int = 2) -> np.ndarray:
        """Closed rule: ``value >= cutoff`` (infinite values always flag)."""
        v = self.values(name)
        return (v >= self.cutoffs[int(k_sd)][name]) | np.isinf(v)

    def infinite(self) -> dict[str, np.ndarray]:
        return {name: np.flatnonzero(np.isinf(self.values(name))) for name in DIAGNOSTICS}

    def __eq__(self, other):
        if not isinstance(other, DiagnosticReport):
            return NotImplemented
        same = all(np.array_equal(self.values(n), other.values(n), equal_nan=True) for n in DIAGNOSTICS)
        return same and self.cutoffs == other.cutoffs and self.kl_rule == other.kl_rule

    # -- CSV ---------------------------------------------------------------

    def to_csv(self, path) -> None:
        """Write the per-row table plus ``.thresholds.csv`` and ``.infinite.csv`` sidecars."""
        path = str(path)
        flag_cols = [(n, k) for k in KSD for n in DIAGNOSTICS]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", *DIAGNOSTICS, *[f"flag_{n}_{k}sd" for n, k in flag_cols]])
            flags = {(n, k): self.flags(n, k) for n, k in flag_cols}
            for i in range(self.n):
                vals = [repr(float(self.values(n)[i])) for n in DIAGNOSTICS]
                w.writerow([i, *vals, *[int(flags[c][i]) for c in flag_cols]])
        with open(_sidecar(path, "thresholds"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["ksd", *DIAGNOSTICS, "kl_rule"])
            for k in KSD:
                w.writerow([k, *[repr(float(self.cutoffs[k][n])) for n in DIAGNOSTICS], self.kl_rule])
        with open(_sidecar(path, "infinite"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["diagnostic", "index"])
            for name, idx in self.infinite().items():
                for i in idx:
                    w.writerow([name, int(i)])

    @classmethod
    def from_csv(cls, path) -> "DiagnosticReport":
        path = str(path)
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        cols = {n: np.array([float(r[n]) for r in rows]) for n in DIAGNOSTICS}
        cutoffs, rule = {}, "quantile"
        with open(_sidecar(path, "thresholds"), newline="", encoding="utf-8") as fh:
            for r in csv.DictReader(fh):
                cutoffs[int(r["ksd"])] = {n: float(r[n]) for n in DIAGNOSTICS}
                rule = r["kl_rule"]
        return cls(**cols, cutoffs=cutoffs, kl_rule=rule)


def _sidecar(path: str, kind: str) -> str:
    stem = path[:-4] if path.endswith(".csv") else path
    return f"{stem}.{kind}.csv"


def diagnose(
    sample: PosteriorSample,
    data: Dataset,
    *,
    exact: bool = True,
    kl_rule: str = "quantile",
    n0_tolerance: float = 0.0,
) -> DiagnosticReport:
    """All diagnostics and both cutoff levels for the training rows of ``data``.

    Parameters
    ----------
    exact : bool
        Also compute the supertree Cook's distance (one pass per draw).
    kl_rule : {"quantile", "substitution"}
        KL cutoff rule, see :func:`thresholds`.
    n0_tolerance : float
        Fraction of draws allowed to break the ``n0`` constraint on deletion
        before KL and CPO are reported as infinite.  ``0`` means any draw,
        ``1`` never.
    """
    if not 0.0 <= n0_tolerance <= 1.0:
        raise ValueError("n0_tolerance must lie in [0, 1]")
    st = _Stats(sample, data, n0_tolerance)
    kl = kl_from_logf(st.logf, st.violates)
    cpo = cpo_from_logf(st.logf, st.violates)
    exact_vals = (
        _posterior_mean(_exact_cooks_draws(sample, st.X, st.resid)) if exact else np.full(data.n, np.nan)
    )
    cutoffs = {k: thresholds(sample, k, kl, kl_rule) for k in KSD}
    return DiagnosticReport(
        _posterior_mean(st.cooks_mean_draws),
        _posterior_mean(st.cooks_max_draws),
        exact_vals,
        kl,
        cpo,
        cutoffs,
        kl_rule,
        st.violation_rate,
    )


RULES = ("cooks", "cooks_max", "cooks_exact", "kl", "cpo", "combined")


def detect(report: DiagnosticReport, rule: str = "combined", k_sd: int = 2) -> set[int]:
    """Indices flagged by ``rule``; ``"combined"`` is the union of mean-Cook's and CPO flags."""
    if rule == "combined":
        mask = report.flags("cooks_mean", k_sd) | report.flags("cpo", k_sd)
    elif rule == "cooks":
        mask = report.flags("cooks_mean", k_sd)
    elif rule in ("cooks_max", "cooks_exact", "kl", "cpo"):
        mask = report.flags(rule, k_sd)
    else:
        raise ValueError(f"unknown detection rule {rule!r}")
    return {int(i) for i in np.flatnonzero(mask)}
