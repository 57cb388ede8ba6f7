"""Case-deletion importance reweighting of posterior draws.

Holding out ``y_i`` turns the full posterior into the case-deleted one up
to the weights ``w_k = 1 / f(y_i | Theta^(k))``, with a zero weight for
draws whose terminals would fall below ``n0`` rows.  Because a tree model
only changes locally, the weights need only be applied to predictions in a
region around ``x_i``:

``global``     every prediction, every draw (no ``n0`` indicator);
``union``      draws where ``x`` shares a terminal with ``x_i`` in some tree;
``int``        draws where ``x`` lies in the supertree cell of ``x_i``;
``union-int``  all draws, when ``x`` lies in the union of those cells;
``l1``         all draws, when ``|x_v - x_iv| < delta`` for every ``v``.

Outside the region a draw keeps weight one.  Log weights are used
throughout (``-inf`` is a zero weight).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ._kernels import any_leaf_match, box_mask, leaf_nodes
from .data_model import Dataset, PosteriorSample, _as_points
from .diagnostics import _Stats
from .supertree import UnionRegion, supertree_cells

METHODS = ("none", "global", "union", "int", "union-int", "l1")
DEFAULT_QUANTILES = (0.025, 0.975)


class DegenerateWeightsError(RuntimeError):
    """Every draw received zero weight."""

    def __init__(self, holdouts, method: str, points=None):
        self.holdouts = tuple(int(i) for i in np.atleast_1d(holdouts))
        self.method = method
        self.points = None if points is None else tuple(int(p) for p in np.atleast_1d(points))
        where = f" at query point(s) {list(self.points)}" if self.points else ""
        super().__init__(
            f"all importance weights are zero for held-out observation(s) {list(self.holdouts)} "
            f"under method {method!r}{where}: no draw keeps every affected terminal at n0 rows"
        )


def normalize_log_weights(log_w: np.ndarray) -> np.ndarray:
    """Shift so the largest finite log weight is 0 (along axis 0)."""
    log_w = np.asarray(log_w, dtype=np.float64)
    top = np.max(log_w, axis=0)
    top = np.where(np.isfinite(top), top, 0.0)
    return log_w - top


def weighted_quantiles(values: np.ndarray, weights: np.ndarray, qs) -> np.ndarray:
    """Quantiles of the weighted empirical distribution.

    The CDF is linearly interpolated through the midpoints of the sorted
    weight masses; with equal weights this is the Hazen plotting rule.
    """
    values = np.asarray(values, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    keep = weights > 0
    v, w = values[keep], weights[keep]
    order = np.argsort(v, kind="stable")
    v, w = v[order], w[order]
    p = w / w.sum()
    mid = np.cumsum(p) - 0.5 * p
    return np.interp(np.asarray(qs, dtype=np.float64), mid, v)


def weighted_prediction(predictions, log_weights=None, quantiles=DEFAULT_QUANTILES, *, weights=None):
    """Self-normalized weighted mean and quantiles of per-draw predictions.

    Parameters
    ----------
    predictions : array (N,)
        ``g(Theta^(k))`` for each draw.
    log_weights : array (N,), optional
        Unnormalized log weights (``-inf`` for zero weight).
    weights : array (N,), optional
        Linear weights, as an alternative to ``log_weights``.

    Returns
    -------
    mean : float
    q : ndarray
        The requested quantiles.
    """
    g = np.asarray(predictions, dtype=np.float64)
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64)
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        top = w.max()
        if not top > 0:
            raise DegenerateWeightsError([], "weights")
        w = w / top
    elif log_weights is None:
        return float(g.mean()), weighted_quantiles(g, np.ones_like(g), quantiles)
    else:
        lw = normalize_log_weights(log_weights)
        if not np.any(np.isfinite(lw)):
            raise DegenerateWeightsError([], "log_weights")
        w = np.exp(lw)
    return float(np.dot(w, g) / w.sum()), weighted_quantiles(g, w, quantiles)


@dataclass
class WeightPlan:
    """Weights of one reweighting scheme for one or more held-out rows.

    ``log_weights`` has shape (N,) for ``global`` and (N, n_points)
    otherwise, max-normalized per column.  ``region`` is ``None`` for
    ``global``, a (N, n_points) terminal-overlap mask for ``union``, a
    per-draw ``(lo, hi)`` pair for ``int``, a :class:`UnionRegion` for
    ``union-int`` and a ``(lo, hi)`` box for ``l1``.
    """

    method: str
    holdout: tuple
    log_weights: np.ndarray
    region: object = None
    delta: float | None = None
    degenerate: np.ndarray = field(default=None)

    def __post_init__(self):
        self.log_weights = normalize_log_weights(self.log_weights)
        self.degenerate = ~np.any(np.isfinite(self.log_weights), axis=0)

    @property
    def is_degenerate(self) -> bool:
        return bool(np.any(self.degenerate))


@dataclass
class PredictionResult:
    X: np.ndarray
    unweighted_mean: np.ndarray
    weighted_mean: np.ndarray
    weighted_q: np.ndarray
    quantiles: tuple
    method: str
    errors: list

    @property
    def n_failed(self) -> int:
        return sum(e is not None for e in self.errors)

    def to_csv(self, path, names=None) -> None:
        d = self.X.shape[1]
        names = list(names) if names is not None else [f"x{v}" for v in range(d)]
        qcols = [quantile_column(q) for q in self.quantiles]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([*names, "unweighted_mean", "weighted_mean", *qcols, "method", "error"])
            for p in range(self.X.shape[0]):
                w.writerow(
                    [*[repr(float(v)) for v in self.X[p]], repr(float(self.unweighted_mean[p])),
                     repr(float(self.weighted_mean[p])), *[repr(float(v)) for v in self.weighted_q[p]],
                     self.method, self.errors[p] or ""]
                )


def quantile_column(q: float) -> str:
    return f"q{round(q * 1000):03d}"


class Reweighter:
    """Weights and weighted predictions for one posterior and its training data."""

    def __init__(self, sample: PosteriorSample, data: Dataset):
        st = _Stats(sample, data)
        self.sample = sample
        self.data = data
        self.X = st.X
        self.neglogf = -st.logf
        # every terminal of x_i keeps n0 rows after deleting it
        self.valid = st.mincount - 1 >= sample.config.n0
        self.base = np.where(self.valid, self.neglogf, -np.inf)
        self._leaf_cache: dict[int, np.ndarray] = {}

    @property
    def ndraws(self) -> int:
        return self.sample.ndraws

    def _check_index(self, i) -> int:
        i = int(i)
        if not 0 <= i < self.data.n:
            raise IndexError(f"held-out index {i} out of range for n={self.data.n}")
        return i

    def _leaves_of(self, i: int) -> np.ndarray:
        if i not in self._leaf_cache:
            f = self.sample.forest
            self._leaf_cache[i] = leaf_nodes(f.var, f.value, f.left, f.right, f.start, f.m, self.X[i : i + 1])[:, 0, :]
        return self._leaf_cache[i]

    # -- regions -----------------------------------------------------------

    def region(self, method: str, i: int, delta: float | None = None):
        i = self._check_index(i)
        if method == "global":
            return None
        if method == "int":
            return supertree_cells(self.sample, self.X[i])
        if method == "union-int":
            return UnionRegion(*supertree_cells(self.sample, self.X[i]))
        if method == "l1":
            return (self.X[i] - _check_delta(delta), self.X[i] + delta)
        if method == "union":
            return self._leaves_of(i)
        raise ValueError(f"unknown reweighting method {method!r}")

    def region_mask(self, method: str, i: int, X, delta: float | None = None) -> np.ndarray:
        """(N, n_points): whether draw ``k``'s prediction at each point is reweighted."""
        X = _as_points(X, self.sample.d)
        N = self.ndraws
        i = self._check_index(i)
        if method == "global":
            return np.ones((N, X.shape[0]), dtype=bool)
        if method == "union":
            f = self.sample.forest
            return any_leaf_match(f.var, f.value, f.left, f.right, f.start, f.m, X, self._leaves_of(i))
        if method == "int":
            lo, hi = supertree_cells(self.sample, self.X[i])
            return box_mask(lo, hi, np.ascontiguousarray(X))
        if method == "union-int":
            inside = UnionRegion(*supertree_cells(self.sample, self.X[i])).contains(X)
            return np.broadcast_to(inside, (N, X.shape[0])).copy()
        if method == "l1":
            delta = _check_delta(delta)
            inside = np.all(np.abs(X - self.X[i]) < delta, axis=1)
            return np.broadcast_to(inside, (N, X.shape[0])).copy()
        raise ValueError(f"unknown reweighting method {method!r}")

    # -- weights -----------------------------------------------------------

    def draw_log_weights(self, i: int, method: str) -> np.ndarray:
        """Per-draw log weight applied inside the region."""
        i = self._check_index(i)
        return self.neglogf[:, i].copy() if method == "global" else self.base[:, i].copy()

    def log_weights(self, method: str, holdouts, X, delta: float | None = None) -> np.ndarray:
        """Summed (unnormalized) log weights over ``holdouts``, shape (N, n_points)."""
        X = _as_points(X, self.sample.d)
        total = np.zeros((self.ndraws, X.shape[0]))
        if method == "none":
            return total
        for i in _holdouts(holdouts):
            lw = self.draw_log_weights(i, method)[:, None]
            if method == "global":
                total = total + lw
            else:
                total = total + np.where(self.region_mask(method, i, X, delta), lw, 0.0)
        return total

    def plan(self, method: str, holdouts, X=None, delta: float | None = None) -> WeightPlan:
        hs = _holdouts(holdouts)
        if method == "global":
            lw = sum(self.draw_log_weights(i, method) for i in hs)
            return WeightPlan(method, hs, lw)
        if X is None:
            raise ValueError(f"method {method!r} needs prediction points")
        region = self.region(method, hs[0], delta) if len(hs) == 1 else [self.region(method, i, delta) for i in hs]
        return WeightPlan(method, hs, self.log_weights(method, hs, X, delta), region, delta)

    def predict(
        self,
        method: str,
        holdouts,
        X,
        quantiles=DEFAULT_QUANTILES,
        delta: float | None = None,
        on_degenerate: str = "raise",
        predictions: np.ndarray | None = None,
    ) -> PredictionResult:
        """Unweighted and reweighted posterior predictions at ``X``.

        ``on_degenerate="raise"`` raises :class:`DegenerateWeightsError`;
        ``"nan"`` reports NaN with an error message for those points and
        ``"fallback"`` returns the unweighted values for them.
        ``predictions`` may carry precomputed per-draw predictions at ``X``.
        """
        X = _as_points(X, self.sample.d)
        P = self.sample.predict_draws(X) if predictions is None else predictions
        lw = self.log_weights(method, holdouts, X, delta)
        return _reweighted(P, lw, X, tuple(quantiles), method, _holdouts(holdouts) if method != "none" else (), on_degenerate)


def _reweighted(P, lw, X, quantiles, method, holdouts, on_degenerate):
    if on_degenerate not in ("raise", "nan", "fallback"):
        raise ValueError(f"unknown on_degenerate {on_degenerate!r}")
    N, npts = P.shape
    unweighted = P.mean(axis=0)
    mean = unweighted.copy()
    q = np.empty((npts, len(quantiles)))
    errors = [None] * npts
    ones = np.ones(N)
    lw = normalize_log_weights(lw)
    for p in range(npts):
        col = lw[:, p]
        if not np.any(col != 0.0):
            # untouched by every held-out row: identical to the plain posterior
            q[p] = weighted_quantiles(P[:, p], ones, quantiles)
            continue
        if not np.any(np.isfinite(col)):
            err = DegenerateWeightsError(holdouts, method, [p])
            if on_degenerate == "raise":
                raise err
            errors[p] = str(err)
            if on_degenerate == "nan":
                mean[p] = np.nan
                q[p] = np.nan
            else:
                q[p] = weighted_quantiles(P[:, p], ones, quantiles)
            continue
        w = np.exp(col)
        mean[p] = np.dot(w, P[:, p]) / w.sum()
        q[p] = weighted_quantiles(P[:, p], w, quantiles)
    return PredictionResult(X, unweighted, mean, q, quantiles, method, errors)


def _check_delta(delta) -> float:
    if delta is None or not delta > 0:
        raise ValueError("the l1 method needs a positive delta")
    return float(delta)


def _holdouts(holdouts) -> tuple:
    hs = tuple(int(i) for i in np.atleast_1d(holdouts))
    if len(set(hs)) != len(hs):
        raise ValueError("held-out indices must be distinct")
    if not hs:
        raise ValueError("need at least one held-out index")
    return hs


# ---------------------------------------------------------------------------
# functional interface
# ---------------------------------------------------------------------------


def global_weights(sample: PosteriorSample, data: Dataset, i: int) -> WeightPlan:
    return Reweighter(sample, data).plan("global", i)


def union_weights(sample, data, i, x) -> np.ndarray:
    """Per-draw log weights (N, n_points) for terminal-overlap reweighting."""
    return normalize_log_weights(Reweighter(sample, data).log_weights("union", i, x))


def int_weights(sample, data, i, x) -> np.ndarray:
    return normalize_log_weights(Reweighter(sample, data).log_weights("int", i, x))


def union_int_weights(sample, data, i, x) -> np.ndarray:
    return normalize_log_weights(Reweighter(sample, data).log_weights("union-int", i, x))


def l1_weights(sample, data, i, x, delta: float) -> np.ndarray:
    return normalize_log_weights(Reweighter(sample, data).log_weights("l1", i, x, delta))


def multi_influential(sample, data, indices, method: str, x, delta: float | None = None) -> np.ndarray:
    """Summed log weights for several held-out rows (independent deletions)."""
    return normalize_log_weights(Reweighter(sample, data).log_weights(method, indices, x, delta))


def write_weights(path, reweighter: Reweighter, method: str, holdouts, delta: float | None = None) -> None:
    """CSV of ``holdout, draw, log_weight, n_region_train``.

    ``log_weight`` is the draw's max-normalized log weight inside the region
    and ``n_region_train`` counts the training rows whose prediction in that
    draw falls inside the region.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["holdout", "draw", "log_weight", "n_region_train"])
        for i in _holdouts(holdouts):
            lw = normalize_log_weights(reweighter.draw_log_weights(i, method))
            members = reweighter.region_mask(method, i, reweighter.X, delta).sum(axis=1)
            for k in range(lw.size):
                w.writerow([i, k, repr(float(lw[k])), int(members[k])])
