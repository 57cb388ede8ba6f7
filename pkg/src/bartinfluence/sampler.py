"""Posterior simulation for BART / BCART.

Each sweep visits the trees in order.  For tree ``j`` the partial residual
``r = y - sum_{k != j} g_k`` is formed, a birth or death move is proposed
with the terminal means integrated out, and the terminal means are then
redrawn from their conjugate normal full conditionals.  After the sweep the
error variance is drawn from its scaled inverse chi-squared full
conditional.

The per-tree work runs in compiled code; all random numbers come from a
``numpy.random.Generator`` owned by :class:`FitState`, so a fit is a pure
function of ``(data, config, seed)``.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from numba import njit

from .data_model import (
    MAX_DEPTH,
    CutpointGrid,
    Dataset,
    Forest,
    ModelConfig,
    PosteriorDraw,
    PosteriorSample,
    SplitRule,
    Tree,
)

REFRESH_EVERY = 100


class FitRefusedError(ValueError):
    """The data cannot support a tree fit (fewer rows than ``n0``)."""


def split_probability(depth: int, alpha: float, beta: float) -> float:
    """Prior probability that a node at ``depth`` has children: ``alpha (1 + depth)^-beta``."""
    if depth < 0:
        raise ValueError("depth must be non-negative")
    return alpha * (1.0 + depth) ** (-beta)


def mu_posterior(residuals, sigma: float, tau: float) -> tuple[float, float]:
    """Mean and variance of a terminal mean given its residuals under a N(0, tau^2) prior."""
    r = np.asarray(residuals, dtype=np.float64)
    var = 1.0 / (r.size / sigma**2 + 1.0 / tau**2)
    return var * r.sum() / sigma**2, var


def draw_mu(residuals, sigma: float, tau: float, rng: np.random.Generator) -> float:
    """Draw a terminal mean from its conjugate normal full conditional.

    With no residuals this is a draw from the prior ``N(0, tau^2)``.
    """
    if not (sigma > 0 and tau > 0):
        raise ValueError("sigma and tau must be positive")
    mean, var = mu_posterior(residuals, sigma, tau)
    return mean + math.sqrt(var) * rng.standard_normal()


def draw_sigma2(residuals, nu: float, lam: float, rng: np.random.Generator) -> float:
    """Draw ``sigma^2 = (nu lam + sum e^2) / chi2_{nu + n}``."""
    if not (nu > 0 and lam > 0):
        raise ValueError("nu and lambda must be positive")
    e = np.asarray(residuals, dtype=np.float64)
    return (nu * lam + float(e @ e)) / rng.chisquare(nu + e.size)


# ---------------------------------------------------------------------------
# compiled tree moves
# ---------------------------------------------------------------------------


@njit(cache=True)
def _psplit(depth, alpha, beta):
    return alpha * (1.0 + depth) ** (-beta)


@njit(cache=True)
def _can_split(lo, hi, j, node, depth):
    if depth >= MAX_DEPTH:
        return False
    for v in range(lo.shape[2]):
        if hi[j, node, v] >= lo[j, node, v]:
            return True
    return False


@njit(cache=True)
def _child_can_split(lo, hi, j, node, depth, v, c, is_left):
    if depth + 1 >= MAX_DEPTH:
        return False
    for w in range(lo.shape[2]):
        a = lo[j, node, w]
        b = hi[j, node, w]
        if w == v:
            if is_left:
                b = c - 1
            else:
                a = c + 1
        if b >= a:
            return True
    return False


@njit(cache=True)
def _log_marginal(n, s, s2, t2):
    # log of int prod N(r_i | mu, s2) N(mu | 0, t2) dmu, dropping the sum(r^2) term
    return 0.5 * math.log(s2 / (s2 + n * t2)) + t2 * s * s / (2.0 * s2 * (s2 + n * t2))


@njit(cache=True)
def _is_leaf_sibling(var, left, right, parent, j, node):
    p = parent[j, node]
    if p < 0:
        return False
    sib = right[j, p] if left[j, p] == node else left[j, p]
    return var[j, sib] < 0


@njit(cache=True)
def _bd_step(j, r, xbin, var, cut, left, right, parent, depth, heap, mu, alive, lo, hi, leaf_of,
             sigma, tau, alpha, beta, n0, u, stats):
    """One birth/death proposal on tree ``j``.

    Returns 1 for an accepted birth, 2 for an accepted death, 0 otherwise.
    ``stats`` accumulates [birth proposals, births, death proposals, deaths].
    """
    C = var.shape[1]
    n = r.size
    goods = np.empty(C, dtype=np.int64)
    nogs = np.empty(C, dtype=np.int64)
    ngood = 0
    nnog = 0
    for s in range(C):
        if not alive[j, s]:
            continue
        if var[j, s] < 0:
            if _can_split(lo, hi, j, s, depth[j, s]):
                goods[ngood] = s
                ngood += 1
        elif var[j, left[j, s]] < 0 and var[j, right[j, s]] < 0:
            nogs[nnog] = s
            nnog += 1
    if ngood == 0 and nnog == 0:
        return 0
    if ngood == 0:
        pb = 0.0
    elif nnog == 0:
        pb = 1.0
    else:
        pb = 0.5
    s2 = sigma * sigma
    t2 = tau * tau

    if u[0] < pb:
        stats[0] += 1
        leaf = goods[min(int(u[1] * ngood), ngood - 1)]
        d = lo.shape[2]
        vv = np.empty(d, dtype=np.int64)
        nvv = 0
        for w in range(d):
            if hi[j, leaf, w] >= lo[j, leaf, w]:
                vv[nvv] = w
                nvv += 1
        v = vv[min(int(u[2] * nvv), nvv - 1)]
        ncut = hi[j, leaf, v] - lo[j, leaf, v] + 1
        c = lo[j, leaf, v] + min(int(u[3] * ncut), ncut - 1)
        nl = 0
        nr = 0
        sl = 0.0
        sr = 0.0
        for i in range(n):
            if leaf_of[j, i] == leaf:
                if xbin[i, v] <= c:
                    nl += 1
                    sl += r[i]
                else:
                    nr += 1
                    sr += r[i]
        if nl < n0 or nr < n0:
            return 0
        dl = depth[j, leaf]
        p = _psplit(dl, alpha, beta)
        good_l = _child_can_split(lo, hi, j, leaf, dl, v, c, True)
        good_r = _child_can_split(lo, hi, j, leaf, dl, v, c, False)
        pl = _psplit(dl + 1, alpha, beta) if good_l else 0.0
        pr = _psplit(dl + 1, alpha, beta) if good_r else 0.0
        log_prior = math.log(p) + math.log1p(-pl) + math.log1p(-pr) - math.log1p(-p)
        log_lik = (_log_marginal(nl, sl, s2, t2) + _log_marginal(nr, sr, s2, t2)
                   - _log_marginal(nl + nr, sl + sr, s2, t2))
        nnog_new = nnog + 1
        if _is_leaf_sibling(var, left, right, parent, j, leaf):
            nnog_new -= 1
        ngood_new = ngood - 1 + (1 if good_l else 0) + (1 if good_r else 0)
        pd_new = 1.0 if ngood_new == 0 else 0.5
        log_ratio = log_prior + log_lik + math.log(pd_new / nnog_new) - math.log(pb / ngood)
        if u[4] > 0 and not (math.log(u[4]) < log_ratio):
            return 0
        a = -1
        b = -1
        for s in range(C):
            if not alive[j, s]:
                if a < 0:
                    a = s
                else:
                    b = s
                    break
        for child, is_left in ((a, True), (b, False)):
            alive[j, child] = True
            var[j, child] = -1
            cut[j, child] = -1
            left[j, child] = -1
            right[j, child] = -1
            parent[j, child] = leaf
            depth[j, child] = dl + 1
            heap[j, child] = 2 * heap[j, leaf] + (0 if is_left else 1)
            mu[j, child] = mu[j, leaf]
            for w in range(d):
                lo[j, child, w] = lo[j, leaf, w]
                hi[j, child, w] = hi[j, leaf, w]
            if is_left:
                hi[j, child, v] = c - 1
            else:
                lo[j, child, v] = c + 1
        var[j, leaf] = v
        cut[j, leaf] = c
        left[j, leaf] = a
        right[j, leaf] = b
        for i in range(n):
            if leaf_of[j, i] == leaf:
                leaf_of[j, i] = a if xbin[i, v] <= c else b
        stats[1] += 1
        return 1

    stats[2] += 1
    node = nogs[min(int(u[1] * nnog), nnog - 1)]
    a = left[j, node]
    b = right[j, node]
    nl = 0
    nr = 0
    sl = 0.0
    sr = 0.0
    for i in range(n):
        li = leaf_of[j, i]
        if li == a:
            nl += 1
            sl += r[i]
        elif li == b:
            nr += 1
            sr += r[i]
    dn = depth[j, node]
    p = _psplit(dn, alpha, beta)
    good_a = _can_split(lo, hi, j, a, dn + 1)
    good_b = _can_split(lo, hi, j, b, dn + 1)
    pa = _psplit(dn + 1, alpha, beta) if good_a else 0.0
    pb_child = _psplit(dn + 1, alpha, beta) if good_b else 0.0
    log_prior = math.log1p(-p) - math.log(p) - math.log1p(-pa) - math.log1p(-pb_child)
    log_lik = (_log_marginal(nl + nr, sl + sr, s2, t2) - _log_marginal(nl, sl, s2, t2)
               - _log_marginal(nr, sr, s2, t2))
    ngood_new = ngood - (1 if good_a else 0) - (1 if good_b else 0) + 1
    nnog_new = nnog - 1
    if _is_leaf_sibling(var, left, right, parent, j, node):
        nnog_new += 1
    pb_new = 1.0 if nnog_new == 0 else 0.5
    log_ratio = log_prior + log_lik + math.log(pb_new / ngood_new) - math.log((1.0 - pb) / nnog)
    if u[4] > 0 and not (math.log(u[4]) < log_ratio):
        return 0
    tot = nl + nr
    mu[j, node] = (nl * mu[j, a] + nr * mu[j, b]) / tot if tot > 0 else 0.5 * (mu[j, a] + mu[j, b])
    alive[j, a] = False
    alive[j, b] = False
    var[j, node] = -1
    cut[j, node] = -1
    left[j, node] = -1
    right[j, node] = -1
    for i in range(n):
        li = leaf_of[j, i]
        if li == a or li == b:
            leaf_of[j, i] = node
    stats[3] += 1
    return 2


@njit(cache=True)
def _partial_residual(j, y, fit, mu, leaf_of, r):
    for i in range(y.size):
        r[i] = y[i] - fit[i] + mu[j, leaf_of[j, i]]


@njit(cache=True)
def _draw_mus(j, r, var, mu, alive, leaf_of, sigma, tau, z):
    C = var.shape[1]
    nb = np.zeros(C, dtype=np.int64)
    sb = np.zeros(C)
    for i in range(r.size):
        s = leaf_of[j, i]
        nb[s] += 1
        sb[s] += r[i]
    s2 = sigma * sigma
    t = 0
    for s in range(C):
        if alive[j, s] and var[j, s] < 0:
            v = 1.0 / (nb[s] / s2 + 1.0 / (tau * tau))
            mu[j, s] = v * sb[s] / s2 + math.sqrt(v) * z[t]
            t += 1


@njit(cache=True)
def _apply_fit(j, y, r, mu, leaf_of, fit):
    for i in range(y.size):
        fit[i] = y[i] - r[i] + mu[j, leaf_of[j, i]]


@njit(cache=True)
def _sweep(y, xbin, var, cut, left, right, parent, depth, heap, mu, alive, lo, hi, leaf_of, fit,
           sigma, tau, alpha, beta, n0, U, Z, move_trees, update_mu, stats):
    m = var.shape[0]
    r = np.empty(y.size)
    for j in range(m):
        _partial_residual(j, y, fit, mu, leaf_of, r)
        if move_trees:
            _bd_step(j, r, xbin, var, cut, left, right, parent, depth, heap, mu, alive, lo, hi,
                     leaf_of, sigma, tau, alpha, beta, n0, U[j], stats)
        if update_mu:
            _draw_mus(j, r, var, mu, alive, leaf_of, sigma, tau, Z[j])
        _apply_fit(j, y, r, mu, leaf_of, fit)


@njit(cache=True)
def _recompute_fit(mu, leaf_of):
    m, n = leaf_of.shape
    fit = np.zeros(n)
    for j in range(m):
        for i in range(n):
            fit[i] += mu[j, leaf_of[j, i]]
    return fit


@njit(cache=True)
def _leaf_counts(var, alive):
    m, C = var.shape
    out = np.zeros(m, dtype=np.int64)
    for j in range(m):
        for s in range(C):
            if alive[j, s] and var[j, s] < 0:
                out[j] += 1
    return out


@njit(cache=True)
def _export(var, cut, left, right, heap, mu, alive):
    """Preorder dump of all trees: node arrays (child links local to each tree) plus tree sizes."""
    m, C = var.shape
    total = 0
    for j in range(m):
        for s in range(C):
            if alive[j, s]:
                total += 1
    o_heap = np.empty(total, dtype=np.int64)
    o_var = np.empty(total, dtype=np.int32)
    o_cut = np.empty(total, dtype=np.int32)
    o_mu = np.empty(total)
    o_left = np.full(total, -1, dtype=np.int64)
    o_right = np.full(total, -1, dtype=np.int64)
    sizes = np.zeros(m, dtype=np.int64)
    stack = np.empty(C, dtype=np.int64)
    # position of the parent and which side, for each stacked slot
    link = np.empty(C, dtype=np.int64)
    pos = 0
    for j in range(m):
        base = pos
        stack[0] = 0
        link[0] = -1
        top = 1
        while top > 0:
            top -= 1
            s = stack[top]
            lk = link[top]
            if lk >= 0:
                if lk % 2 == 0:
                    o_left[lk // 2] = pos - base
                else:
                    o_right[lk // 2] = pos - base
            o_heap[pos] = heap[j, s]
            o_var[pos] = var[j, s]
            o_cut[pos] = cut[j, s]
            o_mu[pos] = mu[j, s] if var[j, s] < 0 else 0.0
            if var[j, s] >= 0:
                stack[top] = right[j, s]
                link[top] = 2 * pos + 1
                stack[top + 1] = left[j, s]
                link[top + 1] = 2 * pos
                top += 2
            pos += 1
        sizes[j] = pos - base
    return o_heap, o_var, o_cut, o_mu, o_left, o_right, sizes


# ---------------------------------------------------------------------------
# Python-level state
# ---------------------------------------------------------------------------


class FitState:
    """Mutable state of a single chain.

    Responses are held on the centred scale ``y - offset``; trees live in
    fixed-capacity slot arrays with slot ``0`` the root.
    """

    def __init__(
        self,
        data: Dataset,
        config: ModelConfig,
        grid: CutpointGrid,
        rng: np.random.Generator,
        offset: float = 0.0,
        initial: PosteriorDraw | None = None,
        sigma: float | None = None,
    ):
        if config.tau is None or config.lam is None:
            config = config.resolve(data.response)
        self.config = config
        self.grid = grid
        self.rng = rng
        self.offset = float(offset)
        self.X = data.predictors
        self.y = np.ascontiguousarray(data.response - self.offset)
        self.xbin = np.ascontiguousarray(grid.binned(self.X))
        n, d = self.X.shape
        m = config.m
        cap = max(1, 2 * (n // config.n0) - 1)
        if initial is not None:
            cap = max(cap, max(len(t) for t in initial.trees))
        self.capacity = cap
        self.var = np.full((m, cap), -1, dtype=np.int32)
        self.cut = np.full((m, cap), -1, dtype=np.int32)
        self.left = np.full((m, cap), -1, dtype=np.int64)
        self.right = np.full((m, cap), -1, dtype=np.int64)
        self.parent = np.full((m, cap), -1, dtype=np.int64)
        self.depth = np.zeros((m, cap), dtype=np.int64)
        self.heap = np.zeros((m, cap), dtype=np.int64)
        self.mu = np.zeros((m, cap))
        self.alive = np.zeros((m, cap), dtype=np.bool_)
        self.lo = np.zeros((m, cap, d), dtype=np.int64)
        self.hi = np.zeros((m, cap, d), dtype=np.int64)
        self.leaf_of = np.zeros((m, n), dtype=np.int64)
        self.stats = np.zeros(4, dtype=np.int64)
        nv = grid.counts.astype(np.int64)
        self.alive[:, 0] = True
        self.heap[:, 0] = 1
        self.lo[:, 0, :] = 0
        self.hi[:, 0, :] = nv - 1
        if initial is not None:
            if initial.m != m:
                raise ValueError(f"initial draw has {initial.m} trees, config says m={m}")
            for j, tree in enumerate(initial.trees):
                self._load_tree(j, tree)
        self.fit_values = _recompute_fit(self.mu, self.leaf_of)
        if sigma is not None:
            self.sigma = float(sigma)
        elif initial is not None:
            self.sigma = float(initial.sigma)
        else:
            sd = float(np.std(self.y, ddof=1)) if n > 1 else 1.0
            self.sigma = sd if sd > 0 else 1.0
        self.iteration = 0

    def _load_tree(self, j: int, tree: Tree) -> None:
        slot_of = {}
        for pos in range(len(tree)):
            label = int(tree.heap[pos])
            s = 0 if label == 1 else len(slot_of)
            slot_of[label] = s
            self.alive[j, s] = True
            self.heap[j, s] = label
            self.depth[j, s] = label.bit_length() - 1
            self.var[j, s] = tree.var[pos]
            self.cut[j, s] = tree.cut[pos]
            self.mu[j, s] = tree.mu[pos]
            if label > 1:
                p = slot_of[label // 2]
                self.parent[j, s] = p
                self.lo[j, s] = self.lo[j, p]
                self.hi[j, s] = self.hi[j, p]
                v, c = self.var[j, p], self.cut[j, p]
                if label % 2 == 0:
                    self.left[j, p] = s
                    self.hi[j, s, v] = c - 1
                else:
                    self.right[j, p] = s
                    self.lo[j, s, v] = c + 1
            if tree.var[pos] >= 0:
                v, c = int(tree.var[pos]), int(tree.cut[pos])
                if self.grid.value(v, c) != tree.value[pos]:
                    raise ValueError("initial tree does not match the cutpoint grid")
        for i, row in enumerate(self.X):
            self.leaf_of[j, i] = slot_of[tree.map_to_terminal(row)]

    # -- bookkeeping -------------------------------------------------------

    def residual(self, j: int) -> np.ndarray:
        """Response minus the fit of every tree except ``j`` (original units)."""
        r = np.empty_like(self.y)
        _partial_residual(j, self.y, self.fit_values, self.mu, self.leaf_of, r)
        return r

    def refresh(self) -> None:
        self.fit_values = _recompute_fit(self.mu, self.leaf_of)

    def residual_drift(self) -> float:
        """Largest gap between the incremental fit and a full recomputation."""
        return float(np.max(np.abs(self.fit_values - _recompute_fit(self.mu, self.leaf_of))))

    def leaf_counts(self) -> np.ndarray:
        return _leaf_counts(self.var, self.alive)

    # -- moves -------------------------------------------------------------

    def sweep(self, move_trees: bool = True, update_mu: bool = True) -> None:
        m = self.config.m
        width = int(self.leaf_counts().max()) + 1
        U = self.rng.random((m, 5))
        Z = self.rng.standard_normal((m, width))
        cfg = self.config
        _sweep(self.y, self.xbin, self.var, self.cut, self.left, self.right, self.parent, self.depth,
               self.heap, self.mu, self.alive, self.lo, self.hi, self.leaf_of, self.fit_values,
               self.sigma, cfg.tau, cfg.alpha, cfg.beta, cfg.n0, U, Z, move_trees, update_mu, self.stats)
        self.iteration += 1
        if self.iteration % REFRESH_EVERY == 0:
            self.refresh()

    def update_sigma(self) -> None:
        e = self.y - self.fit_values
        self.sigma = math.sqrt(draw_sigma2(e, self.config.nu, self.config.lam, self.rng))

    # -- export ------------------------------------------------------------

    def export(self):
        return _export(self.var, self.cut, self.left, self.right, self.heap, self.mu, self.alive)

    def to_draw(self, index: int = 0) -> PosteriorDraw:
        parts = self.export()
        forest = _forest_from_exports([parts], self.grid, self.config.m)
        return PosteriorDraw(tuple(forest.tree(0, j) for j in range(self.config.m)), self.sigma, index, self.offset)


def birth_death_step(state: FitState, j: int, rng: np.random.Generator | None = None) -> tuple[bool, str | None]:
    """Propose one birth or death move on tree ``j`` of ``state``.

    Returns ``(accepted, kind)`` with ``kind`` one of ``"birth"``,
    ``"death"`` or ``None`` when nothing was accepted.
    """
    rng = state.rng if rng is None else rng
    u = rng.random(5)
    r = state.residual(j)
    cfg = state.config
    code = _bd_step(j, r, state.xbin, state.var, state.cut, state.left, state.right, state.parent,
                    state.depth, state.heap, state.mu, state.alive, state.lo, state.hi, state.leaf_of,
                    state.sigma, cfg.tau, cfg.alpha, cfg.beta, cfg.n0, u, state.stats)
    _apply_fit(j, state.y, r, state.mu, state.leaf_of, state.fit_values)
    return (code != 0, {0: None, 1: "birth", 2: "death"}[code])


def _forest_from_exports(parts, grid: CutpointGrid, m: int) -> Forest:
    heap = np.concatenate([p[0] for p in parts])
    var = np.concatenate([p[1] for p in parts])
    cut = np.concatenate([p[2] for p in parts])
    mu = np.concatenate([p[3] for p in parts])
    sizes = np.concatenate([p[6] for p in parts])
    start = np.zeros(sizes.size + 1, dtype=np.int64)
    np.cumsum(sizes, out=start[1:])
    tree_base = np.repeat(start[:-1], sizes)
    lraw = np.concatenate([p[4] for p in parts])
    rraw = np.concatenate([p[5] for p in parts])
    left = np.where(lraw >= 0, lraw + tree_base, -1)
    right = np.where(rraw >= 0, rraw + tree_base, -1)
    pad = grid.padded()
    internal = var >= 0
    value = np.full(var.size, np.nan)
    value[internal] = pad[var[internal], cut[internal]]
    return Forest(heap, var, cut, value, mu, left, right, start, m)


def fit(
    data: Dataset,
    config: ModelConfig = ModelConfig(),
    *,
    grid: CutpointGrid | None = None,
    initial: PosteriorDraw | None = None,
    move_trees: bool = True,
    update_sigma: bool = True,
    update_mu: bool = True,
) -> PosteriorSample:
    """Run the MCMC and return the post burn-in draws.

    Parameters
    ----------
    data : Dataset
    config : ModelConfig
        ``tau`` / ``lam`` left unset are calibrated from ``data.response``.
    grid : CutpointGrid, optional
        Defaults to ``CutpointGrid.from_data(X, config.numcut)``.
    initial : PosteriorDraw, optional
        Starting trees and sigma; its offset replaces the data centring.
    move_trees, update_sigma, update_mu : bool
        Switch off individual updates (e.g. to hold the structure fixed).
    """
    if data.n < config.n0:
        raise FitRefusedError(f"cannot fit: n={data.n} rows is below n0={config.n0}")
    y = data.response
    if np.ptp(y) == 0:
        warnings.warn("response has zero variance", RuntimeWarning, stacklevel=2)
    cfg = config.resolve(y)
    grid = grid if grid is not None else CutpointGrid.from_data(data.predictors, cfg.numcut)
    if grid.d != data.d:
        raise ValueError("cutpoint grid dimension does not match the data")
    if initial is not None:
        offset = initial.offset
    else:
        offset = 0.5 * (float(y.max()) + float(y.min())) if cfg.center else 0.0
    rng = np.random.default_rng(cfg.seed)
    state = FitState(data, cfg, grid, rng, offset=offset, initial=initial)
    parts, sigmas, trace = [], [], []
    for it in range(cfg.burn + cfg.ndraws):
        state.sweep(move_trees=move_trees, update_mu=update_mu)
        if update_sigma:
            state.update_sigma()
        trace.append(state.sigma)
        if it >= cfg.burn:
            parts.append(state.export())
            sigmas.append(state.sigma)
    forest = _forest_from_exports(parts, grid, cfg.m)
    st = state.stats
    info = {
        "n": int(data.n),
        "birth_proposed": int(st[0]),
        "birth_accepted": int(st[1]),
        "death_proposed": int(st[2]),
        "death_accepted": int(st[3]),
        "sigma_trace": np.array(trace),
    }
    return PosteriorSample(cfg, grid, forest, np.array(sigmas), offset, info, data.names)


def chain_summary(sample: PosteriorSample) -> dict:
    """Acceptance rates and sigma trace quantiles of a fitted sample."""
    info = sample.info
    out = {}
    for kind in ("birth", "death"):
        prop = info.get(f"{kind}_proposed", 0)
        out[f"{kind}_acceptance"] = info.get(f"{kind}_accepted", 0) / prop if prop else float("nan")
    q = np.quantile(sample.sigma, [0.025, 0.5, 0.975])
    out.update(sigma_q025=float(q[0]), sigma_median=float(q[1]), sigma_q975=float(q[2]))
    out["mean_terminals"] = float(sample.forest.n_terminals().mean())
    return out


def random_tree(grid: CutpointGrid, rng: np.random.Generator, alpha: float = 0.95, beta: float = 2.0,
                tau: float = 1.0) -> Tree:
    """Draw a tree from the branching-process prior with N(0, tau^2) terminal means."""
    nodes = {}
    nv = grid.counts

    def grow(label: int, lo: np.ndarray, hi: np.ndarray) -> None:
        depth = label.bit_length() - 1
        valid = np.flatnonzero(hi >= lo)
        if depth < MAX_DEPTH and valid.size and rng.random() < split_probability(depth, alpha, beta):
            v = int(valid[rng.integers(valid.size)])
            c = int(rng.integers(lo[v], hi[v] + 1))
            nodes[label] = SplitRule(v, c)
            hl, lr = hi.copy(), lo.copy()
            hl[v] = c - 1
            lr[v] = c + 1
            grow(2 * label, lo, hl)
            grow(2 * label + 1, lr, hi)
        else:
            nodes[label] = float(tau * rng.standard_normal())

    grow(1, np.zeros(grid.d, dtype=np.int64), nv.astype(np.int64) - 1)
    return Tree.from_nodes(nodes, grid)
