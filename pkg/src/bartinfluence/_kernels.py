"""Compiled sweeps over the flat forest table of a posterior sample."""

import numpy as np
from numba import njit


@njit(cache=True)
def _descend(var, value, left, right, node, x):
    while var[node] >= 0:
        if x[var[node]] < value[node]:
            node = left[node]
        else:
            node = right[node]
    return node


@njit(cache=True)
def predict_forest(var, value, left, right, mu, start, m, offset, X):
    ndraws = (start.size - 1) // m
    npts = X.shape[0]
    out = np.full((ndraws, npts), offset)
    for k in range(ndraws):
        for j in range(m):
            root = start[k * m + j]
            for p in range(npts):
                node = _descend(var, value, left, right, root, X[p])
                out[k, p] += mu[node]
    return out


@njit(cache=True)
def leaf_nodes(var, value, left, right, start, m, X):
    """Absolute terminal positions, shape (N, n_points, m)."""
    ndraws = (start.size - 1) // m
    npts = X.shape[0]
    out = np.empty((ndraws, npts, m), dtype=np.int64)
    for k in range(ndraws):
        for j in range(m):
            root = start[k * m + j]
            for p in range(npts):
                out[k, p, j] = _descend(var, value, left, right, root, X[p])
    return out


@njit(cache=True)
def leaf_matrix(var, value, left, right, start, m, k, X):
    """Terminal positions of draw ``k`` relative to each tree root, shape (n, m)."""
    npts = X.shape[0]
    out = np.empty((npts, m), dtype=np.int64)
    for j in range(m):
        root = start[k * m + j]
        for p in range(npts):
            out[p, j] = _descend(var, value, left, right, root, X[p]) - root
    return out


@njit(cache=True)
def node_counts_forest(var, value, left, right, start, m, X):
    """Training rows reaching every node position (terminals only are non-zero)."""
    counts = np.zeros(var.size, dtype=np.int64)
    ntrees = start.size - 1
    for t in range(ntrees):
        root = start[t]
        for p in range(X.shape[0]):
            counts[_descend(var, value, left, right, root, X[p])] += 1
    return counts


@njit(cache=True)
def training_stats(var, value, left, right, mu, start, m, offset, counts, nterm, sigma, X, y):
    """Per (draw, row): fit, min terminal count over trees, mean and max per-tree Cook's distance."""
    ndraws = (start.size - 1) // m
    n = X.shape[0]
    fit = np.empty((ndraws, n))
    mincount = np.empty((ndraws, n), dtype=np.int64)
    cmean = np.empty((ndraws, n))
    cmax = np.empty((ndraws, n))
    nodes = np.empty(m, dtype=np.int64)
    for k in range(ndraws):
        s2 = sigma[k] * sigma[k]
        for i in range(n):
            f = offset
            mc = np.iinfo(np.int64).max
            for j in range(m):
                node = _descend(var, value, left, right, start[k * m + j], X[i])
                nodes[j] = node
                f += mu[node]
                if counts[node] < mc:
                    mc = counts[node]
            fit[k, i] = f
            mincount[k, i] = mc
            e2 = (y[i] - f) ** 2 / s2
            tot = 0.0
            big = -np.inf
            for j in range(m):
                c = counts[nodes[j]]
                if c <= 1:
                    dji = np.inf
                else:
                    dji = e2 * c / ((c - 1.0) ** 2) / nterm[k, j]
                tot += dji
                if dji > big:
                    big = dji
            cmean[k, i] = tot / m
            cmax[k, i] = big
    return fit, mincount, cmean, cmax


@njit(cache=True)
def point_cells(var, value, left, right, start, m, x, d):
    """Per-draw intersection of the terminal cells containing ``x``: (lo, hi) of shape (N, d)."""
    ndraws = (start.size - 1) // m
    lo = np.full((ndraws, d), -np.inf)
    hi = np.full((ndraws, d), np.inf)
    for k in range(ndraws):
        for j in range(m):
            node = start[k * m + j]
            while var[node] >= 0:
                v = var[node]
                c = value[node]
                if x[v] < c:
                    if c < hi[k, v]:
                        hi[k, v] = c
                    node = left[node]
                else:
                    if c > lo[k, v]:
                        lo[k, v] = c
                    node = right[node]
    return lo, hi


@njit(cache=True)
def any_leaf_match(var, value, left, right, start, m, X, ref):
    """``out[k, p]`` is True when point ``p`` shares a terminal with ``ref[k, :]`` in some tree."""
    ndraws = (start.size - 1) // m
    npts = X.shape[0]
    out = np.zeros((ndraws, npts), dtype=np.bool_)
    for k in range(ndraws):
        for j in range(m):
            root = start[k * m + j]
            target = ref[k, j]
            for p in range(npts):
                if not out[k, p]:
                    if _descend(var, value, left, right, root, X[p]) == target:
                        out[k, p] = True
    return out


@njit(cache=True)
def box_mask(lo, hi, X):
    """``out[k, p]``: point ``p`` lies in the half-open box ``[lo[k], hi[k])``."""
    N, d = lo.shape
    npts = X.shape[0]
    out = np.zeros((N, npts), dtype=np.bool_)
    for k in range(N):
        for p in range(npts):
            inside = True
            for v in range(d):
                if not (X[p, v] >= lo[k, v] and X[p, v] < hi[k, v]):
                    inside = False
                    break
            out[k, p] = inside
    return out
