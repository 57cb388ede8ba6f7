"""Single-tree representation of a sum-of-trees draw.

A sum of ``m`` trees is constant on every non-empty intersection of one
terminal cell per tree, so the draw is equivalent to a single partition
whose cells carry the summed terminal means.  Two realizations are offered:

* full enumeration (:func:`build_supertree`), pruning empty intersections
  tree by tree.  Exponential in the worst case; fine for small ``d``;
* occupied cells only (``occupied_only=True``), one cell per distinct
  terminal tuple among the training rows.  This is all the diagnostics need.

:func:`supertree_cell` and :func:`union_region` give the lazy per-point
versions used for reweighting.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from numba import njit

from ._kernels import leaf_matrix, point_cells
from .data_model import Dataset, Forest, Hyperrectangle, PosteriorDraw, PosteriorSample, _as_points


def intersect(rects) -> Hyperrectangle:
    """Per-dimension ``[max lo, min hi)`` of a list of rectangles.

    The result may be empty (check ``.is_empty``); in that case ``hi`` is
    clipped up to ``lo`` so the rectangle stays well formed.
    """
    rects = list(rects)
    if not rects:
        raise ValueError("intersect needs at least one rectangle")
    d = rects[0].d
    if any(r.d != d for r in rects):
        raise ValueError("rectangles differ in dimension")
    lo = np.max([r.lo for r in rects], axis=0)
    hi = np.min([r.hi for r in rects], axis=0)
    return Hyperrectangle(lo, np.maximum(hi, lo))


@dataclass(frozen=True)
class SupertreeCell:
    rect: Hyperrectangle
    mu: float
    value: float
    count: int
    leaves: tuple[int, ...]


class Supertree:
    """Partition of one draw into cells with summed terminal means.

    ``cells[c].mu`` is the plain sum of the constituent terminal means;
    ``cells[c].value`` adds them onto the draw offset in ascending tree
    order, which is exactly how ensemble predictions are accumulated.
    """

    def __init__(self, cells, index: int = 0, offset: float = 0.0, complete: bool = True):
        self.cells = list(cells)
        self.index = index
        self.offset = offset
        self.complete = complete
        self._lo = np.array([c.rect.lo for c in self.cells])
        self._hi = np.array([c.rect.hi for c in self.cells])

    def __len__(self) -> int:
        return len(self.cells)

    @property
    def n_cells(self) -> int:
        """``B^S``: number of cells in the partition."""
        return len(self.cells)

    @property
    def counts(self) -> np.ndarray:
        return np.array([c.count for c in self.cells], dtype=np.int64)

    def locate(self, X) -> np.ndarray:
        """Index of the cell containing each row of ``X`` (``-1`` if none)."""
        X = _as_points(X, self._lo.shape[1])
        return _locate(self._lo, self._hi, X)

    def predict(self, X) -> np.ndarray:
        idx = self.locate(X)
        if np.any(idx < 0):
            raise ValueError("some points fall outside the enumerated cells")
        values = np.array([c.value for c in self.cells])
        return values[idx]


@njit(cache=True)
def _locate(lo, hi, X):
    out = np.full(X.shape[0], -1, dtype=np.int64)
    for p in range(X.shape[0]):
        for c in range(lo.shape[0]):
            inside = True
            for v in range(lo.shape[1]):
                if not (X[p, v] >= lo[c, v] and X[p, v] < hi[c, v]):
                    inside = False
                    break
            if inside:
                out[p] = c
                break
    return out


def _draw_forest(draw: PosteriorDraw) -> Forest:
    return Forest.from_trees(list(draw.trees), draw.m)


def _leaf_table(tree, d):
    labels = tree.terminals()
    rects = [tree.cell(lab, d) for lab in labels]
    return labels, np.array([r.lo for r in rects]), np.array([r.hi for r in rects]), [tree.terminal_mu(lab) for lab in labels]


def build_supertree(
    draw: PosteriorDraw,
    data: Dataset | np.ndarray | None = None,
    *,
    occupied_only: bool = False,
    max_cells: int = 2_000_000,
    d: int | None = None,
) -> Supertree:
    """Collapse ``draw`` into its supertree partition.

    Parameters
    ----------
    draw : PosteriorDraw
    data : Dataset or array, optional
        Training rows used for the cell counts ``n^S``.  Required when
        ``occupied_only`` is set.
    occupied_only : bool
        Keep only cells holding at least one training row.
    max_cells : int
        Abort full enumeration once the partial partition grows beyond this.
    d : int, optional
        Dimension, needed only when there is no data.
    """
    X = None
    if data is not None:
        X = data.predictors if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
        d = X.shape[1]
    if d is None:
        d = max([int(t.var.max()) + 1 for t in draw.trees] + [1])
    if occupied_only:
        if X is None:
            raise ValueError("occupied_only needs training data")
        return _occupied_supertree(draw, _as_points(X, d), d)

    lo = np.full((1, d), -np.inf)
    hi = np.full((1, d), np.inf)
    mus = np.zeros(1)
    vals = np.full(1, draw.offset)
    leaves = np.zeros((1, 0), dtype=np.int64)
    for tree in draw.trees:
        labels, L, H, tmu = _leaf_table(tree, d)
        nlo = np.maximum(lo[:, None, :], L[None, :, :])
        nhi = np.minimum(hi[:, None, :], H[None, :, :])
        keep = np.all(nlo < nhi, axis=2)
        ci, li = np.nonzero(keep)
        if ci.size > max_cells:
            raise MemoryError(f"supertree exceeds {max_cells} cells; use occupied_only=True")
        lo, hi = nlo[ci, li], nhi[ci, li]
        tmu = np.asarray(tmu)
        mus = mus[ci] + tmu[li]
        vals = vals[ci] + tmu[li]
        leaves = np.column_stack([leaves[ci], np.asarray(labels, dtype=np.int64)[li]])
    counts = np.zeros(lo.shape[0], dtype=np.int64)
    if X is not None:
        idx = _locate(lo, hi, _as_points(X, d))
        np.add.at(counts, idx, 1)
    cells = [
        SupertreeCell(Hyperrectangle(lo[c], hi[c]), float(mus[c]), float(vals[c]), int(counts[c]), tuple(int(v) for v in leaves[c]))
        for c in range(lo.shape[0])
    ]
    return Supertree(cells, draw.index, draw.offset, complete=True)


def _occupied_supertree(draw: PosteriorDraw, X: np.ndarray, d: int) -> Supertree:
    f = _draw_forest(draw)
    lm = leaf_matrix(f.var, f.value, f.left, f.right, f.start, f.m, 0, X)
    uniq, first, counts = np.unique(lm, axis=0, return_index=True, return_counts=True)
    cells = []
    for u, i, c in zip(uniq, first, counts):
        lo, hi = point_cells(f.var, f.value, f.left, f.right, f.start, f.m, X[i], d)
        mu = 0.0
        val = draw.offset
        for j in range(f.m):
            mj = float(f.mu[f.start[j] + u[j]])
            mu += mj
            val += mj
        labels = tuple(int(f.heap[f.start[j] + u[j]]) for j in range(f.m))
        cells.append(SupertreeCell(Hyperrectangle(lo[0], hi[0]), mu, val, int(c), labels))
    return Supertree(cells, draw.index, draw.offset, complete=False)


def supertree_counts(sample: PosteriorSample, X, k: int) -> tuple[int, np.ndarray]:
    """Occupied-cell count ``B^S`` and per-row cell counts ``n^S`` for draw ``k``."""
    f = sample.forest
    lm = leaf_matrix(f.var, f.value, f.left, f.right, f.start, f.m, k, X)
    _, inverse, counts = np.unique(lm, axis=0, return_inverse=True, return_counts=True)
    return counts.size, counts[inverse.reshape(-1)]


def supertree_cell(draw: PosteriorDraw, x) -> Hyperrectangle:
    """Intersection over trees of the terminal cell containing ``x``."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    d = x.size
    return intersect([t.cell(t.map_to_terminal(x), d) for t in draw.trees])


def supertree_cells(sample: PosteriorSample, x) -> tuple[np.ndarray, np.ndarray]:
    """Per-draw supertree cell of ``x`` as ``(lo, hi)`` arrays of shape (N, d)."""
    x = _as_points(x, sample.d)[0]
    f = sample.forest
    return point_cells(f.var, f.value, f.left, f.right, f.start, f.m, x, sample.d)


class UnionRegion:
    """Union of one rectangle per posterior draw; membership is containment in any."""

    def __init__(self, lo: np.ndarray, hi: np.ndarray):
        lo = np.atleast_2d(np.asarray(lo, dtype=np.float64))
        hi = np.atleast_2d(np.asarray(hi, dtype=np.float64))
        if lo.shape != hi.shape or lo.shape[0] < 1:
            raise ValueError("union region needs matching, non-empty lo/hi arrays")
        if np.any(np.any(lo >= hi, axis=1)):
            raise ValueError("union region members must be non-empty")
        self.lo = lo
        self.hi = hi

    def __len__(self) -> int:
        return self.lo.shape[0]

    @property
    def members(self) -> list[Hyperrectangle]:
        return [Hyperrectangle(a, b) for a, b in zip(self.lo, self.hi)]

    def contains(self, X) -> np.ndarray | bool:
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X = _as_points(X, self.lo.shape[1])
        out = _any_contains(self.lo, self.hi, X)
        return bool(out[0]) if single else out

    def member_mask(self, X) -> np.ndarray:
        """``(N, n_points)`` containment of each point in each member."""
        X = _as_points(X, self.lo.shape[1])
        return np.all((X[None, :, :] >= self.lo[:, None, :]) & (X[None, :, :] < self.hi[:, None, :]), axis=2)


@njit(cache=True)
def _any_contains(lo, hi, X):
    out = np.zeros(X.shape[0], dtype=np.bool_)
    for p in range(X.shape[0]):
        for k in range(lo.shape[0]):
            inside = True
            for v in range(lo.shape[1]):
                if not (X[p, v] >= lo[k, v] and X[p, v] < hi[k, v]):
                    inside = False
                    break
            if inside:
                out[p] = True
                break
    return out


def union_region(sample: PosteriorSample, x_i) -> UnionRegion:
    """The per-draw supertree cells of ``x_i`` taken together."""
    lo, hi = supertree_cells(sample, x_i)
    return UnionRegion(lo, hi)


def write_regions(path, regions, names=None) -> None:
    """CSV of rectangles: ``holdout, draw, lo_<v>..., hi_<v>...``.

    ``regions`` maps a held-out observation index to a :class:`UnionRegion`.
    Infinite bounds are written as ``-inf`` / ``inf``.
    """
    regions = dict(regions)
    if not regions:
        raise ValueError("no regions to write")
    d = next(iter(regions.values())).lo.shape[1]
    names = list(names) if names is not None else [str(v) for v in range(d)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["holdout", "draw"] + [f"lo_{n}" for n in names] + [f"hi_{n}" for n in names])
        for i, reg in regions.items():
            for k in range(len(reg)):
                w.writerow([i, k] + [repr(float(v)) for v in reg.lo[k]] + [repr(float(v)) for v in reg.hi[k]])


def read_regions(path) -> dict[int, UnionRegion]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    d = (len(rows[0]) - 2) // 2
    acc: dict[int, list] = {}
    for r in rows[1:]:
        acc.setdefault(int(r[0]), []).append([float(v) for v in r[2:]])
    return {i: UnionRegion(np.array(v)[:, :d], np.array(v)[:, d:]) for i, v in acc.items()}
