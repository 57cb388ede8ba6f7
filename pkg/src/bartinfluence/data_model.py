"""Core domain types: datasets, cutpoint grids, trees, ensembles and posterior samples.

Trees are stored as small arrays in preorder with heap-style node labels
(root ``1``, children ``2i`` and ``2i + 1``).  A :class:`PosteriorSample` keeps
every draw in one flat node table so the compiled kernels in
:mod:`bartinfluence._kernels` can sweep the whole posterior without building
Python objects; :class:`PosteriorDraw` and :class:`Tree` views are created on
demand.
"""

from __future__ import annotations

import csv
import math
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass, field, asdict, replace
from typing import Any

import numpy as np

MAX_DEPTH = 32

LEFT = "left"
RIGHT = "right"


class TreeStructureError(ValueError):
    """Raised for malformed trees (dangling children, bad labels)."""


class CSVParseError(ValueError):
    """Raised when a dataset CSV cannot be parsed; carries line and column."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)
        self.line = line
        self.column = column


# ---------------------------------------------------------------------------
# Dataset and cutpoints
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Dataset:
    """Predictor matrix plus response vector.

    Parameters
    ----------
    predictors : array of shape (n, d)
    response : array of shape (n,)
    names : optional predictor column names
    response_name : optional response column name
    """

    predictors: np.ndarray
    response: np.ndarray
    names: tuple[str, ...] | None = None
    response_name: str | None = None

    def __post_init__(self):
        X = np.array(self.predictors, dtype=np.float64)
        y = np.array(self.response, dtype=np.float64).reshape(-1)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2:
            raise ValueError("predictors must be a 2-d array")
        n, d = X.shape
        if n < 1 or d < 1:
            raise ValueError("dataset needs n >= 1 rows and d >= 1 predictors")
        if y.shape[0] != n:
            raise ValueError(f"response has {y.shape[0]} entries but predictors have {n} rows")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("dataset contains non-finite values")
        if self.names is not None and len(self.names) != d:
            raise ValueError("names must have one entry per predictor column")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "predictors", X)
        object.__setattr__(self, "response", y)
        if self.names is not None:
            object.__setattr__(self, "names", tuple(self.names))

    @property
    def n(self) -> int:
        return self.predictors.shape[0]

    @property
    def d(self) -> int:
        return self.predictors.shape[1]

    def drop(self, indices: Sequence[int]) -> "Dataset":
        """Return a copy without the given rows."""
        keep = np.ones(self.n, dtype=bool)
        keep[np.asarray(list(indices), dtype=np.int64)] = False
        return Dataset(self.predictors[keep], self.response[keep], self.names, self.response_name)


def read_csv(path, response: str) -> Dataset:
    """Read a dataset CSV with a header row.

    The column named ``response`` becomes the response; every other column
    is a numeric predictor.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CSVParseError("empty file", line=1) from None
        header = [h.strip() for h in header]
        if response not in header:
            raise CSVParseError(f"response column {response!r} not found in header {header}", line=1)
        ycol = header.index(response)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise CSVParseError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
            values = []
            for col, cell in enumerate(row, start=1):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise CSVParseError(f"cannot parse {cell!r} as a number", line=lineno, column=col) from None
            rows.append(values)
    if not rows:
        raise CSVParseError("no data rows", line=2)
    arr = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise CSVParseError("non-finite value", line=int(bad[0]) + 2, column=int(bad[1]) + 1)
    xcols = [c for c in range(len(header)) if c != ycol]
    if not xcols:
        raise CSVParseError("no predictor columns", line=1)
    return Dataset(arr[:, xcols], arr[:, ycol], tuple(header[c] for c in xcols), response)


def write_csv(path, data: Dataset) -> None:
    names = list(data.names) if data.names is not None else [f"x{v + 1}" for v in range(data.d)]
    rname = data.response_name or "y"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + [rname])
        for xrow, yv in zip(data.predictors, data.response):
            w.writerow([repr(float(v)) for v in xrow] + [repr(float(yv))])


@dataclass(frozen=True, eq=False)
class CutpointGrid:
    """Per-variable strictly increasing cutpoint lists.

    A variable whose observed values are all equal gets an empty list and is
    never split on.
    """

    cuts: tuple[np.ndarray, ...]

    def __post_init__(self):
        cuts = []
        for c in self.cuts:
            a = np.array(c, dtype=np.float64).reshape(-1)
            if a.size > 1 and not np.all(np.diff(a) > 0):
                raise ValueError("cutpoints must be strictly increasing")
            if not np.all(np.isfinite(a)):
                raise ValueError("cutpoints must be finite")
            a.flags.writeable = False
            cuts.append(a)
        object.__setattr__(self, "cuts", tuple(cuts))

    @classmethod
    def from_data(cls, X: np.ndarray, numcut: int = 100) -> "CutpointGrid":
        """Uniform grid of ``numcut`` points strictly inside each variable's range.

        Integer-valued variables with at most ``numcut`` distinct levels use
        their observed levels instead: cut ``l_k`` sends level ``l_{k-1}``
        left and ``l_k`` right.
        """
        X = np.asarray(X, dtype=np.float64)
        cuts = []
        for v in range(X.shape[1]):
            col = X[:, v]
            lo, hi = float(col.min()), float(col.max())
            if hi <= lo:
                cuts.append(np.empty(0))
                continue
            levels = np.unique(col)
            if np.all(levels == np.round(levels)) and levels.size <= numcut:
                cuts.append(levels[1:])
                continue
            step = (hi - lo) / (numcut + 1)
            grid = lo + step * np.arange(1, numcut + 1)
            grid = np.unique(grid[(grid > lo) & (grid < hi)])
            cuts.append(grid)
        return cls(tuple(cuts))

    @property
    def d(self) -> int:
        return len(self.cuts)

    @property
    def counts(self) -> np.ndarray:
        return np.array([c.size for c in self.cuts], dtype=np.int32)

    def value(self, var: int, cut: int) -> float:
        return float(self.cuts[var][cut])

    def padded(self) -> np.ndarray:
        """Cutpoints as a (d, max n_v) array padded with NaN."""
        width = max(1, int(self.counts.max()))
        out = np.full((self.d, width), np.nan)
        for v, c in enumerate(self.cuts):
            out[v, : c.size] = c
        return out

    def binned(self, X: np.ndarray) -> np.ndarray:
        """Number of cutpoints ``<= x`` per entry, so ``x < cuts[c]`` iff ``bin <= c``."""
        X = np.asarray(X, dtype=np.float64)
        out = np.empty(X.shape, dtype=np.int32)
        for v, c in enumerate(self.cuts):
            out[:, v] = np.searchsorted(c, X[:, v], side="right")
        return out

    def to_lists(self) -> list[list[float]]:
        return [[float(x) for x in c] for c in self.cuts]


@dataclass(frozen=True)
class SplitRule:
    """Split ``x[var] < cutpoints[var][cut]`` (0-based indices)."""

    var: int
    cut: int


# ---------------------------------------------------------------------------
# Hyperrectangles
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Hyperrectangle:
    """Axis-aligned half-open cell ``prod_v [lo_v, hi_v)``."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lo, dtype=np.float64).reshape(-1)
        hi = np.array(self.hi, dtype=np.float64).reshape(-1)
        if lo.shape != hi.shape:
            raise ValueError("lo and hi must have the same length")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def full(cls, d: int) -> "Hyperrectangle":
        return cls(np.full(d, -np.inf), np.full(d, np.inf))

    @property
    def d(self) -> int:
        return self.lo.size

    @property
    def is_empty(self) -> bool:
        return bool(np.any(self.lo >= self.hi))

    def contains(self, x) -> np.ndarray | bool:
        """Membership of one point (bool) or rows of a 2-d array (bool array)."""
        x = np.asarray(x, dtype=np.float64)
        inside = np.all((x >= self.lo) & (x < self.hi), axis=-1)
        return bool(inside) if x.ndim == 1 else inside

    def restrict(self, var: int, value: float, direction: str) -> "Hyperrectangle":
        lo, hi = self.lo.copy(), self.hi.copy()
        if direction == LEFT:
            hi[var] = min(hi[var], value)
        else:
            lo[var] = max(lo[var], value)
        return Hyperrectangle(lo, hi)

    def __eq__(self, other):
        if not isinstance(other, Hyperrectangle):
            return NotImplemented
        return np.array_equal(self.lo, other.lo) and np.array_equal(self.hi, other.hi)

    def __hash__(self):
        return hash((self.lo.tobytes(), self.hi.tobytes()))

    def __repr__(self):
        dims = " x ".join(f"[{a:g}, {b:g})" for a, b in zip(self.lo, self.hi))
        return f"Hyperrectangle({dims})"


# ---------------------------------------------------------------------------
# Trees
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Tree:
    """Binary regression tree in preorder array form.

    ``var[k] == -1`` marks a terminal node; ``left``/``right`` are local
    positions of the children, ``heap`` the heap labels.
    """

    heap: np.ndarray
    var: np.ndarray
    cut: np.ndarray
    value: np.ndarray
    mu: np.ndarray
    left: np.ndarray
    right: np.ndarray

    @classmethod
    def from_nodes(cls, nodes: Mapping[int, SplitRule | float], grid: CutpointGrid) -> "Tree":
        """Build a tree from ``{heap label: SplitRule | terminal mean}``."""
        if 1 not in nodes:
            raise TreeStructureError("tree has no root node (label 1)")
        heap, var, cut, value, mu, left, right = [], [], [], [], [], [], []

        def visit(label: int, depth: int) -> int:
            if depth > MAX_DEPTH:
                raise TreeStructureError(f"tree deeper than {MAX_DEPTH}")
            if label not in nodes:
                raise TreeStructureError(f"dangling child: node {label} missing")
            pos = len(heap)
            node = nodes[label]
            heap.append(label)
            left.append(-1)
            right.append(-1)
            if isinstance(node, SplitRule):
                if not (0 <= node.var < grid.d) or not (0 <= node.cut < grid.cuts[node.var].size):
                    raise TreeStructureError(f"split rule {node} out of range for cutpoint grid")
                var.append(node.var)
                cut.append(node.cut)
                value.append(grid.value(node.var, node.cut))
                mu.append(0.0)
                left[pos] = visit(2 * label, depth + 1)
                right[pos] = visit(2 * label + 1, depth + 1)
            else:
                if 2 * label in nodes or 2 * label + 1 in nodes:
                    raise TreeStructureError(f"terminal node {label} has children")
                var.append(-1)
                cut.append(-1)
                value.append(np.nan)
                mu.append(float(node))
            return pos

        visit(1, 0)
        if len(heap) != len(nodes):
            raise TreeStructureError("nodes unreachable from the root")
        return cls(
            np.array(heap, dtype=np.int64),
            np.array(var, dtype=np.int32),
            np.array(cut, dtype=np.int32),
            np.array(value, dtype=np.float64),
            np.array(mu, dtype=np.float64),
            np.array(left, dtype=np.int64),
            np.array(right, dtype=np.int64),
        )

    @classmethod
    def stump(cls, mu: float = 0.0) -> "Tree":
        """Single-root tree."""
        return cls(
            np.array([1], dtype=np.int64),
            np.array([-1], dtype=np.int32),
            np.array([-1], dtype=np.int32),
            np.array([np.nan]),
            np.array([float(mu)]),
            np.array([-1], dtype=np.int64),
            np.array([-1], dtype=np.int64),
        )

    def __len__(self) -> int:
        return self.heap.size

    @property
    def n_terminals(self) -> int:
        return int(np.count_nonzero(self.var < 0))

    def terminals(self) -> list[int]:
        """Heap labels of the terminal nodes, in preorder."""
        return [int(h) for h in self.heap[self.var < 0]]

    def _pos(self, label: int) -> int:
        hits = np.flatnonzero(self.heap == label)
        if hits.size == 0:
            raise KeyError(f"no node with label {label}")
        return int(hits[0])

    def node(self, label: int) -> SplitRule | float:
        pos = self._pos(label)
        if self.var[pos] < 0:
            return float(self.mu[pos])
        return SplitRule(int(self.var[pos]), int(self.cut[pos]))

    def to_nodes(self) -> dict[int, SplitRule | float]:
        return {int(h): self.node(int(h)) for h in self.heap}

    def terminal_mu(self, label: int) -> float:
        pos = self._pos(label)
        if self.var[pos] >= 0:
            raise ValueError(f"node {label} is not terminal")
        return float(self.mu[pos])

    def depth_of(self, label: int) -> int:
        return int(label).bit_length() - 1

    def _descend(self, x) -> int:
        pos = 0
        while self.var[pos] >= 0:
            if x[self.var[pos]] < self.value[pos]:
                nxt = self.left[pos]
            else:
                nxt = self.right[pos]
            if nxt < 0:
                raise TreeStructureError(f"dangling child below node {int(self.heap[pos])}")
            pos = nxt
        return pos

    def map_to_terminal(self, x) -> int:
        """Heap label of the terminal reached by ``x`` (left iff ``x_v < c``)."""
        return int(self.heap[self._descend(np.asarray(x, dtype=np.float64))])

    def predict(self, x) -> float:
        return float(self.mu[self._descend(np.asarray(x, dtype=np.float64))])

    def path(self, label: int) -> list[tuple[SplitRule, str]]:
        """Split rules from the root down to terminal ``label`` with directions."""
        pos = self._pos(label)
        if self.var[pos] >= 0:
            raise ValueError(f"node {label} is not a terminal node")
        steps = []
        lab = int(label)
        while lab > 1:
            parent = lab // 2
            ppos = self._pos(parent)
            steps.append((SplitRule(int(self.var[ppos]), int(self.cut[ppos])), LEFT if lab % 2 == 0 else RIGHT))
            lab = parent
        return steps[::-1]

    def cell(self, label: int, d: int) -> Hyperrectangle:
        """Hyperrectangle of terminal ``label`` in ``d`` dimensions."""
        rect = Hyperrectangle.full(d)
        lab = int(label)
        pos = self._pos(lab)
        if self.var[pos] >= 0:
            raise ValueError(f"node {label} is not a terminal node")
        while lab > 1:
            parent = lab // 2
            ppos = self._pos(parent)
            rect = rect.restrict(int(self.var[ppos]), float(self.value[ppos]), LEFT if lab % 2 == 0 else RIGHT)
            lab = parent
        return rect

    def node_counts(self, X) -> dict[int, int]:
        """Training-observation counts per terminal label."""
        X = np.asarray(X, dtype=np.float64)
        counts = {lab: 0 for lab in self.terminals()}
        for row in X:
            counts[self.map_to_terminal(row)] += 1
        return counts


def map_to_terminal(tree: Tree, x) -> int:
    return tree.map_to_terminal(x)


def path(tree: Tree, terminal: int) -> list[tuple[SplitRule, str]]:
    return tree.path(terminal)


def cell(tree: Tree, terminal: int, d: int) -> Hyperrectangle:
    return tree.cell(terminal, d)


def node_counts(tree: Tree, data: Dataset | np.ndarray) -> dict[int, int]:
    X = data.predictors if isinstance(data, Dataset) else data
    return tree.node_counts(X)


# ---------------------------------------------------------------------------
# Ensembles and posterior samples
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PosteriorDraw:
    """One MCMC state: ``m`` trees, error sd ``sigma`` and a response offset.

    The prediction is ``offset + sum_j g_j(x)``, accumulated in ascending
    tree order.
    """

    trees: tuple[Tree, ...]
    sigma: float
    index: int = 0
    offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "trees", tuple(self.trees))
        if len(self.trees) < 1:
            raise ValueError("a draw needs at least one tree")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @property
    def m(self) -> int:
        return len(self.trees)


def predict_draw(draw: PosteriorDraw, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    s = draw.offset
    for tree in draw.trees:
        s += tree.predict(x)
    return float(s)


@dataclass(frozen=True)
class ModelConfig:
    """Prior and sampler settings.

    ``tau`` and ``lam`` left as ``None`` are calibrated from the response by
    :meth:`resolve`: ``tau = (max y - min y) / (2 k sqrt(m))`` and ``lam``
    puts the ``q`` prior quantile of ``sigma`` at the sample sd of ``y``.
    """

    m: int = 200
    alpha: float = 0.95
    beta: float = 2.0
    k: float = 2.0
    tau: float | None = None
    nu: float = 3.0
    lam: float | None = None
    q: float = 0.90
    n0: int = 5
    numcut: int = 100
    ndraws: int = 1000
    burn: int = 1000
    seed: int = 0
    center: bool = True

    def __post_init__(self):
        if not (0 < self.alpha < 1):
            raise ValueError("alpha must lie in (0, 1)")
        if not self.beta >= 1:
            raise ValueError("beta must be >= 1")
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        if self.lam is not None and not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.tau is not None and not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.k > 0:
            raise ValueError("k must be positive")
        if not (0 < self.q < 1):
            raise ValueError("q must lie in (0, 1)")
        if self.n0 < 1:
            raise ValueError("n0 must be >= 1")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.numcut < 1:
            raise ValueError("numcut must be >= 1")
        if self.ndraws < 1:
            raise ValueError("ndraws must be >= 1")
        if self.burn < 0:
            raise ValueError("burn must be >= 0")

    def resolve(self, y: np.ndarray) -> "ModelConfig":
        """Fill in data-calibrated ``tau`` and ``lam``."""
        from scipy.stats import chi2

        y = np.asarray(y, dtype=np.float64)
        tau, lam = self.tau, self.lam
        if tau is None:
            spread = float(y.max() - y.min())
            if spread <= 0:
                spread = 1.0
            tau = spread / (2.0 * self.k * math.sqrt(self.m))
        if lam is None:
            sd = float(np.std(y, ddof=1)) if y.size > 1 else 0.0
            if sd <= 0:
                sd = 1.0
            lam = sd**2 * float(chi2.ppf(1.0 - self.q, self.nu)) / self.nu
        return replace(self, tau=float(tau), lam=float(lam))

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ModelConfig":
        return cls(**dict(d))


class _DrawSequence(Sequence):
    def __init__(self, sample: "PosteriorSample"):
        self._s = sample

    def __len__(self):
        return self._s.ndraws

    def __getitem__(self, k):
        if isinstance(k, slice):
            return [self._s.draw(i) for i in range(*k.indices(len(self)))]
        if k < 0:
            k += len(self)
        if not 0 <= k < len(self):
            raise IndexError(k)
        return self._s.draw(k)

    def __iter__(self) -> Iterator[PosteriorDraw]:
        for k in range(len(self)):
            yield self._s.draw(k)


@dataclass(frozen=True, eq=False)
class Forest:
    """Flat node table for ``N`` draws of ``m`` trees.

    Node arrays are concatenated tree after tree; ``start[k * m + j]`` is
    the root position of tree ``j`` in draw ``k`` and ``left``/``right``
    hold absolute positions.
    """

    heap: np.ndarray
    var: np.ndarray
    cut: np.ndarray
    value: np.ndarray
    mu: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    m: int

    @property
    def ndraws(self) -> int:
        return (self.start.size - 1) // self.m

    @classmethod
    def from_trees(cls, trees: Sequence[Tree], m: int) -> "Forest":
        sizes = np.array([len(t) for t in trees], dtype=np.int64)
        start = np.zeros(len(trees) + 1, dtype=np.int64)
        np.cumsum(sizes, out=start[1:])
        cat = lambda name: np.concatenate([getattr(t, name) for t in trees])
        left = np.concatenate([np.where(t.left >= 0, t.left + s, -1) for t, s in zip(trees, start)])
        right = np.concatenate([np.where(t.right >= 0, t.right + s, -1) for t, s in zip(trees, start)])
        return cls(cat("heap"), cat("var"), cat("cut"), cat("value"), cat("mu"), left, right, start, m)

    def tree(self, k: int, j: int) -> Tree:
        a, b = int(self.start[k * self.m + j]), int(self.start[k * self.m + j + 1])
        left = self.left[a:b]
        right = self.right[a:b]
        return Tree(
            self.heap[a:b],
            self.var[a:b],
            self.cut[a:b],
            self.value[a:b],
            self.mu[a:b],
            np.where(left >= 0, left - a, -1),
            np.where(right >= 0, right - a, -1),
        )

    def n_terminals(self) -> np.ndarray:
        """Terminal counts per tree, shape (N, m)."""
        is_leaf = (self.var < 0).astype(np.int64)
        csum = np.concatenate([[0], np.cumsum(is_leaf)])
        return (csum[self.start[1:]] - csum[self.start[:-1]]).reshape(-1, self.m)


class PosteriorSample:
    """Post burn-in MCMC draws sharing one configuration and cutpoint grid."""

    def __init__(
        self,
        config: ModelConfig,
        grid: CutpointGrid,
        forest: Forest,
        sigma: np.ndarray,
        offset: float = 0.0,
        info: Mapping[str, Any] | None = None,
        names: Sequence[str] | None = None,
    ):
        sigma = np.asarray(sigma, dtype=np.float64).reshape(-1)
        if sigma.size < 1:
            raise ValueError("a posterior sample needs at least one draw")
        if forest.ndraws != sigma.size:
            raise ValueError("forest and sigma disagree on the number of draws")
        if not np.all(sigma > 0):
            raise ValueError("sigma draws must be positive")
        self.config = config
        self.grid = grid
        self.forest = forest
        self.sigma = sigma
        self.offset = float(offset)
        self.info = dict(info or {})
        self.names = tuple(names) if names is not None else None

    @classmethod
    def from_draws(cls, draws: Sequence[PosteriorDraw], grid: CutpointGrid, config: ModelConfig | None = None):
        draws = list(draws)
        if not draws:
            raise ValueError("need at least one draw")
        m = draws[0].m
        if any(dr.m != m for dr in draws):
            raise ValueError("all draws must share m")
        offsets = {dr.offset for dr in draws}
        if len(offsets) != 1:
            raise ValueError("all draws must share the offset")
        forest = Forest.from_trees([t for dr in draws for t in dr.trees], m)
        config = config or ModelConfig(m=m, ndraws=len(draws), burn=0)
        return cls(config, grid, forest, np.array([dr.sigma for dr in draws]), offsets.pop())

    @property
    def m(self) -> int:
        return self.forest.m

    @property
    def ndraws(self) -> int:
        return self.sigma.size

    @property
    def d(self) -> int:
        return self.grid.d

    def draw(self, k: int) -> PosteriorDraw:
        trees = tuple(self.forest.tree(k, j) for j in range(self.m))
        return PosteriorDraw(trees, float(self.sigma[k]), k, self.offset)

    @property
    def draws(self) -> _DrawSequence:
        return _DrawSequence(self)

    def predict_draws(self, X) -> np.ndarray:
        """Per-draw ensemble predictions, shape (N, n_points)."""
        from ._kernels import predict_forest

        X = _as_points(X, self.d)
        f = self.forest
        return predict_forest(f.var, f.value, f.left, f.right, f.mu, f.start, f.m, self.offset, X)

    def predict(self, X) -> np.ndarray:
        """Posterior mean prediction."""
        return self.predict_draws(X).mean(axis=0)

    def subset(self, draws: Sequence[int]) -> "PosteriorSample":
        return PosteriorSample.from_draws([self.draw(int(k)) for k in draws], self.grid, self.config)


def _as_points(X, d: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1) if X.size == d else X.reshape(-1, 1)
    if X.ndim != 2 or X.shape[1] != d:
        raise ValueError(f"expected points with {d} columns, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("prediction points must be finite")
    return np.ascontiguousarray(X)
