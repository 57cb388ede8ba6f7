"""Line-delimited text persistence of posterior samples.

Layout::

    #bartinfluence-posterior 1
    {"config": ..., "cutpoints": ..., "offset": ..., "m": ..., "ndraws": ...}
    <sigma>\t<tree 1>\t...\t<tree m>          (one line per draw)

A tree is its preorder node list, space separated; each node is
``heap:S:var:cut`` (internal, 0-based indices) or ``heap:L:mu``.  Floats
are written with ``repr`` so every value survives the round trip exactly,
and a write -> read -> write cycle is byte-stable.
"""

from __future__ import annotations

import json

import numpy as np
from numba import njit

from .data_model import CutpointGrid, Forest, ModelConfig, PosteriorSample

MAGIC = "#bartinfluence-posterior 1"


class PosteriorFormatError(ValueError):
    """Malformed posterior file."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return [float(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


def dumps_header(sample: PosteriorSample, names=None) -> str:
    info = {k: _jsonable(v) for k, v in sample.info.items()}
    head = {
        "config": sample.config.to_dict(),
        "cutpoints": sample.grid.to_lists(),
        "offset": float(sample.offset),
        "m": int(sample.m),
        "ndraws": int(sample.ndraws),
        "names": list(names) if names is not None else (list(sample.names) if sample.names else None),
        "info": info,
    }
    return json.dumps(head, sort_keys=True)


def save_posterior(sample: PosteriorSample, path, names=None) -> None:
    """Write ``sample`` to ``path`` in the text posterior format."""
    f = sample.forest
    heap = f.heap.tolist()
    var = f.var.tolist()
    cut = f.cut.tolist()
    mu = f.mu.tolist()
    start = f.start.tolist()
    m = f.m
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(MAGIC + "\n")
        fh.write(dumps_header(sample, names) + "\n")
        for k in range(sample.ndraws):
            parts = [repr(float(sample.sigma[k]))]
            for t in range(k * m, (k + 1) * m):
                toks = []
                for p in range(start[t], start[t + 1]):
                    if var[p] >= 0:
                        toks.append(f"{heap[p]}:S:{var[p]}:{cut[p]}")
                    else:
                        toks.append(f"{heap[p]}:L:{mu[p]!r}")
                parts.append(" ".join(toks))
            fh.write("\t".join(parts) + "\n")


@njit(cache=True)
def _link_preorder(heap, var, start):
    n = heap.size
    left = np.full(n, -1, dtype=np.int64)
    right = np.full(n, -1, dtype=np.int64)
    ok = True
    for t in range(start.size - 1):
        a = start[t]
        b = start[t + 1]
        if heap[a] != 1:
            ok = False
        for q in range(a, b):
            if var[q] >= 0:
                h = heap[q]
                for r in range(q + 1, b):
                    if heap[r] == 2 * h:
                        left[q] = r
                    elif heap[r] == 2 * h + 1:
                        right[q] = r
                if left[q] < 0 or right[q] < 0:
                    ok = False
    return left, right, ok


def load_posterior(path) -> PosteriorSample:
    """Read a posterior file written by :func:`save_posterior`."""
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
        if first != MAGIC:
            raise PosteriorFormatError("not a posterior file (bad header)", 1)
        try:
            head = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise PosteriorFormatError(f"bad header record: {exc}", 2) from None
        config = ModelConfig.from_dict(head["config"])
        grid = CutpointGrid(tuple(np.array(c, dtype=np.float64) for c in head["cutpoints"]))
        m = int(head["m"])
        heap, var, cut, mu, sizes, sigma = [], [], [], [], [], []
        for lineno, line in enumerate(fh, start=3):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != m + 1:
                raise PosteriorFormatError(f"expected {m} trees, found {len(fields) - 1}", lineno)
            try:
                sigma.append(float(fields[0]))
                for tree in fields[1:]:
                    toks = tree.split(" ")
                    sizes.append(len(toks))
                    for tok in toks:
                        parts = tok.split(":")
                        heap.append(int(parts[0]))
                        if parts[1] == "S":
                            var.append(int(parts[2]))
                            cut.append(int(parts[3]))
                            mu.append(0.0)
                        elif parts[1] == "L":
                            var.append(-1)
                            cut.append(-1)
                            mu.append(float(parts[2]))
                        else:
                            raise ValueError(f"unknown node kind {parts[1]!r}")
            except (ValueError, IndexError) as exc:
                raise PosteriorFormatError(str(exc), lineno) from None
    if len(sigma) != int(head["ndraws"]):
        raise PosteriorFormatError(f"header promises {head['ndraws']} draws, found {len(sigma)}")
    heap = np.array(heap, dtype=np.int64)
    var = np.array(var, dtype=np.int32)
    cut = np.array(cut, dtype=np.int32)
    start = np.zeros(len(sizes) + 1, dtype=np.int64)
    np.cumsum(sizes, out=start[1:])
    left, right, ok = _link_preorder(heap, var, start)
    if not ok:
        raise PosteriorFormatError("tree node list is not a complete preorder tree")
    internal = var >= 0
    if np.any(var[internal] >= grid.d) or np.any(cut[internal] >= grid.counts[var[internal]]):
        raise PosteriorFormatError("split rule outside the cutpoint grid")
    value = np.full(var.size, np.nan)
    value[internal] = grid.padded()[var[internal], cut[internal]]
    forest = Forest(heap, var, cut, value, np.array(mu, dtype=np.float64), left, right, start, m)
    info = dict(head.get("info") or {})
    if "sigma_trace" in info:
        info["sigma_trace"] = np.array(info["sigma_trace"])
    return PosteriorSample(config, grid, forest, np.array(sigma), head["offset"], info, head.get("names"))
