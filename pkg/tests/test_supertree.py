import numpy as np
import pytest

from bartinfluence.data_model import CutpointGrid, Hyperrectangle, PosteriorDraw, PosteriorSample, SplitRule, Tree
from bartinfluence.supertree import (
    UnionRegion,
    build_supertree,
    intersect,
    read_regions,
    supertree_cell,
    supertree_cells,
    supertree_counts,
    union_region,
    write_regions,
)

GRID = CutpointGrid(([0.3, 0.6], [0.5]))


def two_tree_draw():
    t1 = Tree.from_nodes({1: SplitRule(0, 0), 2: 1.0, 3: 2.0}, GRID)
    t2 = Tree.from_nodes({1: SplitRule(1, 0), 2: 10.0, 3: SplitRule(0, 1), 6: 20.0, 7: 30.0}, GRID)
    return PosteriorDraw([t1, t2], sigma=1.0, offset=0.5)


def test_intersect_and_empty():
    a = Hyperrectangle([0, 0], [2, 2])
    b = Hyperrectangle([1, -1], [3, 1])
    assert intersect([a, b]) == Hyperrectangle([1, 0], [2, 1])
    assert intersect([a, Hyperrectangle([5, 5], [6, 6])]).is_empty
    with pytest.raises(ValueError):
        intersect([])


def test_hand_built_supertree():
    st = build_supertree(two_tree_draw(), d=2)
    # t1 has 2 cells, t2 has 3; x0 < 0.3 kills the (x0 >= 0.6) cell of t2
    assert st.n_cells == 5
    X = np.random.default_rng(0).uniform(0, 1, (500, 2))
    dr = two_tree_draw()
    assert np.array_equal(st.predict(X), [dr.offset + dr.trees[0].predict(x) + dr.trees[1].predict(x) for x in X])


def test_supertree_matches_forest(toy_sample):
    X = np.random.default_rng(1).uniform(-0.2, 1.2, (2000, 2))
    P = toy_sample.predict_draws(X)
    for k in (0, 7, 31):
        st = build_supertree(toy_sample.draw(k), d=2)
        assert np.array_equal(st.predict(X), P[k])


def test_counts_and_cells(toy_sample, toy_data):
    X = toy_data.predictors
    B, ns = supertree_counts(toy_sample, X, 4)
    occ = build_supertree(toy_sample.draw(4), X, occupied_only=True)
    assert B == occ.n_cells
    assert ns.sum() == (np.bincount(occ.locate(X)) ** 2).sum()
    lo, hi = supertree_cells(toy_sample, X[0])
    cell = supertree_cell(toy_sample.draw(4), X[0])
    assert np.array_equal(cell.lo, lo[4]) and np.array_equal(cell.hi, hi[4])
    assert np.all((X[0] >= lo) & (X[0] < hi))


def test_union_region_contains_every_member(toy_sample, toy_data, tmp_path):
    reg = union_region(toy_sample, toy_data.predictors[3])
    assert len(reg) == toy_sample.ndraws
    X = np.random.default_rng(2).uniform(0, 1, (1000, 2))
    assert np.array_equal(reg.contains(X), reg.member_mask(X).any(axis=0))
    assert reg.contains(toy_data.predictors[3])
    f = tmp_path / "r.csv"
    write_regions(f, {3: reg}, ("a", "b"))
    back = read_regions(f)[3]
    assert np.array_equal(back.lo, reg.lo) and np.array_equal(back.hi, reg.hi)
    with pytest.raises(ValueError):
        UnionRegion([[0.0]], [[0.0]])
