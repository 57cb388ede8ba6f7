import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bartinfluence.data_model import (
    CSVParseError,
    CutpointGrid,
    Dataset,
    Forest,
    Hyperrectangle,
    ModelConfig,
    PosteriorDraw,
    PosteriorSample,
    SplitRule,
    Tree,
    TreeStructureError,
    cell,
    map_to_terminal,
    node_counts,
    path,
    predict_draw,
    read_csv,
    write_csv,
)

GRID = CutpointGrid(([0.25, 0.5, 0.75], [0.5]))


def small_tree():
    # root splits x0 < 0.5; left child splits x1 < 0.5
    return Tree.from_nodes({1: SplitRule(0, 1), 2: SplitRule(1, 0), 3: 3.0, 4: 1.0, 5: 2.0}, GRID)


def test_split_semantics_strict_less_than_goes_left():
    t = small_tree()
    assert map_to_terminal(t, [0.4999, 0.1]) == 4
    assert map_to_terminal(t, [0.5, 0.1]) == 3
    assert map_to_terminal(t, [0.2, 0.5]) == 5
    assert t.predict([0.2, 0.7]) == 2.0


def test_path_and_cell():
    t = small_tree()
    p = path(t, 5)
    assert [(r.var, r.cut, side) for r, side in p] == [(0, 1, "left"), (1, 0, "right")]
    c = cell(t, 5, 2)
    assert c == Hyperrectangle([-np.inf, 0.5], [0.5, np.inf])
    assert c.contains([0.1, 0.5]) and not c.contains([0.5, 0.6])


def test_node_counts():
    t = small_tree()
    X = np.array([[0.1, 0.1], [0.1, 0.9], [0.9, 0.0], [0.6, 0.6]])
    assert node_counts(t, X) == {3: 2, 4: 1, 5: 1}


def test_malformed_trees_rejected():
    with pytest.raises(TreeStructureError):
        Tree.from_nodes({1: SplitRule(0, 1), 2: 1.0}, GRID)
    with pytest.raises(TreeStructureError):
        Tree.from_nodes({1: SplitRule(0, 9), 2: 1.0, 3: 1.0}, GRID)
    with pytest.raises(TreeStructureError):
        Tree.from_nodes({2: 1.0}, GRID)
    with pytest.raises(TreeStructureError):
        Tree.from_nodes({1: 1.0, 2: 1.0, 3: 1.0}, GRID)


@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=3, max_size=40, unique=True))
def test_binned_matches_strict_comparison(values):
    cuts = np.sort(np.array(values))
    grid = CutpointGrid((cuts,))
    x = np.concatenate([cuts, cuts - 1e-9, cuts + 1e-9])[:, None]
    b = grid.binned(x)[:, 0]
    for c in range(cuts.size):
        assert np.array_equal(x[:, 0] < cuts[c], b <= c)


def test_grid_constant_column_and_integer_levels():
    X = np.column_stack([np.full(10, 3.0), np.arange(10) % 4, np.linspace(0, 1, 10)])
    g = CutpointGrid.from_data(X, numcut=5)
    assert g.counts.tolist() == [0, 3, 5]
    assert g.cuts[1].tolist() == [1.0, 2.0, 3.0]
    assert np.all((g.cuts[2] > 0) & (g.cuts[2] < 1))


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 2)), np.zeros(2))
    with pytest.raises(ValueError):
        Dataset(np.array([[np.nan]]), np.zeros(1))
    d = Dataset(np.arange(6.0).reshape(3, 2), [1, 2, 3])
    assert d.drop([1]).response.tolist() == [1.0, 3.0]


def test_csv_round_trip_and_errors(tmp_path):
    d = Dataset(np.array([[0.1, 2.0], [1 / 3, -4.5]]), [1e-300, 2.0], ("p", "q"), "resp")
    f = tmp_path / "d.csv"
    write_csv(f, d)
    back = read_csv(f, "resp")
    assert np.array_equal(back.predictors, d.predictors)
    assert np.array_equal(back.response, d.response)
    assert back.names == ("p", "q")
    bad = tmp_path / "bad.csv"
    bad.write_text("p,resp\n1,2\n3,x\n")
    with pytest.raises(CSVParseError) as err:
        read_csv(bad, "resp")
    assert err.value.line == 3
    with pytest.raises(CSVParseError):
        read_csv(f, "missing")


def test_config_calibration_and_round_trip():
    y = np.array([0.0, 1.0, 2.0, 4.0])
    c = ModelConfig(m=4, k=2).resolve(y)
    assert c.tau == pytest.approx(4.0 / (2 * 2 * 2))
    assert c.lam > 0
    assert ModelConfig.from_dict(c.to_dict()) == c
    with pytest.raises(ValueError):
        ModelConfig(alpha=1.5)


def test_forest_and_sample_predictions_agree():
    trees = [small_tree(), Tree.stump(0.5)]
    draws = [PosteriorDraw(trees, 1.0, 0, offset=0.25), PosteriorDraw(trees[::-1], 2.0, 1, offset=0.25)]
    s = PosteriorSample.from_draws(draws, GRID)
    X = np.random.default_rng(0).uniform(0, 1, (50, 2))
    P = s.predict_draws(X)
    for k, dr in enumerate(draws):
        assert np.array_equal(P[k], [predict_draw(dr, x) for x in X])
    f = Forest.from_trees(trees, 2)
    assert np.array_equal(f.tree(0, 0).mu, trees[0].mu)
    assert f.n_terminals().tolist() == [[3, 1]]
