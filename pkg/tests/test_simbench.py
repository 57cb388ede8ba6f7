import numpy as np
import pytest

from bartinfluence.simbench import (
    RESULT_COLUMNS,
    Influential,
    Scenario,
    StudyOptions,
    cubic_scenario,
    detection_rate,
    evaluation_points,
    f_branin,
    f_cubic,
    f_friedman5,
    generate,
    offset_calibration,
    read_rows,
    rmse,
    run_study,
    write_rows,
)


def test_test_functions():
    assert f_cubic(np.array([[0.5], [1.0]])).tolist() == [0.0, 1.0]
    assert f_friedman5(np.full((1, 5), 0.5))[0] == pytest.approx(10 * np.sin(np.pi / 4) + 7.5)
    g = np.random.default_rng(0).random((20000, 2))
    v = f_branin(g)
    assert abs(v.mean()) < 0.1 and 0.8 < v.std() < 1.2


def test_offset_calibration_identity():
    assert offset_calibration(5, 5) == pytest.approx(2.0)
    assert offset_calibration(5, 6) == pytest.approx(2.28218, abs=1e-5)


def test_generate_places_influentials():
    sc = cubic_scenario()
    data, idx = generate(sc, np.random.default_rng(3))
    assert data.n == 102 and idx.tolist() == [100, 101]
    assert data.response[101] == pytest.approx(1.0 + 3 * 0.05)
    assert data.predictors[100, 0] == 0.5


def test_scenario_validation_and_round_trip():
    with pytest.raises(ValueError):
        Scenario("cubic", 100, 0.05, (Influential((2.0,), 3.0),))
    with pytest.raises(ValueError):
        Scenario("nope", 100, 0.05)
    sc = cubic_scenario(local_box=((0.4,), (0.6,)))
    assert Scenario.from_dict(sc.to_dict()) == sc
    Xg, Xl = evaluation_points(sc, np.random.default_rng(0))
    assert Xg.shape == (5000, 1) and np.all((Xl >= 0.4) & (Xl < 0.6))


def test_small_study_runs_and_is_deterministic(tmp_path):
    sc = cubic_scenario(m=10, ndraws=40, burn=40, replicates=2, n_p=50)
    opts = StudyOptions(methods=("default", "refit", "global", "union-int", "l1"), criteria=("oracle", "cpo"))
    rows, summary = run_study([sc], opts)
    assert len(rows) == 2 * 2 * 5
    assert not any(r["error"] for r in rows)
    assert rmse([1.0, 3.0], [1.0, 1.0]) == pytest.approx(np.sqrt(2))
    assert detection_rate(rows, 2, "oracle") == 1.0
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_rows(a, rows, RESULT_COLUMNS)
    rows2, _ = run_study([sc], opts)
    write_rows(b, rows2, RESULT_COLUMNS)
    assert a.read_bytes() == b.read_bytes()
    assert len(read_rows(a)) == len(rows)
    assert {s["weighting"] for s in summary} == set(opts.methods)
