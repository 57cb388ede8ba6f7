"""Simulation benchmark: test functions, influential injection and RMSE protocol.

A :class:`Scenario` fixes a test function on ``[0, 1]^d``, a sample size,
noise level and the influential rows to append.  Each replicate draws a
fresh dataset, fits the model, runs the detection criteria, reweights with
every requested method and scores posterior-mean predictions against the
noise-free function on a global and a local evaluation box.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .data_model import Dataset, ModelConfig
from .diagnostics import detect, diagnose
from .reweighting import Reweighter
from .sampler import fit

log = logging.getLogger(__name__)

CRITERIA = ("oracle", "cooks", "kl", "cpo", "combined")
# "default" is the plain posterior mean, "refit" drops the true influentials and refits
METHODS = ("default", "refit", "global", "union", "int", "union-int", "l1")
RESULT_COLUMNS = (
    "scenario", "criterion", "weighting", "replicate", "rmse_local", "rmse_global",
    "detected_true", "false_flags", "n_flagged", "rmse_train", "degenerate_points", "error",
)


def f_cubic(x):
    """``8 (x - 0.5)^3`` on ``[0, 1]``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim and x.shape[-1] == 1:
        x = x[..., 0]
    return 8.0 * (x - 0.5) ** 3


def f_branin(x):
    """Zero-mean, unit-scale rescaled Branin on ``[0, 1]^2``."""
    x = np.asarray(x, dtype=np.float64)
    a = 15.0 * x[..., 0] - 5.0
    b = 15.0 * x[..., 1]
    bracket = b - 5.1 * a**2 / (4.0 * math.pi**2) + 5.0 * a / math.pi - 6.0
    return (bracket**2 + (10.0 - 10.0 / (8.0 * math.pi)) * np.cos(a) - 44.81) / 51.95


def f_friedman5(x):
    x = np.asarray(x, dtype=np.float64)
    return (
        10.0 * np.sin(math.pi * x[..., 0] * x[..., 1])
        + 20.0 * (x[..., 2] - 0.5) ** 2
        + 10.0 * x[..., 3]
        + 5.0 * x[..., 4]
    )


FUNCTIONS = {"cubic": (f_cubic, 1), "branin": (f_branin, 2), "friedman5": (f_friedman5, 5)}


def offset_calibration(n0: int, n_star: int, base_sd: float = 2.0) -> float:
    """Residual size (in sd) matching a ``base_sd`` residual in a terminal of ``n0`` rows.

    Equates the node-purity factors of a terminal with ``n0`` rows and one
    with ``n_star`` rows: ``k = base_sd sqrt((n0/(n0-1)^2) ((n_star-1)^2/n_star))``.
    """
    if n0 < 2 or n_star < 2:
        raise ValueError("n0 and n_star must be at least 2")
    return base_sd * math.sqrt((n0 / (n0 - 1) ** 2) * ((n_star - 1) ** 2 / n_star))


@dataclass(frozen=True)
class Influential:
    location: tuple
    offset: float
    units: str = "sd"  # "sd": multiples of the noise sd, "abs": response units

    def shift(self, sigma: float) -> float:
        if self.units == "sd":
            return self.offset * sigma
        if self.units == "abs":
            return self.offset
        raise ValueError(f"unknown offset units {self.units!r}")


@dataclass(frozen=True)
class Scenario:
    function: str
    n: int
    sigma: float
    influentials: tuple = ()
    m: int = 200
    n0: int = 5
    replicates: int = 20
    n_p: int = 5000
    local_box: tuple | None = None
    local_halfwidth: float = 0.1
    seed: int = 0
    ndraws: int = 1000
    burn: int = 1000
    name: str | None = None
    data_path: str | None = None
    response: str | None = None

    def __post_init__(self):
        if self.function not in FUNCTIONS and self.function != "external":
            raise ValueError(f"unknown test function {self.function!r}")
        if self.function != "external":
            if self.n < 10:
                raise ValueError("n must be at least 10")
            if not self.sigma > 0:
                raise ValueError("sigma must be positive")
            d = self.d
            for inf in self.influentials:
                loc = np.asarray(inf.location, dtype=np.float64)
                if loc.size != d or np.any(loc < 0) or np.any(loc > 1):
                    raise ValueError(f"influential location {inf.location} outside [0,1]^{d}")
        elif self.data_path is None or self.response is None:
            raise ValueError("an external scenario needs data_path and response")
        if self.n_p < 1:
            raise ValueError("n_p must be at least 1")

    @property
    def d(self) -> int:
        return FUNCTIONS[self.function][1]

    @property
    def id(self) -> str:
        if self.name:
            return self.name
        return f"{self.function}_n{self.n}_m{self.m}"

    @property
    def truth(self):
        return FUNCTIONS[self.function][0]

    def box(self) -> tuple[np.ndarray, np.ndarray]:
        """Local evaluation box: explicit, else the first influential +-halfwidth clipped to the domain."""
        if self.local_box is not None:
            lo, hi = self.local_box
            return np.asarray(lo, dtype=np.float64), np.asarray(hi, dtype=np.float64)
        if self.influentials:
            c = np.asarray(self.influentials[0].location, dtype=np.float64)
        else:
            c = np.full(self.d, 0.5)
        h = self.local_halfwidth
        return np.clip(c - h, 0.0, 1.0), np.clip(c + h, 0.0, 1.0)

    def model_config(self, seed: int) -> ModelConfig:
        return ModelConfig(m=self.m, n0=self.n0, ndraws=self.ndraws, burn=self.burn, seed=seed)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["influentials"] = [asdict(i) for i in self.influentials]
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        d = dict(d)
        d["influentials"] = tuple(
            Influential(tuple(i["location"]), float(i["offset"]), i.get("units", "sd")) for i in d.get("influentials", ())
        )
        if d.get("local_box") is not None:
            d["local_box"] = tuple(tuple(v) for v in d["local_box"])
        return cls(**d)


def generate(scenario: Scenario, rng: np.random.Generator) -> tuple[Dataset, np.ndarray]:
    """Uniform inputs, Gaussian noise, then the influential rows appended noise-free.

    Returns the dataset and the indices of the injected rows.
    """
    if scenario.function == "external":
        from .data_model import read_csv

        data = read_csv(scenario.data_path, scenario.response)
        return data, np.array([], dtype=np.int64)
    f = scenario.truth
    X = rng.random((scenario.n, scenario.d))
    y = f(X) + scenario.sigma * rng.standard_normal(scenario.n)
    if scenario.influentials:
        L = np.array([inf.location for inf in scenario.influentials], dtype=np.float64)
        yi = f(L) + np.array([inf.shift(scenario.sigma) for inf in scenario.influentials])
        X = np.vstack([X, L])
        y = np.concatenate([y, yi])
    idx = np.arange(scenario.n, scenario.n + len(scenario.influentials))
    return Dataset(X, y), idx


def evaluation_points(scenario: Scenario, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """``n_p`` uniform points on the domain and ``n_p`` in the local box."""
    d = scenario.d
    Xg = rng.random((scenario.n_p, d))
    lo, hi = scenario.box()
    Xl = lo + (hi - lo) * rng.random((scenario.n_p, d))
    return Xg, Xl


def rmse(pred, truth) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def evaluate(predict, scenario: Scenario, Xg: np.ndarray, Xl: np.ndarray) -> tuple[float, float]:
    """``(rmse_global, rmse_local)`` of ``predict(X)`` against the noise-free function.

    ``predict`` is a callable, a fitted ``PosteriorSample`` or a pair of
    prediction arrays for ``(Xg, Xl)``.
    """
    f = scenario.truth
    if isinstance(predict, tuple):
        pg, pl = predict
    else:
        fn = predict.predict if hasattr(predict, "predict") else predict
        pg, pl = fn(Xg), fn(Xl)
    return rmse(pg, f(Xg)), rmse(pl, f(Xl))


@dataclass
class StudyOptions:
    methods: tuple = ("default", "union-int")
    criteria: tuple = ("cpo",)
    ksd: int = 2
    delta: float = 0.09
    # infinite KL/CPO only when most draws break n0 on deletion
    n0_tolerance: float = 0.5
    kl_rule: str = "quantile"


def _seeds(scenario: Scenario) -> list[tuple[int, int]]:
    """Independent (data, fit) seeds per replicate."""
    children = np.random.SeedSequence(scenario.seed).spawn(scenario.replicates)
    return [tuple(int(v) for v in c.generate_state(2, dtype=np.uint32)) for c in children]


def run_replicate(scenario: Scenario, replicate: int, options: StudyOptions) -> list[dict]:
    """All (criterion, method) rows of one replicate."""
    data_seed, fit_seed = _seeds(scenario)[replicate]
    rng = np.random.default_rng(data_seed)
    data, true_idx = generate(scenario, rng)
    Xg, Xl = evaluation_points(scenario, rng)
    sample = fit(data, scenario.model_config(fit_seed))
    f = scenario.truth
    Xall = np.vstack([Xg, Xl, data.predictors])
    ng, nl = Xg.shape[0], Xl.shape[0]
    truth = f(Xall)

    def scores(pred):
        return (rmse(pred[ng : ng + nl], truth[ng : ng + nl]), rmse(pred[:ng], truth[:ng]), rmse(pred[ng + nl :], truth[ng + nl :]))

    P = sample.predict_draws(Xall)
    base = P.mean(axis=0)
    refit = None
    if "refit" in options.methods:
        refit_data = data.drop(true_idx) if true_idx.size else data
        refit = fit(refit_data, scenario.model_config(fit_seed)).predict(Xall)

    need_report = any(c != "oracle" for c in options.criteria)
    report = diagnose(sample, data, exact=False, kl_rule=options.kl_rule, n0_tolerance=options.n0_tolerance) if need_report else None
    rw = Reweighter(sample, data) if any(m not in ("default", "refit") for m in options.methods) else None
    true_set = {int(i) for i in true_idx}
    rows = []
    for crit in options.criteria:
        flagged = true_set if crit == "oracle" else detect(report, crit, options.ksd)
        holdouts = sorted(flagged)
        for meth in options.methods:
            row = {
                "scenario": scenario.id, "criterion": crit, "weighting": meth, "replicate": replicate,
                "detected_true": len(true_set & flagged), "false_flags": len(flagged - true_set),
                "n_flagged": len(flagged), "degenerate_points": 0, "error": "",
            }
            if meth == "default":
                pred = base
            elif meth == "refit":
                pred = refit
            elif not holdouts:
                pred = base
            else:
                res = rw.predict(meth, holdouts, Xall, delta=options.delta, on_degenerate="fallback", predictions=P)
                pred = res.weighted_mean
                row["degenerate_points"] = res.n_failed
            row["rmse_local"], row["rmse_global"], row["rmse_train"] = scores(pred)
            rows.append(row)
    return rows


def _failed_rows(scenario: Scenario, replicate: int, options: StudyOptions, exc: Exception) -> list[dict]:
    nan = float("nan")
    return [
        {"scenario": scenario.id, "criterion": c, "weighting": m, "replicate": replicate, "rmse_local": nan,
         "rmse_global": nan, "detected_true": -1, "false_flags": -1, "n_flagged": -1, "rmse_train": nan,
         "degenerate_points": 0, "error": f"{type(exc).__name__}: {exc}"}
        for c in options.criteria for m in options.methods
    ]


def _safe_replicate(args):
    scenario, rep, options = args
    try:
        return run_replicate(scenario, rep, options)
    except Exception as exc:  # one bad replicate must not sink the study
        log.warning("replicate %d of %s failed: %s", rep, scenario.id, exc)
        return _failed_rows(scenario, rep, options, exc)


def run_study(scenarios, options: StudyOptions | None = None, n_jobs: int = 1) -> tuple[list[dict], list[dict]]:
    """Run every replicate of every scenario; return (per-replicate rows, summary rows)."""
    options = options or StudyOptions()
    scenarios = list(scenarios)
    if not scenarios:
        raise ValueError("scenario grid is empty")
    tasks = [(s, r, options) for s in scenarios for r in range(s.replicates)]
    if n_jobs == 1:
        chunks = []
        for t in tasks:
            t0 = time.perf_counter()
            chunks.append(_safe_replicate(t))
            log.info("%s replicate %d done in %.1fs", t[0].id, t[1], time.perf_counter() - t0)
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            chunks = list(ex.map(_safe_replicate, tasks))
    rows = [r for chunk in chunks for r in chunk]
    return rows, summarize(rows)


def summarize(rows: list[dict]) -> list[dict]:
    """Mean RMSEs and detection rate per (scenario, criterion, weighting), in first-seen order."""
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault((r["scenario"], r["criterion"], r["weighting"]), []).append(r)
    out = []
    for (sc, crit, meth), rs in groups.items():
        ok = [r for r in rs if not r["error"]]
        n_true = [r["detected_true"] for r in ok]
        out.append({
            "scenario": sc, "criterion": crit, "weighting": meth,
            "replicates": len(rs), "failed": len(rs) - len(ok),
            "rmse_local": float(np.mean([r["rmse_local"] for r in ok])) if ok else float("nan"),
            "rmse_global": float(np.mean([r["rmse_global"] for r in ok])) if ok else float("nan"),
            "rmse_train": float(np.mean([r["rmse_train"] for r in ok])) if ok else float("nan"),
            "mean_detected_true": float(np.mean(n_true)) if ok else float("nan"),
            "mean_false_flags": float(np.mean([r["false_flags"] for r in ok])) if ok else float("nan"),
            "degenerate_points": int(sum(r["degenerate_points"] for r in ok)),
        })
    return out


def detection_rate(rows: list[dict], n_true: int, criterion: str) -> float:
    """Share of replicates in which every true influential was flagged."""
    reps = {}
    for r in rows:
        if r["criterion"] == criterion and not r["error"]:
            reps[r["replicate"]] = r["detected_true"]
    return float(np.mean([v >= n_true for v in reps.values()])) if reps else float("nan")


SUMMARY_COLUMNS = (
    "scenario", "criterion", "weighting", "replicates", "failed", "rmse_local", "rmse_global",
    "rmse_train", "mean_detected_true", "mean_false_flags", "degenerate_points",
)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_rows(path, rows: list[dict], columns) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def read_rows(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# canned scenarios mirroring the benchmark settings
def cubic_scenario(**kw) -> Scenario:
    infl = (Influential((0.5,), 3.0), Influential((1.0,), 3.0))
    base = dict(function="cubic", n=100, sigma=0.05, influentials=infl, name="cubic")
    base.update(kw)
    return Scenario(**base)


def branin_scenario(**kw) -> Scenario:
    infl = (Influential((0.5, 0.5), 3.0), Influential((0.0, 1.0), 3.0))
    base = dict(function="branin", n=500, sigma=0.05, influentials=infl, name="branin", replicates=10)
    base.update(kw)
    return Scenario(**base)


def friedman_scenario(**kw) -> Scenario:
    infl = (Influential((0.5,) * 5, 5.0),)
    base = dict(function="friedman5", n=500, sigma=1.0, influentials=infl, name="friedman5")
    base.update(kw)
    return Scenario(**base)
