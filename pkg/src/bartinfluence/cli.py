"""Command-line interface: fit, diagnose, reweight, predict, simulate."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from .data_model import CSVParseError, Dataset, ModelConfig, read_csv
from .diagnostics import DiagnosticReport, detect, diagnose
from .persistence import PosteriorFormatError, load_posterior, save_posterior
from .reweighting import METHODS, DegenerateWeightsError, Reweighter, write_weights
from .sampler import FitRefusedError, chain_summary, fit
from .simbench import (
    CRITERIA,
    RESULT_COLUMNS,
    SUMMARY_COLUMNS,
    Influential,
    Scenario,
    StudyOptions,
    branin_scenario,
    cubic_scenario,
    friedman_scenario,
    run_study,
    write_rows,
)
from .simbench import METHODS as STUDY_METHODS
from .supertree import UnionRegion, supertree_cells, write_regions

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_DIMENSION = 4
EXIT_DEGENERATE = 5
EXIT_REFUSED = 6
THREADS_ENV = "BARTINFLUENCE_THREADS"

log = logging.getLogger("bartinfluence")


class DimensionError(ValueError):
    """Posterior and data disagree."""


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _model_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--m", type=int, default=200, help="number of trees")
    g.add_argument("--n0", type=int, default=5, help="minimum rows per terminal node")
    g.add_argument("--alpha", type=float, default=0.95)
    g.add_argument("--beta", type=float, default=2.0)
    g.add_argument("--k", type=float, default=2.0, help="terminal-mean prior scaling")
    g.add_argument("--nu", type=float, default=3.0)
    g.add_argument("--numcut", type=int, default=100)
    g.add_argument("--ndraws", type=int, default=1000)
    g.add_argument("--burn", type=int, default=1000)
    g.add_argument("--seed", type=int, default=0)


def _detect_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rule", choices=("cooks", "kl", "cpo", "combined"), default="combined")
    p.add_argument("--ksd", type=int, choices=(2, 3), default=2)
    p.add_argument("--kl-rule", choices=("quantile", "substitution"), default="quantile")
    p.add_argument("--n0-tolerance", type=float, default=0.0,
                   help="share of draws allowed to break n0 on deletion before KL/CPO are infinite")


def _quantiles(text: str) -> tuple:
    try:
        qs = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad quantile list {text!r}") from None
    if any(not 0 <= q <= 1 for q in qs):
        raise argparse.ArgumentTypeError("quantiles must lie in [0, 1]")
    return qs


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bartinfluence", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit the model and write a posterior file")
    p.add_argument("--data", required=True)
    p.add_argument("--response", required=True)
    p.add_argument("--posterior", "--out", dest="posterior", required=True, help="posterior file to write")
    _model_args(p)

    p = sub.add_parser("diagnose", help="influence diagnostics per training row")
    p.add_argument("--data", required=True)
    p.add_argument("--response", required=True)
    p.add_argument("--posterior", required=True)
    p.add_argument("--out", required=True, help="diagnostics CSV")
    p.add_argument("--plot", help="optional static plot (svg/pdf/png)")
    p.add_argument("--no-exact", action="store_true", help="skip the supertree Cook's distance")
    _detect_args(p)

    for name, default in (("reweight", "union-int"), ("predict", "none")):
        p = sub.add_parser(name, help="posterior predictions, optionally reweighted")
        p.add_argument("--data", required=True)
        p.add_argument("--response", required=True)
        p.add_argument("--posterior", required=True)
        p.add_argument("--out", required=True, help="prediction CSV")
        p.add_argument("--query", help="CSV of prediction points (default: training inputs)")
        p.add_argument("--method", choices=METHODS, default=default)
        p.add_argument("--delta", type=float, help="half-width of the l1 box")
        p.add_argument("--holdout", default="auto", help="'auto' or a comma list of row indices")
        p.add_argument("--quantiles", type=_quantiles, default=(0.025, 0.975))
        p.add_argument("--regions", help="CSV of reweighting rectangles")
        p.add_argument("--weights", help="CSV of per-draw log weights")
        _detect_args(p)

    p = sub.add_parser("simulate", help="simulation study")
    p.add_argument("--scenario", help="JSON scenario file (a dict or a list of dicts)")
    p.add_argument("--function", choices=("cubic", "branin", "friedman5"), default="friedman5")
    p.add_argument("--n", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--offset", type=float, help="influential offset in sd units")
    p.add_argument("--replicates", type=int, default=20)
    p.add_argument("--n-p", type=int, default=5000)
    p.add_argument("--out", required=True, help="per-replicate results CSV; summary goes to <stem>.summary.csv")
    p.add_argument("--rule", default="cpo", help="comma list of criteria: " + ",".join(CRITERIA))
    p.add_argument("--method", default="default,union-int", help="comma list of: " + ",".join(STUDY_METHODS))
    p.add_argument("--ksd", type=int, choices=(2, 3), default=2)
    p.add_argument("--delta", type=float, default=0.09)
    p.add_argument("--kl-rule", choices=("quantile", "substitution"), default="quantile")
    p.add_argument("--n0-tolerance", type=float, default=0.5)
    _model_args(p)
    return parser


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _config(args) -> ModelConfig:
    return ModelConfig(
        m=args.m, alpha=args.alpha, beta=args.beta, k=args.k, nu=args.nu, n0=args.n0,
        numcut=args.numcut, ndraws=args.ndraws, burn=args.burn, seed=args.seed,
    )


def _load(args):
    data = read_csv(args.data, args.response)
    sample = load_posterior(args.posterior)
    if data.d != sample.d:
        raise DimensionError(f"data has {data.d} predictors, posterior was fitted on {sample.d}")
    if sample.names is not None and data.names is not None and tuple(data.names) != tuple(sample.names):
        raise DimensionError(f"predictor columns {list(data.names)} differ from the fitted {list(sample.names)}")
    n_fit = sample.info.get("n")
    if n_fit is not None and int(n_fit) != data.n:
        raise DimensionError(f"data has {data.n} rows, posterior was fitted on {n_fit}")
    return data, sample


def _read_query(path, names, response):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cols = [c for c in header if c != response]
        if names is not None and cols != list(names):
            raise DimensionError(f"query columns {cols} differ from the predictors {list(names)}")
        idx = [header.index(c) for c in cols]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            try:
                rows.append([float(row[i]) for i in idx])
            except (ValueError, IndexError):
                raise CSVParseError("non-numeric or missing value in query file", lineno) from None
    return np.array(rows, dtype=np.float64).reshape(-1, len(idx))


def _holdouts(args, sample, data) -> list[int]:
    if args.holdout == "auto":
        report = diagnose(sample, data, exact=False, kl_rule=args.kl_rule, n0_tolerance=args.n0_tolerance)
        return sorted(detect(report, args.rule, args.ksd))
    try:
        hs = [int(v) for v in args.holdout.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad --holdout {args.holdout!r}") from None
    bad = [i for i in hs if not 0 <= i < data.n]
    if bad:
        raise DimensionError(f"held-out indices {bad} out of range for n={data.n}")
    return hs


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_fit(args) -> int:
    data = read_csv(args.data, args.response)
    sample = fit(data, _config(args))
    save_posterior(sample, args.posterior)
    summ = chain_summary(sample)
    print(f"fitted {sample.ndraws} draws of {sample.m} trees on n={data.n}, d={data.d}")
    for key in ("birth_acceptance", "death_acceptance", "mean_terminals", "sigma_q025", "sigma_median", "sigma_q975"):
        print(f"  {key}: {summ[key]:.6g}")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    data, sample = _load(args)
    report = diagnose(sample, data, exact=not args.no_exact, kl_rule=args.kl_rule, n0_tolerance=args.n0_tolerance)
    report.to_csv(args.out)
    flagged = sorted(detect(report, args.rule, args.ksd))
    ninf = {k: len(v) for k, v in report.infinite().items()}
    print(f"{len(flagged)} rows flagged by {args.rule} at {args.ksd} sd: {flagged}")
    print("infinite values: " + ", ".join(f"{k}={v}" for k, v in ninf.items()))
    if args.plot:
        from .plotting import plot_diagnostics

        plot_diagnostics(report, args.plot)
    return EXIT_OK


def cmd_reweight(args) -> int:
    data, sample = _load(args)
    X = _read_query(args.query, data.names, args.response) if args.query else data.predictors
    method = args.method
    holdouts = [] if method == "none" else _holdouts(args, sample, data)
    if method == "l1" and not (args.delta and args.delta > 0):
        raise argparse.ArgumentTypeError("--delta > 0 is required with --method l1")
    rw = Reweighter(sample, data)
    if method == "none" or not holdouts:
        if method != "none":
            print("no held-out rows; predictions are unweighted")
        res = rw.predict("none", [0], X, quantiles=args.quantiles)
        res.method = method
    else:
        res = rw.predict(method, holdouts, X, quantiles=args.quantiles, delta=args.delta, on_degenerate="nan")
        print(f"reweighted with {method} for held-out rows {holdouts}")
        if args.weights:
            write_weights(args.weights, rw, method, holdouts, args.delta)
        if args.regions:
            _write_regions(args.regions, sample, data, method, holdouts, args.delta)
    res.to_csv(args.out, data.names)
    if res.n_failed:
        print(f"{res.n_failed} points had degenerate weights; see the error column", file=sys.stderr)
        return EXIT_DEGENERATE
    return EXIT_OK


def _write_regions(path, sample, data, method, holdouts, delta) -> None:
    regions = {}
    for i in holdouts:
        x = data.predictors[i]
        if method in ("int", "union-int"):
            regions[i] = UnionRegion(*supertree_cells(sample, x))
        elif method == "l1":
            regions[i] = UnionRegion((x - delta)[None], (x + delta)[None])
        elif method == "global":
            d = data.d
            regions[i] = UnionRegion(np.full((1, d), -np.inf), np.full((1, d), np.inf))
    if regions:
        write_regions(path, regions, data.names)
    else:
        print(f"method {method} has no rectangular region; --regions ignored", file=sys.stderr)


def _scenarios(args) -> list[Scenario]:
    if args.scenario:
        with open(args.scenario, encoding="utf-8") as fh:
            spec = json.load(fh)
        specs = spec if isinstance(spec, list) else [spec]
        return [Scenario.from_dict(s) for s in specs]
    make = {"cubic": cubic_scenario, "branin": branin_scenario, "friedman5": friedman_scenario}[args.function]
    kw = dict(replicates=args.replicates, n_p=args.n_p, m=args.m, n0=args.n0, ndraws=args.ndraws, burn=args.burn, seed=args.seed)
    if args.n is not None:
        kw["n"] = args.n
    if args.sigma is not None:
        kw["sigma"] = args.sigma
    sc = make(**kw)
    if args.offset is not None:
        sc = Scenario.from_dict({**sc.to_dict(), "influentials": [
            {"location": list(i.location), "offset": args.offset, "units": "sd"} for i in sc.influentials
        ]})
    return [sc]


def cmd_simulate(args) -> int:
    criteria = tuple(c.strip() for c in args.rule.split(",") if c.strip())
    methods = tuple(m.strip() for m in args.method.split(",") if m.strip())
    for c in criteria:
        if c not in CRITERIA:
            raise argparse.ArgumentTypeError(f"unknown criterion {c!r}")
    for m in methods:
        if m not in STUDY_METHODS:
            raise argparse.ArgumentTypeError(f"unknown method {m!r}")
    opts = StudyOptions(methods=methods, criteria=criteria, ksd=args.ksd, delta=args.delta,
                        n0_tolerance=args.n0_tolerance, kl_rule=args.kl_rule)
    jobs = max(1, int(os.environ.get(THREADS_ENV, "1")))
    rows, summary = run_study(_scenarios(args), opts, n_jobs=jobs)
    write_rows(args.out, rows, RESULT_COLUMNS)
    stem = args.out[:-4] if args.out.endswith(".csv") else args.out
    write_rows(f"{stem}.summary.csv", summary, SUMMARY_COLUMNS)
    failed = sum(1 for r in rows if r["error"])
    print(f"{len(rows)} result rows, {len(summary)} summary rows, {failed} failed")
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "diagnose": cmd_diagnose,
    "reweight": cmd_reweight,
    "predict": cmd_reweight,
    "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (CSVParseError, PosteriorFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except DimensionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIMENSION
    except DegenerateWeightsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except FitRefusedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except argparse.ArgumentTypeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
