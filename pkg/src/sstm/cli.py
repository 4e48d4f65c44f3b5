"""Command-line entry point.

Subcommands: ``simulate`` (draw a synthetic cohort), ``fit`` (end-to-end
estimation on a cohort CSV), ``infer`` (re-run interval estimation from a
stored fit), and ``reproduce`` (Monte Carlo study emitting the metrics
table). Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import load_dataset, save_dataset
from .exceptions import (
    AllZeroError,
    CalibrationError,
    ConvergenceError,
    DegenerateDataError,
    DegeneratePairsError,
    DegenerateSupportError,
    GridRangeError,
    InvalidArgumentError,
    IpcwSingularityError,
    SchemaError,
    SstmError,
)
from .inference import SslFit, infer
from .pipeline import fit_ssl
from .simulate import SimulationSpec, generate
from .study import MetricsTable, StudyConfig, run_study

_USAGE_EXIT = 1
_DATA_EXIT = 2
_NUMERIC_EXIT = 3

_DATA_ERRORS = (SchemaError, DegenerateDataError, GridRangeError, FileNotFoundError)
_NUMERIC_ERRORS = (
    ConvergenceError,
    CalibrationError,
    DegeneratePairsError,
    IpcwSingularityError,
    DegenerateSupportError,
    AllZeroError,
    np.linalg.LinAlgError,
    FloatingPointError,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        raise _UsageError(message)


def _scenario(label: str) -> str:
    mapping = {"A": "A_low", "B": "B_high", "A_low": "A_low", "B_high": "B_high"}
    try:
        return mapping[label]
    except KeyError:
        raise _UsageError(f"unknown scenario {label!r}; expected A or B") from None


def _build_parser() -> _Parser:
    parser = _Parser(prog="sstm", description=__doc__)
    parser.add_argument("--version", action="version", version=f"sstm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="draw a synthetic cohort")
    sim.add_argument("--n", type=int, default=500, help="labeled sample size")
    sim.add_argument("--N", type=int, default=1000, help="total cohort size")
    sim.add_argument("--scenario", default="A", help="measurement-error scenario: A or B")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--event-rate", type=float, default=0.5)
    sim.add_argument("--censoring-scale", type=float, default=None,
                     help="skip calibration and use this Uniform(0, a) scale")
    sim.add_argument("--out", required=True, help="output directory")

    fit = sub.add_parser("fit", help="fit the semi-supervised model on a cohort CSV")
    fit.add_argument("--data", required=True, help="cohort CSV path")
    fit.add_argument("--link", default="logistic", choices=["logistic", "probit"])
    fit.add_argument("--B", type=int, default=200, help="perturbation replicates")
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--regime", default="auto",
                     choices=["auto", "comparable", "large_unlabeled"])
    fit.add_argument("--rho-threshold", type=float, default=0.1)
    fit.add_argument("--alpha", type=float, default=0.05)
    fit.add_argument("--lambda-delta", type=float, default=None)
    fit.add_argument("--lambda-soft", type=float, default=None)
    fit.add_argument("--workers", type=int, default=1, help="parallel perturbation draws")
    fit.add_argument("--cache", default=None, help="directory for the draws cache")
    fit.add_argument("--out", required=True, help="output directory")

    inf = sub.add_parser("infer", help="re-run inference from a stored fit")
    inf.add_argument("--fit", required=True, help="ssl_fit.json produced by `fit`")
    inf.add_argument("--alpha", type=float, default=0.05)
    inf.add_argument("--lambda-soft", type=float, default=None)
    inf.add_argument("--method", default=None,
                     choices=["recentered_quantile", "soft_std_quantile"])
    inf.add_argument("--out", required=True, help="output directory")

    rep = sub.add_parser("reproduce", help="Monte Carlo study of the two estimators")
    rep.add_argument("--table", type=int, choices=[1, 2], default=1,
                     help="which summary to print (all metrics are always written)")
    rep.add_argument("--scenario", default="A")
    rep.add_argument("--reps", type=int, default=100)
    rep.add_argument("--B", type=int, default=200)
    rep.add_argument("--seed", type=int, default=0)
    rep.add_argument("--n", type=int, default=500)
    rep.add_argument("--N", type=int, default=1000)
    rep.add_argument("--full", action="store_true", help="use 500 replicates")
    rep.add_argument("--workers", type=int, default=None)
    rep.add_argument("--checkpoint", default=None, help="resumable per-replicate cache dir")
    rep.add_argument("--out", required=True, help="output directory")
    return parser


def _cmd_simulate(args) -> int:
    spec = SimulationSpec(
        n=args.n,
        N=args.N,
        seed=args.seed,
        error_scenario=_scenario(args.scenario),
        target_event_rate=args.event_rate,
        censoring_scale=args.censoring_scale,
    )
    dataset, truth = generate(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(dataset, out / "cohort.csv")
    (out / "truth.json").write_text(
        json.dumps(
            {
                "beta0": truth.beta0.tolist(),
                "a": truth.censoring_scale,
                "seed": args.seed,
                "scenario": truth.scenario,
                "link": truth.link,
            },
            indent=2,
        ),
        encoding="utf-8",
    )
    print(f"wrote {out / 'cohort.csv'} (N={dataset.N}, n={dataset.n}) and truth.json")
    return 0


def _cmd_fit(args) -> int:
    dataset = load_dataset(args.data)
    result = fit_ssl(
        dataset,
        link=args.link,
        B=args.B,
        seed=args.seed,
        regime=args.regime,
        rho_threshold=args.rho_threshold,
        alpha=args.alpha,
        lambda_delta=args.lambda_delta,
        lambda_soft=args.lambda_soft,
        n_jobs=args.workers,
        cache_dir=args.cache,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result.supervised.to_json(out / "supervised_fit.json")
    result.ssl.to_json(out / "ssl_fit.json")
    result.weights.to_json(out / "weights.json")
    result.bundle.to_json(out / "scores.json")
    result.report.to_json(out / "inference.json")
    result.report.to_csv(out / "inference.csv")
    print(f"regime: {result.regime}; support: {[j + 1 for j in result.support]}")
    print("coord  est        se         ci                    pval")
    for c in result.report.coordinates:
        print(
            f"{c.index + 1:>5}  {c.estimate: .4f}   {c.se:.4f}   "
            f"({c.ci_lower: .4f}, {c.ci_upper: .4f})   {c.p_value:.4f}"
        )
    return 0


def _cmd_infer(args) -> int:
    ssl = SslFit.from_json(args.fit)
    report = infer(
        ssl,
        alpha=args.alpha,
        lambda_soft=args.lambda_soft,
        method=args.method,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.to_json(out / "inference.json")
    report.to_csv(out / "inference.csv")
    print(f"method: {report.method}; level: {report.level}")
    return 0


def _print_table(table: MetricsTable, which: int) -> None:
    if which == 1:
        print("coord  bias_delta(x100)  bias_ssl(x100)  RE")
        for i in range(table.coord.size):
            print(
                f"{int(table.coord[i]):>5}  {100 * table.bias_delta[i]:>16.2f}  "
                f"{100 * table.bias_ssl[i]:>14.2f}  {table.re[i]:>6.2f}"
            )
    else:
        print("coord  ESE      ASE      CovP")
        for i in range(table.coord.size):
            print(
                f"{int(table.coord[i]):>5}  {table.ese[i]:.4f}   "
                f"{table.ase[i]:.4f}   {table.covp[i]:.4f}"
            )


def _cmd_reproduce(args) -> int:
    config = StudyConfig(
        scenario=_scenario(args.scenario),
        n=args.n,
        N=args.N,
        reps=500 if args.full else args.reps,
        B=args.B,
        seed=args.seed,
        output_dir=args.out,
        checkpoint_dir=args.checkpoint,
        workers=args.workers,
    )
    table = run_study(config)
    _print_table(table, args.table)
    print(
        f"completed {table.reps_completed} replicates ({table.failures} failed); "
        f"wrote metrics to {args.out}"
    )
    return 0


_HANDLERS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "infer": _cmd_infer,
    "reproduce": _cmd_reproduce,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return _USAGE_EXIT
    try:
        return _HANDLERS[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return _USAGE_EXIT
    except InvalidArgumentError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return _USAGE_EXIT
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return _DATA_EXIT
    except _NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return _NUMERIC_EXIT
    except SstmError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return _NUMERIC_EXIT


if __name__ == "__main__":
    sys.exit(main())
