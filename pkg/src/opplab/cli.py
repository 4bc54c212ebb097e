"""Command-line driver for reproducible experiments.

Every subcommand reads a form (or a finite configuration), runs one
library routine, and emits CSV or JSON.  Outputs are byte-identical
across runs for a fixed seed: all randomness flows through seeded
generators and all reductions are ordered.  Input forms are always
rescaled to determinant +1 (see forms.normalize) before any computation,
so commands agree with the library conventions regardless of the scale
the form was typed at.

Exit codes: 0 success, 1 usage or input errors, 2 scientific anomaly
(currently only the dichotomy command: the rational branch was rejected
and yet witness coverage fell below the configured floor).

The OPPLAB_THREADS environment variable caps worker threads; it changes
wall time only, never output bytes.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .approx import algebraicity_gap, dichotomy_report
from .enumeration import (
    COUNT_CSV_HEADER,
    WITNESS_CSV_HEADER,
    count_vs_main_term,
    main_term_constant,
    witness_table,
)
from .errors import OppLabError
from .flows import EQUIDIST_CSV_HEADER, discrepancy_scan, form_to_basepoint
from .forms import normalize, parse_form
from .projection import (
    SURVEY_CSV_HEADER,
    FiniteConfig,
    ProjectionParams,
    improvement_step_sim,
    projection_survey,
)

RATIONAL_CSV_HEADER = ("R", "dist", "lam", "certified", "m11", "m22", "m33", "m12", "m13", "m23")
MARGULIS_CSV_HEADER = ("rho", "ratio_median")
CQ_CSV_HEADER = ("c_q", "stderr", "delta", "samples", "seed")
DICHOTOMY_CSV_HEADER = ("branch", "dist", "lam", "certified", "witnessed_fraction")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse maps usage errors to exit 2; this package reserves 2 for anomalies."""

    def error(self, message):
        raise _UsageError(message)


@dataclass
class ExperimentConfig:
    """A subcommand plus its parameters, as parsed; round-trips through JSON.

    ``params`` holds the raw argument values (strings stay strings), so the
    canonical JSON is a faithful record of what was requested and the same
    config replays to byte-identical output.
    """

    command: str
    params: dict

    def to_json_obj(self) -> dict:
        return {"command": self.command, "params": self.params}

    def canonical_json(self) -> str:
        return json.dumps(self.to_json_obj(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json_obj(cls, obj) -> "ExperimentConfig":
        return cls(command=str(obj["command"]), params=dict(obj["params"]))

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_json_obj(json.loads(text))


_NON_PARAM_KEYS = ("func", "out", "format", "save_config", "command")


def _config_from_args(command: str, args: argparse.Namespace) -> ExperimentConfig:
    params = {k: v for k, v in vars(args).items() if k not in _NON_PARAM_KEYS}
    return ExperimentConfig(command=command, params=params)


def _float_list(text: str) -> list[float]:
    values = [float(tok) for tok in text.split(",") if tok.strip()]
    if not values:
        raise ValueError(f"expected a comma-separated list of numbers, got {text!r}")
    return values


def _csv_text(header: Sequence, rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _write(args: argparse.Namespace, text: str) -> None:
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_theta(args: argparse.Namespace) -> FiniteConfig:
    if args.theta is not None:
        text = args.theta
        if not text.lstrip().startswith(("[", "{")):
            with open(text) as fh:
                text = fh.read()
        return FiniteConfig.from_json_obj(json.loads(text))
    if args.random_theta is not None:
        return FiniteConfig.random_ball(args.random_theta, radius=args.ball_radius, seed=args.seed)
    raise ValueError("provide a configuration via --theta or --random-theta")


def cmd_dichotomy(args) -> int:
    q = normalize(parse_form(args.form))
    outcome = dichotomy_report(
        q,
        args.R,
        args.T,
        eps=args.eps,
        grid_step=args.grid,
        a_exp=args.a_exp,
        k_exp=args.k_exp,
    )
    if args.format == "json":
        _write(args, _json_text(outcome.to_json_obj()))
    elif outcome.table is not None:
        _write(args, _csv_text(WITNESS_CSV_HEADER, outcome.table.csv_rows()))
    else:
        row = (
            outcome.branch,
            outcome.approx.dist,
            outcome.approx.lam,
            outcome.approx.certified,
            "",
        )
        _write(args, _csv_text(DICHOTOMY_CSV_HEADER, [row]))
    if outcome.branch == "small_values" and outcome.witness.fraction < args.coverage_floor:
        return 2
    return 0


def cmd_witness(args) -> int:
    q = normalize(parse_form(args.form))
    table = witness_table(q, args.s_min, args.s_max, args.grid, args.eps, args.T)
    if args.format == "json":
        _write(args, _json_text(table.to_json_obj()))
    else:
        _write(args, _csv_text(WITNESS_CSV_HEADER, table.csv_rows()))
    return 0


def cmd_count(args) -> int:
    q = normalize(parse_form(args.form))
    reports = count_vs_main_term(
        q,
        args.a,
        args.b,
        _float_list(args.T),
        delta=args.delta,
        samples=args.samples,
        seed=args.seed,
    )
    if args.format == "json":
        _write(args, _json_text([r.to_json_obj() for r in reports]))
    else:
        _write(args, _csv_text(COUNT_CSV_HEADER, [r.csv_row() for r in reports]))
    return 0


def cmd_cq(args) -> int:
    q = normalize(parse_form(args.form))
    estimate, stderr = main_term_constant(q, delta=args.delta, samples=args.samples, seed=args.seed)
    obj = {
        "c_q": estimate,
        "stderr": stderr,
        "delta": args.delta,
        "samples": args.samples,
        "seed": args.seed,
    }
    if args.format == "json":
        _write(args, _json_text(obj))
    else:
        _write(args, _csv_text(CQ_CSV_HEADER, [tuple(obj[k] for k in CQ_CSV_HEADER)]))
    return 0


def cmd_rational(args) -> int:
    q = normalize(parse_form(args.form))
    result = algebraicity_gap(q, _float_list(args.R), exhaustive_limit=args.exhaustive_limit)
    if args.format == "json":
        _write(args, _json_text(result.to_json_obj()))
    else:
        rows = [
            (row.R, row.dist, row.lam, row.certified, *row.qprime.entries)
            for row in result.rows
        ]
        _write(args, _csv_text(RATIONAL_CSV_HEADER, rows))
    return 0


def cmd_equidist(args) -> int:
    q = normalize(parse_form(args.form))
    form_to_basepoint(q)  # fail fast with a clear signature diagnostic
    reports = discrepancy_scan(q, _float_list(args.T), args.N, args.f_radius, seed=args.seed)
    if args.format == "json":
        _write(args, _json_text([r.to_json_obj() for r in reports]))
    else:
        _write(args, _csv_text(EQUIDIST_CSV_HEADER, [r.csv_row() for r in reports]))
    return 0


def cmd_projection(args) -> int:
    config = _load_theta(args)
    params = ProjectionParams.measured(
        config,
        alpha=args.alpha,
        b1=args.b1 if args.b1 is not None else args.b,
        b=args.b,
        eps=args.pvare,
    )
    if args.r_grid is not None:
        grid = _float_list(args.r_grid)
    else:
        grid = np.linspace(0.0, 1.0, args.r_count).tolist()
    result = projection_survey(config, params, grid, survey_const=args.C, survey_exp=args.c)
    if args.format == "json":
        obj = result.to_json_obj()
        obj["params"] = {
            "alpha": params.alpha,
            "b1": params.b1,
            "b": params.b,
            "eps": params.eps,
            "egbd": params.egbd,
        }
        _write(args, _json_text(obj))
    else:
        _write(args, _csv_text(SURVEY_CSV_HEADER, [row.csv_row() for row in result.rows]))
    return 0


def cmd_margulis(args) -> int:
    config = _load_theta(args)
    stats = improvement_step_sim(
        config,
        alpha=args.alpha,
        ell=args.ell,
        b=args.b,
        r_samples=args.r_samples,
        truncation=args.M,
        seed=args.seed,
    )
    if args.format == "json":
        _write(args, _json_text(stats.to_json_obj()))
    else:
        rows = list(zip(stats.rho_values, stats.rho_medians))
        _write(args, _csv_text(MARGULIS_CSV_HEADER, rows))
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="opplab", description=__doc__, allow_abbrev=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, default_format):
        p.add_argument("--out", default=None, help="write output to this path instead of stdout")
        p.add_argument("--format", choices=("csv", "json"), default=default_format)
        p.add_argument("--save-config", default=None, help="also write the parsed config as canonical JSON")

    def form_arg(p):
        p.add_argument("--form", required=True, help="inline JSON (Gram entries or diagonal list) or a file path")

    p = sub.add_parser("dichotomy", help="decide rational-approximation vs small-values branch")
    form_arg(p)
    p.add_argument("--R", type=float, required=True, help="entry bound for the integral approximation")
    p.add_argument("--T", type=float, required=True, help="vector norm budget for the witness search")
    p.add_argument("--eps", type=float, default=None, help="witness tolerance (default R^-k_exp)")
    p.add_argument("--grid", type=float, default=0.1, help="target grid step")
    p.add_argument("--a-exp", type=float, default=4.0)
    p.add_argument("--k-exp", type=float, default=0.125)
    p.add_argument("--coverage-floor", type=float, default=0.9, help="witnessed fraction below this exits 2")
    common(p, "json")
    p.set_defaults(func=cmd_dichotomy)

    p = sub.add_parser("witness", help="table of near-representations over a grid of targets")
    form_arg(p)
    p.add_argument("--s-min", type=float, default=-5.0)
    p.add_argument("--s-max", type=float, default=5.0)
    p.add_argument("--grid", type=float, default=0.1, help="target grid step")
    p.add_argument("--eps", type=float, default=0.02, help="tolerance |Q(v) - s| <= eps")
    p.add_argument("--T", type=float, required=True, help="vector norm bound")
    common(p, "csv")
    p.set_defaults(func=cmd_witness)

    p = sub.add_parser("count", help="integer-vector value counts against the volume main term")
    form_arg(p)
    p.add_argument("--a", type=float, required=True, help="window lower endpoint")
    p.add_argument("--b", type=float, required=True, help="window upper endpoint")
    p.add_argument("--T", type=str, required=True, help="comma-separated norm bounds")
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    common(p, "csv")
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("cq", help="Monte Carlo estimate of the counting constant")
    form_arg(p)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    common(p, "json")
    p.set_defaults(func=cmd_cq)

    p = sub.add_parser("rational", help="best integral approximations over a ladder of entry bounds")
    form_arg(p)
    p.add_argument("--R", type=str, required=True, help="comma-separated ascending entry bounds")
    p.add_argument("--exhaustive-limit", type=int, default=12)
    common(p, "csv")
    p.set_defaults(func=cmd_rational)

    p = sub.add_parser("equidist", help="orbit averages of a bump against the Haar prediction")
    form_arg(p)
    p.add_argument("--T", type=str, required=True, help="comma-separated flow times")
    p.add_argument("--N", type=int, default=400, help="number of unipotent samples")
    p.add_argument("--f-radius", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    common(p, "csv")
    p.set_defaults(func=cmd_equidist)

    def theta_args(p):
        p.add_argument("--theta", default=None, help="configuration as inline JSON or a file path")
        p.add_argument("--random-theta", type=int, default=None, help="sample this many points in a ball instead")
        p.add_argument("--ball-radius", type=float, default=1.0)
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("projection", help="concentration survey of the restricted projections")
    theta_args(p)
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--b", type=float, default=0.02, help="concentration scale")
    p.add_argument("--b1", type=float, default=None, help="finest non-concentration scale (default: b)")
    p.add_argument("--pvare", type=float, default=None, help="epsilon in the thresholds (default: alpha/20000)")
    p.add_argument("--C", type=float, default=10.0, help="constant factor in the count bound")
    p.add_argument("--c", type=float, default=10.0, help="epsilon multiplier in the count bound exponent")
    p.add_argument("--r-count", type=int, default=500, help="uniform grid size on [0, 1]")
    p.add_argument("--r-grid", type=str, default=None, help="explicit comma-separated r values instead")
    common(p, "csv")
    p.set_defaults(func=cmd_projection)

    p = sub.add_parser("margulis", help="transported truncated-energy ratios on a finite configuration")
    theta_args(p)
    p.add_argument("--alpha", type=float, default=1.5)
    p.add_argument("--ell", type=float, default=1.0, help="diagonal flow time")
    p.add_argument("--b", type=float, default=0.02, help="near-return scale")
    p.add_argument("--M", type=int, default=2, help="truncation: how many smallest returns to drop")
    p.add_argument("--r-samples", type=int, default=8, help="stratified unipotent times")
    common(p, "json")
    p.set_defaults(func=cmd_margulis)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.save_config:
            with open(args.save_config, "w", newline="") as fh:
                fh.write(_config_from_args(args.command, args).canonical_json())
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OppLabError, ValueError, KeyError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
