"""Command-line entry point: ``privci <subcommand> [options]``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .crt import crt_test, priv_crt_test
from .dataset import infer_bound, load_csv, rescale
from .errors import PrivCIError
from .gcm import FitConfig, gcm_test, priv_gcm_test
from .harness import (
    SCHEMA_VERSION,
    ExperimentConfig,
    audit_to_dicts,
    dumps_results,
    run_experiment,
    sensitivity_audit,
)
from .krr import DEFAULT_LAMBDA_FLOOR
from .rng import derive_rng
from .synth import GroundTruth, SynthConditionalModel, SynthParams, generate, make_conditional_model

SINGLE_TESTS = {"gcm": "gcm", "priv-gcm": "priv_gcm", "crt": "crt", "priv-crt": "priv_crt"}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lambda-floor", type=float, default=DEFAULT_LAMBDA_FLOOR)
    p.add_argument("--bound-c", type=float, default=4.0, help="C in the sqrt(C ln n) bound")
    p.add_argument("--clip", action=argparse.BooleanOptionalAction, default=True,
                   help="clamp rescaled values to [-1, 1] instead of failing")
    p.add_argument("--output", type=Path, default=None, help="write here instead of stdout")
    p.add_argument("--format", choices=("json", "csv"), default="json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="privci", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, test in SINGLE_TESTS.items():
        p = sub.add_parser(name, help=f"run {test} on one dataset (CSV or synthetic)")
        p.add_argument("--input", type=Path, default=None, help="CSV with header x,y,z1,...,zd")
        p.add_argument("--n", type=int, default=1000)
        p.add_argument("--d", type=int, default=1)
        p.add_argument("--s", type=float, default=2.0)
        p.add_argument("--beta", type=float, default=0.0)
        p.add_argument("--bound-x", type=float, default=None, help="override the x bound")
        p.add_argument("--bound-y", type=float, default=None, help="override the y bound")
        p.add_argument("--alpha", type=float, default=0.05)
        if test in ("priv_gcm", "priv_crt"):
            p.add_argument("--epsilon", type=float, required=True)
        if test in ("crt", "priv_crt"):
            p.add_argument("--m", type=int, default=19)
        else:
            p.add_argument("--split", action="store_true")
        _common(p)

    p = sub.add_parser("experiment", help="Monte Carlo rejection rates over a parameter grid")
    p.add_argument("--test", choices=("gcm", "priv_gcm", "crt", "priv_crt"), required=True)
    p.add_argument("--n", type=int, nargs="+", default=[1000])
    p.add_argument("--d", type=int, nargs="+", default=[1])
    p.add_argument("--s", type=float, nargs="+", default=[2.0])
    p.add_argument("--beta", type=float, nargs="+", default=[0.0])
    p.add_argument("--epsilon", type=float, nargs="+", default=None)
    p.add_argument("--m", type=int, nargs="+", default=None)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--split", action="store_true")
    p.add_argument("--fixed-hyperparams", action="store_true",
                   help="cross-validate once per cell on a pilot dataset")
    p.add_argument("--exclude-failures", action="store_true")
    p.add_argument("--keep-p-values", action="store_true",
                   help="include per-trial p-values and statistics (JSON only)")
    _common(p)

    p = sub.add_parser("sensitivity-audit", help="check sensitivity bounds on random neighbours")
    p.add_argument("--n", type=int, nargs="+", default=[10, 50])
    p.add_argument("--lambdas", type=float, nargs="+", default=[2.0, 10.0])
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", type=Path, default=None)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    return parser


def _rows_to_text(rows: list[dict], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(rows, indent=2) + "\n"
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: "" if v is None else v for k, v in row.items()})
    return buf.getvalue()


def _emit(text: str, output: Path | None) -> None:
    if output is None:
        sys.stdout.write(text)
    else:
        output.write_text(text, encoding="utf-8")


def _single(args, test: str) -> dict:
    rng = derive_rng(args.seed, "single", test)
    if args.input is not None:
        raw = load_csv(args.input, args.d)
        a = args.bound_x or infer_bound(raw.n, args.bound_c)
        b = args.bound_y or infer_bound(raw.n, args.bound_c)
        ds = rescale(raw, a, b, clip=args.clip)
        # CSV input: X | Z is taken to follow the sine model with the given --s
        gt = GroundTruth.for_params(args.s, args.beta, a, b, args.bound_c)
        cond = SynthConditionalModel(args.s, a, infer_bound(raw.n, args.bound_c) / a)
    else:
        params = SynthParams(args.n, args.d, args.s, args.beta, bound_c=args.bound_c, clip=args.clip)
        ds, gt = generate(params, rng)
        cond = make_conditional_model(gt, args.n)
    fit = FitConfig(lambda_floor=args.lambda_floor)
    row = {
        "schema_version": SCHEMA_VERSION,
        "test": test,
        "source": str(args.input) if args.input is not None else "synthetic",
        "n": ds.n,
        "d": ds.d,
        "seed": args.seed,
        "bound_x": ds.bound_x,
        "bound_y": ds.bound_y,
        "clipped": ds.clipped,
    }
    if test in ("gcm", "priv_gcm"):
        if test == "gcm":
            res = gcm_test(ds, fit, rng, split=args.split)
        else:
            res = priv_gcm_test(ds, args.epsilon, fit, rng, split=args.split)
        row.update(
            epsilon=getattr(args, "epsilon", None),
            statistic=res.statistic,
            p_value=res.p_value,
            noise_scale=res.noise_scale,
            lambda_floor=res.lambda_used,
            lambda_x=res.lambda_x,
            lambda_y=res.lambda_y,
        )
    else:
        if test == "crt":
            res = crt_test(ds, cond, args.m, rng, fit)
        else:
            res = priv_crt_test(ds, cond, args.m, args.epsilon, rng, fit)
        row.update(
            epsilon=getattr(args, "epsilon", None),
            m=res.m,
            rank=res.rank,
            p_value=res.p_value,
            statistic=res.statistic,
            delta_t=res.delta_t,
            lambda_y=res.lambda_y,
        )
    row["reject"] = bool(row["p_value"] <= args.alpha)
    return row


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in SINGLE_TESTS:
            row = _single(args, SINGLE_TESTS[args.command])
            _emit(_rows_to_text([row], args.format), args.output)
        elif args.command == "experiment":
            cfg = ExperimentConfig(
                test=args.test,
                n=args.n,
                d=args.d,
                s=args.s,
                beta=args.beta,
                epsilon=args.epsilon,
                m=args.m,
                trials=args.trials,
                alpha=args.alpha,
                seed=args.seed,
                lambda_floor=args.lambda_floor,
                split_mode=args.split,
                bound_c=args.bound_c,
                clip=args.clip,
                fixed_hyperparams=args.fixed_hyperparams,
                exclude_failures=args.exclude_failures,
                retain_p_values=args.keep_p_values,
                output=None,
                format=args.format,
            )
            results = run_experiment(cfg)
            _emit(dumps_results(results, args.format), args.output)
        else:
            rows = sensitivity_audit(
                args.lambdas, args.n, args.trials, np.random.default_rng(args.seed), d=args.d
            )
            _emit(_rows_to_text(audit_to_dicts(rows), args.format), args.output)
            if any(r.violations for r in rows):
                return 1
    except (PrivCIError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
