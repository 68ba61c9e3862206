"""Command-line entry point: ``sigcum {sig,esig,cumulants,verify,mc}``.

Exit status is 0 on success, 1 when a check fails and 2 on bad input.
Every report echoes the effective settings, defaults included. The
Monte Carlo thread count comes from ``SIGCUM_THREADS`` unless
``--workers`` is given.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from .algebra import FLOAT, RATIONAL, UsageError, series_to_json
from .models import model_cumulants, model_expected_signature, model_from_json
from .montecarlo import compare, estimate_expected_signature, make_sampler
from .signatures import log_signature, path_from_csv, signature
from .verify import SUITES, run_suite

DEFAULT_LEVEL = 4
DEFAULT_THRESHOLD = 5.0
# below this many samples a Monte Carlo run makes no pass/fail claim
LOW_POWER_SAMPLES = 1000


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _positive(kind):
    def parse(text: str):
        try:
            v = kind(text)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
        return v
    return parse


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sigcum", description="Signatures, expected signatures and signature cumulants.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("sig", help="signature of a piecewise-linear CSV path (header t,x1,...,xd)")
    s.add_argument("csv", help="CSV file, or - for stdin")
    s.add_argument("-N", "--level", type=_positive(int), default=DEFAULT_LEVEL, help="truncation level (default 4)")
    s.add_argument("--start", type=int, default=0, help="first row index of the range (default 0)")
    s.add_argument("--end", type=int, default=None, help="last row index of the range (default: last row)")
    s.add_argument("--log", action="store_true", help="output the log-signature")
    s.add_argument("--scalar", choices=(RATIONAL, FLOAT), default=FLOAT,
                   help="coefficient arithmetic (default float64)")
    s.add_argument("-o", "--output", help="output file (default stdout)")

    for name in ("esig", "cumulants"):
        e = sub.add_parser(name, help="expected signature of a model" if name == "esig"
                           else "signature cumulants of a model (esig --cumulants)")
        e.add_argument("model", help="ModelSpec JSON file, or - for stdin")
        e.add_argument("--t", type=float, default=None, help="start time (default: model's own)")
        e.add_argument("--T", type=float, default=None, help="horizon (default: model's own)")
        e.add_argument("--step", type=_positive(float), default=None, help="quadrature step h (default (T-t)/1024)")
        if name == "esig":
            e.add_argument("--cumulants", action="store_true", help="output the log of the expected signature")
        e.add_argument("-o", "--output")

    v = sub.add_parser("verify", help="run an invariant suite: " + ", ".join(SUITES))
    v.add_argument("suite")
    v.add_argument("-N", "--level", type=_positive(int), default=DEFAULT_LEVEL, help="truncation level (default 4)")
    v.add_argument("-d", "--dim", type=_positive(int), default=2, help="dimension for random inputs (default 2)")
    v.add_argument("--count", type=int, default=5, help="random cases per check (default 5)")
    v.add_argument("--seed", type=int, default=0, help="seed for random inputs (default 0)")
    v.add_argument("--tree", action="append", default=None,
                   help="tree JSON file for the tree suite (repeatable; default: shipped fixtures)")
    v.add_argument("-o", "--output")

    m = sub.add_parser("mc", help="Monte Carlo expected signature against the model's closed form")
    m.add_argument("model")
    m.add_argument("-n", "--samples", type=_positive(int), default=10_000, help="sample count (default 10000)")
    m.add_argument("--steps", type=_positive(int), default=100, help="time steps per path (default 100)")
    m.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    m.add_argument("--threshold", type=_positive(float), default=DEFAULT_THRESHOLD,
                   help="pass iff max |z| is below this (default 5)")
    m.add_argument("--workers", type=_positive(int), default=None, help="threads (default $SIGCUM_THREADS or 1)")
    m.add_argument("--time", action="store_true", help="include wall time (breaks byte reproducibility)")
    m.add_argument("-o", "--output")
    return p


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc


def _read_json(path: str):
    try:
        return json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc


def _emit(obj: dict, output: str | None) -> None:
    text = json.dumps(obj, indent=2) + "\n"
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_sig(args) -> int:
    path = path_from_csv(_read(args.csv), args.level, args.scalar)
    end = path.steps if args.end is None else args.end
    if not 0 <= args.start <= end <= path.steps:
        raise UsageError(f"row range [{args.start}, {end}] outside 0..{path.steps}")
    x = (log_signature if args.log else signature)(path, args.start, end)
    out = series_to_json(x)
    out["settings"] = {"level": args.level, "start": args.start, "end": end, "log": args.log,
                       "scalar": args.scalar}
    _emit(out, args.output)
    return 0


def cmd_esig(args, cumulants: bool) -> int:
    model = model_from_json(_read_json(args.model))
    fn = model_cumulants if cumulants else model_expected_signature
    out = series_to_json(fn(model, args.t, args.T, args.step))
    out["settings"] = {"kind": model.kind, "t": args.t, "T": args.T, "step": args.step,
                       "cumulants": cumulants}
    _emit(out, args.output)
    return 0


def cmd_verify(args) -> int:
    rep = run_suite(args.suite, args.level, args.dim, args.count, args.seed, args.tree)
    _emit(rep.to_json(), args.output)
    return 0 if rep.passed else 1


def cmd_mc(args) -> int:
    model = model_from_json(_read_json(args.model))
    sampler = make_sampler(model, args.steps)
    reference = model_expected_signature(model)
    est = estimate_expected_signature(sampler, args.samples, args.seed, args.workers)
    rep = compare(est, reference, args.seed, args.steps)
    low_power = args.samples < LOW_POWER_SAMPLES
    rep.settings = {"kind": model.kind, "samples": args.samples, "steps": args.steps, "seed": args.seed,
                    "threshold": args.threshold, "level": model.level}
    out = rep.to_json(include_time=args.time)
    out["low_power"] = low_power
    out["passed"] = None if low_power else rep.passed(args.threshold)
    _emit(out, args.output)
    return 0 if low_power or out["passed"] else 1


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "sig":
            return cmd_sig(args)
        if args.command in ("esig", "cumulants"):
            return cmd_esig(args, args.command == "cumulants" or args.cumulants)
        if args.command == "verify":
            return cmd_verify(args)
        return cmd_mc(args)
    except UsageError as exc:
        print(f"sigcum: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
