"""``battles`` command line entry point."""

from __future__ import annotations

import argparse
import sys

from ..analytic import ArrivalSpec
from ..dist import FracPowerLaw
from ..errors import DivergenceError, DomainError, NumericalFailure, UsageError
from ..series import DEFAULT_ORDER
from ..stability import classify
from .core import (EXIT_IO, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, load_scenarios,
                   parse_sojourn, replot, run_battle, run_figure1)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _p_list(text: str):
    try:
        return [float(eval_fraction(t)) for t in text.replace(",", " ").split()]
    except ValueError:
        raise UsageError(f"bad --p list {text!r}") from None


def eval_fraction(token: str) -> float:
    """Parse ``0.5`` or ``1/2``."""
    num, sep, den = token.partition("/")
    return float(num) / float(den) if sep else float(num)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="battles", description="Infinite-server queues under heavy-tailed batch arrivals.")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    r = sub.add_parser("run", help="run built-in or configured battle scenarios")
    r.add_argument("name", nargs="?", help="scenario name")
    r.add_argument("--all", action="store_true", help="run every scenario")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--replications", type=int, default=None)
    r.add_argument("--order", type=int, default=DEFAULT_ORDER)
    r.add_argument("--out", default="battles-out")
    r.add_argument("--config", default=None, help="extra scenario file (INI)")

    f = sub.add_parser("figure1", help="log-log plot of the power-law pmfs")
    f.add_argument("--p", default="0.5,1,2", help="comma-separated orders, e.g. 1/2,1,2")
    f.add_argument("--out", default="battles-out")

    v = sub.add_parser("verdict", help="stability verdict for one spec")
    v.add_argument("--batch-p", required=True, type=eval_fraction)
    v.add_argument("--sojourn", required=True, help="exp:MU, pl:Q or det:D")
    v.add_argument("--lambda", dest="lam", required=True, type=float)

    p = sub.add_parser("replot", help="regenerate SVGs from the CSVs in a run directory")
    p.add_argument("out")

    sub.add_parser("list", help="list scenario names")
    return ap


def _cmd_run(args) -> int:
    scenarios = load_scenarios(args.config)
    if args.all == bool(args.name):
        raise UsageError("give exactly one of a scenario name or --all")
    if args.name and args.name not in scenarios:
        raise UsageError(f"unknown scenario {args.name!r}; try: {', '.join(scenarios)}")
    if args.order < 1:
        raise UsageError("--order must be positive")
    if args.replications is not None and args.replications < 1:
        raise UsageError("--replications must be positive")
    names = list(scenarios) if args.all else [args.name]
    status = EXIT_OK
    for name in names:
        res = run_battle(scenarios[name], args.out, seed=args.seed,
                         replications=args.replications, order=args.order)
        print(res.message)
        for f in res.files:
            print(f"  wrote {f}")
        if res.status != EXIT_OK:
            status = res.status
    return status


def _cmd_verdict(args) -> int:
    spec = ArrivalSpec(args.lam, FracPowerLaw(args.batch_p), parse_sojourn(args.sojourn))
    v = classify(spec)
    print(f"verdict: {v.verdict.value}")
    print(f"criterion: {v.criterion}")
    print(f"bound_value: {v.bound_value!r}")
    print(f"growth_rate: {v.growth_rate!r}")
    if v.note:
        print(f"note: {v.note}")
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "figure1":
            for f in run_figure1(_p_list(args.p), args.out):
                print(f"wrote {f}")
            return EXIT_OK
        if args.command == "verdict":
            return _cmd_verdict(args)
        if args.command == "replot":
            for f in replot(args.out):
                print(f"wrote {f}")
            return EXIT_OK
        if args.command == "list":
            for name, sc in load_scenarios().items():
                print(f"{name}\t{sc.title}")
            return EXIT_OK
        build_parser().print_help()
        return EXIT_USAGE
    except (UsageError, DomainError) as exc:
        print(f"battles: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalFailure, DivergenceError) as exc:
        print(f"battles: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"battles: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
