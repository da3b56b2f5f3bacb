"""Command line entry point: ``mqlab <subcommand> --spec PATH [options]``.

Exit codes: 0 ok, 1 validation error, 2 verification failure, 3 cap exceeded.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

from .errors import MqlabError, VerificationError
from .experiments import RUNNERS, RunOptions, parse_grid, run_experiment, run_metadata, write_result
from .specfile import parse_market_spec, read_spec_document, spec_digest, enforce_theorem_mode
from .market import TheoremMode


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mqlab", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=sorted(RUNNERS))
    p.add_argument("--spec", required=True, help="spec file path, or a bundled spec name")
    p.add_argument("--seed", type=int, help="override the spec seed")
    p.add_argument("--reps", type=int, help="Monte Carlo replications")
    p.add_argument("--grid", help="quality grid a:b:step (inclusive)")
    p.add_argument("--out", default="results", help="output directory (default: results)")
    p.add_argument("--strict", action="store_true", help="expression division by zero is an error")
    p.add_argument("--theorem-mode", action="store_true",
                   help="check hypotheses before running and fail (exit 2) on violated conclusions")
    p.add_argument("--depth", type=int, help="horizon override (rounds)")
    p.add_argument("--customers", type=int, help="override the number of customers")
    p.add_argument("--q", type=float, help="coupling: base quality of product 1")
    p.add_argument("--q-prime", type=float, help="coupling: raised quality of product 1")
    p.add_argument("--strategy", help="catalog name, name:key=val,... or expr:TEXT")
    p.add_argument("--max-n", type=int, default=8, help="counterexample: largest n scanned")
    p.add_argument("--terminal", action="store_true", help="simulate: also write per-replication shares")
    p.add_argument("--no-plots", action="store_true", help="skip PNG figures")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    opts = RunOptions(
        seed=args.seed, reps=args.reps, grid=None, strict=args.strict, theorem_mode=args.theorem_mode,
        depth=args.depth, q=args.q, q_prime=args.q_prime, strategy=args.strategy, max_n=args.max_n,
        terminal=args.terminal, plots=not args.no_plots,
    )
    try:
        if args.grid:
            opts.grid = parse_grid(args.grid)
        if args.reps is not None and args.reps < 1:
            raise MqlabError("--reps must be at least 1")
        doc, raw, path = read_spec_document(args.spec)
        overrides = {"customers": args.customers} if args.customers is not None else None
        spec = parse_market_spec(doc, path.parent, args.strict, overrides)
        mode = spec.theorem_mode
        if args.theorem_mode and not mode.enabled:
            mode = TheoremMode(monotone=True, herding="weak", anonymous=spec.m >= 2)
        if mode.enabled and args.subcommand not in ("check", "counterexample"):
            enforce_theorem_mode(spec, mode)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            result = run_experiment(args.subcommand, spec, opts, doc)
        if caught:
            result.summary["warnings"] = sorted({str(w.message) for w in caught})
        meta = run_metadata(spec, spec_digest(raw), opts, args.subcommand)
        written = write_result(result, Path(args.out), meta)
        for p in written:
            print(p)
        if result.failed:
            raise VerificationError(f"{args.subcommand}: verification failed; see {args.subcommand}.json")
    except MqlabError as exc:
        print(f"mqlab: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
