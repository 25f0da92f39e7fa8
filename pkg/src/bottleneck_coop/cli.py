"""Command-line entry point: run, sweep, aggregate, oracle, replay."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import engine, oracle, sweep
from .core import DEFAULT_COMM_RANGE, DEFAULT_TURNS, ParameterError, ScenarioParams, Variant, validate_params

VARIANT_CHOICES = [v.value for v in Variant]


def _add_scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kappa", type=float, default=0.0, help="CAV penetration in [0, 1]")
    p.add_argument("--pf", type=float, default=0.1, help="free-lane human yield probability")
    p.add_argument("--pb", type=float, default=0.5, help="blocked-lane human stop probability")
    p.add_argument("--dmaxmax", type=int, default=8)
    p.add_argument("--variant", choices=VARIANT_CHOICES, default="counting")
    p.add_argument("--range", type=int, default=DEFAULT_COMM_RANGE, dest="comm_range",
                   help="communication range in vehicles")
    p.add_argument("--turns", type=int, default=DEFAULT_TURNS)
    p.add_argument("--seed", type=int, default=None,
                   help="run seed (default: $BOTTLENECK_SEED or built-in)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bottleneck", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one scenario and print its result as JSON")
    _add_scenario_flags(p)
    p.add_argument("--log", type=Path, help="write the JSON-lines event log here")

    p = sub.add_parser("sweep", help="run the parameter grid and write the results CSV")
    p.add_argument("--config", type=Path, help="YAML/JSON grid settings")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--turns", type=int)
    p.add_argument("--seed", type=int, help="base seed for per-run seed derivation")
    p.add_argument("--variant", choices=VARIANT_CHOICES, action="append",
                   help="restrict to these variants (repeatable)")
    p.add_argument("--range", type=int, dest="comm_range")
    p.add_argument("--repeats", type=int, help="seeds per parameter combination")
    p.add_argument("--log-dir", type=Path, help="also write one event log per run (large)")

    p = sub.add_parser("aggregate", help="average phi over behaviour combos")
    p.add_argument("--in", type=Path, required=True, dest="input")
    p.add_argument("--mode", choices=["likely", "all"], default="likely")
    p.add_argument("--out", type=Path, help="aggregate CSV (default: stdout)")
    p.add_argument("--figures", type=Path, help="directory for PNG figures")

    p = sub.add_parser("oracle", help="print analytic phi predictions as CSV")
    p.add_argument("--config", type=Path)
    p.add_argument("--variant", choices=VARIANT_CHOICES, action="append")
    p.add_argument("--range", type=int, dest="comm_range")

    p = sub.add_parser("replay", help="re-run a logged scenario and verify the log")
    p.add_argument("--log", type=Path, required=True)
    return parser


def _default_seed() -> int:
    return sweep.default_base_seed()


def cmd_run(args, parser) -> int:
    params = ScenarioParams(kappa=args.kappa, p_f=args.pf, p_b=args.pb, dmaxmax=args.dmaxmax,
                            variant=Variant.parse(args.variant), comm_range=args.comm_range,
                            turns_target=args.turns,
                            seed=args.seed if args.seed is not None else _default_seed())
    try:
        validate_params(params)
    except ParameterError as exc:
        parser.error(str(exc))
    result = engine.run(params, log=args.log)
    print(json.dumps(result.to_dict(), indent=2, sort_keys=True))
    return 0


def _grid_spec(args) -> sweep.GridSpec:
    overrides = {
        "turns_target": getattr(args, "turns", None),
        "base_seed": getattr(args, "seed", None),
        "variants": getattr(args, "variant", None),
        "comm_range": getattr(args, "comm_range", None),
        "repeats": getattr(args, "repeats", None),
    }
    if args.config is not None:
        return sweep.GridSpec.from_file(args.config, **overrides)
    return sweep.GridSpec().with_overrides(**overrides)


def cmd_sweep(args, parser) -> int:
    try:
        spec = _grid_spec(args)
    except (ParameterError, ValueError, TypeError) as exc:
        parser.error(str(exc))
    report = sweep.run_sweep(spec, args.workers, args.out, log_dir=args.log_dir)
    print(json.dumps({"out": str(report.path), "rows": report.rows, "workers": report.workers,
                      "wall_time_s": round(report.wall_time, 3), "failures": report.failures}))
    return 0


def cmd_aggregate(args, parser) -> int:
    rows = sweep.aggregate(args.input, args.mode, args.out)
    if args.out is None:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(sweep.AGGREGATE_COLUMNS)
        for r in rows:
            w.writerow([r[c] if isinstance(r[c], str) else repr(r[c]) for c in sweep.AGGREGATE_COLUMNS])
        print(f"{sweep.TRAILER}{len(rows)}")
    if args.figures is not None:
        from . import figures

        args.figures.mkdir(parents=True, exist_ok=True)
        figures.plot_flow_balance(sweep.read_sweep(args.input), args.figures / "flow_balance.png")
        figures.plot_likely(rows, args.figures / f"flow_balance_{args.mode}.png")
    return 0


ORACLE_COLUMNS = ("variant", "kappa", "p_f", "p_b", "dmaxmax", "phi")


def cmd_oracle(args, parser) -> int:
    spec = _grid_spec(args)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(ORACLE_COLUMNS)
    for p in sweep.grid(spec):
        phi = oracle.predict(p.variant, p.kappa, p.p_f, p.p_b, p.dmaxmax, p.comm_range)
        if phi is not None:
            w.writerow([p.variant.value, repr(p.kappa), repr(p.p_f), repr(p.p_b), p.dmaxmax, repr(phi)])
    return 0


def cmd_replay(args, parser) -> int:
    try:
        result = engine.replay(args.log)
    except engine.ReplayMismatch as exc:
        print(f"replay mismatch: {exc}", file=sys.stderr)
        return 1
    print(json.dumps({"log": str(args.log), "verified": True, "phi": result.phi}))
    return 0


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "aggregate": cmd_aggregate,
            "oracle": cmd_oracle, "replay": cmd_replay}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, parser)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
