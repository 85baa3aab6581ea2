"""Command-line interface.

Subcommands::

    tsinverse run <config.json> [--seed S] [--out DIR]
    tsinverse compare <out_dir> [--out FILE]
    tsinverse target-from-sim <sim> <x0...> <path> [--grid START STEP COUNT]

Exit codes: 0 success, 2 configuration error, 3 simulator failure (partial
outputs are kept).
"""

from __future__ import annotations

import argparse
import sys

from .experiment import (
    ConfigError,
    emit_comparison,
    parse_config,
    run_experiment,
    save_target,
)
from .sequential import SimulationFailed
from .simulators import DEFAULT_GRID, TimeGrid, SimulatorError, get_simulator

EXIT_CONFIG = 2
EXIT_SIMULATOR = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tsinverse",
        description="Inverse problems for time-series simulators via "
        "scalarization and expected-improvement search.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run the experiment described by a JSON config")
    run_p.add_argument("config", help="path to the experiment config")
    run_p.add_argument("--seed", type=int, default=None, help="override the base seed")
    run_p.add_argument("--out", default=None, help="override the output directory")

    cmp_p = sub.add_parser("compare", help="flatten all traces under an output directory")
    cmp_p.add_argument("out_dir", help="experiment output directory")
    cmp_p.add_argument("--out", default=None, help="destination CSV (default: <out_dir>/comparison.csv)")

    tgt_p = sub.add_parser(
        "target-from-sim", help="evaluate a built-in simulator and save the series as a target CSV"
    )
    tgt_p.add_argument("sim", help="built-in simulator id (test1, test2, test3)")
    tgt_p.add_argument("values", nargs="+", help="x0 coordinates followed by the output path")
    tgt_p.add_argument(
        "--grid",
        nargs=3,
        metavar=("START", "STEP", "COUNT"),
        default=None,
        help=f"time grid (default {DEFAULT_GRID.start} {DEFAULT_GRID.step} {DEFAULT_GRID.count})",
    )
    return parser


def _cmd_run(args) -> int:
    config = parse_config(args.config)
    summaries = run_experiment(config, out_dir=args.out, base_seed=args.seed)
    for summary in summaries:
        print(
            f"{summary['method']} seed={summary['seed']}: "
            f"w_opt={summary['w_opt']:.6g} x_opt={summary['x_opt']} "
            f"({summary['wall_time_seconds']:.1f}s)"
        )
    return 0


def _cmd_compare(args) -> int:
    dest = emit_comparison(args.out_dir, dest=args.out)
    print(dest)
    return 0


def _cmd_target_from_sim(args) -> int:
    if len(args.values) < 2:
        raise ConfigError("target-from-sim needs x0 coordinates followed by an output path")
    *x0_tokens, path = args.values
    try:
        x0 = [float(tok) for tok in x0_tokens]
    except ValueError as exc:
        raise ConfigError(f"x0 coordinates must be numbers: {exc}") from None
    if args.grid is None:
        grid = DEFAULT_GRID
    else:
        try:
            grid = TimeGrid(float(args.grid[0]), float(args.grid[1]), int(args.grid[2]))
        except ValueError as exc:
            raise ConfigError(f"bad --grid: {exc}") from None
    try:
        simulator = get_simulator(args.sim, grid)
        series = simulator(x0)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    save_target(path, series)
    print(path)
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "compare":
            return _cmd_compare(args)
        return _cmd_target_from_sim(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationFailed as exc:
        print(f"simulator failure: {exc} (partial outputs kept)", file=sys.stderr)
        return EXIT_SIMULATOR
    except SimulatorError as exc:
        print(f"simulator failure: {exc}", file=sys.stderr)
        return EXIT_SIMULATOR


if __name__ == "__main__":
    sys.exit(main())
