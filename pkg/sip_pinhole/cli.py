"""
Command-line interface.

    sip-pinhole run <scenario|preset> [--seed-override N] [--out DIR] [--parallel]
    sip-pinhole presets
    sip-pinhole calibrate

Exit status: 0 on success, 1 for scenario errors, 2 for any other failure.
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence, TextIO

from . import __version__
from .analysis.export import (
    aggregate_seeds,
    emit_csv,
    render_table,
    write_installs,
    write_mean_timeline,
)
from .analysis.report import analyze
from .config import DEFAULT_CAPACITY_WINDOW, OUTPUT_DIR_ENV, ControllerKind
from .firewall.latency import TABLE_1, calibrate, capacity_residuals, sustainable_rule_count
from .scenarios.presets import PRESETS
from .scenarios.scenario import Scenario, ScenarioError, load_scenario
from .sim.simulator import run_seeds

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)-23s %(levelname)-8s %(name)s: %(message)s"

EXIT_OK = 0
EXIT_SCENARIO_ERROR = 1
EXIT_FAILURE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sip-pinhole",
        description="Simulate SIP pinhole greylisting against spoofed-source floods.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--loglevel", default="WARNING",
        choices=["ERROR", "WARNING", "INFO", "DEBUG"],
        help="set the log verbosity level, default=WARNING",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run a scenario file or preset")
    run.add_argument("scenario", help="scenario YAML file or preset name")
    run.add_argument("--seed-override", type=int, metavar="N", help="run this seed only")
    run.add_argument(
        "--out", metavar="DIR",
        help=f"output directory (default: ${OUTPUT_DIR_ENV}, else the scenario's outputs)",
    )
    run.add_argument("--parallel", action="store_true", help="run seeds in worker processes")
    run.add_argument(
        "--window", type=int, default=DEFAULT_CAPACITY_WINDOW,
        help=f"capacity window in installs, default={DEFAULT_CAPACITY_WINDOW}",
    )

    commands.add_parser("presets", help="list the built-in scenarios")
    commands.add_parser("calibrate", help="fit the latency model to the capacity table")
    return parser


def output_dir(scenario: Scenario, out: Optional[str]) -> Path:
    """Output directory: --out, then the environment, then the scenario."""
    if out:
        return Path(out)
    env = os.environ.get(OUTPUT_DIR_ENV)
    if env:
        return Path(env)
    return Path(scenario.outputs)


def cmd_run(args: argparse.Namespace, stdout: TextIO) -> int:
    scenario = load_scenario(args.scenario)
    seeds: List[int] = [args.seed_override] if args.seed_override is not None else list(scenario.seeds)
    if any(seed < 0 for seed in seeds):
        raise ScenarioError([f"{args.scenario}: seeds must be non-negative"])
    out = output_dir(scenario, args.out)
    out.mkdir(parents=True, exist_ok=True)

    logs = run_seeds(scenario, seeds, parallel=args.parallel)
    reports = []
    for seed, log in zip(seeds, logs):
        report = analyze(log, window=args.window)
        reports.append(report)
        seed_dir = out / f"seed-{seed}"
        seed_dir.mkdir(exist_ok=True)
        log.to_csv(seed_dir / "events.csv")
        write_installs(log, seed_dir / "installs.csv")
        emit_csv(
            report,
            seed_dir / "timeline.csv",
            seed_dir / "summary.csv",
            seed_dir / "capacity.csv",
        )
        print(f"== {scenario.name}, seed {seed} ==", file=stdout)
        print(render_table(report), file=stdout)

    aggregate = aggregate_seeds(reports)
    write_mean_timeline(aggregate, out / "timeline-mean.csv")
    if len(reports) > 1:
        print(
            f"== {scenario.name}, {aggregate.seeds} seeds: "
            f"false positives {aggregate.false_positives}, "
            f"false negatives {aggregate.false_negatives}, "
            f"worst lag {aggregate.worst_install_lag:.3f} s ==",
            file=stdout,
        )
    logger.info("wrote results to %s", out)
    return EXIT_OK


def cmd_presets(args: argparse.Namespace, stdout: TextIO) -> int:
    width = max(len(name) for name in PRESETS)
    for name, scenario in PRESETS.items():
        print(f"{name.ljust(width)}  {scenario.description}", file=stdout)
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace, stdout: TextIO) -> int:
    model = calibrate(TABLE_1)
    print("LatencyModel", file=stdout)
    print(f"  per_rule_base               {model.per_rule_base:.6g} s", file=stdout)
    print(f"  per_existing_rule           {model.per_existing_rule:.6g} s/rule", file=stdout)
    print(f"  per_batch_base              {model.per_batch_base:.6g} s", file=stdout)
    print(f"  per_batch_per_existing_rule {model.per_batch_per_existing_rule:.6g} s/rule", file=stdout)
    print("mode,rules,init_speed,fin_speed,pred_init,pred_fin,init_err,fin_err", file=stdout)
    for residual in capacity_residuals(model, TABLE_1):
        row = residual.observation
        print(
            f"{row.mode.value},{row.rules},{row.initial_speed:g},{row.final_speed:g},"
            f"{residual.predicted_initial:.1f},{residual.predicted_final:.1f},"
            f"{residual.initial_error:+.3f},{residual.final_error:+.3f}",
            file=stdout,
        )
    for kind in ControllerKind:
        count = sustainable_rule_count(model, kind, rate=500.0)
        print(f"sustainable rules at 500 r/s ({kind.value}): {count:.0f}", file=stdout)
    return EXIT_OK


_COMMANDS = {"run": cmd_run, "presets": cmd_presets, "calibrate": cmd_calibrate}


def main(argv: Optional[Sequence[str]] = None, stdout: Optional[TextIO] = None) -> int:
    """
    Entry point.

    Args:
        argv: Arguments without the program name (default: sys.argv[1:]).
        stdout: Stream for results (default: sys.stdout).

    Returns:
        int: Exit status.
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.loglevel), format=LOG_FORMAT)
    stdout = stdout if stdout is not None else sys.stdout
    try:
        return _COMMANDS[args.command](args, stdout)
    except ScenarioError as e:
        print(f"scenario error:\n{e}", file=sys.stderr)
        return EXIT_SCENARIO_ERROR
    except Exception as e:
        if args.loglevel == "DEBUG":
            logger.exception("%s failed", args.command)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE
