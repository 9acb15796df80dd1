"""
Command-line entry point.

    python -m optimal_execution_app run --config experiment.ini [--seed N] [--paths N]
        [--steps N] [--out DIR] [--threads N]
    python -m optimal_execution_app validate --config experiment.ini ...
    python -m optimal_execution_app list-examples
"""

import argparse
import json
import os
import sys

from .app_logging import Severity, logger
from .closed_forms import EXAMPLES
from .config import get_config
from .errors import ExecutionAppError
from .experiment_config import load_experiment_config
from .experiments import run_experiment
from .metrics import metrics_registry
from .report_generator import ReportGenerator, error_record

RUN_LOG_FILE = "run.log.jsonl"
METRICS_FILE = "metrics.prom"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="optimal_execution_app",
        description="Simulate, solve and compare optimal execution strategies.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("run", "Run the configured experiment and write its result files"),
        ("validate", "Estimate the integrability moments of the configured strategy"),
    ):
        subparser = subparsers.add_parser(name, help=help_text)
        subparser.add_argument("--config", help="INI experiment file")
        subparser.add_argument("--seed", type=int, help="Seed of the path generator")
        subparser.add_argument("--paths", type=int, help="Number of simulated paths")
        subparser.add_argument("--steps", type=int, help="Number of time steps")
        subparser.add_argument("--out", help="Output directory")
        subparser.add_argument(
            "--threads", type=int, help="Simulation worker threads, 0 for one per CPU"
        )
        subparser.add_argument("--verbose", action="store_true", help="Log at debug level")

    subparsers.add_parser("list-examples", help="List the preset example configurations")
    return parser


def list_examples() -> int:
    for name, example in sorted(EXAMPLES.items()):
        print(f"{name}\t{example.description}")
    return 0


def run(args: argparse.Namespace) -> int:
    """Run one experiment; every library error becomes error.json and its exit code."""
    overrides = {
        "seed": args.seed,
        "paths": args.paths,
        "steps": args.steps,
        "threads": args.threads,
        "out": args.out,
        "kind": "validate" if args.command == "validate" else None,
    }
    out_dir = args.out or get_config()["output_dir"]
    try:
        config = load_experiment_config(args.config, overrides)
        out_dir = config.output_dir
        report = ReportGenerator(out_dir)
        logger.attach_run_log(os.path.join(out_dir, RUN_LOG_FILE))
        result = run_experiment(config)
        report.write(config, result)
        metrics_registry.counters["experiments_completed"].inc()
        return 0
    except Exception as err:  # pylint: disable=broad-except
        metrics_registry.counters["experiments_failed"].inc()
        if isinstance(err, ExecutionAppError):
            logger.error(f"{type(err).__name__}: {err}")
        else:
            logger.error(f"Unexpected failure: {err}", exc_info=True)
        try:
            record = ReportGenerator(out_dir).write_error(err)
        except OSError:
            record = error_record(err)
        print(json.dumps(record), file=sys.stderr)
        return record["exit_code"]
    finally:
        logger.detach_run_log()
        if os.path.isdir(out_dir):
            metrics_registry.write(os.path.join(out_dir, METRICS_FILE))


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-examples":
        return list_examples()
    if args.verbose:
        logger.console_logger.set_level(Severity.DEBUG)
    return run(args)
