"""This module writes the result files of an experiment run."""

import csv
import json
import os
import platform
import sys
from datetime import datetime, timezone

import numpy as np

from .app_logging import logger
from .config import get_config
from .errors import ExecutionAppError
from .experiment_config import ExperimentConfig
from .experiments import ExperimentResult, ResultRecord
from .strategies import write_strategy_csv

RESULT_COLUMNS = ("experiment_id", "config_hash", "metric", "value", "std_error", "n_paths", "seed")


def format_float(value: float) -> str:
    """Decimal with 17 significant digits, enough to round-trip a double."""
    return f"{value:.17g}"


def error_record(error: Exception) -> dict:
    """Machine-readable record of a failed run."""
    exit_code = error.exit_code if isinstance(error, ExecutionAppError) else 1
    return {"error": type(error).__name__, "message": str(error), "exit_code": exit_code}


class ReportGenerator:
    """
    Write results.csv, series.json, manifest.json and strategy_optimal.csv into `out_dir`.
    Files are UTF-8 with LF line endings.
    """

    RESULTS_FILE = "results.csv"
    SERIES_FILE = "series.json"
    MANIFEST_FILE = "manifest.json"
    STRATEGY_FILE = "strategy_optimal.csv"
    ERROR_FILE = "error.json"

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)

    def __path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def __write_results(self, records: list[ResultRecord]) -> None:
        ordered = sorted(records, key=lambda record: (record.experiment_id, record.metric))
        with open(self.__path(self.RESULTS_FILE), "w", encoding="utf-8", newline="") as results_file:
            writer = csv.writer(results_file, lineterminator="\n")
            writer.writerow(RESULT_COLUMNS)
            for record in ordered:
                writer.writerow(
                    [
                        record.experiment_id,
                        record.config_hash,
                        record.metric,
                        format_float(record.value),
                        format_float(record.std_error),
                        record.n_paths,
                        record.seed,
                    ]
                )

    def __write_json(self, name: str, document: dict) -> None:
        with open(self.__path(name), "w", encoding="utf-8", newline="\n") as json_file:
            json.dump(document, json_file, indent=2, sort_keys=True, allow_nan=True)
            json_file.write("\n")

    def __manifest(self, config: ExperimentConfig, result: ExperimentResult) -> dict:
        service_config = get_config()
        return {
            "experiment_id": config.experiment_id,
            "kind": config.kind,
            "config_hash": config.config_hash,
            "seed": config.seed,
            "n_paths": config.n_paths,
            "n_steps": config.n_steps,
            "threads": config.threads,
            "wall_time_seconds": result.wall_time,
            "service_name": service_config["service_name"],
            "version": service_config["version"],
            "python_version": platform.python_version(),
            "numpy_version": np.__version__,
            "finished_at": datetime.now(timezone.utc).isoformat(),
            "config": config.document,
        }

    def write(self, config: ExperimentConfig, result: ExperimentResult) -> None:
        """Write every result file of a finished experiment."""
        self.__write_results(result.records)
        self.__write_json(self.SERIES_FILE, result.series)
        self.__write_json(self.MANIFEST_FILE, self.__manifest(config, result))
        if result.strategy is not None and config.document["output"]["strategy_csv"]:
            with open(self.__path(self.STRATEGY_FILE), "w", encoding="utf-8", newline="") as strategy_file:
                write_strategy_csv(result.strategy, result.grid, strategy_file)
        logger.info(f"Wrote {len(result.records)} result rows to {self.out_dir}")

    def write_error(self, error: Exception) -> dict:
        """Write error.json for a failed run and return the record."""
        record = error_record(error)
        try:
            self.__write_json(self.ERROR_FILE, record)
        except OSError as os_err:
            print(f"Cannot write {self.ERROR_FILE}: {os_err}", file=sys.stderr)
        return record
