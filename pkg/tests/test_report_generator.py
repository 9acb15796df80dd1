"""Tests which cover the result files written for a run"""

import csv
import json

import pytest

from optimal_execution_app.errors import ConfigurationError, SolverError
from optimal_execution_app.experiment_config import load_experiment_config
from optimal_execution_app.experiments import run_experiment
from optimal_execution_app.report_generator import (
    RESULT_COLUMNS,
    ReportGenerator,
    error_record,
    format_float,
)


@pytest.fixture(name="finished_run")
def fixture_finished_run(experiment_file):
    config = load_experiment_config(experiment_file)
    return config, run_experiment(config)


def test_format_float():
    assert format_float(1.0) == "1"
    assert format_float(0.1) == "0.10000000000000001"
    assert float(format_float(1.0 / 3.0)) == 1.0 / 3.0


def test_error_record():
    assert error_record(ConfigurationError("bad key")) == {
        "error": "ConfigurationError",
        "message": "bad key",
        "exit_code": 2,
    }
    assert error_record(SolverError("stalled", node=2, time=0.5))["exit_code"] == 4
    assert error_record(ValueError("boom"))["exit_code"] == 1


def test_write_results(tmp_path, finished_run):
    config, result = finished_run
    out_dir = tmp_path / "out"
    ReportGenerator(str(out_dir)).write(config, result)

    raw = (out_dir / "results.csv").read_bytes()
    assert b"\r" not in raw
    with open(out_dir / "results.csv", "r", encoding="utf-8", newline="") as results_file:
        rows = list(csv.reader(results_file))
    assert tuple(rows[0]) == RESULT_COLUMNS
    assert [row[2] for row in rows[1:]] == sorted(record.metric for record in result.records)
    for row, record in zip(rows[1:], result.records):
        assert float(row[3]) == record.value
        assert row[1] == config.config_hash
        assert (row[5], row[6]) == ("100", "5")

    series = json.loads((out_dir / "series.json").read_text(encoding="utf-8"))
    assert series["time"][-1] == 1.0
    assert len(series["K"]) == 41

    manifest = json.loads((out_dir / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["config_hash"] == config.config_hash
    assert (manifest["seed"], manifest["n_paths"], manifest["n_steps"]) == (5, 100, 40)
    assert manifest["wall_time_seconds"] == result.wall_time
    assert manifest["config"]["experiment"]["id"] == "ow_solve"
    assert manifest["service_name"] == "optimal-execution-app"

    lines = (out_dir / "strategy_optimal.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "time,value,jump"
    assert len(lines) == 42


def test_strategy_file_can_be_disabled(tmp_path, experiment_file):
    config = load_experiment_config(experiment_file)
    config.document["output"]["strategy_csv"] = False
    ReportGenerator(str(tmp_path)).write(config, run_experiment(config))
    assert (tmp_path / "results.csv").exists()
    assert not (tmp_path / "strategy_optimal.csv").exists()


def test_write_error(tmp_path):
    record = ReportGenerator(str(tmp_path)).write_error(ConfigurationError("Unknown keys in model"))
    written = json.loads((tmp_path / "error.json").read_text(encoding="utf-8"))
    assert written == record
    assert written["exit_code"] == 2
