"""Tests which cover the command-line entry point"""

import json

import pytest

from optimal_execution_app.app_logging import Severity, logger
from optimal_execution_app.cli import build_parser, main

RESULT_FILES = (
    "results.csv",
    "series.json",
    "manifest.json",
    "strategy_optimal.csv",
    "run.log.jsonl",
    "metrics.prom",
)


def test_list_examples(capsys):
    assert main(["list-examples"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert [line.split("\t")[0] for line in lines] == [
        "cancellation_54",
        "diffusive_resilience_53",
        "nonexistence_52",
        "ow_deterministic",
        "ow_random_target",
    ]


def test_parser_requires_a_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_run_writes_every_file(tmp_path, experiment_file, counters):
    out_dir = tmp_path / "run"
    assert main(["run", "--config", experiment_file, "--out", str(out_dir)]) == 0
    for name in RESULT_FILES:
        assert (out_dir / name).exists(), name
    assert not (out_dir / "error.json").exists()

    records = [json.loads(line) for line in (out_dir / "run.log.jsonl").read_text(encoding="utf-8").splitlines()]
    assert records and all(record["service_id"] == "optimal-execution-app" for record in records)
    assert "optimal_execution_app_experiments_completed_total 1.0" in (out_dir / "metrics.prom").read_text(
        encoding="utf-8"
    )


def test_results_are_byte_identical(tmp_path, experiment_file):
    for name in ("first", "second"):
        assert main(["run", "--config", experiment_file, "--out", str(tmp_path / name), "--threads", "2"]) == 0
    first = (tmp_path / "first" / "results.csv").read_bytes()
    assert first == (tmp_path / "second" / "results.csv").read_bytes()


def test_flags_override_the_file(tmp_path, experiment_file):
    out_dir = tmp_path / "run"
    assert main(["run", "--config", experiment_file, "--out", str(out_dir), "--seed", "8", "--steps", "20"]) == 0
    manifest = json.loads((out_dir / "manifest.json").read_text(encoding="utf-8"))
    assert (manifest["seed"], manifest["n_steps"], manifest["n_paths"]) == (8, 20, 100)


def test_unknown_key_exits_with_configuration_error(tmp_path, capsys, counters):
    out_dir = tmp_path / "run"
    code = main(["run", "--config", "./tests/experiment_unknown_key.ini", "--out", str(out_dir)])
    assert code == 2
    error = json.loads((out_dir / "error.json").read_text(encoding="utf-8"))
    assert error["error"] == "ConfigurationError"
    assert "resilience_speed" in error["message"]
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1]) == error
    assert counters.get_sample_value("optimal_execution_app_experiments_failed_total") == 1.0


def test_unsupported_configuration_exit_code(tmp_path):
    out_dir = tmp_path / "run"
    assert main(["run", "--config", "./tests/experiment_unsupported.ini", "--out", str(out_dir)]) == 3
    error = json.loads((out_dir / "error.json").read_text(encoding="utf-8"))
    assert error["error"] == "UnsupportedConfigurationError"
    assert not (out_dir / "results.csv").exists()


def test_validate_subcommand(tmp_path, experiment_file):
    out_dir = tmp_path / "run"
    assert main(["validate", "--config", experiment_file, "--out", str(out_dir)]) == 0
    metrics = [line.split(",")[2] for line in (out_dir / "results.csv").read_text(encoding="utf-8").splitlines()[1:]]
    assert "pass:deviation_energy" in metrics
    assert "moment:terminal_target" in metrics


def test_verbose_logs_debug(tmp_path, experiment_file, caplog):
    try:
        assert main(["run", "--config", experiment_file, "--out", str(tmp_path), "--verbose"]) == 0
        assert "Loaded experiment 'ow_solve'" in caplog.text
    finally:
        logger.console_logger.set_level(Severity.INFO)
