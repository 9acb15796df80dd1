"""Tests which cover experiment files, defaults, overrides and the configuration hash"""

import numpy as np
import pytest

from optimal_execution_app.errors import ConfigurationError
from optimal_execution_app.experiment_config import (
    load_experiment_config,
    parse_coefficient,
    read_experiment_file,
)
from optimal_execution_app.model_core import MAX_SEED, simulate


def _write(tmp_path, text, name="experiment.ini"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_parse_coefficient():
    constant = parse_coefficient(" 0.5 ", 0.0, 1.0)
    assert constant.is_constant and constant.value == 0.5
    sine = parse_coefficient("sine:0.5:1", 0.0, 1.0)
    assert sine.at(np.array([0.25]))[0] == pytest.approx(0.5)
    linear = parse_coefficient("linear:0:2", 0.0, 1.0)
    np.testing.assert_allclose(linear.at(np.array([0.0, 0.5, 1.0])), [0.0, 1.0, 2.0])
    bridge = parse_coefficient("bridge:1:0.5:7", 0.0, 1.0)
    assert bridge.kind == "samples"
    assert np.max(np.abs(bridge.at(np.linspace(0.0, 1.0, 101)))) <= 0.5


@pytest.mark.parametrize("text", ["abc", "inf", "sine:1:0", "bridge:1", "linear:a:b", "cosine:1:2"])
def test_malformed_coefficients(text):
    with pytest.raises(ConfigurationError):
        parse_coefficient(text, 0.0, 1.0)


def test_environment_defaults():
    config = load_experiment_config()
    assert (config.n_paths, config.n_steps, config.seed, config.threads) == (200, 50, 11, 1)
    assert config.output_dir == "./results"
    assert config.kind == "solve"
    assert config.experiment["strategy"] == "optimal"


def test_experiment_file(experiment_file):
    sections = read_experiment_file(experiment_file)
    assert sections["model"]["d"] == 0.2
    assert sections["model"]["rho"] == "1"
    assert sections["experiment"]["n_paths"] == 100

    config = load_experiment_config(experiment_file)
    assert (config.experiment_id, config.n_paths, config.n_steps, config.seed) == ("ow_solve", 100, 40, 5)
    assert config.example is None
    spec = config.model_spec()
    assert spec.grid.n_steps == 40
    assert (spec.x, spec.d, spec.gamma0) == (1.0, 0.2, 1.0)
    assert spec.rho.value == 1.0 and spec.lam.is_zero


def test_cli_overrides_win(experiment_file):
    config = load_experiment_config(
        experiment_file, {"seed": 9, "paths": 300, "steps": None, "out": "/tmp/run"}
    )
    assert (config.seed, config.n_paths, config.n_steps) == (9, 300, 40)
    assert config.output_dir == "/tmp/run"
    with pytest.raises(ConfigurationError):
        load_experiment_config(experiment_file, {"repeat": 2})


def test_config_hash(experiment_file):
    config = load_experiment_config(experiment_file)
    assert len(config.config_hash) == 64
    assert load_experiment_config(experiment_file).config_hash == config.config_hash
    unhashed = load_experiment_config(experiment_file, {"threads": 4, "out": "/tmp/elsewhere"})
    assert unhashed.config_hash == config.config_hash
    assert load_experiment_config(experiment_file, {"seed": 6}).config_hash != config.config_hash


def test_example_replaces_model():
    config = load_experiment_config("./tests/experiment_example.ini")
    assert config.example.name == "diffusive_resilience_53"
    spec = config.model_spec()
    assert spec.eta.value == 1.0
    assert spec.grid.n_steps == 100


def test_running_target_function(tmp_path):
    path = _write(
        tmp_path,
        "[targets]\nzeta_kind = function\nzeta = linear:0:1\n[model]\nlam = 0.5\n[output]\nstrategy_csv = no\n",
    )
    config = load_experiment_config(path)
    assert config.document["output"]["strategy_csv"] is False
    spec = config.model_spec()
    assert spec.targets.zeta.at(np.array([0.5]))[0] == pytest.approx(0.5)
    assert spec.lam.value == 0.5


@pytest.mark.parametrize(
    "text",
    [
        "[market]\nrho = 1\n",
        "[experiment]\nn_paths = many\n",
        "[experiment]\nkind = optimize\n",
        "[experiment]\nkind = example\n",
        "[experiment]\nexample = almgren_chriss\n",
        "[experiment]\nlevel_min = 5\nlevel_max = 3\n",
        "[output]\nstrategy_csv = perhaps\n",
        "[model\nrho = 1\n",
    ],
)
def test_invalid_files(tmp_path, text):
    with pytest.raises(ConfigurationError):
        load_experiment_config(_write(tmp_path, text))


def test_unknown_key_is_named():
    with pytest.raises(ConfigurationError, match="resilience_speed"):
        load_experiment_config("./tests/experiment_unknown_key.ini")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigurationError):
        load_experiment_config(str(tmp_path / "absent.ini"))


@pytest.mark.parametrize(
    "overrides",
    [{"paths": 1}, {"steps": 0}, {"seed": -1}, {"threads": -1}],
)
def test_invalid_run_parameters(experiment_file, overrides):
    with pytest.raises(ConfigurationError):
        load_experiment_config(experiment_file, overrides)


def test_largest_seed_runs_through_file_and_simulation(experiment_file):
    """The experiment schema and the path generator accept the same seed range"""
    config = load_experiment_config(experiment_file, {"seed": MAX_SEED, "paths": 2, "steps": 4})
    paths = simulate(config.model_spec(), config.n_paths, config.seed)
    assert paths.seed == MAX_SEED
    with pytest.raises(ConfigurationError):
        load_experiment_config(experiment_file, {"seed": MAX_SEED + 1})
