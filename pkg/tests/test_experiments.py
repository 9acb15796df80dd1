"""Tests which cover the experiment runners"""

import math

import numpy as np
import pytest

from optimal_execution_app.experiment_config import load_experiment_config
from optimal_execution_app.experiments import perturbations, run_experiment
from optimal_execution_app.model_core import simulate
from optimal_execution_app.solver import solve

OW_MODEL = "[model]\nd = 0.2\nrho = 1\n"


def _config(tmp_path, text, **overrides):
    path = tmp_path / "experiment.ini"
    path.write_text(text, encoding="utf-8")
    return load_experiment_config(str(path), overrides or None)


def _values(result) -> dict[str, float]:
    return {record.metric: record.value for record in result.records}


def test_solve_experiment(experiment_file):
    config = load_experiment_config(experiment_file)
    result = run_experiment(config)
    values = _values(result)
    assert sorted(values) == [
        "K0",
        "optimal_cost_C0",
        "optimal_cost_formula",
        "optimal_cost_gap",
        "optimal_cost_simulated",
        "theta0",
    ]
    assert values["K0"] == pytest.approx(1.0 / 3.0, abs=1e-8)
    assert values["optimal_cost_formula"] == pytest.approx(0.64 / 3.0 - 0.02, abs=1e-8)
    assert values["optimal_cost_simulated"] == pytest.approx(values["optimal_cost_formula"], abs=0.02)
    assert [record.metric for record in result.records] == sorted(values)
    for record in result.records:
        assert (record.experiment_id, record.n_paths, record.seed) == ("ow_solve", 100, 5)
        assert record.config_hash == config.config_hash
    assert len(result.series["time"]) == len(result.series["mean_X_optimal"]) == 41
    assert result.strategy.label == "optimal"
    assert result.grid.n_steps == 40
    assert result.wall_time > 0.0


def test_runs_are_reproducible(experiment_file):
    first = run_experiment(load_experiment_config(experiment_file))
    second = run_experiment(load_experiment_config(experiment_file, {"threads": 3}))
    assert first.records == second.records
    assert first.series == second.series


def test_compare_experiment(tmp_path):
    """No member of the comparison family beats the optimal strategy"""
    config = _config(
        tmp_path, OW_MODEL + "[experiment]\nkind = compare\nn_paths = 20\nn_steps = 400\n"
    )
    values = _values(run_experiment(config))
    for label in ("twap", "block_sell", "terminal_block", "bump", "jitter"):
        assert values[f"excess:{label}"] > 0.0
        assert values[f"cost:{label}"] > values["optimal_cost_simulated"]
    assert values["cost:block_sell"] == pytest.approx(0.3, abs=0.01)


def test_perturbation_family(ow_spec, ow_paths):
    optimal = solve(ow_spec, ow_paths).strategy
    family = perturbations(ow_spec, ow_paths, optimal, 0.25)
    assert [strategy.label for strategy in family] == [
        "twap",
        "block_sell",
        "terminal_block",
        "bump",
        "jitter",
    ]
    bump = family[3]
    np.testing.assert_array_equal(bump.values[:, 0], optimal.values[:, 0])
    assert bump.x_pre == optimal.x_pre
    np.testing.assert_array_equal(bump.xi_terminal, optimal.xi_terminal)


def test_approximate_experiment(tmp_path):
    config = _config(
        tmp_path,
        "[experiment]\nkind = approximate\nn_paths = 4\nn_steps = 256\nlevel_min = 2\nlevel_max = 6\n",
    )
    result = run_experiment(config)
    values = _values(result)
    assert result.series["level"] == [2.0, 3.0, 4.0, 5.0, 6.0]
    distances = result.series["level_distance"]
    assert all(later < earlier for earlier, later in zip(distances, distances[1:]))
    assert values["level_02:distance"] == distances[0]
    assert values["level_06:cost_gap"] < values["level_02:cost_gap"]


def test_validate_experiment_deviation_energy(tmp_path):
    """Without trading the deviation decays exponentially, so its energy is d²(1 − e^{−2ρT})/(2ρ)"""
    config = _config(
        tmp_path,
        OW_MODEL + "[experiment]\nkind = validate\nstrategy = no_trade\nn_paths = 10\nn_steps = 200\n",
    )
    result = run_experiment(config)
    values = _values(result)
    expected = 0.04 * (1.0 - math.exp(-2.0)) / 2.0
    assert values["moment:deviation_energy"] == pytest.approx(expected, rel=0.03)
    assert values["moment:terminal_target"] == 0.0
    for moment in ("terminal_target", "running_target", "deviation_energy"):
        assert values[f"pass:{moment}"] == 1.0
    assert result.strategy is None
    assert "mean_X_no_trade" in result.series


def test_validate_experiment_random_target(tmp_path):
    config = _config(
        tmp_path,
        "[targets]\nxi_kind = linear_w3\nxi_b = 1.0\n"
        "[experiment]\nkind = validate\nstrategy = immediate_close\nn_paths = 400\nn_steps = 20\n",
    )
    result = run_experiment(config)
    record = next(record for record in result.records if record.metric == "moment:terminal_target")
    assert abs(record.value - 1.0) < 4.0 * record.std_error


def test_validate_optimal_strategy(experiment_file):
    result = run_experiment(load_experiment_config(experiment_file, {"kind": "validate"}))
    assert result.strategy.label == "optimal"
    assert _values(result)["pass:deviation_energy"] == 1.0


def test_example_experiment():
    result = run_experiment(load_experiment_config("./tests/experiment_example.ini"))
    values = _values(result)
    assert values["oracle:K_max_error"] < 1e-6
    assert values["oracle:strategy_rms_error"] < 1e-4


def test_cancellation_example(tmp_path):
    config = _config(
        tmp_path,
        "[experiment]\nkind = example\nexample = cancellation_54\nn_paths = 50\nn_steps = 100\n",
    )
    values = _values(run_experiment(config))
    assert values["oracle:strategy_max_path_variance"] < 1e-20
    assert values["oracle:deviation_midpoint_variance"] > 0.0
    assert values["oracle:strategy_rms_error"] < 1e-3


def test_same_ensemble_for_every_strategy(experiment_file):
    config = load_experiment_config(experiment_file)
    spec = config.model_spec()
    first = simulate(spec, config.n_paths, config.seed)
    second = simulate(spec, config.n_paths, config.seed, threads=2)
    np.testing.assert_array_equal(first.dW1, second.dW1)


def _records(result) -> dict:
    return {record.metric: record for record in result.records}


@pytest.mark.parametrize(
    "example",
    ["ow_deterministic", "ow_random_target", "nonexistence_52", "diffusive_resilience_53", "cancellation_54"],
)
def test_optimal_strategy_beats_every_perturbation(tmp_path, example):
    """Under common random numbers X* is cheaper than each perturbation by more than two standard errors"""
    config = _config(
        tmp_path,
        f"[experiment]\nkind = compare\nexample = {example}\nn_paths = 4000\nn_steps = 200\n"
        "perturbation_eps = 0.5\n",
    )
    records = _records(run_experiment(config))
    for label in ("twap", "block_sell", "terminal_block", "bump", "jitter"):
        excess = records[f"excess:{label}"]
        assert excess.value > 2.0 * excess.std_error, label
    gap = records["optimal_cost_gap"]
    assert abs(gap.value) < 3.0 * gap.std_error + 0.03


def test_approximations_of_the_diffusive_resilience_optimum(tmp_path):
    """Finite variation approximations close in on X* in the metric and in cost"""
    config = _config(
        tmp_path,
        "[experiment]\nkind = approximate\nexample = diffusive_resilience_53\n"
        "n_paths = 100\nn_steps = 512\nlevel_min = 2\nlevel_max = 8\n",
    )
    result = run_experiment(config)
    distances = result.series["level_distance"]
    assert all(later < earlier for earlier, later in zip(distances, distances[1:]))
    assert distances[0] >= 5.0 * distances[-1]
    records = _records(result)
    first, last = records["level_02:cost_gap"], records["level_08:cost_gap"]
    assert abs(last.value) < abs(first.value)
    assert abs(last.value) < 3.0 * last.std_error
