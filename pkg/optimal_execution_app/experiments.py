"""
This module runs one configured experiment on one simulated ensemble and collects its
result rows and plot series.

Every strategy of an experiment is evaluated on the same ensemble, so the cost differences
it reports use common random numbers.
"""

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .app_logging import logger
from .closed_forms import (
    ex52_theta,
    ex53_K,
    ex53_optimal_strategy,
    ex54_strategy_and_deviation,
    ow_K,
    ow_optimal_strategy,
    total_variation,
)
from .costs import cost_fv, cost_pm
from .errors import ConfigurationError
from .experiment_config import ExperimentConfig
from .model_core import CostEstimate, ModelSpec, PathBundle, TimeGrid, simulate
from .schema_registry import validate_document
from .solver import OptimalSolution, solve
from .strategies import (
    Strategy,
    block_sell,
    deviation,
    fv_approximate,
    immediate_close,
    no_trade,
    strategy_metric,
    terminal_block,
    twap,
)

STRATEGIES: dict[str, Callable[[ModelSpec, PathBundle], Strategy]] = {
    "no_trade": no_trade,
    "twap": twap,
    "block_sell": block_sell,
    "immediate_close": immediate_close,
    "terminal_block": terminal_block,
}


@dataclass(frozen=True)
class ResultRecord:
    experiment_id: str
    config_hash: str
    metric: str
    value: float
    std_error: float
    n_paths: int
    seed: int

    def as_document(self) -> dict:
        return asdict(self)


@dataclass
class ExperimentResult:
    """
    Attributes:
        records: result rows sorted by (experiment_id, metric).
        series: time-indexed arrays for plotting, as plain lists.
        grid: simulation grid.
        strategy: the optimal strategy when the experiment solved for it.
        wall_time: seconds spent in the experiment.
    """

    records: list[ResultRecord]
    series: dict[str, list]
    grid: TimeGrid
    strategy: Strategy | None = None
    wall_time: float = 0.0


@dataclass
class _Collector:
    config: ExperimentConfig
    rows: dict[str, tuple[float, float]] = field(default_factory=dict)
    series: dict[str, list] = field(default_factory=dict)

    def add(self, metric: str, value: float, std_error: float = 0.0) -> None:
        if metric in self.rows:
            raise ValueError(f"Metric {metric} recorded twice")
        self.rows[metric] = (float(value), float(std_error))

    def add_estimate(self, metric: str, estimate: CostEstimate) -> None:
        self.add(metric, estimate.mean, estimate.std_error)

    def add_series(self, name: str, values: np.ndarray) -> None:
        self.series[name] = np.asarray(values, dtype=float).tolist()

    def records(self) -> list[ResultRecord]:
        records = [
            ResultRecord(
                experiment_id=self.config.experiment_id,
                config_hash=self.config.config_hash,
                metric=metric,
                value=value,
                std_error=std_error,
                n_paths=self.config.n_paths,
                seed=self.config.seed,
            )
            for metric, (value, std_error) in sorted(self.rows.items())
        ]
        for record in records:
            validate_document("ResultRecord", record.as_document())
        return records


def _mean_nodes(strategy: Strategy) -> np.ndarray:
    return np.mean(strategy.nodes, axis=0)


def _solve_rows(rows: _Collector, spec: ModelSpec, paths: PathBundle) -> tuple[OptimalSolution, np.ndarray]:
    """Solve and record K, θ, the cost formula and the simulated cost of X*."""
    solution = solve(spec, paths)
    riccati, cost = solution.riccati, solution.cost
    simulated = cost_pm(solution.strategy, paths, spec)

    rows.add("K0", riccati.K[0])
    rows.add("theta0", riccati.theta[0])
    rows.add_estimate("optimal_cost_formula", cost.estimate)
    rows.add_estimate("optimal_cost_C0", cost.C0)
    rows.add_estimate("optimal_cost_simulated", simulated.estimate)
    rows.add_estimate(
        "optimal_cost_gap",
        CostEstimate.difference(simulated.pathwise, cost.pathwise, paths.seed),
    )

    rows.add_series("time", paths.grid.times)
    rows.add_series("K", riccati.K)
    rows.add_series("theta", riccati.theta)
    rows.add_series("mean_X_optimal", _mean_nodes(solution.strategy))
    rows.add_series("mean_H_optimal", np.mean(solution.Hstar.values, axis=0))
    return solution, simulated.pathwise


def perturbations(
    spec: ModelSpec, paths: PathBundle, optimal: Strategy, eps: float
) -> list[Strategy]:
    """
    The comparison family: TWAP, block sell, terminal block, and X* shifted by a sine bump
    and by a tilted line, both of size ε(x − E_{t0}[ξ] − d/γ₀).
    """
    grid = paths.grid
    fraction = (grid.times[:-1] - grid.t0) / (grid.T - grid.t0)
    scale = eps * (spec.x - paths.exi[:, :1] - spec.d / spec.gamma0)
    return [
        twap(spec, paths),
        block_sell(spec, paths),
        terminal_block(spec, paths),
        optimal.shifted(scale * np.sin(math.pi * fraction), "bump"),
        optimal.shifted(scale * (1.0 - 2.0 * fraction) / 2.0, "jitter"),
    ]


def _run_solve(config: ExperimentConfig, spec: ModelSpec, paths: PathBundle, rows: _Collector):
    solution, _ = _solve_rows(rows, spec, paths)
    return solution.strategy


def _run_compare(config: ExperimentConfig, spec: ModelSpec, paths: PathBundle, rows: _Collector):
    solution, optimal_pathwise = _solve_rows(rows, spec, paths)
    for strategy in perturbations(spec, paths, solution.strategy, config.experiment["perturbation_eps"]):
        cost = cost_pm(strategy, paths, spec)
        excess = CostEstimate.difference(cost.pathwise, optimal_pathwise, paths.seed)
        rows.add_estimate(f"cost:{strategy.label}", cost.estimate)
        rows.add_estimate(f"excess:{strategy.label}", excess)
        rows.add_series(f"mean_X_{strategy.label}", _mean_nodes(strategy))
        logger.debug(
            f"{strategy.label}: excess cost {excess.mean:.6g} ± {excess.std_error:.3g}"
        )
    return solution.strategy


def _run_approximate(config: ExperimentConfig, spec: ModelSpec, paths: PathBundle, rows: _Collector):
    solution, optimal_pathwise = _solve_rows(rows, spec, paths)
    levels = range(config.experiment["level_min"], config.experiment["level_max"] + 1)
    distances, costs = [], []
    for level in levels:
        approximation = fv_approximate(solution.u, spec, paths, level)
        distance = strategy_metric(approximation, solution.strategy, paths, spec)
        cost = cost_fv(approximation, paths, spec)
        gap = CostEstimate.difference(cost.pathwise, optimal_pathwise, paths.seed)
        rows.add_estimate(f"level_{level:02d}:distance", distance)
        rows.add_estimate(f"level_{level:02d}:cost_fv", cost.estimate)
        rows.add_estimate(f"level_{level:02d}:cost_gap", gap)
        distances.append(distance.mean)
        costs.append(cost.estimate.mean)
    rows.add_series("level", np.array(levels))
    rows.add_series("level_distance", np.array(distances))
    rows.add_series("level_cost_fv", np.array(costs))
    return solution.strategy


def _run_validate(config: ExperimentConfig, spec: ModelSpec, paths: PathBundle, rows: _Collector):
    """Moments behind the integrability conditions, each with a finite-value pass flag."""
    name = config.experiment["strategy"]
    solution = None
    if name == "optimal":
        solution = solve(spec, paths)
        strategy = solution.strategy
    else:
        strategy = STRATEGIES[name](spec, paths)

    dt = paths.grid.dt
    gamma = paths.gamma
    D = deviation(strategy, paths, spec).values
    moments = {
        "terminal_target": gamma[:, -1] * paths.xi**2,
        "running_target": np.sum(gamma[:, :-1] * paths.zeta[:, :-1] ** 2, axis=1) * dt,
        "deviation_energy": np.sum(D[:, :-1] ** 2 / gamma[:, :-1], axis=1) * dt,
    }
    for moment, samples in moments.items():
        estimate = CostEstimate.from_samples(samples, paths.seed)
        finite = math.isfinite(estimate.mean) and math.isfinite(estimate.std_error)
        rows.add_estimate(f"moment:{moment}", estimate)
        rows.add(f"pass:{moment}", 1.0 if finite else 0.0)
        if not finite:
            logger.warning(f"Moment {moment} of strategy {name} is not finite")

    rows.add_series("time", paths.grid.times)
    rows.add_series(f"mean_X_{strategy.label}", _mean_nodes(strategy))
    rows.add_series("mean_D", np.mean(D, axis=0))
    return solution.strategy if solution is not None else None


def _rms(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sqrt(np.mean((np.asarray(a) - np.asarray(b)) ** 2)))


def _oracle_rows(
    config: ExperimentConfig, spec: ModelSpec, paths: PathBundle, solution: OptimalSolution, rows: _Collector
) -> None:
    example = config.example
    times = paths.grid.times
    riccati = solution.riccati
    X = solution.strategy.values
    match example.name:
        case "ow_deterministic" | "ow_random_target":
            rows.add("oracle:K_max_error", np.max(np.abs(riccati.K - ow_K(times, example.rho, example.lam, example.T))))
            rows.add("oracle:strategy_rms_error", _rms(X, ow_optimal_strategy(paths.grid, paths.exi, example)))
        case "nonexistence_52":
            _, theta = ex52_theta(times, spec.sampled().mu, example.rho)
            rows.add("oracle:theta_max_error", np.max(np.abs(riccati.theta - theta)))
            rows.add("oracle:theta_total_variation", total_variation(riccati.theta))
        case "diffusive_resilience_53":
            rows.add("oracle:K_max_error", np.max(np.abs(riccati.K - ex53_K(times, example))))
            rows.add("oracle:strategy_rms_error", _rms(X, ex53_optimal_strategy(paths, example)))
        case "cancellation_54":
            oracle_X, _ = ex54_strategy_and_deviation(paths, example)
            D = deviation(solution.strategy, paths, spec).values
            rows.add("oracle:K_max_error", np.max(np.abs(riccati.K - ow_K(times, example.rho, 0.0, example.T))))
            rows.add("oracle:strategy_rms_error", _rms(X, oracle_X))
            rows.add("oracle:strategy_max_path_variance", np.max(np.var(X, axis=0)))
            rows.add("oracle:deviation_midpoint_variance", np.var(D[:, paths.grid.n_steps // 2]))
        case _:
            raise ConfigurationError(f"No oracle for example {example.name}")


def _run_example(config: ExperimentConfig, spec: ModelSpec, paths: PathBundle, rows: _Collector):
    solution, _ = _solve_rows(rows, spec, paths)
    _oracle_rows(config, spec, paths, solution, rows)
    return solution.strategy


_RUNNERS = {
    "solve": _run_solve,
    "compare": _run_compare,
    "approximate": _run_approximate,
    "validate": _run_validate,
    "example": _run_example,
}


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """
    Simulate the configured ensemble and run the experiment on it.

    Library errors propagate unchanged; the CLI maps them to exit codes.
    """
    start_time = time.perf_counter()
    logger.info(
        f"Starting {config.kind} experiment '{config.experiment_id}' "
        f"({config.n_paths} paths, {config.n_steps} steps, seed {config.seed})"
    )
    spec = config.model_spec()
    paths = simulate(spec, config.n_paths, config.seed, config.threads)
    rows = _Collector(config)
    strategy = _RUNNERS[config.kind](config, spec, paths, rows)
    records = rows.records()
    wall_time = time.perf_counter() - start_time
    logger.info(
        f"Experiment '{config.experiment_id}' produced {len(records)} rows in {wall_time:.4f} seconds"
    )
    return ExperimentResult(
        records=records,
        series=rows.series,
        grid=paths.grid,
        strategy=strategy,
        wall_time=wall_time,
    )
