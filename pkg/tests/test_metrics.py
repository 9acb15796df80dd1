"""Tests which cover the Prometheus run counters"""

from optimal_execution_app.model_core import TimeGrid, simulate_brownian

SERVICE_PREFIX = "optimal_execution_app"


def test_registry_exposes_every_counter(counters):
    names = {
        "paths_simulated",
        "riccati_solves",
        "riccati_failures",
        "experiments_completed",
        "experiments_failed",
    }
    assert set(counters.counters) == names
    for name in names:
        assert counters.get_sample_value(f"{SERVICE_PREFIX}_{name}_total") == 0.0


def test_simulation_counts_paths(counters):
    """Both the single-worker and the threaded draw count every path once"""
    grid = TimeGrid(0.0, 1.0, 10)
    simulate_brownian(grid, 7, seed=1)
    simulate_brownian(grid, 5, seed=1, threads=2)
    assert counters.get_sample_value(f"{SERVICE_PREFIX}_paths_simulated_total") == 12.0


def test_write_produces_text_exposition(counters, tmp_path):
    counters.counters["experiments_completed"].inc()
    path = tmp_path / "metrics.prom"
    counters.write(str(path))
    text = path.read_text(encoding="utf-8")
    assert f"{SERVICE_PREFIX}_experiments_completed_total 1.0" in text
    assert "_created" not in text
