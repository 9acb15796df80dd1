"""Shared fixtures: environment, model specifications and simulated ensembles"""

import os

import pytest

from optimal_execution_app.config import get_config
from optimal_execution_app.metrics import metrics_registry
from optimal_execution_app.model_core import (
    Coefficient,
    ModelSpec,
    TargetSpec,
    TimeGrid,
    simulate,
)


def pytest_generate_tests():
    populate_environment_variables()


def reset_counters():
    for counter in metrics_registry.counters.values():
        counter.reset()


def _coefficient(value) -> Coefficient:
    return value if isinstance(value, Coefficient) else Coefficient.constant(value)


@pytest.fixture(name="config")
def fixture_config():
    """Every time a test wants a config, give it the environment stub"""
    return get_config()


@pytest.fixture(name="make_spec")
def fixture_make_spec():
    """Factory for model specifications on [0, T]; defaults to the plain OW market with x = 1."""

    def build(
        n_steps=200,
        T=1.0,
        mu=0.0,
        sigma=0.0,
        rho=1.0,
        eta=0.0,
        rbar=0.0,
        lam=0.0,
        gamma0=1.0,
        x=1.0,
        d=0.0,
        targets=None,
    ) -> ModelSpec:
        return ModelSpec(
            grid=TimeGrid(0.0, T, n_steps),
            mu=_coefficient(mu),
            sigma=_coefficient(sigma),
            rho=_coefficient(rho),
            eta=_coefficient(eta),
            rbar=_coefficient(rbar),
            lam=_coefficient(lam),
            gamma0=gamma0,
            targets=targets or TargetSpec(),
            x=x,
            d=d,
        )

    return build


@pytest.fixture(name="ow_spec")
def fixture_ow_spec(make_spec):
    """OW market with a price deviation already present at t0"""
    return make_spec(n_steps=400, d=0.2)


@pytest.fixture(name="ow_paths")
def fixture_ow_paths(ow_spec):
    return simulate(ow_spec, 50, seed=3)


@pytest.fixture(name="stochastic_spec")
def fixture_stochastic_spec(make_spec):
    """Stochastic impact and resilience, risk aversion and a random target tracked by ζ"""
    return make_spec(
        n_steps=100,
        mu=0.1,
        sigma=0.3,
        rho=1.5,
        eta=0.4,
        rbar=0.3,
        lam=1.0,
        d=0.2,
        targets=TargetSpec(
            xi_kind="linear_w3", xi_a=0.1, xi_b=0.5, zeta_kind="conditional_xi"
        ),
    )


@pytest.fixture(name="stochastic_paths")
def fixture_stochastic_paths(stochastic_spec):
    return simulate(stochastic_spec, 300, seed=17)


@pytest.fixture(name="counters")
def fixture_counters():
    """Start from zeroed run counters"""
    reset_counters()
    # Why 'yield'? See: https://docs.pytest.org/en/7.1.x/how-to/fixtures.html#dynamic-scope
    yield metrics_registry
    reset_counters()


@pytest.fixture()
def log_control_file():
    os.environ["LOG_CTRL_FILE"] = "./tests/logcontrol.json"
    yield
    os.environ["LOG_CTRL_FILE"] = ""


@pytest.fixture(name="experiment_file")
def fixture_experiment_file():
    return "./tests/experiment_ow.ini"


def populate_environment_variables():
    """Populate environment variables"""
    os.environ["EXECUTION_APP_OUTPUT_DIR"] = "./results"
    os.environ["LOG_CTRL_FILE"] = ""
    os.environ["SERVICE_NAME"] = "optimal-execution-app"
    os.environ["DEFAULT_N_PATHS"] = "200"
    os.environ["DEFAULT_N_STEPS"] = "50"
    os.environ["DEFAULT_SEED"] = "11"
    os.environ["DEFAULT_THREADS"] = "1"
