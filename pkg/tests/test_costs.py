"""Tests which cover the cost functionals and their Monte-Carlo estimates"""

import numpy as np
import pytest

from optimal_execution_app.costs import (
    cost_fv,
    cost_J,
    cost_Jhat,
    cost_pm,
    cost_pm_quadratic,
    kappa_path,
)
from optimal_execution_app.errors import AlignmentError, KindError, ModelError
from optimal_execution_app.lq_reduction import (
    ControlPath,
    StatePath,
    remove_cross_terms,
    state_Htilde,
    strategy_to_control,
)
from optimal_execution_app.model_core import CostEstimate, simulate
from optimal_execution_app.strategies import (
    block_sell,
    deviation_pm,
    from_values,
    hidden_deviation,
    no_trade,
    twap,
)


def test_estimate_from_samples():
    estimate = CostEstimate.from_samples(np.array([1.0, 2.0, 3.0, 4.0]), seed=9)
    assert estimate.mean == 2.5
    assert estimate.std_error == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2.0)
    assert (estimate.n_paths, estimate.seed) == (4, 9)
    difference = CostEstimate.difference(np.array([2.0, 3.0]), np.array([1.0, 3.0]), seed=0)
    assert difference.mean == 0.5


def test_estimate_of_a_root_mean():
    """The root of a mean carries the delta-method error"""
    squared = CostEstimate.from_samples(np.array([1.0, 3.0, 5.0, 7.0]), seed=2)
    root = CostEstimate.root_mean(np.array([1.0, 3.0, 5.0, 7.0]), seed=2)
    assert root.mean == pytest.approx(2.0)
    assert root.std_error == pytest.approx(squared.std_error / 4.0)
    assert CostEstimate.root_mean(np.zeros(3), seed=2).std_error == 0.0


def test_block_sell_pays_half_the_impact(make_spec):
    """Selling x at once into an undisturbed market costs γ_{t0}x²/2 on every path"""
    spec = make_spec(n_steps=50, gamma0=2.0)
    paths = simulate(spec, 20, seed=1)
    result = cost_fv(block_sell(spec, paths), paths, spec)
    np.testing.assert_array_equal(result.pathwise, 1.0)
    assert result.estimate.mean == 1.0
    assert result.estimate.std_error == 0.0


def test_holding_pays_the_risk_term(make_spec):
    spec = make_spec(n_steps=400, lam=1.0)
    paths = simulate(spec, 5, seed=1)
    result = cost_fv(no_trade(spec, paths), paths, spec)
    np.testing.assert_allclose(result.pathwise, 1.5, rtol=1e-12)


def test_cost_fv_rejects_measurable_strategies(ow_spec, ow_paths):
    with pytest.raises(KindError):
        cost_fv(from_values(ow_spec, ow_paths, 0.5), ow_paths, ow_spec)


def test_cost_representations_agree(ow_spec, ow_paths):
    """The finite variation and progressively measurable costs agree on a finite variation strategy"""
    strategy = twap(ow_spec, ow_paths)
    fv = cost_fv(strategy, ow_paths, ow_spec).estimate.mean
    pm = cost_pm(strategy, ow_paths, ow_spec).estimate.mean
    assert abs(fv - pm) < 0.02


def test_quadratic_forms_are_the_same_cost(stochastic_spec, stochastic_paths):
    """J^pm, the hidden-deviation form, J and Ĵ are algebraically the same number on every path"""
    strategy = twap(stochastic_spec, stochastic_paths)
    path = deviation_pm(strategy, stochastic_paths, stochastic_spec)
    hidden = hidden_deviation(strategy, path, stochastic_paths)
    pm = cost_pm(strategy, stochastic_paths, stochastic_spec, path).pathwise

    quadratic = cost_pm_quadratic(strategy, path, hidden, stochastic_paths, stochastic_spec).pathwise
    np.testing.assert_allclose(quadratic, pm, rtol=1e-9, atol=1e-10)

    u = strategy_to_control(strategy, stochastic_paths, stochastic_spec, path)
    state = StatePath(hidden.Hbar, "tilde")
    J = cost_J(u, state, stochastic_spec, stochastic_paths).pathwise
    d_term = stochastic_spec.d**2 / (2.0 * stochastic_spec.gamma0)
    np.testing.assert_allclose(J - d_term, pm, rtol=1e-9, atol=1e-10)

    uhat = remove_cross_terms(u, state, stochastic_spec, stochastic_paths)
    Jhat = cost_Jhat(uhat, StatePath(hidden.Hbar, "hat"), stochastic_spec, stochastic_paths).pathwise
    np.testing.assert_allclose(Jhat, J, rtol=1e-9, atol=1e-10)


def test_cross_term_removal_on_euler_state(stochastic_spec, stochastic_paths):
    u = ControlPath(np.full((stochastic_paths.n_paths, stochastic_spec.grid.n_steps), -0.3))
    state = state_Htilde(u, stochastic_spec, stochastic_paths)
    J = cost_J(u, state, stochastic_spec, stochastic_paths)
    uhat = remove_cross_terms(u, state, stochastic_spec, stochastic_paths)
    Jhat = cost_Jhat(uhat, StatePath(state.values, "hat"), stochastic_spec, stochastic_paths)
    np.testing.assert_allclose(Jhat.pathwise, J.pathwise, rtol=1e-9, atol=1e-10)


def test_control_flavors_are_checked(stochastic_spec, stochastic_paths):
    shape = (stochastic_paths.n_paths, stochastic_spec.grid.n_steps)
    state = StatePath(np.zeros((shape[0], shape[1] + 1)))
    with pytest.raises(KindError):
        cost_J(ControlPath(np.zeros(shape), "hat"), state, stochastic_spec, stochastic_paths)
    with pytest.raises(KindError):
        cost_Jhat(ControlPath(np.zeros(shape)), state, stochastic_spec, stochastic_paths)
    with pytest.raises(AlignmentError):
        cost_J(ControlPath(np.zeros((shape[0], shape[1] - 1))), state, stochastic_spec, stochastic_paths)


def test_kappa_weights(stochastic_spec):
    kappa = kappa_path(stochastic_spec)
    np.testing.assert_allclose(kappa.kappa, 1.389)
    np.testing.assert_allclose(kappa.ratio, 1.0 / 2.389)
    np.testing.assert_allclose(kappa.weight, 1.389 / 2.389)


def test_kappa_degeneracy(make_spec):
    """λ + κ = 0 is allowed only where λ = 0"""
    quiet = kappa_path(make_spec(rho=0.0))
    np.testing.assert_array_equal(quiet.ratio, 0.0)
    np.testing.assert_array_equal(quiet.weight, 0.0)
    with pytest.raises(ModelError):
        kappa_path(make_spec(rho=0.0, mu=-2.0, lam=1.0))


def test_costs_are_homogeneous_of_degree_two(stochastic_spec, stochastic_paths):
    """Doubling x, d, ξ and ζ together quadruples every cost on every path"""
    doubled = stochastic_spec.scaled(2.0)
    doubled_paths = simulate(doubled, stochastic_paths.n_paths, stochastic_paths.seed)
    np.testing.assert_array_equal(doubled_paths.gamma, stochastic_paths.gamma)
    np.testing.assert_array_equal(doubled_paths.xi, 2.0 * stochastic_paths.xi)
    for build in (twap, no_trade):
        base = cost_pm(build(stochastic_spec, stochastic_paths), stochastic_paths, stochastic_spec)
        scaled = cost_pm(build(doubled, doubled_paths), doubled_paths, doubled)
        np.testing.assert_allclose(scaled.pathwise, 4.0 * base.pathwise, rtol=1e-12, atol=1e-14)
    base = cost_fv(no_trade(stochastic_spec, stochastic_paths), stochastic_paths, stochastic_spec)
    scaled = cost_fv(no_trade(doubled, doubled_paths), doubled_paths, doubled)
    np.testing.assert_allclose(scaled.pathwise, 4.0 * base.pathwise, rtol=1e-12, atol=1e-14)
