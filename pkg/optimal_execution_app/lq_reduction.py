"""
Maps between execution strategies and controls of the linear-quadratic problem, the
cross-term transform, and the two controlled state equations.

A control u lives on the left nodes t_0..t_{N-1} like a strategy; its state lives on every
node and starts from H̄_{t0} = d/√γ_{t0} − √γ_{t0}·x.
"""

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .costs import kappa_path
from .errors import AlignmentError, KindError
from .model_core import ModelSpec, PathBundle
from .strategies import (
    PROGRESSIVELY_MEASURABLE,
    DeviationPath,
    Strategy,
    deviation,
    initial_hidden_deviation,
)

ControlFlavor = Literal["raw", "hat"]
StateFlavor = Literal["tilde", "hat"]


@dataclass(frozen=True, eq=False)
class ControlPath:
    """u (raw) or û (cross-term-free) at t_0..t_{N-1}, shape (paths, steps)."""

    values: np.ndarray
    flavor: ControlFlavor = "raw"

    def __post_init__(self):
        if self.flavor not in ("raw", "hat"):
            raise KindError(f"Unknown control flavor {self.flavor}")
        if self.values.ndim != 2:
            raise AlignmentError("Controls are (paths, steps) arrays")


@dataclass(frozen=True, eq=False)
class StatePath:
    """H̃ or Ĥ at t_0..t_N, shape (paths, steps + 1)."""

    values: np.ndarray
    flavor: StateFlavor = "tilde"

    def __post_init__(self):
        if self.flavor not in ("tilde", "hat"):
            raise KindError(f"Unknown state flavor {self.flavor}")


def _on_steps(array: np.ndarray, n_paths: int, n_steps: int) -> np.ndarray:
    """Broadcast to (paths, steps) and lay out step-major for the recursion."""
    return np.ascontiguousarray(np.broadcast_to(array, (n_paths, n_steps)).T)


def _euler_linear(
    initial: np.ndarray | float,
    coefficients: tuple[np.ndarray, ...],
    dt: float,
    dW1: np.ndarray,
    dW2: np.ndarray,
) -> np.ndarray:
    """
    Left-point Euler for dH = (aH + b)ds + (c₁H + e₁)dW¹ + (c₂H + e₂)dW².

    `coefficients` is (a, b, c₁, e₁, c₂, e₂), each broadcastable to (paths, steps).
    """
    n_paths, n_steps = dW1.shape
    a, b, c1, e1, c2, e2 = (_on_steps(c, n_paths, n_steps) for c in coefficients)
    w1, w2 = _on_steps(dW1, n_paths, n_steps), _on_steps(dW2, n_paths, n_steps)
    H = np.empty((n_steps + 1, n_paths))
    H[0] = initial
    for k in range(n_steps):
        h = H[k]
        H[k + 1] = (
            h
            + (a[k] * h + b[k]) * dt
            + (c1[k] * h + e1[k]) * w1[k]
            + (c2[k] * h + e2[k]) * w2[k]
        )
    return np.ascontiguousarray(H.T)


def _check_control(u: ControlPath, flavor: ControlFlavor, paths: PathBundle) -> None:
    if u.flavor != flavor:
        raise KindError(f"Expected a {flavor} control, got {u.flavor}")
    if u.values.shape != (paths.n_paths, paths.grid.n_steps):
        raise AlignmentError(
            f"Control has shape {u.values.shape}, ensemble needs {(paths.n_paths, paths.grid.n_steps)}"
        )


def _shifted_target(paths: PathBundle) -> np.ndarray:
    """√γζ on the left nodes."""
    return np.sqrt(paths.gamma[:, :-1]) * paths.zeta[:, :-1]


def state_Htilde(
    u: ControlPath,
    spec: ModelSpec,
    paths: PathBundle,
    initial: np.ndarray | float | None = None,
) -> StatePath:
    """
    H̃ of the raw problem:

        dH̃ = (½(μ − σ²/4)H̃ − Au)ds + (½σH̃ − (σ + ηr̄)u)dW¹ − η√(1−r̄²)u dW²

    with A = ρ + μ − (σ² + σηr̄)/2. `initial` overrides H̃_{t0}.
    """
    _check_control(u, "raw", paths)
    c = spec.sampled()
    left = slice(None, -1)
    mu, sigma = c.mu[..., left], c.sigma[..., left]
    A = c.control_drift[..., left]
    coefficients = (
        0.5 * (mu - 0.25 * sigma**2),
        -A * u.values,
        0.5 * sigma,
        -c.control_vol1[..., left] * u.values,
        0.0,
        -c.control_vol2[..., left] * u.values,
    )
    start = initial_hidden_deviation(spec) if initial is None else initial
    values = _euler_linear(start, coefficients, paths.grid.dt, paths.dW1, paths.dW2)
    return StatePath(values=values, flavor="tilde")


def state_Hhat(uhat: ControlPath, spec: ModelSpec, paths: PathBundle) -> StatePath:
    """
    Ĥ of the cross-term-free problem: the H̃ dynamics with u replaced by
    û + λ/(λ+κ)·(Ĥ + √γζ).
    """
    _check_control(uhat, "hat", paths)
    c = spec.sampled()
    left = slice(None, -1)
    q = kappa_path(spec).ratio[..., left]
    mu, sigma = c.mu[..., left], c.sigma[..., left]
    A = c.control_drift[..., left]
    vol1, vol2 = c.control_vol1[..., left], c.control_vol2[..., left]
    g = _shifted_target(paths)
    coefficients = (
        0.5 * (mu - 0.25 * sigma**2) - q * A,
        -A * uhat.values - q * A * g,
        0.5 * sigma - q * vol1,
        -vol1 * uhat.values - q * vol1 * g,
        -q * vol2,
        -vol2 * uhat.values - q * vol2 * g,
    )
    values = _euler_linear(
        initial_hidden_deviation(spec), coefficients, paths.grid.dt, paths.dW1, paths.dW2
    )
    return StatePath(values=values, flavor="hat")


def strategy_to_control(
    strategy: Strategy,
    paths: PathBundle,
    spec: ModelSpec,
    deviation_path: DeviationPath | None = None,
) -> ControlPath:
    """u = γ^{−1/2}D^X on [t0, T)."""
    if deviation_path is None:
        deviation_path = deviation(strategy, paths, spec)
    paths.grid.check_nodes(deviation_path.values, "deviation")
    values = deviation_path.values[:, :-1] / np.sqrt(paths.gamma[:, :-1])
    return ControlPath(values=values, flavor="raw")


def control_to_strategy(
    u: ControlPath,
    spec: ModelSpec,
    paths: PathBundle,
    state: StatePath | None = None,
) -> Strategy:
    """
    The strategy whose deviation is γ^{1/2}u: X = γ^{−1/2}(u − H⁰) on [t0, T), X_{t0−} = x,
    X_T = ξ, where H⁰ solves the H̃ equation driven by u.
    """
    _check_control(u, "raw", paths)
    if state is None:
        state = state_Htilde(u, spec, paths)
    paths.grid.check_nodes(state.values, "state")
    values = (u.values - state.values[:, :-1]) / np.sqrt(paths.gamma[:, :-1])
    return Strategy(
        x_pre=spec.x,
        values=values,
        xi_terminal=paths.xi,
        kind=PROGRESSIVELY_MEASURABLE,
        label="from_control",
    )


def remove_cross_terms(
    u: ControlPath, Htilde: StatePath, spec: ModelSpec, paths: PathBundle
) -> ControlPath:
    """û = u − λ/(λ+κ)·(H̃ + √γζ); the state is unchanged."""
    _check_control(u, "raw", paths)
    q = kappa_path(spec).ratio[..., :-1]
    values = u.values - q * (Htilde.values[:, :-1] + _shifted_target(paths))
    return ControlPath(values=values, flavor="hat")


def restore_cross_terms(
    uhat: ControlPath, Hhat: StatePath, spec: ModelSpec, paths: PathBundle
) -> ControlPath:
    """u = û + λ/(λ+κ)·(Ĥ + √γζ)."""
    _check_control(uhat, "hat", paths)
    q = kappa_path(spec).ratio[..., :-1]
    values = uhat.values + q * (Hhat.values[:, :-1] + _shifted_target(paths))
    return ControlPath(values=values, flavor="raw")
