"""
Optimal control of the cross-term-free problem for deterministic coefficients.

The Riccati equation for K reduces to a scalar ODE and is integrated backward from K_T = ½
with classical Runge-Kutta on a grid refined REFINEMENT times. The linear equation for ψ is
solved in closed form for constant ρ > 0 and λ ≥ 0 with σ ≡ η ≡ μ ≡ 0, and vanishes
whenever ξ = 0 and λζ ≡ 0.
"""

import math
import time
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .app_logging import logger
from .costs import kappa_path
from .errors import DomainError, ModelError, SolverError, UnsupportedConfigurationError
from .lq_reduction import ControlPath, StatePath, restore_cross_terms
from .metrics import metrics_registry
from .model_core import CostEstimate, ModelSpec, PathBundle, TimeGrid, running_sum
from .strategies import PROGRESSIVELY_MEASURABLE, Strategy, initial_hidden_deviation

REFINEMENT = 10

_BRANCH_POINT = -math.exp(-1.0)
_HALLEY_ITERATIONS = 100


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    """
    K and the feedback gain θ on the simulation grid, together with their values on the
    refined integration grid. The martingale part L of the Riccati equation is identically
    zero for deterministic coefficients.

    Attributes:
        times: simulation grid nodes.
        K: K at `times`; K[-1] = ½.
        theta: θ at `times`.
        denominator: λ + κ + (σ² + 2σηr̄ + η²)K at `times`.
        fine_times, fine_K, fine_theta: the same on the refined grid.
        factor: refinement factor; fine index factor·k is coarse node k.
    """

    times: np.ndarray
    K: np.ndarray
    theta: np.ndarray
    denominator: np.ndarray
    fine_times: np.ndarray
    fine_K: np.ndarray
    fine_theta: np.ndarray
    factor: int

    L = 0.0


@dataclass(frozen=True, eq=False)
class PsiSolution:
    """ψ at every node per path; φ is zero. `Gamma` is set when the closed form was used."""

    psi: np.ndarray
    Gamma: np.ndarray | None = None

    phi = 0.0


class OptimalCost(NamedTuple):
    pathwise: np.ndarray
    estimate: CostEstimate
    C0: CostEstimate


@dataclass(frozen=True, eq=False)
class OptimalSolution:
    riccati: RiccatiSolution
    psi: PsiSolution
    theta0: np.ndarray
    Hstar: StatePath
    uhat: ControlPath
    u: ControlPath
    strategy: Strategy
    cost: OptimalCost | None = None


def check_solver_hypotheses(spec: ModelSpec, grid: TimeGrid | None = None) -> None:
    """
    Deterministic coefficients, λ ≥ 0, κ ≥ 0, and either λ + κ or σ² + 2σηr̄ + η² bounded
    away from zero on the grid.
    """
    if not spec.is_deterministic:
        raise UnsupportedConfigurationError(
            "The solver handles deterministic coefficients only; random coefficients need a BSDE solver"
        )
    grid = grid or spec.grid
    c = spec.sampled(grid.times)
    if np.any(c.lam < 0.0):
        raise ModelError("λ must be nonnegative")
    if np.any(c.kappa < 0.0):
        index = int(np.argmax(c.kappa < 0.0))
        raise ModelError(f"κ is negative at t={grid.times[index]:.6g}")
    if not (np.min(c.lam + c.kappa) > 0.0 or np.min(c.noise_sq) > 0.0):
        raise ModelError(
            "Neither λ + κ nor σ² + 2σηr̄ + η² is bounded away from zero on the grid"
        )
    kappa_path(spec, grid.times)


def _riccati_terms(spec: ModelSpec, times: np.ndarray) -> dict[str, np.ndarray]:
    c = spec.sampled(times)
    kappa = kappa_path(spec, times)
    q = kappa.ratio
    return {
        "linear": c.mu + q * (q * c.noise_sq - 2.0 * (c.rho + c.mu)),
        "constant": kappa.weight,
        "gain": c.rho + c.mu - q * c.noise_sq,
        "lam_plus_kappa": kappa.lam_plus_kappa,
        "noise_sq": c.noise_sq,
    }


def solve_K(spec: ModelSpec) -> RiccatiSolution:
    """
    Backward RK4 for dK/ds = −[lin·K + λκ/(λ+κ) − (gain·K)²/(λ + κ + c₂K)], K_T = ½.

    Raises SolverError at the first stage whose denominator is not positive.
    """
    check_solver_hypotheses(spec)
    metrics_registry.counters["riccati_solves"].inc()
    start_time = time.perf_counter()
    grid = spec.grid
    fine = grid.refine(REFINEMENT)
    # even indices are refined nodes, odd ones the RK midpoints
    half = grid.refine(2 * REFINEMENT)
    half_times = half.times
    terms = _riccati_terms(spec, half_times)
    linear, constant, gain = terms["linear"], terms["constant"], terms["gain"]
    lam_plus_kappa, noise_sq = terms["lam_plus_kappa"], terms["noise_sq"]

    def slope(index: int, K: float) -> float:
        denominator = lam_plus_kappa[index] + noise_sq[index] * K
        if not denominator > 0.0:
            metrics_registry.counters["riccati_failures"].inc()
            node = index // (2 * REFINEMENT)
            raise SolverError(
                f"Riccati denominator {denominator:.3g} is not positive at t={half_times[index]:.6g}",
                node=node,
                time=float(half_times[index]),
            )
        return -(linear[index] * K + constant[index] - (gain[index] * K) ** 2 / denominator)

    h = fine.dt
    fine_K = np.empty(fine.n_steps + 1)
    fine_K[-1] = 0.5
    for i in range(fine.n_steps, 0, -1):
        j = 2 * i
        K = fine_K[i]
        k1 = slope(j, K)
        k2 = slope(j - 1, K - 0.5 * h * k1)
        k3 = slope(j - 1, K - 0.5 * h * k2)
        k4 = slope(j - 2, K - h * k3)
        fine_K[i - 1] = K - h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0

    fine_denominator = lam_plus_kappa[::2] + noise_sq[::2] * fine_K
    if np.any(fine_denominator <= 0.0):
        index = int(np.argmax(fine_denominator <= 0.0))
        metrics_registry.counters["riccati_failures"].inc()
        raise SolverError(
            "Riccati denominator is not positive on the integration grid",
            node=index // REFINEMENT,
            time=float(fine.times[index]),
        )
    fine_theta = gain[::2] * fine_K / fine_denominator
    elapsed_time = time.perf_counter() - start_time
    logger.debug(
        f"Integrated the Riccati equation over {fine.n_steps} steps in {elapsed_time:.4f} seconds, K0={fine_K[0]:.10g}"
    )
    coarse = slice(None, None, REFINEMENT)
    return RiccatiSolution(
        times=grid.times,
        K=fine_K[coarse].copy(),
        theta=fine_theta[coarse].copy(),
        denominator=fine_denominator[coarse].copy(),
        fine_times=fine.times,
        fine_K=fine_K,
        fine_theta=fine_theta,
        factor=REFINEMENT,
    )


def compute_theta(riccati: RiccatiSolution, spec: ModelSpec) -> np.ndarray:
    """θ = (ρ + μ − λ/(λ+κ)·c₂)K / (λ + κ + c₂K) at the grid nodes."""
    terms = _riccati_terms(spec, riccati.times)
    denominator = terms["lam_plus_kappa"] + terms["noise_sq"] * riccati.K
    return terms["gain"] * riccati.K / denominator


def _check_psi_family(spec: ModelSpec) -> None:
    for name in ("sigma", "eta", "mu"):
        if not getattr(spec, name).is_zero:
            raise UnsupportedConfigurationError(
                f"Nonzero targets are supported only for {name} ≡ 0"
            )
    if not spec.rho.is_constant or not spec.rho.value > 0.0:
        raise UnsupportedConfigurationError("Nonzero targets need a constant ρ > 0")
    if not spec.lam.is_constant or spec.lam.value < 0.0:
        raise UnsupportedConfigurationError("Nonzero targets need a constant λ ≥ 0")


def _tail_integral(values: np.ndarray, times: np.ndarray) -> np.ndarray:
    """∫_s^T values dr by the trapezoidal rule, exactly zero at T."""
    return -cumulative_trapezoid(values[::-1], times[::-1], initial=0.0)[::-1]


def solve_psi(spec: ModelSpec, paths: PathBundle, riccati: RiccatiSolution) -> PsiSolution:
    """
    ψ per path. In the supported family

        ψ_s = Γ_s⁻¹√γ₀(−½Γ_T·E_s[ξ] − ρλ/(λ+ρ)·∫_s^T Γ_r(1 − K_r)E_s[ζ_r]dr),
        Γ_s = exp(−ρ∫_{t0}^s (λ/(λ+ρ) + θ_r)dr),

    with E_s[ζ_r] = ζ_r for deterministic ζ and E_s[ζ_r] = E_s[ξ] when ζ = E[ξ | ·].
    """
    targets = spec.targets
    shape = (paths.n_paths, paths.grid.n_steps + 1)
    if targets.xi_is_zero and (spec.lam.is_zero or targets.zeta_is_zero):
        return PsiSolution(psi=np.zeros(shape))
    _check_psi_family(spec)

    rho, lam = spec.rho.value, spec.lam.value
    fine_times = riccati.fine_times
    exponent = cumulative_trapezoid(lam / (lam + rho) + riccati.fine_theta, fine_times, initial=0.0)
    fine_Gamma = np.exp(-rho * exponent)
    coarse = slice(None, None, riccati.factor)
    Gamma = fine_Gamma[coarse]
    weight = fine_Gamma * (1.0 - riccati.fine_K)
    running_rate = rho * lam / (lam + rho)

    inner = -0.5 * fine_Gamma[-1] * paths.exi
    if lam > 0.0 and not targets.zeta_is_zero:
        match targets.zeta_kind:
            case "conditional_xi":
                inner = inner - running_rate * _tail_integral(weight, fine_times)[coarse] * paths.exi
            case _:
                zeta = targets.zeta.at(fine_times)
                inner = inner - running_rate * _tail_integral(weight * zeta, fine_times)[coarse]
    psi = math.sqrt(spec.gamma0) * inner / Gamma
    return PsiSolution(psi=np.array(np.broadcast_to(psi, shape)), Gamma=Gamma)


def compute_theta0(
    psi: PsiSolution, riccati: RiccatiSolution, spec: ModelSpec, paths: PathBundle
) -> np.ndarray:
    """θ⁰ = (Aψ + λ/(λ+κ)·√γζ·c₂K) / (λ + κ + c₂K), per path at every node."""
    c = spec.sampled(riccati.times)
    q = kappa_path(spec, riccati.times).ratio
    shifted_target = np.sqrt(paths.gamma) * paths.zeta
    numerator = c.control_drift * psi.psi + q * shifted_target * c.noise_sq * riccati.K
    return numerator / riccati.denominator


def optimal_state(
    spec: ModelSpec, paths: PathBundle, theta: np.ndarray, theta0: np.ndarray
) -> StatePath:
    """
    Ĥ* of dĤ* = Ĥ*d𝒴 + d𝒵 through Ĥ* = ℰ(𝒴)(Ĥ*₀ + ∫ℰ(𝒴)⁻¹(d𝒵 − d[𝒴, 𝒵])).

    Stochastic integrals are left-point sums; the ds-part of log ℰ(𝒴) uses the
    trapezoidal rule.
    """
    grid = paths.grid
    c = spec.sampled()
    q = kappa_path(spec).ratio
    A, vol1, vol2 = c.control_drift, c.control_vol1, c.control_vol2
    gain = q + theta
    y_drift = 0.5 * c.mu - 0.125 * c.sigma**2 - A * gain
    y1 = 0.5 * c.sigma - vol1 * gain
    y2 = -vol2 * gain
    shift = theta0 - np.sqrt(paths.gamma) * paths.zeta * q
    z_drift, z1, z2 = A * shift, vol1 * shift, vol2 * shift

    left = slice(None, -1)
    log_exponential = cumulative_trapezoid(
        y_drift - 0.5 * (y1**2 + y2**2), grid.times, initial=0.0
    ) + running_sum(y1[..., left] * paths.dW1 + y2[..., left] * paths.dW2)
    exponential = np.exp(log_exponential)
    increments = (
        (z_drift - y1 * z1 - y2 * z2)[..., left] * grid.dt
        + z1[..., left] * paths.dW1
        + z2[..., left] * paths.dW2
    ) / exponential[..., left]
    values = exponential * (initial_hidden_deviation(spec) + running_sum(increments))
    return StatePath(values=np.array(np.broadcast_to(values, paths.gamma.shape)), flavor="hat")


def optimal_strategy(
    spec: ModelSpec,
    paths: PathBundle,
    riccati: RiccatiSolution,
    psi: PsiSolution,
    theta0: np.ndarray,
) -> OptimalSolution:
    """
    û* = θĤ* − θ⁰, u* = û* + λ/(λ+κ)(Ĥ* + √γζ), and X* = γ^{−1/2}(u* − Ĥ*) on [t0, T)
    with X_{t0−} = x and X_T = ξ.
    """
    Hstar = optimal_state(spec, paths, riccati.theta, theta0)
    uhat = ControlPath(
        values=(riccati.theta * Hstar.values - theta0)[:, :-1], flavor="hat"
    )
    u = restore_cross_terms(uhat, Hstar, spec, paths)
    values = (u.values - Hstar.values[:, :-1]) / np.sqrt(paths.gamma[:, :-1])
    strategy = Strategy(
        x_pre=spec.x,
        values=values,
        xi_terminal=paths.xi,
        kind=PROGRESSIVELY_MEASURABLE,
        label="optimal",
    )
    return OptimalSolution(
        riccati=riccati,
        psi=psi,
        theta0=theta0,
        Hstar=Hstar,
        uhat=uhat,
        u=u,
        strategy=strategy,
    )


def optimal_cost(
    spec: ModelSpec,
    paths: PathBundle,
    riccati: RiccatiSolution,
    psi: PsiSolution,
    theta0: np.ndarray,
) -> OptimalCost:
    """
    K₀h² − 2ψ₀h + C₀ − d²/(2γ₀) with h = d/√γ₀ − √γ₀x, where the expectations in C₀ are
    Monte-Carlo averages over `paths` and the ds-integrals left Riemann sums.
    """
    c = spec.sampled(riccati.times)
    kappa = kappa_path(spec, riccati.times)
    q = kappa.ratio
    shifted_target = np.sqrt(paths.gamma) * paths.zeta
    target_sq = shifted_target**2
    running = (
        riccati.K * q**2 * target_sq * c.noise_sq
        + kappa.weight * target_sq
        - theta0**2 * riccati.denominator
        + 2.0 * q * shifted_target * psi.psi * c.control_drift
    )
    C0_pathwise = 0.5 * paths.gamma[:, -1] * paths.xi**2 + np.sum(
        running[:, :-1], axis=1
    ) * paths.grid.dt
    h = initial_hidden_deviation(spec)
    pathwise = (
        riccati.K[0] * h**2
        - 2.0 * psi.psi[:, 0] * h
        + C0_pathwise
        - spec.d**2 / (2.0 * spec.gamma0)
    )
    return OptimalCost(
        pathwise=pathwise,
        estimate=CostEstimate.from_samples(pathwise, paths.seed),
        C0=CostEstimate.from_samples(C0_pathwise, paths.seed),
    )


def solve(spec: ModelSpec, paths: PathBundle) -> OptimalSolution:
    """K, θ, ψ, θ⁰, the optimal state, control and strategy, and the optimal cost."""
    riccati = solve_K(spec)
    psi = solve_psi(spec, paths, riccati)
    theta0 = compute_theta0(psi, riccati, spec, paths)
    solution = optimal_strategy(spec, paths, riccati, psi, theta0)
    cost = optimal_cost(spec, paths, riccati, psi, theta0)
    logger.info(
        f"Solved on {paths.grid.n_steps} steps and {paths.n_paths} paths: K0={riccati.K[0]:.10g}, "
        f"optimal cost {cost.estimate.mean:.10g} ± {cost.estimate.std_error:.3g}"
    )
    return replace(solution, cost=cost)


def lambert_w0(z: float | np.ndarray) -> float | np.ndarray:
    """
    Principal branch of the Lambert W function for real z ≥ −1/e.

    Starts from the branch-point series near −1/e and from log z − log log z elsewhere,
    then refines with Halley's method.
    """
    values = np.asarray(z, dtype=float)
    if np.any(np.isnan(values)) or np.any(values < _BRANCH_POINT):
        raise DomainError(f"Lambert W0 is defined for z ≥ −1/e, got {z}")
    near_branch = np.abs(values - _BRANCH_POINT) <= 1.5
    with np.errstate(divide="ignore", invalid="ignore"):
        log_z = np.log(values + (values == 0.0))
        w = np.where(
            near_branch,
            np.sqrt(np.maximum(2.0 * math.e * values + 2.0, 0.0)) - 1.0,
            log_z - np.log(log_z + (log_z == 0.0)),
        )
    for _ in range(_HALLEY_ITERATIONS):
        exp_w = np.exp(w)
        residual = w * exp_w - values
        w_plus = w + (w != -1.0)
        step = residual / (exp_w * w_plus - (w + 2.0) * residual / (2.0 * w_plus))
        w = w - step
        if np.all(np.abs(step) < 0.7e-16 * (2.0 + np.abs(w))):
            break
    return float(w) if w.ndim == 0 else w
