"""
Explicit solutions of special configurations, used as oracles for the solver and the
simulator.

Every preset uses x = 1, d = 0.2γ₀, ρ = 1 and T = 1 unless it overrides them:

    ow_deterministic         σ = η = μ = 0, λ = 1, constant ξ, ζ = ξ
    ow_random_target         σ = η = μ = 0, λ = 0, ξ = 0.5·W³_T
    nonexistence_52          σ = η = λ = 0, μ a clipped Brownian bridge path
    diffusive_resilience_53  σ = 0, η = 1, r̄ = 0, λ = 0
    cancellation_54          σ = η = 0.5, r̄ = −1, λ = 0
"""

import math
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import ConfigurationError, DomainError, ModelError
from .model_core import (
    Coefficient,
    ModelSpec,
    PathBundle,
    SampledCoefficients,
    TargetSpec,
    TimeGrid,
    bridge_coefficient,
    running_sum,
)
from .solver import lambert_w0

MuKind = Literal["zero", "bridge", "smooth"]


@dataclass(frozen=True)
class ExampleConfig:
    name: str
    description: str
    rho: float = 1.0
    lam: float = 0.0
    sigma: float = 0.0
    eta: float = 0.0
    rbar: float = 0.0
    gamma0: float = 1.0
    T: float = 1.0
    x: float = 1.0
    d: float = 0.2
    xi_kind: str = "constant"
    xi_a: float = 0.0
    xi_b: float = 0.0
    zeta_kind: str = "zero"
    mu_kind: MuKind = "zero"
    mu_amplitude: float = 1.0
    mu_clip: float = 0.5
    mu_seed: int = 7

    @property
    def noise_sq(self) -> float:
        return self.sigma**2 + self.eta**2 + 2.0 * self.sigma * self.eta * self.rbar

    @property
    def kappa(self) -> float:
        """κ for μ ≡ 0."""
        return 0.5 * (2.0 * self.rho - self.noise_sq)

    def mu_coefficient(self) -> Coefficient:
        match self.mu_kind:
            case "zero":
                return Coefficient.constant(0.0)
            case "bridge":
                return bridge_coefficient(
                    self.T, self.mu_amplitude, self.mu_clip, self.mu_seed
                )
            case "smooth":
                amplitude, period = self.mu_clip, self.T
                return Coefficient.from_function(
                    lambda t: amplitude * np.sin(2.0 * math.pi * t / period)
                )
        raise ConfigurationError(f"Unknown drift kind {self.mu_kind}")


EXAMPLES: dict[str, ExampleConfig] = {
    config.name: config
    for config in (
        ExampleConfig(
            name="ow_deterministic",
            description="Constant impact and resilience, risk aversion λ=1, constant terminal and running target",
            lam=1.0,
            xi_a=0.25,
            zeta_kind="conditional_xi",
        ),
        ExampleConfig(
            name="ow_random_target",
            description="Constant impact and resilience, terminal target 0.5·W³_T revealed over time",
            xi_kind="linear_w3",
            xi_b=0.5,
        ),
        ExampleConfig(
            name="nonexistence_52",
            description="Impact drift along a clipped Brownian bridge; no finite variation minimizer",
            mu_kind="bridge",
        ),
        ExampleConfig(
            name="diffusive_resilience_53",
            description="Deterministic impact with diffusive resilience η=1; Lambert-W Riccati solution",
            eta=1.0,
        ),
        ExampleConfig(
            name="cancellation_54",
            description="σ=η=0.5 with r̄=−1: stochastic impact and resilience, deterministic optimal strategy",
            sigma=0.5,
            eta=0.5,
            rbar=-1.0,
        ),
    )
}


def get_example(name: str) -> ExampleConfig:
    try:
        return EXAMPLES[name]
    except KeyError as e:
        raise ConfigurationError(
            f"Unknown example '{name}', expected one of {sorted(EXAMPLES)}"
        ) from e


def example_spec(config: ExampleConfig, n_steps: int) -> ModelSpec:
    """ModelSpec of an example on a uniform grid over [0, T]."""
    targets = TargetSpec(
        xi_kind=config.xi_kind,
        xi_a=config.xi_a,
        xi_b=config.xi_b,
        zeta_kind=config.zeta_kind,
    )
    return ModelSpec(
        grid=TimeGrid(0.0, config.T, n_steps),
        mu=config.mu_coefficient(),
        sigma=Coefficient.constant(config.sigma),
        rho=Coefficient.constant(config.rho),
        eta=Coefficient.constant(config.eta),
        rbar=Coefficient.constant(config.rbar),
        lam=Coefficient.constant(config.lam),
        gamma0=config.gamma0,
        targets=targets,
        x=config.x,
        d=config.d,
    )


def ow_K(s: np.ndarray | float, rho: float, lam: float, T: float) -> np.ndarray:
    """K for constant impact and resilience: tanh form for λ > 0, 1/(2 + (T−s)ρ) for λ = 0."""
    if not rho > 0 or lam < 0:
        raise DomainError("Need ρ > 0 and λ ≥ 0")
    remaining = T - np.asarray(s, dtype=float)
    if lam == 0.0:
        return 1.0 / (2.0 + remaining * rho)
    root = math.sqrt(lam * (rho + lam))
    tanh = np.tanh(math.sqrt(lam) * rho * remaining / math.sqrt(lam + rho))
    return 0.5 * (lam * tanh + root) / ((0.5 * rho + lam) * tanh + root)


def ow_gamma(times: np.ndarray, rho: float, lam: float, T: float) -> np.ndarray:
    """
    Γ_s = exp(−ρ/(λ+ρ)·(λ(s − t0) + ρ∫_{t0}^s K_r dr)); the integral is trapezoidal on
    `times` for λ > 0 and exact for λ = 0.
    """
    times = np.asarray(times, dtype=float)
    t0 = times[0]
    if lam == 0.0:
        return (2.0 + (T - times) * rho) / (2.0 + (T - t0) * rho)
    integral = cumulative_trapezoid(ow_K(times, rho, lam, T), times, initial=0.0)
    return np.exp(-rho / (lam + rho) * (lam * (times - t0) + rho * integral))


def _fine_targets(
    grid: TimeGrid, exi: np.ndarray, factor: int
) -> tuple[np.ndarray, np.ndarray]:
    """Refined nodes and E_s[ξ] held constant between coarse nodes."""
    fine = grid.refine(factor)
    held = np.repeat(exi[:, :-1], factor, axis=1)
    return fine.times, np.concatenate((held, exi[:, -1:]), axis=1)


def ow_psi(
    grid: TimeGrid,
    exi: np.ndarray,
    config: ExampleConfig,
    zeta: Callable[[np.ndarray], np.ndarray] | None = None,
    factor: int = 10,
) -> np.ndarray:
    """
    ψ_s = Γ_s⁻¹√γ₀(−½Γ_T·E_s[ξ] − ρλ/(λ+ρ)∫_s^T Γ_r(1 − K_r)E_s[ζ_r]dr) at the coarse nodes.

    `zeta` is a deterministic running target; without it the running target follows
    `config.zeta_kind`.
    """
    rho, lam, T = config.rho, config.lam, config.T
    fine_times = grid.refine(factor).times
    Gamma = ow_gamma(fine_times, rho, lam, T)
    weight = Gamma * (1.0 - ow_K(fine_times, rho, lam, T))
    coarse = slice(None, None, factor)
    inner = -0.5 * Gamma[-1] * exi
    rate = rho * lam / (lam + rho)
    # tails run from T, so they hold −∫_s^T
    if zeta is not None:
        tail = cumulative_trapezoid((weight * zeta(fine_times))[::-1], fine_times[::-1], initial=0.0)
        inner = inner + rate * tail[::-1][coarse]
    elif config.zeta_kind == "conditional_xi":
        tail = cumulative_trapezoid(weight[::-1], fine_times[::-1], initial=0.0)
        inner = inner + rate * tail[::-1][coarse] * exi
    return math.sqrt(config.gamma0) * inner / Gamma[coarse]


def ow_optimal_strategy(
    grid: TimeGrid,
    exi: np.ndarray,
    config: ExampleConfig,
    zeta: Callable[[np.ndarray], np.ndarray] | None = None,
    factor: int = 10,
) -> np.ndarray:
    """
    X* on [t0, T) for constant impact and resilience, shape (paths, steps).

    For λ = 0 this is the deterministic program toward E_{t0}[ξ] plus the left-point sum
    Σ_{r<s}(1 + (s−r)ρ)/(2 + (T−r)ρ)·ΔE_r[ξ]. For λ > 0 it is

        ρ/(λ+ρ)(1−K_s)Γ_s(x − d/γ₀ + ρ/(λ+ρ)∫Γ_r⁻¹(λζ_r − ρψ_r/√γ₀)dr)
            + ρ/(λ+ρ)(λζ_s/ρ − ψ_s/√γ₀)

    with the integral taken on the refined grid.
    """
    rho, lam, T = config.rho, config.lam, config.T
    x_eff = config.x - config.d / config.gamma0
    times = grid.times[:-1]
    if lam == 0.0:
        start = exi[:, :1]
        steps = np.diff(exi, axis=1) / (2.0 + (T - grid.times[:-1]) * rho)
        # Σ_{k<j} (1 + (t_j − t_k)ρ)a_k = (1 + t_jρ)Σa_k − ρΣt_k·a_k
        level = running_sum(steps)[:, :-1]
        moment = running_sum(steps * grid.times[:-1])[:, :-1]
        fluctuation = (1.0 + times * rho) * level - rho * moment
        return (x_eff - start) * (1.0 + (T - times) * rho) / (2.0 + (T - grid.t0) * rho) + start + fluctuation

    fine_times, fine_exi = _fine_targets(grid, exi, factor)
    psi = ow_psi(grid.refine(factor), fine_exi, config, zeta=zeta, factor=1)
    if zeta is not None:
        running = np.broadcast_to(zeta(fine_times), fine_exi.shape)
    elif config.zeta_kind == "conditional_xi":
        running = fine_exi
    else:
        running = np.zeros_like(fine_exi)
    Gamma = ow_gamma(fine_times, rho, lam, T)
    K = ow_K(fine_times, rho, lam, T)
    share = rho / (lam + rho)
    root = math.sqrt(config.gamma0)
    integral = cumulative_trapezoid(
        (lam * running - rho * psi / root) / Gamma, fine_times, initial=0.0
    )
    values = share * (1.0 - K) * Gamma * (x_eff + share * integral) + share * (
        lam * running / rho - psi / root
    )
    return values[:, ::factor][:, :-1]


def _check_diffusive(config: ExampleConfig) -> None:
    if not config.kappa > 0.0 or not config.noise_sq > 0.0:
        raise ModelError("The diffusive-resilience form needs κ > 0 and σ² + η² + 2σηr̄ > 0")


def ex53_K(s: np.ndarray | float, config: ExampleConfig) -> np.ndarray:
    """K_s = (κ/c₂) / W((κ/c₂)·exp(c − ρ²s/c₂)) with c = ln 2 + (2κ + ρ²T)/c₂."""
    _check_diffusive(config)
    noise_sq, kappa, rho = config.noise_sq, config.kappa, config.rho
    ratio = kappa / noise_sq
    offset = math.log(2.0) + (2.0 * kappa + rho**2 * config.T) / noise_sq
    argument = ratio * np.exp(offset - rho**2 * np.asarray(s, dtype=float) / noise_sq)
    return ratio / lambert_w0(argument)


def ex53_theta(s: np.ndarray | float, config: ExampleConfig) -> np.ndarray:
    """θ = ρK/(c₂K + κ)."""
    K = ex53_K(s, config)
    return config.rho * K / (config.noise_sq * K + config.kappa)


def ex53_optimal_strategy(paths: PathBundle, config: ExampleConfig) -> np.ndarray:
    """
    X*_s = (x − d/γ₀)(1 − θ_s)·exp(−(ρ − σ² − σηr̄)∫θ − (c₂/2)∫θ² − (σ + ηr̄)∫θdW¹
    − η√(1−r̄²)∫θdW²), ds-integrals trapezoidal and stochastic integrals left-point.
    """
    grid = paths.grid
    times = grid.times
    theta = ex53_theta(times, config)
    sigma, eta, rbar = config.sigma, config.eta, config.rbar
    drift = cumulative_trapezoid(
        (config.rho - sigma**2 - sigma * eta * rbar) * theta
        + 0.5 * config.noise_sq * theta**2,
        times,
        initial=0.0,
    )
    noise = running_sum(
        theta[:-1]
        * ((sigma + eta * rbar) * paths.dW1 + eta * math.sqrt(max(1.0 - rbar**2, 0.0)) * paths.dW2)
    )
    x_eff = config.x - config.d / config.gamma0
    values = x_eff * (1.0 - theta) * np.exp(-drift - noise)
    return values[:, :-1]


def ex54_strategy_and_deviation(
    paths: PathBundle, config: ExampleConfig
) -> tuple[np.ndarray, np.ndarray]:
    """
    X*_s = (x − d/γ₀)(1 + (T−s)ρ)/(2 + Tρ) on [t0, T) and
    D_s = γ₀(x − d/γ₀)(1 + Tρ)/(2 + Tρ)·exp(∫ηdW¹ − ½∫η²ds) at the same nodes.
    """
    if config.rbar != -1.0 or config.eta != config.sigma:
        raise ModelError("The cancellation form needs r̄ = −1 and η = σ")
    grid = paths.grid
    times = grid.times[:-1]
    rho, T = config.rho, config.T
    x_eff = config.x - config.d / config.gamma0
    X = np.broadcast_to(x_eff * (1.0 + (T - times) * rho) / (2.0 + T * rho), (paths.n_paths, grid.n_steps))
    exponent = running_sum(config.eta * paths.dW1 - 0.5 * config.eta**2 * grid.dt)
    D = config.gamma0 * x_eff * (1.0 + T * rho) / (2.0 + T * rho) * np.exp(exponent[:, :-1])
    return np.array(X), D


def ex52_theta(
    times: np.ndarray, mu: np.ndarray, rho: float
) -> tuple[np.ndarray, np.ndarray]:
    """
    K_s = e^{∫_s^Tμ}(∫_s^T 2(ρ+μ_r)²/(2ρ+μ_r)·e^{∫_r^Tμ}dr + 2)⁻¹ and
    θ_s = 2(ρ+μ_s)K_s/(2ρ+μ_s), all integrals trapezoidal on `times`.
    """
    times = np.asarray(times, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if np.any(2.0 * rho + mu <= 0.0):
        raise ModelError("2ρ + μ must stay positive")

    def tail(values: np.ndarray) -> np.ndarray:
        return -cumulative_trapezoid(values[::-1], times[::-1], initial=0.0)[::-1]

    growth = np.exp(tail(mu))
    K = growth / (tail(2.0 * (rho + mu) ** 2 / (2.0 * rho + mu) * growth) + 2.0)
    theta = 2.0 * (rho + mu) * K / (2.0 * rho + mu)
    return K, theta


def ex52_optimal_state(
    times: np.ndarray, mu: np.ndarray, theta: np.ndarray, rho: float, h0: float
) -> np.ndarray:
    """Ĥ*_s = h0·exp(∫_{t0}^s μ_r/2 − (ρ + μ_r)θ_r dr)."""
    return h0 * np.exp(
        cumulative_trapezoid(0.5 * mu - (rho + mu) * theta, times, initial=0.0)
    )


def total_variation(values: np.ndarray) -> np.ndarray:
    """Σ|Δvalues| along the last axis."""
    return np.sum(np.abs(np.diff(values, axis=-1)), axis=-1)


def riccati_rhs(K: np.ndarray, c: SampledCoefficients) -> np.ndarray:
    """dK/ds for deterministic coefficients and L ≡ 0."""
    lam_plus_kappa = c.lam + c.kappa
    ratio = np.divide(c.lam, lam_plus_kappa, out=np.zeros_like(lam_plus_kappa), where=lam_plus_kappa != 0.0)
    bracket = (
        (c.mu + ratio * (ratio * c.noise_sq - 2.0 * (c.rho + c.mu))) * K
        + ratio * c.kappa
        - ((c.rho + c.mu - ratio * c.noise_sq) * K) ** 2 / (lam_plus_kappa + c.noise_sq * K)
    )
    return -bracket


def riccati_residual(times: np.ndarray, K: np.ndarray, spec: ModelSpec) -> np.ndarray:
    """Centered-difference residual of the Riccati ODE at the interior nodes."""
    times = np.asarray(times, dtype=float)
    derivative = (K[2:] - K[:-2]) / (times[2:] - times[:-2])
    return derivative - riccati_rhs(K[1:-1], spec.sampled(times[1:-1]))
