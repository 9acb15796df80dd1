"""
Model primitives and path simulation.

The driving noise is a three-dimensional Brownian motion (W¹, W², W³): W¹ drives the price
impact γ, W¹ and W² together drive the resilience R through W^R = r̄W¹ + √(1−r̄²)W², and W³
carries the information about a random terminal target ξ = a + b·W³_T.

All processes live on the nodes t_0 < ... < t_N of a uniform TimeGrid. Arrays indexed by
node have N+1 columns, increments have N columns, and the leading axis is always the path.
γ and ν are built as exact exponentials of left-point grid sums, so they are strictly
positive on every path.
"""

import asyncio
import math
import os
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Literal

import numpy as np

from .app_logging import logger
from .errors import AlignmentError, ConfigurationError, DomainError
from .metrics import metrics_registry

CoefficientKind = Literal["constant", "function", "samples", "paths"]
XiKind = Literal["constant", "linear_w3"]
ZetaKind = Literal["zero", "function", "conditional_xi"]

# Philox keys are two 64-bit words: (seed, path index). Seeds stay within a signed
# 64-bit long, the type experiment files declare for them.
MAX_SEED = 2**63 - 1


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [t0, T] with n_steps steps."""

    t0: float
    T: float
    n_steps: int

    def __post_init__(self):
        if not self.T > self.t0:
            raise ConfigurationError(f"Horizon T={self.T} must exceed t0={self.t0}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ConfigurationError(f"n_steps must be a positive integer, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return (self.T - self.t0) / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t0, self.T, self.n_steps + 1)

    def refine(self, factor: int) -> "TimeGrid":
        """Grid with `factor` substeps per step; every node of self is a node of the result."""
        return TimeGrid(self.t0, self.T, self.n_steps * factor)

    def check_nodes(self, array: np.ndarray, name: str) -> None:
        if array.shape[-1] != self.n_steps + 1:
            raise AlignmentError(
                f"{name} has {array.shape[-1]} nodes, grid has {self.n_steps + 1}"
            )

    def check_steps(self, array: np.ndarray, name: str) -> None:
        if array.shape[-1] != self.n_steps:
            raise AlignmentError(
                f"{name} has {array.shape[-1]} steps, grid has {self.n_steps}"
            )


@dataclass(frozen=True, eq=False)
class Coefficient:
    """
    A bounded coefficient process s ↦ c_s.

    Deterministic coefficients are constants, callables of time, or samples that are
    linearly interpolated. The `paths` kind holds per-path node values on one fixed grid;
    such coefficients can be simulated but the solver rejects them.
    """

    kind: CoefficientKind
    value: float = 0.0
    function: Callable[[np.ndarray], np.ndarray] | None = None
    sample_times: np.ndarray | None = None
    sample_values: np.ndarray | None = None

    @classmethod
    def constant(cls, value: float) -> "Coefficient":
        return cls(kind="constant", value=float(value))

    @classmethod
    def from_function(cls, function: Callable[[np.ndarray], np.ndarray]) -> "Coefficient":
        return cls(kind="function", function=function)

    @classmethod
    def from_samples(cls, times: np.ndarray, values: np.ndarray) -> "Coefficient":
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.shape != values.shape or times.ndim != 1:
            raise ConfigurationError("Coefficient samples need matching 1-d time and value arrays")
        return cls(kind="samples", sample_times=times, sample_values=values)

    @classmethod
    def from_path_samples(cls, values: np.ndarray) -> "Coefficient":
        values = np.asarray(values, dtype=float)
        if values.ndim != 2:
            raise ConfigurationError("Path-sampled coefficients need a (paths, nodes) array")
        return cls(kind="paths", sample_values=values)

    @property
    def is_deterministic(self) -> bool:
        return self.kind != "paths"

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    @property
    def is_zero(self) -> bool:
        return self.kind == "constant" and self.value == 0.0

    def at(self, times: np.ndarray) -> np.ndarray:
        """Values at `times`; shape (len(times),), or (paths, len(times)) for the `paths` kind."""
        times = np.asarray(times, dtype=float)
        match self.kind:
            case "constant":
                return np.full(times.shape, self.value)
            case "function":
                return np.broadcast_to(
                    np.asarray(self.function(times), dtype=float), times.shape
                ).copy()
            case "samples":
                return np.interp(times, self.sample_times, self.sample_values)
            case "paths":
                if self.sample_values.shape[-1] != times.shape[-1]:
                    raise AlignmentError(
                        "Path-sampled coefficient can only be read on the grid it was sampled on"
                    )
                return self.sample_values
        raise ConfigurationError(f"Unknown coefficient kind {self.kind}")


def bridge_coefficient(
    T: float,
    amplitude: float,
    clip: float,
    seed: int,
    t0: float = 0.0,
    base_steps: int = 100_000,
) -> Coefficient:
    """
    One sample path of a Brownian bridge on [t0, T], scaled by `amplitude` and clipped to
    [−clip, clip]. The path is drawn once on a fine base grid, so every coarser grid
    samples the same function.
    """
    if clip <= 0:
        raise ConfigurationError("Bridge clip level must be positive")
    generator = np.random.Generator(np.random.Philox(key=np.array([seed, 1], dtype=np.uint64)))
    base = TimeGrid(t0, T, base_steps)
    times = base.times
    walk = np.concatenate(
        ([0.0], np.cumsum(generator.standard_normal(base_steps) * math.sqrt(base.dt)))
    )
    bridge = walk - (times - t0) / (T - t0) * walk[-1]
    return Coefficient.from_samples(times, np.clip(amplitude * bridge, -clip, clip))


@dataclass(frozen=True, eq=False)
class TargetSpec:
    """
    Terminal target ξ and running target ζ.

    ξ is either the constant `xi_a` or the linear functional a + b·W³_T, whose conditional
    expectation E_s[ξ] = a + b·W³_s is known per path. ζ is zero, a deterministic function
    of time, or the conditional-expectation path s ↦ E_s[ξ].
    """

    xi_kind: XiKind = "constant"
    xi_a: float = 0.0
    xi_b: float = 0.0
    zeta_kind: ZetaKind = "zero"
    zeta: Coefficient | None = None

    def __post_init__(self):
        if self.xi_kind not in ("constant", "linear_w3"):
            raise ConfigurationError(f"Unknown terminal target kind {self.xi_kind}")
        if self.zeta_kind not in ("zero", "function", "conditional_xi"):
            raise ConfigurationError(f"Unknown running target kind {self.zeta_kind}")
        if self.zeta_kind == "function" and self.zeta is None:
            raise ConfigurationError("Running target of kind 'function' needs a coefficient")

    @property
    def xi_is_random(self) -> bool:
        return self.xi_kind == "linear_w3" and self.xi_b != 0.0

    @property
    def xi_is_zero(self) -> bool:
        return self.xi_a == 0.0 and (self.xi_kind == "constant" or self.xi_b == 0.0)

    @property
    def zeta_is_zero(self) -> bool:
        match self.zeta_kind:
            case "zero":
                return True
            case "function":
                return self.zeta.is_zero
            case _:
                return self.xi_is_zero

    @property
    def zeta_is_deterministic(self) -> bool:
        return self.zeta_kind != "conditional_xi" or not self.xi_is_random

    def scaled(self, factor: float) -> "TargetSpec":
        zeta = self.zeta
        if zeta is not None:
            inner = zeta
            zeta = Coefficient.from_function(lambda t: factor * inner.at(t))
        return replace(
            self, xi_a=factor * self.xi_a, xi_b=factor * self.xi_b, zeta=zeta
        )


@dataclass(frozen=True, eq=False)
class SampledCoefficients:
    """Coefficient values at the grid nodes, plus the combinations every module needs."""

    mu: np.ndarray
    sigma: np.ndarray
    rho: np.ndarray
    eta: np.ndarray
    rbar: np.ndarray
    lam: np.ndarray

    @property
    def rbar_complement(self) -> np.ndarray:
        """√(1 − r̄²)"""
        return np.sqrt(np.clip(1.0 - self.rbar**2, 0.0, None))

    @property
    def kappa(self) -> np.ndarray:
        return 0.5 * (
            2.0 * self.rho + self.mu - self.sigma**2 - self.eta**2
            - 2.0 * self.sigma * self.eta * self.rbar
        )

    @property
    def control_drift(self) -> np.ndarray:
        """ρ + μ − (σ² + σηr̄)/2, the rate at which trading moves the scaled hidden deviation."""
        return self.rho + self.mu - 0.5 * (self.sigma**2 + self.sigma * self.eta * self.rbar)

    @property
    def control_vol1(self) -> np.ndarray:
        return self.sigma + self.eta * self.rbar

    @property
    def control_vol2(self) -> np.ndarray:
        return self.eta * self.rbar_complement

    @property
    def noise_sq(self) -> np.ndarray:
        """σ² + 2σηr̄ + η²"""
        return self.control_vol1**2 + self.control_vol2**2


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """All model inputs: coefficient processes, impact level, targets and initial state."""

    grid: TimeGrid
    mu: Coefficient
    sigma: Coefficient
    rho: Coefficient
    eta: Coefficient
    rbar: Coefficient
    lam: Coefficient
    gamma0: float
    targets: TargetSpec = field(default_factory=TargetSpec)
    x: float = 0.0
    d: float = 0.0

    def __post_init__(self):
        if not self.gamma0 > 0:
            raise DomainError(f"gamma0 must be positive, got {self.gamma0}")
        sampled = self.sampled()
        if np.any(np.abs(sampled.rbar) > 1.0):
            raise DomainError("Correlation r̄ must lie in [-1, 1] at every node")
        for name in ("mu", "sigma", "rho", "eta", "lam"):
            if not np.all(np.isfinite(getattr(sampled, name))):
                raise DomainError(f"Coefficient {name} is not finite on the grid")
        if not np.all(np.isfinite(sampled.kappa)):
            raise DomainError("κ is not finite on the grid")

    @property
    def coefficients(self) -> tuple[Coefficient, ...]:
        return (self.mu, self.sigma, self.rho, self.eta, self.rbar, self.lam)

    @property
    def is_deterministic(self) -> bool:
        return all(c.is_deterministic for c in self.coefficients)

    def sampled(self, times: np.ndarray | None = None) -> SampledCoefficients:
        times = self.grid.times if times is None else times
        return SampledCoefficients(*(c.at(times) for c in self.coefficients))

    def scaled(self, factor: float) -> "ModelSpec":
        """Same market, with x, d, ξ and ζ multiplied by `factor`."""
        return replace(
            self,
            x=factor * self.x,
            d=factor * self.d,
            targets=self.targets.scaled(factor),
        )


@dataclass(frozen=True, eq=False)
class BrownianIncrements:
    """Increments of (W¹, W², W³), each of shape (paths, steps)."""

    dW1: np.ndarray
    dW2: np.ndarray
    dW3: np.ndarray
    seed: int

    @property
    def n_paths(self) -> int:
        return self.dW1.shape[0]


@dataclass(frozen=True, eq=False)
class PathBundle:
    """
    A simulated ensemble on one grid.

    Attributes:
        grid: the time grid.
        seed: seed of the counter-based generator.
        dW1, dW2, dW3: Brownian increments, (paths, steps).
        gamma: price impact γ, (paths, nodes).
        R: resilience, R[:, 0] = 0.
        dWR: increments of W^R = r̄W¹ + √(1−r̄²)W².
        nu: ν = exp(R + ½∫η²), ν[:, 0] = 1.
        d_nugamma: increments of νγ at the left nodes, (paths, steps).
        exi: E_s[ξ] at every node.
        xi: terminal target per path.
        zeta: running target at every node.
    """

    grid: TimeGrid
    seed: int
    dW1: np.ndarray
    dW2: np.ndarray
    dW3: np.ndarray
    gamma: np.ndarray
    R: np.ndarray
    dWR: np.ndarray
    nu: np.ndarray
    d_nugamma: np.ndarray
    exi: np.ndarray
    xi: np.ndarray
    zeta: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.dW1.shape[0]

    @property
    def increments(self) -> BrownianIncrements:
        return BrownianIncrements(self.dW1, self.dW2, self.dW3, self.seed)


@dataclass(frozen=True)
class CostEstimate:
    """Monte-Carlo mean and standard error of a pathwise quantity."""

    mean: float
    std_error: float
    n_paths: int
    seed: int

    @classmethod
    def from_samples(cls, samples: np.ndarray, seed: int) -> "CostEstimate":
        samples = np.asarray(samples, dtype=float)
        n_paths = samples.shape[0]
        # np.mean reduces pairwise
        mean = float(np.mean(samples))
        std_error = float(np.std(samples, ddof=1) / np.sqrt(n_paths)) if n_paths > 1 else 0.0
        return cls(mean=mean, std_error=std_error, n_paths=n_paths, seed=seed)

    @classmethod
    def difference(cls, samples: np.ndarray, baseline: np.ndarray, seed: int) -> "CostEstimate":
        """Estimate of E[samples − baseline] under common random numbers."""
        return cls.from_samples(np.asarray(samples) - np.asarray(baseline), seed)

    @classmethod
    def root_mean(cls, samples: np.ndarray, seed: int) -> "CostEstimate":
        """Estimate of (E[samples])^{1/2}; the standard error is the delta-method error of the mean."""
        squared = cls.from_samples(samples, seed)
        mean = math.sqrt(max(squared.mean, 0.0))
        std_error = squared.std_error / (2.0 * mean) if mean > 0.0 else 0.0
        return cls(mean=mean, std_error=std_error, n_paths=squared.n_paths, seed=seed)


def _draw_chunk(seed: int, first: int, last: int, n_steps: int, dt: float) -> np.ndarray:
    """Increments for paths first..last-1, one Philox stream per path."""
    scale = math.sqrt(dt)
    chunk = np.empty((3, last - first, n_steps))
    for offset, path_index in enumerate(range(first, last)):
        bit_generator = np.random.Philox(key=np.array([seed, path_index], dtype=np.uint64))
        chunk[:, offset, :] = np.random.Generator(bit_generator).standard_normal((3, n_steps))
    chunk *= scale
    return chunk


def _chunk_bounds(n_paths: int, workers: int) -> list[tuple[int, int]]:
    edges = np.linspace(0, n_paths, min(workers, n_paths) + 1).astype(int)
    return [(int(lo), int(hi)) for lo, hi in zip(edges[:-1], edges[1:]) if hi > lo]


def _resolve_workers(threads: int) -> int:
    if threads < 0:
        raise ConfigurationError(f"threads must be >= 0, got {threads}")
    return threads or os.cpu_count() or 1


def _validate_ensemble(grid: TimeGrid, n_paths: int, seed: int) -> None:
    if int(n_paths) != n_paths or n_paths < 1:
        raise ConfigurationError(f"n_paths must be a positive integer, got {n_paths}")
    if int(seed) != seed or not 0 <= seed <= MAX_SEED:
        raise ConfigurationError(f"seed must be an integer in [0, 2**63), got {seed}")
    if grid.n_steps < 1:
        raise ConfigurationError("Grid has no steps")


async def simulate_brownian_async(
    grid: TimeGrid, n_paths: int, seed: int, threads: int = 1
) -> BrownianIncrements:
    """Draw the ensemble with path chunks dispatched to worker threads."""
    _validate_ensemble(grid, n_paths, seed)
    workers = _resolve_workers(threads)
    start_time = time.perf_counter()
    chunks = await asyncio.gather(
        *(
            asyncio.to_thread(_draw_chunk, seed, first, last, grid.n_steps, grid.dt)
            for first, last in _chunk_bounds(n_paths, workers)
        )
    )
    increments = np.concatenate(chunks, axis=1)
    elapsed_time = time.perf_counter() - start_time
    logger.debug(
        f"Drew {n_paths} paths x {grid.n_steps} steps on {workers} workers in {elapsed_time:.4f} seconds"
    )
    metrics_registry.counters["paths_simulated"].inc(n_paths)
    return BrownianIncrements(increments[0], increments[1], increments[2], seed)


def simulate_brownian(
    grid: TimeGrid, n_paths: int, seed: int, threads: int = 1
) -> BrownianIncrements:
    """
    Independent N(0, Δt) increments of (W¹, W², W³).

    Path p always uses the Philox stream keyed by (seed, p), so the ensemble is
    bit-identical for any number of worker threads.
    """
    _validate_ensemble(grid, n_paths, seed)
    if _resolve_workers(threads) == 1:
        increments = _draw_chunk(seed, 0, n_paths, grid.n_steps, grid.dt)
        metrics_registry.counters["paths_simulated"].inc(n_paths)
        return BrownianIncrements(increments[0], increments[1], increments[2], seed)
    return asyncio.run(simulate_brownian_async(grid, n_paths, seed, threads))


def running_sum(increments: np.ndarray) -> np.ndarray:
    """Left-point running sum with a leading zero column."""
    leading = np.zeros(increments.shape[:-1] + (1,))
    return np.concatenate((leading, np.cumsum(increments, axis=-1)), axis=-1)


def build_gamma(spec: ModelSpec, increments: BrownianIncrements) -> np.ndarray:
    """γ_s = γ₀·exp(∫(μ − σ²/2)dr + ∫σ dW¹), grid sums evaluated exactly."""
    grid = spec.grid
    grid.check_steps(increments.dW1, "dW1")
    c = spec.sampled()
    mu, sigma = c.mu[..., :-1], c.sigma[..., :-1]
    exponent = (mu - 0.5 * sigma**2) * grid.dt + sigma * increments.dW1
    return spec.gamma0 * np.exp(running_sum(exponent))


def build_resilience(
    spec: ModelSpec, increments: BrownianIncrements
) -> tuple[np.ndarray, np.ndarray]:
    """R by left-point sums of ρΔt + ηΔW^R, together with the W^R increments."""
    grid = spec.grid
    grid.check_steps(increments.dW2, "dW2")
    c = spec.sampled()
    if np.any(np.abs(c.rbar) > 1.0):
        raise DomainError("Correlation r̄ must lie in [-1, 1] at every node")
    rbar = c.rbar[..., :-1]
    dWR = rbar * increments.dW1 + c.rbar_complement[..., :-1] * increments.dW2
    R = running_sum(c.rho[..., :-1] * grid.dt + c.eta[..., :-1] * dWR)
    return R, dWR


def build_nu(spec: ModelSpec, R: np.ndarray) -> np.ndarray:
    """ν_s = exp(R_s + ½∫η²dr)."""
    grid = spec.grid
    grid.check_nodes(R, "R")
    eta = spec.sampled().eta[..., :-1]
    return np.exp(R + 0.5 * running_sum(eta**2 * grid.dt))


def build_nugamma_increments(
    gamma: np.ndarray,
    nu: np.ndarray,
    spec: ModelSpec,
    increments: BrownianIncrements,
) -> np.ndarray:
    """Increments of νγ from its Itô dynamics, evaluated at the left nodes."""
    grid = spec.grid
    grid.check_nodes(gamma, "gamma")
    grid.check_nodes(nu, "nu")
    c = spec.sampled()
    left = slice(None, -1)
    drift = (c.mu + c.rho + c.eta**2 + c.sigma * c.eta * c.rbar)[..., left]
    return (nu * gamma)[..., left] * (
        drift * grid.dt
        + c.control_vol1[..., left] * increments.dW1
        + c.control_vol2[..., left] * increments.dW2
    )


def build_z(spec: ModelSpec, paths: PathBundle) -> np.ndarray:
    """Z_s = exp(−∫(σ/2 + ηr̄)dW¹ − ∫η√(1−r̄²)dW²)."""
    c = spec.sampled()
    left = slice(None, -1)
    exponent = (0.5 * c.sigma + c.eta * c.rbar)[..., left] * paths.dW1 + c.control_vol2[
        ..., left
    ] * paths.dW2
    return np.exp(-running_sum(exponent))


def gamma_euler(spec: ModelSpec, increments: BrownianIncrements) -> np.ndarray:
    """Left-point Euler scheme for dγ = γ(μ ds + σ dW¹); test oracle only."""
    c = spec.sampled()
    factors = 1.0 + c.mu[..., :-1] * spec.grid.dt + c.sigma[..., :-1] * increments.dW1
    return spec.gamma0 * np.concatenate(
        (np.ones((increments.n_paths, 1)), np.cumprod(factors, axis=-1)), axis=-1
    )


def nu_inverse_euler(spec: ModelSpec, R: np.ndarray) -> np.ndarray:
    """Left-point Euler scheme for dν⁻¹ = −ν⁻¹dR; test oracle only."""
    spec.grid.check_nodes(R, "R")
    factors = 1.0 - np.diff(R, axis=-1)
    return np.concatenate(
        (np.ones(R.shape[:-1] + (1,)), np.cumprod(factors, axis=-1)), axis=-1
    )


def conditional_xi(spec: ModelSpec, increments: BrownianIncrements) -> np.ndarray:
    """E_s[ξ] on every node."""
    targets = spec.targets
    shape = (increments.n_paths, spec.grid.n_steps + 1)
    if not targets.xi_is_random:
        return np.broadcast_to(np.full(shape[1], targets.xi_a), shape)
    return targets.xi_a + targets.xi_b * running_sum(increments.dW3)


def running_target(spec: ModelSpec, exi: np.ndarray) -> np.ndarray:
    """ζ on every node, read-only broadcast when deterministic."""
    targets = spec.targets
    match targets.zeta_kind:
        case "zero":
            return np.broadcast_to(np.zeros(exi.shape[-1]), exi.shape)
        case "function":
            return np.broadcast_to(targets.zeta.at(spec.grid.times), exi.shape)
        case _:
            return exi


def simulate(spec: ModelSpec, n_paths: int, seed: int, threads: int = 1) -> PathBundle:
    """Draw the noise and build every path-level process the other modules consume."""
    increments = simulate_brownian(spec.grid, n_paths, seed, threads)
    return build_paths(spec, increments)


def build_paths(spec: ModelSpec, increments: BrownianIncrements) -> PathBundle:
    gamma = build_gamma(spec, increments)
    R, dWR = build_resilience(spec, increments)
    nu = build_nu(spec, R)
    d_nugamma = build_nugamma_increments(gamma, nu, spec, increments)
    exi = conditional_xi(spec, increments)
    return PathBundle(
        grid=spec.grid,
        seed=increments.seed,
        dW1=increments.dW1,
        dW2=increments.dW2,
        dW3=increments.dW3,
        gamma=gamma,
        R=R,
        dWR=dWR,
        nu=nu,
        d_nugamma=d_nugamma,
        exi=exi,
        xi=np.array(exi[:, -1]),
        zeta=running_target(spec, exi),
    )
