"""
The four cost functionals, pathwise and as Monte-Carlo estimates at t0.

Running integrals are left Riemann sums over t_0..t_{N-1}; the terminal node enters only
through the terminal terms.
"""

from dataclasses import dataclass
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

from .errors import AlignmentError, KindError, ModelError
from .model_core import CostEstimate, ModelSpec, PathBundle
from .strategies import (
    FINITE_VARIATION,
    DeviationPath,
    HiddenDeviationPath,
    Strategy,
    deviation_fv,
    deviation_pm,
)

if TYPE_CHECKING:
    from .lq_reduction import ControlPath, StatePath

# λ + κ counts as zero below this magnitude.
_DEGENERACY_TOLERANCE = 1e-14


class CostResult(NamedTuple):
    pathwise: np.ndarray
    estimate: CostEstimate


@dataclass(frozen=True, eq=False)
class KappaPath:
    """
    κ = ½(2ρ + μ − σ² − η² − 2σηr̄) at the grid nodes, with the derived weights of the
    cross-term-free problem. Wherever λ + κ = 0, `ratio` and `weight` are 0.

    Attributes:
        kappa: κ.
        lam_plus_kappa: λ + κ.
        ratio: λ/(λ+κ).
        weight: λκ/(λ+κ).
    """

    kappa: np.ndarray
    lam_plus_kappa: np.ndarray
    ratio: np.ndarray
    weight: np.ndarray


def kappa_path(spec: ModelSpec, times: np.ndarray | None = None) -> KappaPath:
    """Build KappaPath and check that {λ+κ = 0} ⊂ {λ = 0}."""
    c = spec.sampled(times)
    total = c.lam + c.kappa
    degenerate = np.abs(total) <= _DEGENERACY_TOLERANCE
    if np.any(degenerate & (c.lam != 0.0)):
        raise ModelError("λ ≠ 0 where λ + κ = 0: the cross-term transform is undefined")
    ratio = np.divide(c.lam, total, out=np.zeros_like(total), where=~degenerate)
    weight = np.divide(c.lam * c.kappa, total, out=np.zeros_like(total), where=~degenerate)
    return KappaPath(kappa=c.kappa, lam_plus_kappa=total, ratio=ratio, weight=weight)


def _risk_term(values: np.ndarray, paths: PathBundle, spec: ModelSpec) -> np.ndarray:
    """Σ λγ(X − ζ)²Δt over the left nodes."""
    lam = spec.sampled().lam[..., :-1]
    gap = values - paths.zeta[:, :-1]
    return np.sum(lam * paths.gamma[:, :-1] * gap**2, axis=1) * paths.grid.dt


def _result(pathwise: np.ndarray, paths: PathBundle) -> CostResult:
    return CostResult(pathwise, CostEstimate.from_samples(pathwise, paths.seed))


def cost_fv(
    strategy: Strategy,
    paths: PathBundle,
    spec: ModelSpec,
    deviation_path: DeviationPath | None = None,
) -> CostResult:
    """
    J^fv: ∫D_{s−}dX_s + ½∫ΔX_sγ_s dX_s + ∫λγ(X − ζ)²ds.

    Continuous trading between nodes is charged at the deviation of the previous node,
    block trades at the deviation just before the block plus ½γ(ΔX)².
    """
    if strategy.kind != FINITE_VARIATION:
        raise KindError("cost_fv needs a finite variation strategy")
    if deviation_path is None:
        deviation_path = deviation_fv(strategy, paths, spec)
    D, pre = deviation_path.values, deviation_path.pre_jump
    jumps = strategy.jumps
    trading = np.sum(D[:, :-1] * strategy.continuous_increments[:, 1:], axis=1) + np.sum(
        pre * jumps + 0.5 * paths.gamma * jumps**2, axis=1
    )
    return _result(trading + _risk_term(strategy.values, paths, spec), paths)


def cost_pm(
    strategy: Strategy,
    paths: PathBundle,
    spec: ModelSpec,
    deviation_path: DeviationPath | None = None,
) -> CostResult:
    """J^pm: ½[D_T²/γ_T + ∫D²γ⁻¹·2κ ds] − d²/(2γ_{t0}) + ∫λγ(X − ζ)²ds."""
    strategy.check_grid(paths.grid)
    if deviation_path is None:
        deviation_path = deviation_pm(strategy, paths, spec)
    D, gamma = deviation_path.values, paths.gamma
    two_kappa = 2.0 * spec.sampled().kappa[..., :-1]
    resilience = np.sum(D[:, :-1] ** 2 / gamma[:, :-1] * two_kappa, axis=1) * paths.grid.dt
    pathwise = (
        0.5 * (D[:, -1] ** 2 / gamma[:, -1] + resilience)
        - spec.d**2 / (2.0 * gamma[:, 0])
        + _risk_term(strategy.values, paths, spec)
    )
    return _result(pathwise, paths)


def _quadratic_form(
    u: np.ndarray, H: np.ndarray, paths: PathBundle, spec: ModelSpec
) -> np.ndarray:
    """½[(H_T + √γ_Tξ)² + ∫(2κ+2λ)u² + 2λ(H + √γζ)² − 4λ(H + √γζ)u ds]."""
    c = spec.sampled()
    kappa, lam = c.kappa[..., :-1], c.lam[..., :-1]
    root = np.sqrt(paths.gamma)
    shifted = H[:, :-1] + root[:, :-1] * paths.zeta[:, :-1]
    running = (
        (2.0 * kappa + 2.0 * lam) * u**2
        + 2.0 * lam * shifted**2
        - 4.0 * lam * shifted * u
    )
    terminal = (H[:, -1] + root[:, -1] * paths.xi) ** 2
    return 0.5 * (terminal + np.sum(running, axis=1) * paths.grid.dt)


def cost_pm_quadratic(
    strategy: Strategy,
    deviation_path: DeviationPath,
    hidden: HiddenDeviationPath,
    paths: PathBundle,
    spec: ModelSpec,
) -> CostResult:
    """J^pm through the scaled hidden deviation: the quadratic form in (γ^{−1/2}D, H̄) minus d²/(2γ_{t0})."""
    strategy.check_grid(paths.grid)
    u = deviation_path.values[:, :-1] / np.sqrt(paths.gamma[:, :-1])
    pathwise = _quadratic_form(u, hidden.Hbar, paths, spec) - spec.d**2 / (
        2.0 * paths.gamma[:, 0]
    )
    return _result(pathwise, paths)


def _check_control_grid(u: "ControlPath", state: "StatePath", paths: PathBundle) -> None:
    if u.values.shape != (paths.n_paths, paths.grid.n_steps):
        raise AlignmentError("Control does not match the ensemble grid")
    if state.values.shape != (paths.n_paths, paths.grid.n_steps + 1):
        raise AlignmentError("State does not match the ensemble grid")


def cost_J(u: "ControlPath", Htilde: "StatePath", spec: ModelSpec, paths: PathBundle) -> CostResult:
    """J for a raw control u and its state H̃."""
    if u.flavor != "raw":
        raise KindError("cost_J needs a raw control")
    _check_control_grid(u, Htilde, paths)
    return _result(_quadratic_form(u.values, Htilde.values, paths, spec), paths)


def cost_Jhat(uhat: "ControlPath", Hhat: "StatePath", spec: ModelSpec, paths: PathBundle) -> CostResult:
    """Ĵ: ½(Ĥ_T + √γ_Tξ)² + ∫λκ/(λ+κ)(Ĥ + √γζ)² + (λ+κ)û² ds."""
    if uhat.flavor != "hat":
        raise KindError("cost_Jhat needs a cross-term-free control")
    _check_control_grid(uhat, Hhat, paths)
    kappa = kappa_path(spec)
    root = np.sqrt(paths.gamma)
    H = Hhat.values
    shifted = H[:, :-1] + root[:, :-1] * paths.zeta[:, :-1]
    running = (
        kappa.weight[..., :-1] * shifted**2
        + kappa.lam_plus_kappa[..., :-1] * uhat.values**2
    )
    terminal = 0.5 * (H[:, -1] + root[:, -1] * paths.xi) ** 2
    return _result(terminal + np.sum(running, axis=1) * paths.grid.dt, paths)
