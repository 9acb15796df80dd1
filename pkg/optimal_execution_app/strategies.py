"""
Execution strategies and the processes they induce.

A Strategy stores the position X_s at the left nodes t_0, ..., t_{N-1} of the grid, the
position x held just before t_0, and the per-path terminal target ξ that pins X_T. Finite
variation strategies additionally store their block trades ΔX at every node, including
the initial block at t_0 and the terminal block at T; the rest of each node increment is
continuous trading. Progressively measurable strategies carry no jump information.
"""

import csv
from dataclasses import dataclass, replace
from typing import Literal, TextIO

import numpy as np

from .errors import AlignmentError, ConfigurationError, DomainError, KindError
from .model_core import CostEstimate, ModelSpec, PathBundle, TimeGrid, build_z

StrategyKind = Literal["finite_variation", "progressively_measurable"]
DeviationSource = Literal["finite_variation", "progressively_measurable", "control"]

FINITE_VARIATION = "finite_variation"
PROGRESSIVELY_MEASURABLE = "progressively_measurable"


@dataclass(frozen=True, eq=False)
class Strategy:
    """
    Attributes:
        x_pre: position at t0−.
        values: X at t_0..t_{N-1}, shape (paths, steps).
        xi_terminal: X_T per path.
        kind: finite_variation or progressively_measurable.
        jumps: block trades at t_0..t_N, shape (paths, steps + 1); finite variation only.
        label: name used in reports.
    """

    x_pre: float
    values: np.ndarray
    xi_terminal: np.ndarray
    kind: StrategyKind
    jumps: np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] < 1:
            raise ConfigurationError("Strategy needs a (paths, steps) array with at least one step")
        if self.xi_terminal.shape != (self.values.shape[0],):
            raise AlignmentError("Terminal values must have one entry per path")
        if self.kind == FINITE_VARIATION:
            if self.jumps is None or self.jumps.shape != (
                self.values.shape[0],
                self.values.shape[1] + 1,
            ):
                raise AlignmentError(
                    "Finite variation strategies need block trades on exactly the grid nodes"
                )
        elif self.kind == PROGRESSIVELY_MEASURABLE:
            if self.jumps is not None:
                raise KindError("Progressively measurable strategies carry no block trades")
        else:
            raise KindError(f"Unknown strategy kind {self.kind}")

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.values.shape[1]

    @property
    def nodes(self) -> np.ndarray:
        """X at every node t_0..t_N, with X_{t_N} = ξ."""
        return np.concatenate((self.values, self.xi_terminal[:, None]), axis=1)

    @property
    def increments(self) -> np.ndarray:
        """Node increments X_{t_k} − X_{t_{k−1}}, with X_{t_{−1}} = x."""
        return np.diff(self.nodes, axis=1, prepend=self.x_pre)

    @property
    def continuous_increments(self) -> np.ndarray:
        """Node increments net of block trades; zero at t_0 by convention."""
        if self.kind != FINITE_VARIATION:
            raise KindError("Only finite variation strategies split into blocks and continuous trading")
        continuous = self.increments - self.jumps
        continuous[:, 0] = 0.0
        return continuous

    def check_grid(self, grid: TimeGrid) -> None:
        if self.n_steps != grid.n_steps:
            raise AlignmentError(f"Strategy has {self.n_steps} steps, grid has {grid.n_steps}")

    def shifted(self, offset: np.ndarray, label: str) -> "Strategy":
        """Add `offset` on [t0, T) keeping the boundary data; the result is progressively measurable."""
        return Strategy(
            x_pre=self.x_pre,
            values=self.values + offset,
            xi_terminal=self.xi_terminal,
            kind=PROGRESSIVELY_MEASURABLE,
            label=label,
        )


@dataclass(frozen=True, eq=False)
class DeviationPath:
    """
    D at the nodes t_0..t_N after any block trade at that node.

    `pre_jump` holds D just before the node's block trade (finite variation recursion only);
    pre_jump[:, 0] = d.
    """

    values: np.ndarray
    d_pre: float
    source: DeviationSource
    pre_jump: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class HiddenDeviationPath:
    """H = D − γX and H̄ = γ^{−1/2}H at every node."""

    H: np.ndarray
    Hbar: np.ndarray


def from_values(
    spec: ModelSpec, paths: PathBundle, values: np.ndarray, label: str = ""
) -> Strategy:
    """Progressively measurable strategy with X on [t0, T) given by `values`."""
    values = np.broadcast_to(np.asarray(values, dtype=float), (paths.n_paths, paths.grid.n_steps))
    return Strategy(
        x_pre=spec.x,
        values=np.array(values),
        xi_terminal=paths.xi,
        kind=PROGRESSIVELY_MEASURABLE,
        label=label,
    )


def continuous_program(
    spec: ModelSpec,
    paths: PathBundle,
    values: np.ndarray,
    terminal_left_limit: np.ndarray | None = None,
    label: str = "",
) -> Strategy:
    """
    Finite variation strategy that trades continuously on (t0, T) along `values`.

    Block trades occur only at t0 (from x to values[:, 0]) and at T (from the left limit
    X_{T−} to ξ). Without an explicit left limit the program stops trading after t_{N−1}.
    """
    n_paths, n_steps = paths.n_paths, paths.grid.n_steps
    values = np.array(np.broadcast_to(np.asarray(values, dtype=float), (n_paths, n_steps)))
    left_limit = (
        values[:, -1]
        if terminal_left_limit is None
        else np.broadcast_to(np.asarray(terminal_left_limit, dtype=float), (n_paths,))
    )
    jumps = np.zeros((n_paths, n_steps + 1))
    jumps[:, 0] = values[:, 0] - spec.x
    jumps[:, -1] = paths.xi - left_limit
    return Strategy(
        x_pre=spec.x,
        values=values,
        xi_terminal=paths.xi,
        kind=FINITE_VARIATION,
        jumps=jumps,
        label=label,
    )


def no_trade(spec: ModelSpec, paths: PathBundle) -> Strategy:
    """Hold x until T, then trade to ξ in one block."""
    return continuous_program(spec, paths, spec.x, label="no_trade")


def constant_position(spec: ModelSpec, paths: PathBundle, level: float, label: str = "") -> Strategy:
    """Block to `level` at t0, hold, block to ξ at T."""
    return continuous_program(spec, paths, level, label=label or f"constant_{level:g}")


def terminal_block(spec: ModelSpec, paths: PathBundle) -> Strategy:
    """Hold x on [t0, T) and execute everything at T."""
    return replace(no_trade(spec, paths), label="terminal_block")


def block_sell(spec: ModelSpec, paths: PathBundle) -> Strategy:
    """
    One block at t0 to E_{t0}[ξ], then hold. Only the surprise ξ − E_{t0}[ξ] is left for
    the block at T, so for a deterministic ξ the whole order goes at t0.
    """
    level = paths.exi[:, 0]
    return continuous_program(
        spec, paths, level[:, None], terminal_left_limit=level, label="block_sell"
    )


def immediate_close(spec: ModelSpec, paths: PathBundle) -> Strategy:
    """
    X_s = E_s[ξ] on [t0, T): close the gap to the target at t0 and keep tracking it.

    For a random ξ the tracking part has infinite variation.
    """
    values = paths.exi[:, :-1]
    if spec.targets.xi_is_random:
        return from_values(spec, paths, values, label="immediate_close")
    return continuous_program(spec, paths, values, terminal_left_limit=paths.xi, label="immediate_close")


def twap(spec: ModelSpec, paths: PathBundle) -> Strategy:
    """Linear unwinding from x toward the current target estimate E_s[ξ]."""
    grid = paths.grid
    fraction = (grid.times - grid.t0) / (grid.T - grid.t0)
    values = spec.x + (paths.exi[:, :-1] - spec.x) * fraction[:-1]
    if spec.targets.xi_is_random:
        return from_values(spec, paths, values, label="twap")
    return continuous_program(spec, paths, values, terminal_left_limit=paths.xi, label="twap")


def deviation_fv(strategy: Strategy, paths: PathBundle, spec: ModelSpec) -> DeviationPath:
    """
    Left-point Euler of dD = −D dR + γ dX for a finite variation strategy.

    Within a step the continuous trade enters first; the block trade at the next node is
    applied afterwards and moves D by exactly γ·ΔX.
    """
    if strategy.kind != FINITE_VARIATION:
        raise KindError("deviation_fv needs a finite variation strategy")
    strategy.check_grid(paths.grid)
    gamma, jumps = paths.gamma, strategy.jumps
    continuous = strategy.continuous_increments
    dR = np.diff(paths.R, axis=1)

    values = np.empty_like(gamma)
    pre_jump = np.empty_like(gamma)
    pre_jump[:, 0] = spec.d
    values[:, 0] = spec.d + gamma[:, 0] * jumps[:, 0]
    for k in range(1, paths.grid.n_steps + 1):
        previous = values[:, k - 1]
        pre_jump[:, k] = previous - previous * dR[:, k - 1] + gamma[:, k - 1] * continuous[:, k]
        values[:, k] = pre_jump[:, k] + gamma[:, k] * jumps[:, k]
    return DeviationPath(values=values, d_pre=spec.d, source=FINITE_VARIATION, pre_jump=pre_jump)


def deviation_pm(strategy: Strategy, paths: PathBundle, spec: ModelSpec) -> DeviationPath:
    """D_s = γ_sX_s + ν_s⁻¹(d − γ_{t0}x − Σ_{r<s} X_r d(νγ)_r)."""
    strategy.check_grid(paths.grid)
    integral = np.concatenate(
        (
            np.zeros((strategy.n_paths, 1)),
            np.cumsum(strategy.values * paths.d_nugamma, axis=1),
        ),
        axis=1,
    )
    offset = spec.d - paths.gamma[:, :1] * strategy.x_pre - integral
    values = paths.gamma * strategy.nodes + offset / paths.nu
    return DeviationPath(values=values, d_pre=spec.d, source=PROGRESSIVELY_MEASURABLE)


def deviation(strategy: Strategy, paths: PathBundle, spec: ModelSpec) -> DeviationPath:
    """Deviation by the representation native to the strategy's kind."""
    if strategy.kind == FINITE_VARIATION:
        return deviation_fv(strategy, paths, spec)
    return deviation_pm(strategy, paths, spec)


def deviation_from_hidden(
    strategy: Strategy, hidden: np.ndarray, paths: PathBundle, spec: ModelSpec
) -> DeviationPath:
    """D = γX + γ^{1/2}H̄ on every node, the deviation a control induces through its state."""
    strategy.check_grid(paths.grid)
    values = paths.gamma * strategy.nodes + np.sqrt(paths.gamma) * hidden
    return DeviationPath(values=values, d_pre=spec.d, source="control")


def hidden_deviation(
    strategy: Strategy, deviation_path: DeviationPath, paths: PathBundle
) -> HiddenDeviationPath:
    """H = D − γX and H̄ = γ^{−1/2}D − γ^{1/2}X."""
    paths.grid.check_nodes(deviation_path.values, "deviation")
    X = strategy.nodes
    D = deviation_path.values
    root = np.sqrt(paths.gamma)
    return HiddenDeviationPath(H=D - paths.gamma * X, Hbar=D / root - root * X)


def initial_hidden_deviation(spec: ModelSpec) -> float:
    """H̄_{t0} = d/√γ_{t0} − √γ_{t0}·x."""
    root = np.sqrt(spec.gamma0)
    return spec.d / root - root * spec.x


def _check_same_boundary(X: Strategy, Y: Strategy) -> None:
    if X.x_pre != Y.x_pre or not np.array_equal(X.xi_terminal, Y.xi_terminal):
        raise DomainError("Strategies compared by the metric must share x and ξ")


def strategy_metric(
    X: Strategy, Y: Strategy, paths: PathBundle, spec: ModelSpec
) -> CostEstimate:
    """(E[∫(D^X − D^Y)²γ⁻¹ds])^{1/2} estimated on one ensemble."""
    _check_same_boundary(X, Y)
    difference = deviation_pm(X, paths, spec).values - deviation_pm(Y, paths, spec).values
    samples = np.sum(difference[:, :-1] ** 2 / paths.gamma[:, :-1], axis=1) * paths.grid.dt
    return CostEstimate.root_mean(samples, paths.seed)


def trading_cost_identity(
    strategy: Strategy, deviation_path: DeviationPath, paths: PathBundle, spec: ModelSpec
) -> tuple[np.ndarray, np.ndarray]:
    """
    Both sides of the trading-cost identity for a finite variation strategy, per path:

        ∫D_{s−}dX_s + ½∫ΔX_sγ_s dX_s = ½(D_T²/γ_T − d²/γ_{t0} − ∫D_s²ν_s² d(ν_s⁻²γ_s⁻¹))
    """
    if deviation_path.pre_jump is None:
        raise KindError("The trading-cost identity needs the finite variation deviation recursion")
    D, pre = deviation_path.values, deviation_path.pre_jump
    jumps = strategy.jumps
    continuous = strategy.continuous_increments
    lhs = np.sum(D[:, :-1] * continuous[:, 1:], axis=1) + np.sum(
        pre * jumps + 0.5 * paths.gamma * jumps**2, axis=1
    )
    weight = 1.0 / (paths.nu**2 * paths.gamma)
    rhs = 0.5 * (
        D[:, -1] ** 2 / paths.gamma[:, -1]
        - spec.d**2 / paths.gamma[:, 0]
        - np.sum(D[:, :-1] ** 2 * paths.nu[:, :-1] ** 2 * np.diff(weight, axis=1), axis=1)
    )
    return lhs, rhs


def fv_approximate(u, spec: ModelSpec, paths: PathBundle, level: int) -> Strategy:
    """
    Finite variation approximation Xⁿ of the strategy induced by the control u.

    v = u/Z is replaced by a piecewise constant process on min(2ⁿ, N) dyadic blocks whose
    value on block i is v at the left endpoint of block i−1 (zero on the first block), and
    Xⁿ is the strategy induced by uⁿ = vⁿZ. Xⁿ jumps exactly where vⁿ does, by γ^{−1/2}ZΔvⁿ,
    besides the blocks at t0 and T.
    """
    # lq_reduction builds on this module
    from .lq_reduction import ControlPath, control_to_strategy, state_Htilde

    if int(level) != level or level < 0:
        raise DomainError(f"Approximation level must be a nonnegative integer, got {level}")
    grid = paths.grid
    n_steps = grid.n_steps
    Z = build_z(spec, paths)
    v = u.values / Z[:, :-1]

    edges = np.linspace(0, n_steps, min(2**level, n_steps) + 1).round().astype(int)
    v_n = np.zeros_like(v)
    for block in range(1, len(edges) - 1):
        v_n[:, edges[block] : edges[block + 1]] = v[:, edges[block - 1]][:, None]

    u_n = ControlPath(values=v_n * Z[:, :-1], flavor="raw")
    state = state_Htilde(u_n, spec, paths)
    induced = control_to_strategy(u_n, spec, paths, state=state)

    root = np.sqrt(paths.gamma)
    jumps = np.zeros((paths.n_paths, n_steps + 1))
    jumps[:, 0] = induced.values[:, 0] - spec.x
    for boundary in edges[1:-1]:
        jumps[:, boundary] = (
            Z[:, boundary] * (v_n[:, boundary] - v_n[:, boundary - 1]) / root[:, boundary]
        )
    left_limit = (v_n[:, -1] * Z[:, -1] - state.values[:, -1]) / root[:, -1]
    jumps[:, -1] = paths.xi - left_limit
    return Strategy(
        x_pre=spec.x,
        values=induced.values,
        xi_terminal=paths.xi,
        kind=FINITE_VARIATION,
        jumps=jumps,
        label=f"fv_level_{level}",
    )


def write_strategy_csv(
    strategy: Strategy, grid: TimeGrid, file: TextIO, path_index: int = 0
) -> None:
    """Columnar export of one path: node time, position after the node, block trade at the node."""
    strategy.check_grid(grid)
    writer = csv.writer(file, lineterminator="\n")
    writer.writerow(["time", "value", "jump"])
    nodes = strategy.nodes[path_index]
    jumps = (
        strategy.jumps[path_index]
        if strategy.jumps is not None
        else np.zeros(grid.n_steps + 1)
    )
    for node_time, value, jump in zip(grid.times, nodes, jumps):
        writer.writerow([f"{node_time:.17g}", f"{value:.17g}", f"{jump:.17g}"])
