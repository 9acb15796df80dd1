"""Exceptions raised by the execution library and mapped to exit codes by the CLI."""


class ExecutionAppError(Exception):
    """
    Base class for every error the library raises on purpose.
    The CLI turns these into a machine-readable error record and a nonzero exit code.
    """

    exit_code = 1


class ConfigurationError(ExecutionAppError):
    """Invalid grid, path count, seed, or an experiment file that fails schema validation."""

    exit_code = 2


class UnsupportedConfigurationError(ExecutionAppError):
    """The inputs are valid but lie outside what the solver implements, e.g. random targets with σ ≠ 0."""

    exit_code = 3


class SolverError(ExecutionAppError):
    """
    Numerical failure in the backward Riccati integration.

    Attributes:
        node: index of the grid node whose step produced the failure.
        time: time of that node.
    """

    exit_code = 4

    def __init__(self, message: str, node: int, time: float):
        super().__init__(f"{message} (node={node}, t={time:.6g})")
        self.node = node
        self.time = time


class ModelError(ExecutionAppError):
    """Model coefficients violate a standing assumption, such as λ = 0 wherever λ + κ = 0, or κ ≥ 0."""

    exit_code = 5


class DomainError(ExecutionAppError):
    """An argument lies outside the mathematical domain of the operation."""

    exit_code = 5


class AlignmentError(ExecutionAppError):
    """Arrays built on different grids, or a jump that does not sit on a grid node."""

    exit_code = 5


class KindError(ExecutionAppError):
    """A strategy or control of the wrong kind was passed, e.g. a progressively measurable strategy to cost_fv."""

    exit_code = 5
