"""Exception hierarchy shared by the discretization, kernels and solvers."""

from __future__ import annotations


class MFGLabError(Exception):
    """Base class for every error raised by the package."""


class GridError(MFGLabError, ValueError):
    """Invalid grid parameters or fields living on incompatible grids."""


class CFLError(MFGLabError):
    """The explicit transport step violates its monotonicity bound."""


class NumericalBlowupError(MFGLabError):
    """A NaN or Inf appeared in a time frame."""

    def __init__(self, message: str, frame: int):
        super().__init__(f"{message} (first bad frame: {frame})")
        self.frame = frame


class MassConservationError(MFGLabError):
    """A density path drifted away from its initial mass."""


class PositivityError(MFGLabError):
    """A density frame went negative beyond round-off."""


class ConvergenceError(MFGLabError):
    """An iterative solver stopped without meeting its tolerance.

    ``history`` holds the residual after every iteration and ``partial`` the
    last iterate, so callers that treat failures as data (multi-start probes,
    sweeps) can still inspect what happened.
    """

    def __init__(self, message: str, history=None, partial=None):
        super().__init__(message)
        self.history = list(history or [])
        self.partial = partial


class SingularSystemError(MFGLabError):
    """A linear system could not be solved reliably."""

    def __init__(self, message: str, condition: float = float("inf")):
        super().__init__(f"{message} (condition estimate {condition:.3e})")
        self.condition = condition


class ConfigError(MFGLabError):
    """Experiment configuration failed validation."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        where = ""
        if field:
            where = f"{field}: "
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(where + message)
        self.field = field
        self.line = line
