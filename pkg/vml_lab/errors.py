"""Exception hierarchy shared by every vml_lab module."""


class LabError(Exception):
    """Base class for all errors raised by the lab."""


class DomainError(LabError, ValueError):
    """An argument lies outside the domain of the operation."""


class InvalidRiemannDataError(LabError):
    """Riemann data that do not describe a 3-rarefaction wave."""


class DegenerateDataError(LabError):
    """Input data carry no information (too few points, zero variance...)."""


class SolverError(LabError):
    """An iterative solver failed to bracket or converge."""


class NotInRangeError(LabError):
    """Right-hand side is not orthogonal to the null space of the operator."""


class GridError(LabError):
    """Fields live on different grids, or a grid is too coarse."""


class QuadratureDomainError(LabError):
    """The spatial quadrature window does not contain the wave."""


class VacuumError(LabError):
    """Density or temperature left the positive cone."""

    def __init__(self, message: str, t: float = None):
        super().__init__(message)
        self.t = t
        self.history = None


class TimeStepError(LabError):
    """Requested time step violates the stability restriction."""


class HistoryError(LabError):
    """Not enough snapshots to evaluate a time derivative."""


class TimeTooSmallError(LabError):
    """Exact-fan reference requested at a time where the fan is singular."""


class ConfigError(LabError):
    """Malformed or invalid experiment configuration."""

    def __init__(self, message: str, line: int = None, key: str = None):
        super().__init__(message)
        self.line = line
        self.key = key


class OutputError(LabError):
    """A bundle file could not be written."""
