"""
nikodym-lab Exceptions

Every error raised by the package derives from NikodymLabError and from the
builtin exception it refines, so callers may catch either.
"""

from typing import Optional


class NikodymLabError(Exception):
    """Base class for all package errors."""


class ConfigError(NikodymLabError, ValueError):
    """Invalid configuration file or option value."""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class ExpressionError(NikodymLabError, ValueError):
    """An expression string could not be parsed or evaluated."""


class MetricError(NikodymLabError, ValueError):
    """Unknown builtin metric, bad parameters, or a degenerate tensor."""


class DomainExitError(NikodymLabError, RuntimeError):
    """A geodesic left the metric's domain box."""

    def __init__(self, exit_time: float, point=None):
        self.exit_time = exit_time
        self.point = point
        super().__init__(f"geodesic left the domain at t={exit_time:.6g}")


class IntegrationError(NikodymLabError, RuntimeError):
    """The geodesic integrator produced a non-finite state."""


class ChartError(NikodymLabError, RuntimeError):
    """Fermi chart construction or inversion failed."""


class GridError(NikodymLabError, ValueError):
    """A tube or region does not fit the sampling grid."""


class PreconditionError(NikodymLabError, ValueError):
    """An operation's documented precondition does not hold."""
