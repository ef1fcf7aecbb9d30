"""Exception and warning types raised across the package."""

from __future__ import annotations


class DrawdownTrackingError(Exception):
    """Base class for all package errors."""


class ConfigError(DrawdownTrackingError):
    """Malformed or incomplete configuration input."""


class AssumptionViolated(DrawdownTrackingError):
    """A standing model assumption fails for the supplied parameters.

    ``which`` names the failed condition so callers can report it.
    """

    def __init__(self, which: str, detail: str = "") -> None:
        self.which = which
        msg = which if not detail else f"{which}: {detail}"
        super().__init__(msg)


class SingularSigma(DrawdownTrackingError):
    """Volatility matrix is singular or too badly conditioned to invert."""


class SingularSystem(DrawdownTrackingError):
    """The smooth-fit linear system could not be solved."""


class DomainError(DrawdownTrackingError, ValueError):
    """Argument outside the domain of a function."""


class ConvergenceError(DrawdownTrackingError):
    """An iterative solver or quadrature did not reach its tolerance."""


class OutOfRegion(DrawdownTrackingError):
    """Primal state lies outside the continuation region for the given m."""


class NumericalBlowup(DrawdownTrackingError):
    """A simulated state left the range where the policy tables are valid."""


class ConsistencyWarning(UserWarning):
    """Two independent routes to the same quantity disagree."""
