"""Exception hierarchy.

Numerical failures derive from :class:`NumericalError` so front ends can map
them to a single exit status, while configuration and input problems derive
from :class:`UsageError`.
"""

__all__ = [
    "FluxtuneError",
    "UsageError",
    "ConfigError",
    "PreconditionError",
    "DomainError",
    "NumericalError",
    "DivergenceError",
    "NoSolutionError",
    "SolverError",
    "GeometryError",
    "QuadratureError",
    "FitError",
    "CalibrationError",
    "NoResonanceError",
    "OverCouplingError",
]


class FluxtuneError(Exception):
    """Base class for all package errors."""


class UsageError(FluxtuneError, ValueError):
    """Invalid input supplied by the caller."""


class ConfigError(UsageError):
    """Malformed run configuration. ``key`` holds the dotted key path."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class PreconditionError(UsageError):
    """An operation was called with inputs violating its preconditions."""


class DomainError(UsageError):
    """A parameter lies outside its physical domain."""


class NumericalError(FluxtuneError, ArithmeticError):
    """A numerical procedure failed."""


class DivergenceError(NumericalError):
    """An inductance diverges (junction biased at cos(delta) = 0)."""


class NoSolutionError(NumericalError):
    """The requested static state does not exist (critical current exceeded)."""


class SolverError(NumericalError):
    """A root finder did not converge or found no bracket."""


class GeometryError(NumericalError):
    """Loops touch, intersect, or are otherwise degenerate."""


class QuadratureError(NumericalError):
    """Adaptive quadrature did not reach its tolerance.

    ``estimate`` carries the best value obtained.
    """

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class FitError(NumericalError):
    """A least-squares fit failed. ``trace`` holds diagnostic history."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class CalibrationError(NumericalError):
    """No flux periodicity could be extracted."""


class NoResonanceError(NumericalError):
    """A trace contains no resolvable resonance dip."""


class OverCouplingError(NumericalError):
    """Extracted internal loss is nonpositive, inconsistent with the coupling."""
