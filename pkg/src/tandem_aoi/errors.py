"""Exception types shared across the package."""


class TandemAoIError(Exception):
    """Base class for all package errors."""


class DomainError(TandemAoIError, ValueError):
    """Argument outside the domain of a transform or metric."""


class StabilityError(TandemAoIError, ValueError):
    """Parameters violate an ergodicity condition."""


class NumericError(TandemAoIError, ArithmeticError):
    """A numerical procedure failed to reach its tolerance.

    ``estimate`` and ``residual`` carry the last iterate and its error
    indicator so callers can decide whether the value is still usable.
    """

    def __init__(self, message, estimate=None, residual=None):
        super().__init__(message)
        self.estimate = estimate
        self.residual = residual


class UndefinedMetricError(TandemAoIError, ValueError):
    """A metric cannot be computed from the available data."""


class ResourceError(TandemAoIError, RuntimeError):
    """A configured resource limit (e.g. event calendar size) was exceeded."""
