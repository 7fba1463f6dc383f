"""Exception hierarchy shared by every module."""


class VolterraError(Exception):
    """Base class for all package errors."""


class DomainError(VolterraError, ValueError):
    """Argument outside the mathematical domain (e.g. non-positive coordinate)."""


class ArgumentError(VolterraError, ValueError):
    """Malformed or inconsistent argument (arity mismatch, bad order, ...)."""


class NumericError(VolterraError, ArithmeticError):
    """Quadrature or fit failed to reach the requested accuracy."""

    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class ResourceError(VolterraError, MemoryError):
    """A dense table or sample would exceed the configured memory guard."""


class MomentUnavailable(VolterraError, KeyError):
    """A moment beyond those supplied was requested."""
