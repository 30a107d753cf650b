"""Exception types shared across the package."""


class CylstableError(Exception):
    """Base class for all package errors."""


class DomainError(CylstableError, ValueError):
    """A parameter is outside its mathematical domain."""


class ResolutionError(CylstableError):
    """A grid is too coarse for the requested accuracy; message names the offender."""


class CoverageError(CylstableError):
    """A lookup time or point falls outside the tabulated range."""


class SingularFieldError(CylstableError):
    """A coefficient matrix is numerically singular."""


class BoundViolationError(CylstableError):
    """Declared field bounds are violated; carries witness points."""

    def __init__(self, message, witnesses=None):
        super().__init__(message)
        self.witnesses = witnesses or []


class ConvergenceError(CylstableError):
    """An iterative series failed its decay/envelope checks."""


class SchemaError(CylstableError, ValueError):
    """A run configuration failed validation; message names the field."""
