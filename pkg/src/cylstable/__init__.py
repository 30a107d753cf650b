"""Transition densities and semigroup probes for SDEs driven by cylindrical
stable noise with coefficient matrices that are bounded, Lipschitz and have
determinant bounded away from zero."""

__version__ = "0.1.0"

from .errors import (
    BoundViolationError,
    ConvergenceError,
    CoverageError,
    CylstableError,
    DomainError,
    ResolutionError,
    SchemaError,
    SingularFieldError,
)

__all__ = [
    "BoundViolationError",
    "ConvergenceError",
    "CoverageError",
    "CylstableError",
    "DomainError",
    "ResolutionError",
    "SchemaError",
    "SingularFieldError",
    "__version__",
]
