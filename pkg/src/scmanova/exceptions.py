"""Exception hierarchy shared across the package."""

from __future__ import annotations


class ScmanovaError(Exception):
    """Base class for all package errors."""


class ValidationError(ScmanovaError, ValueError):
    """Input data or configuration violates a precondition."""


class InsufficientVariablesError(ValidationError):
    """Fewer than two variables survive co-presence filtering."""


class NotPositiveDefiniteError(ScmanovaError, ArithmeticError):
    """A pattern submatrix of the covariance estimate failed factorization.

    ``pattern`` holds the support (column indices) of the offending
    presence pattern.
    """

    def __init__(self, message: str, pattern: tuple[int, ...] = ()):
        super().__init__(message)
        self.pattern = pattern


class InfeasibleGridError(ScmanovaError):
    """No penalty candidate on the grid yields a feasible fit."""

    def __init__(self, message: str, trace_path: list | None = None):
        super().__init__(message)
        self.trace_path = trace_path or []


class InternalInvariantError(ScmanovaError, RuntimeError):
    """An internal contract was broken (indicates a bug, not bad input)."""
