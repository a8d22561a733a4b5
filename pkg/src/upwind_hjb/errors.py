"""Exception types raised by the solver and its helpers."""

from __future__ import annotations


class UpwindError(Exception):
    """Base class for all library errors."""


class InvalidArgument(UpwindError, ValueError):
    """A parameter is outside its admissible range."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class OutOfRange(UpwindError, ValueError):
    """A query point lies outside the space-time domain."""


class NumericalFailure(UpwindError, ArithmeticError):
    """A non-finite value was produced or encountered.

    ``where`` carries the offending probe, e.g. a node index or an ``(x, a)``
    pair, so that callers can report it.
    """

    def __init__(self, message: str, where=None):
        super().__init__(message if where is None else f"{message} at {where}")
        self.where = where


class CflViolation(UpwindError):
    """The strict CFL condition fails and the solve was not forced."""

    def __init__(self, status):
        super().__init__(
            f"CFL condition violated: alpha*sup|f| = {status.alpha_times_sup:.6g} (must be < 1)"
        )
        self.status = status
