"""Exception types shared across the package.

Each class marks one failure regime so callers (and the command line
front end) can map problems to stable exit codes without string
matching.
"""

from __future__ import annotations


class MbtError(Exception):
    """Base class for all package errors."""


class StructureError(MbtError, ValueError):
    """Malformed model, parameter vector, life vector or data table."""


class NumericError(MbtError, ArithmeticError):
    """Singular or non-finite intermediate quantity."""


class IterationError(MbtError, RuntimeError):
    """An iterative solver hit its budget before reaching tolerance."""


class CapacityError(MbtError, RuntimeError):
    """A requested enumeration or truncation exceeds a configured cap."""


class FitError(MbtError, RuntimeError):
    """No optimization seed produced a converged candidate."""

    def __init__(self, message: str, traces: tuple = ()):
        super().__init__(message)
        self.traces = traces
