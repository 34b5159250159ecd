"""Exception hierarchy shared by every module."""

from __future__ import annotations


class WatermarkError(Exception):
    """Base class for all package errors."""


class ValidationError(WatermarkError, ValueError):
    """Invalid model or configuration input.

    The offending field name is kept on ``field`` so front ends can report it.
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class DomainError(WatermarkError, ValueError):
    """A state argument lies outside the domain of the function called."""


class RegimeError(WatermarkError):
    """The parameters fall outside the regime the construction covers."""


class SolverError(WatermarkError, RuntimeError):
    """The free-boundary solver could not bracket or integrate the separatrix."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class McMisuseError(WatermarkError):
    """A Monte Carlo routine was called with parameters it is not meant for."""
