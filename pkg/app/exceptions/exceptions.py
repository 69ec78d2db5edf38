"""
A module for custom exceptions in the app-exceptions package.
"""


class DDCError(Exception):
    """Base class of every error raised by the estimation library."""

    def __init__(self, detail: str):
        self.detail: str = detail
        super().__init__(self.detail)


class NumericalDomainError(DDCError, ValueError):
    """Raised when an argument lies outside a function's domain."""


class BracketingError(DDCError):
    """Raised when a root-finding bracket has no sign change."""


class DimensionMismatchError(DDCError, ValueError):
    """Raised when arrays or objects disagree on their dimensions."""


class InvalidMixtureError(DDCError, ValueError):
    """Raised when mixture parameters violate the mixture invariants."""


class InvalidModelError(DDCError, ValueError):
    """Raised when a dynamic model specification is inconsistent."""


class ConvergenceError(DDCError):
    """Raised when an iterative solver fails to reach its tolerance."""

    def __init__(
        self,
        detail: str,
        residual: float | None = None,
        trace: list[float] | None = None,
    ):
        self.residual: float | None = residual
        self.trace: list[float] = trace or []
        super().__init__(detail)


class EmptySampleError(DDCError, ValueError):
    """Raised when a summary needs more draws than are available."""


class ConfigError(DDCError):
    """Raised when a run configuration cannot be loaded or validated."""


class DataMismatchError(DDCError):
    """Raised when input data do not fit the configured model."""


class StoreError(DDCError):
    """Raised when a draw store cannot be read, written or resumed."""
