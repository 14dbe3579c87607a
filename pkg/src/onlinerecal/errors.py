"""Exception types shared across the package."""


class RecalError(Exception):
    """Base class for all package errors."""


class DomainError(RecalError, ValueError):
    """An argument lies outside its mathematical domain."""


class ProtocolError(RecalError, RuntimeError):
    """Predict/update calls arrived out of order."""


class EmptyStateError(RecalError, ValueError):
    """A statistic was requested before any step was recorded."""


class NumericFailure(RecalError, ArithmeticError):
    """An iterative solver did not reach its tolerance.

    Attributes:
        residual: the sup-norm residual at the point of failure.
    """

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class DataError(RecalError, ValueError):
    """Malformed input data (CSV ingestion)."""


class ConfigError(RecalError, ValueError):
    """Invalid experiment configuration."""
