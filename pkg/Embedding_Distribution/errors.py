"""
Exception hierarchy shared by every package in the lab.
"""

from typing import Optional, Sequence


class EmbeddingLabError(Exception):
    """Base class for all errors raised by the lab."""


class DomainError(EmbeddingLabError, ValueError):
    """An argument lies outside the support of a distribution."""


class ConvergenceError(EmbeddingLabError, ArithmeticError):
    """An iterative numerical routine hit its iteration cap."""


class NumericalError(EmbeddingLabError, ArithmeticError):
    """
    A computation is numerically unusable, e.g. a Beta sample so close to the
    boundary that its density underflows.

    Args:
        message: Human readable description
        coordinates: Indices of the offending coordinates, if known
    """

    def __init__(self, message: str, coordinates: Optional[Sequence[int]] = None):
        super().__init__(message)
        self.coordinates = list(coordinates) if coordinates is not None else []


class ShapeError(EmbeddingLabError, ValueError):
    """Array shapes do not match the model or dataset dimensions."""


class ConfigError(EmbeddingLabError, ValueError):
    """Invalid or inconsistent configuration."""


class StageError(EmbeddingLabError):
    """
    A protocol stage failed.

    Args:
        stage: Name of the failing stage
        cause: The underlying exception
    """

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"Stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


class VerificationError(EmbeddingLabError):
    """One or more verification stages did not pass."""
