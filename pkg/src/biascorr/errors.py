"""Exception types raised by the public API.

Everything data-shaped derives from :class:`DataError` (a ``ValueError``),
so callers can catch one type; the subclasses carry enough payload
(index, column names, epoch) to act on programmatically.
"""

from __future__ import annotations


class DataError(ValueError):
    """Invalid data handed to a constructor or numeric routine."""


class NonFiniteError(DataError):
    """A NaN or infinity where only finite values are admitted."""

    def __init__(self, message: str, index=None):
        super().__init__(message)
        self.index = index


class ShapeMismatchError(DataError):
    """Array dimensions disagree with each other or with the contract."""


class InsufficientDataError(DataError):
    """Too few points for the requested operation."""


class SingularMatrixError(DataError):
    """Rank-deficient design matrix in a least-squares fit."""

    def __init__(self, message: str, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class DegenerateDataError(DataError):
    """Statistically degenerate input (zero variance, vanishing denominator)."""


class ConfigError(ValueError):
    """Invalid configuration value."""


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, epoch=None):
        super().__init__(message)
        self.epoch = epoch
