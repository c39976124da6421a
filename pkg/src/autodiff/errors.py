"""Exceptions raised by the differentiation engine."""
from __future__ import annotations

from typing import Optional


class DimensionError(ValueError):
    """Raised when tensor shapes disagree with what an operation expects."""

    def __init__(self, message: str, *, axis: Optional[str] = None) -> None:
        super().__init__(message)
        self.axis = axis


class DegenerateBatchError(ValueError):
    """Raised when train-mode batch normalization sees a single sample per channel."""


class LabelFormatError(ValueError):
    """Raised when a label row is not a valid one-hot vector."""


class TapeStateError(RuntimeError):
    """Raised when backward is requested on a tape that cannot provide it."""


class OptimizerStateError(RuntimeError):
    """Raised when an optimizer step is requested without usable gradients."""


class NonFiniteError(FloatingPointError):
    """Raised when an operation produces NaN or Inf values."""

    def __init__(self, message: str, *, op: Optional[str] = None) -> None:
        super().__init__(message)
        self.op = op
