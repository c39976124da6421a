"""Tensor container and the reverse-mode tape."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from src.autodiff.errors import NonFiniteError, TapeStateError

LOGGER = logging.getLogger(__name__)

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """Dense array with an optional gradient slot."""

    __slots__ = ("values", "grad", "name")

    def __init__(
        self,
        values: np.ndarray | Sequence[float] | float,
        *,
        name: Optional[str] = None,
        dtype: Optional[np.dtype] = None,
    ) -> None:
        array = np.asarray(values)
        if dtype is None:
            dtype = array.dtype if np.issubdtype(array.dtype, np.floating) else np.float64
        self.values: np.ndarray = np.ascontiguousarray(array, dtype=dtype)
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.values.shape)

    @property
    def size(self) -> int:
        return int(self.values.size)

    def item(self) -> float:
        return float(self.values.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:  # pragma: no cover - debugging helper
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"


def ensure_finite(values: np.ndarray, *, op: str) -> None:
    if not np.all(np.isfinite(values)):
        raise NonFiniteError(f"{op} produced non-finite values", op=op)


@dataclass(slots=True)
class TapeEntry:
    """One executed forward operation."""

    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward_fn: Optional[BackwardFn]
    kink_margin: float = math.inf


@dataclass
class Tape:
    """Ordered record of forward operations, replayed in reverse by ``backward``."""

    entries: List[TapeEntry] = field(default_factory=list)
    consumed: bool = False

    def record(
        self,
        op: str,
        inputs: Sequence[Tensor],
        output: Tensor,
        backward_fn: BackwardFn,
        *,
        kink_margin: float = math.inf,
    ) -> Tensor:
        if self.consumed:
            raise TapeStateError("Cannot record on a tape whose backward pass already ran")
        ensure_finite(output.values, op=op)
        self.entries.append(TapeEntry(op, tuple(inputs), output, backward_fn, kink_margin))
        return output

    def min_kink_margin(self) -> float:
        """Smallest distance of any recorded input to a non-differentiable point."""

        return min((entry.kink_margin for entry in self.entries), default=math.inf)

    def ops(self) -> List[str]:
        return [entry.op for entry in self.entries]

    def backward(self, loss: Tensor) -> None:
        if self.consumed:
            raise TapeStateError("Backward already ran on this tape; record a new forward pass first")
        if not self.entries:
            raise TapeStateError("Backward requested on an empty tape (no forward pass recorded)")
        if self.entries[-1].output is not loss:
            raise TapeStateError("Loss tensor is not the last recorded output of this tape")
        if loss.size != 1:
            raise TapeStateError(f"Backward needs a scalar loss, got shape {loss.shape}")

        for entry in self.entries:
            for tensor in entry.inputs:
                tensor.grad = None
            entry.output.grad = None
        loss.grad = np.ones_like(loss.values)

        for entry in reversed(self.entries):
            upstream = entry.output.grad
            if upstream is None or entry.backward_fn is None:
                continue
            grads = entry.backward_fn(upstream)
            for tensor, grad in zip(entry.inputs, grads):
                if grad is None:
                    continue
                ensure_finite(grad, op=f"{entry.op}.backward")
                tensor.grad = grad if tensor.grad is None else tensor.grad + grad
            entry.backward_fn = None

        self.consumed = True
        LOGGER.debug("Backward pass consumed %s tape entries", len(self.entries))
        self.entries.clear()


def backward(tape: Tape, loss: Tensor) -> None:
    """Populate ``grad`` on every tensor that fed ``loss`` through ``tape``."""

    tape.backward(loss)


def sum_all(x: Tensor, tape: Optional[Tape] = None) -> Tensor:
    """Scalar sum of all elements."""

    out = Tensor(np.sum(x.values), dtype=x.values.dtype)
    if tape is not None:
        shape = x.values.shape

        def _backward(grad: np.ndarray) -> Tuple[np.ndarray]:
            return (np.broadcast_to(grad, shape).astype(x.values.dtype, copy=True),)

        tape.record("sum", (x,), out, _backward)
    return out


def scale(x: Tensor, factor: float, tape: Optional[Tape] = None) -> Tensor:
    """Multiply by a constant."""

    out = Tensor(x.values * factor)
    if tape is not None:
        tape.record("scale", (x,), out, lambda grad: (grad * factor,))
    return out


def flatten(x: Tensor, tape: Optional[Tape] = None) -> Tensor:
    """Collapse all non-batch axes into one."""

    shape = x.values.shape
    out = Tensor(x.values.reshape(shape[0], -1))
    if tape is not None:
        tape.record("flatten", (x,), out, lambda grad: (grad.reshape(shape),))
    return out
