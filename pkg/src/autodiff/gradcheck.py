"""Central finite-difference gradient verification."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from src.autodiff.tensor import Tape, Tensor, backward
from src.config import NUMERIC

LOGGER = logging.getLogger(__name__)

LossFn = Callable[[Optional[Tape]], Tensor]


@dataclass(slots=True)
class GradCheckResult:
    """Outcome for one parameter tensor."""

    name: str
    max_rel_error: float
    checked: int
    skipped: int


@dataclass
class GradCheckReport:
    results: List[GradCheckResult] = field(default_factory=list)
    tolerance: float = NUMERIC.gradcheck_tolerance

    @property
    def max_rel_error(self) -> float:
        return max((r.max_rel_error for r in self.results), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def by_layer(self) -> Dict[str, float]:
        """Worst relative error per layer (parameter names are ``<layer>.<param>``)."""

        worst: Dict[str, float] = {}
        for result in self.results:
            layer = result.name.rsplit(".", 1)[0]
            worst[layer] = max(worst.get(layer, 0.0), result.max_rel_error)
        return worst

    def merge(self, other: "GradCheckReport") -> "GradCheckReport":
        merged: Dict[str, GradCheckResult] = {r.name: r for r in self.results}
        for result in other.results:
            current = merged.get(result.name)
            if current is None or result.max_rel_error > current.max_rel_error:
                merged[result.name] = result
        return GradCheckReport(results=list(merged.values()), tolerance=self.tolerance)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(scale > 0, np.abs(analytic - numeric) / scale, 0.0)


def numerical_gradient(
    loss_fn: LossFn, tensor: Tensor, indices: Sequence[int], h: float = NUMERIC.gradcheck_step
) -> np.ndarray:
    """Central differences of ``loss_fn`` w.r.t. the selected flat entries of ``tensor``."""

    flat = tensor.values.reshape(-1)
    grads = np.zeros(len(indices))
    for pos, idx in enumerate(indices):
        original = flat[idx]
        flat[idx] = original + h
        plus = loss_fn(None).item()
        flat[idx] = original - h
        minus = loss_fn(None).item()
        flat[idx] = original
        grads[pos] = (plus - minus) / (2.0 * h)
    return grads


def check_gradients(
    loss_fn: LossFn,
    params: Sequence[Tensor],
    *,
    h: float = NUMERIC.gradcheck_step,
    tolerance: float = NUMERIC.gradcheck_tolerance,
    floor: float = NUMERIC.gradcheck_floor,
    max_entries: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> GradCheckReport:
    """Compare tape gradients against central differences for every tensor in ``params``."""

    rng = rng or np.random.default_rng(0)
    tape = Tape()
    loss = loss_fn(tape)
    backward(tape, loss)
    analytic = {id(p): (np.zeros_like(p.values) if p.grad is None else p.grad.copy()) for p in params}

    report = GradCheckReport(tolerance=tolerance)
    for idx, param in enumerate(params):
        name = param.name or f"param{idx}"
        size = param.size
        if max_entries is not None and size > max_entries:
            entries = np.sort(rng.choice(size, size=max_entries, replace=False))
        else:
            entries = np.arange(size)
        numeric = numerical_gradient(loss_fn, param, entries, h)
        exact = analytic[id(param)].reshape(-1)[entries]
        keep = np.maximum(np.abs(exact), np.abs(numeric)) >= floor
        errors = relative_error(exact[keep], numeric[keep])
        worst = float(errors.max()) if errors.size else 0.0
        report.results.append(
            GradCheckResult(name=name, max_rel_error=worst, checked=int(keep.sum()), skipped=int((~keep).sum()))
        )
        LOGGER.debug("gradcheck %s: max rel error %.3e over %s entries", name, worst, int(keep.sum()))
    return report
