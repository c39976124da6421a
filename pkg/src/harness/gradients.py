"""Finite-difference checks of whole preset networks."""
from __future__ import annotations

import logging
from typing import Optional

import numpy as np

from src.autodiff.gradcheck import GradCheckReport, check_gradients
from src.autodiff.loss import one_hot, softmax_cross_entropy
from src.autodiff.tensor import Tape, Tensor
from src.config import NUMERIC
from src.harness.models import DecisionModel

LOGGER = logging.getLogger(__name__)


class KinkRedrawError(RuntimeError):
    """Raised when no batch clear of non-differentiable points was found."""

    def __init__(self, message: str, *, attempts: int) -> None:
        super().__init__(message)
        self.attempts = attempts


def _forward_margin(model: DecisionModel, x: np.ndarray, onehot: np.ndarray) -> float:
    tape = Tape()
    logits = model.forward(Tensor(x), tape, training=True)
    softmax_cross_entropy(logits, onehot, tape)
    return tape.min_kink_margin()


def check_model_gradients(
    model: DecisionModel,
    inputs: np.ndarray,
    labels: np.ndarray,
    *,
    batches: int = 5,
    batch_size: int = 8,
    max_entries: Optional[int] = 32,
    margin: float = NUMERIC.gradcheck_kink_margin,
    max_attempts: int = 50,
    seed: int = 0,
) -> GradCheckReport:
    """Check every parameter of ``model`` on ``batches`` random batches.

    Batches with any activation, pooling tie or hard-tanh input closer than
    ``margin`` to a kink are redrawn. Binarized models are checked in relaxed
    mode. Running statistics are restored afterwards.
    """

    rng = np.random.default_rng(seed)
    saved = {key: value.copy() for key, value in model.buffers().items()}
    params = model.parameters()
    model.set_relaxed(True)
    report = GradCheckReport()
    try:
        for batch_idx in range(batches):
            for attempt in range(1, max_attempts + 1):
                picks = rng.choice(len(labels), size=batch_size, replace=False)
                x = np.asarray(inputs[picks], dtype=np.float64)
                onehot = one_hot(labels[picks])
                if _forward_margin(model, x, onehot) >= margin:
                    break
            else:
                raise KinkRedrawError(
                    f"no batch cleared the kink margin {margin} in {max_attempts} draws", attempts=max_attempts
                )

            def loss_fn(tape: Optional[Tape], x=x, onehot=onehot) -> Tensor:
                logits = model.forward(Tensor(x), tape, training=True)
                loss, _ = softmax_cross_entropy(logits, onehot, tape)
                return loss

            batch_report = check_gradients(
                loss_fn, params, max_entries=max_entries, rng=np.random.default_rng(seed + batch_idx)
            )
            LOGGER.debug(
                "%s batch %s (draw %s): max rel error %.3e",
                model.kind.value,
                batch_idx,
                attempt,
                batch_report.max_rel_error,
            )
            report = report.merge(batch_report)
    finally:
        model.set_relaxed(False)
        model.load_buffers(saved)
    return report
