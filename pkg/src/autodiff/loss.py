"""Softmax cross-entropy loss."""
from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from src.autodiff.errors import DimensionError, LabelFormatError
from src.autodiff.tensor import Tape, Tensor


def one_hot(labels: np.ndarray, num_classes: int = 2) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    encoded = np.zeros((labels.shape[0], num_classes), dtype=np.float64)
    encoded[np.arange(labels.shape[0]), labels] = 1.0
    return encoded


def _validate_one_hot(onehot: np.ndarray) -> None:
    binary = np.all((onehot == 0.0) | (onehot == 1.0), axis=1)
    single = onehot.sum(axis=1) == 1.0
    bad_rows = np.flatnonzero(~(binary & single))
    if bad_rows.size:
        raise LabelFormatError(f"label rows {bad_rows[:5].tolist()} are not one-hot vectors")


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise log-softmax with max subtraction; the max term is kept out of the log sum."""

    shifted = logits - logits.max(axis=1, keepdims=True)
    exps = np.exp(shifted)
    top = np.argmax(logits, axis=1)
    exps[np.arange(logits.shape[0]), top] = 0.0
    return shifted - np.log1p(exps.sum(axis=1, keepdims=True))


def softmax_cross_entropy(
    logits: Tensor, onehot_labels: np.ndarray, tape: Optional[Tape] = None
) -> Tuple[Tensor, Tensor]:
    """Mean over the batch of per-sample cross-entropies; returns (loss, probabilities)."""

    labels = np.asarray(onehot_labels, dtype=np.float64)
    if len(logits.shape) != 2 or logits.shape != labels.shape:
        raise DimensionError(
            f"logits {logits.shape} and labels {labels.shape} must both be [B, K]", axis="K"
        )
    if logits.shape[1] < 2:
        raise DimensionError("softmax cross-entropy needs K >= 2 classes", axis="K")
    _validate_one_hot(labels)

    values = logits.values.astype(np.float64, copy=False)
    log_probs = log_softmax(values)
    probabilities = np.exp(log_probs)
    batch = values.shape[0]
    per_sample = -np.sum(labels * log_probs, axis=1)
    loss = Tensor(np.maximum(per_sample, 0.0).mean())
    if tape is not None:
        def _backward(grad: np.ndarray):
            return ((probabilities - labels) * (grad / batch),)

        tape.record("softmax_cross_entropy", (logits,), loss, _backward)
    return loss, Tensor(probabilities)
