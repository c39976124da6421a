"""Mini-batch Adam training with periodic held-out evaluation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field
from tqdm import tqdm

from src.autodiff.errors import NonFiniteError
from src.autodiff.loss import one_hot, softmax_cross_entropy
from src.autodiff.optim import Adam
from src.autodiff.tensor import Tape, Tensor, backward
from src.dataset.windows import WindowedDataset
from src.harness.models import DecisionModel, Model
from src.link.simulate import derive_seed

LOGGER = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    """Raised when the training loss or a gradient stops being finite."""

    def __init__(self, message: str, *, iteration: int) -> None:
        super().__init__(message)
        self.iteration = iteration


class EmptyDatasetError(ValueError):
    """Raised when training or evaluation receives no windows."""


class TrainConfig(BaseModel):
    batch_size: int = Field(default=1024, ge=2)
    lr: float = Field(default=0.0005, ge=0.0)
    max_iterations: int = Field(default=3000, ge=1)
    target_accuracy: float = Field(default=0.985, gt=0.0, le=1.0)
    eval_every: int = Field(default=25, ge=1)
    patience: int = Field(default=20, ge=1)
    seed: int = 0

    model_config = {"extra": "forbid"}


@dataclass(slots=True)
class TraceRecord:
    iteration: int
    train_loss: float
    test_accuracy: float


@dataclass
class TrainTrace:
    model: str
    records: List[TraceRecord] = field(default_factory=list)
    iterations_to_target: Optional[int] = None
    iterations_run: int = 0

    @property
    def converged(self) -> bool:
        return self.iterations_to_target is not None

    @property
    def final_accuracy(self) -> Optional[float]:
        return self.records[-1].test_accuracy if self.records else None


def evaluate_ber(model: Model, dataset: WindowedDataset) -> Tuple[float, int, int]:
    """Exact error count of the argmax decisions; returns (ber, errors, count)."""

    count = len(dataset)
    if count == 0:
        raise EmptyDatasetError("cannot evaluate on an empty dataset")
    decisions = model.decide(dataset)
    errors = int(np.count_nonzero(decisions != dataset.labels))
    return errors / count, errors, count


def accuracy(model: Model, dataset: WindowedDataset) -> float:
    ber, _, _ = evaluate_ber(model, dataset)
    return 1.0 - ber


def _train_step(model: DecisionModel, optimizer: Adam, x: np.ndarray, labels: np.ndarray, iteration: int) -> float:
    tape = Tape()
    try:
        logits = model.forward(Tensor(x), tape, training=True)
        loss, _ = softmax_cross_entropy(logits, one_hot(labels), tape)
        backward(tape, loss)
    except NonFiniteError as exc:
        raise DivergenceError(f"training diverged at iteration {iteration}: {exc}", iteration=iteration) from exc
    optimizer.step()
    model.after_step()
    return loss.item()


def train(
    model: Model,
    train_set: WindowedDataset,
    test_set: WindowedDataset,
    cfg: Optional[TrainConfig] = None,
    *,
    progress: bool = False,
) -> TrainTrace:
    """Train ``model`` in place.

    Stops at ``max_iterations`` or ``patience`` evaluations without improvement
    once the target accuracy was reached. Parameterless models are only
    evaluated.
    """

    cfg = cfg or TrainConfig()
    if len(train_set) == 0 or len(test_set) == 0:
        raise EmptyDatasetError("train and test sets must both be non-empty")
    trace = TrainTrace(model=model.kind.value)
    if not isinstance(model, DecisionModel):
        trace.records.append(TraceRecord(0, float("nan"), accuracy(model, test_set)))
        return trace

    batch_size = min(cfg.batch_size, len(train_set))
    batches_per_epoch = len(train_set) // batch_size
    optimizer = Adam(model.parameters(), lr=cfg.lr)
    rng = np.random.default_rng(derive_seed(cfg.seed, "shuffle"))
    best = -1.0
    stale = 0
    order = np.empty(0, dtype=np.int64)
    losses: List[float] = []

    for iteration in tqdm(range(1, cfg.max_iterations + 1), desc=f"Training {model.kind.value}", disable=not progress):
        slot = (iteration - 1) % batches_per_epoch
        if slot == 0:
            order = rng.permutation(len(train_set))
        picks = order[slot * batch_size : (slot + 1) * batch_size]
        losses.append(_train_step(model, optimizer, train_set.inputs[picks], train_set.labels[picks], iteration))
        trace.iterations_run = iteration

        if iteration % cfg.eval_every and iteration != cfg.max_iterations:
            continue
        acc = accuracy(model, test_set)
        trace.records.append(TraceRecord(iteration, float(np.mean(losses)), acc))
        losses.clear()
        LOGGER.debug("%s iteration %s: accuracy %.5f", model.kind.value, iteration, acc)
        if trace.iterations_to_target is None and acc >= cfg.target_accuracy:
            trace.iterations_to_target = iteration
            LOGGER.info("%s reached accuracy %.4f at iteration %s", model.kind.value, acc, iteration)
        if acc > best:
            best, stale = acc, 0
        else:
            stale += 1
        if trace.converged and stale >= cfg.patience:
            LOGGER.info("%s stopped after %s stale evaluations", model.kind.value, stale)
            break

    if not trace.converged:
        LOGGER.warning(
            "%s did not reach accuracy %.4f within %s iterations",
            model.kind.value,
            cfg.target_accuracy,
            cfg.max_iterations,
        )
    return trace
