"""Adam optimizer with bias correction."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from src.autodiff.errors import OptimizerStateError
from src.autodiff.tensor import Tensor
from src.config import NUMERIC

LOGGER = logging.getLogger(__name__)


@dataclass(slots=True)
class AdamState:
    """Moment estimates per tracked parameter."""

    lr: float = 0.0005
    beta1: float = NUMERIC.adam_beta1
    beta2: float = NUMERIC.adam_beta2
    epsilon: float = NUMERIC.adam_epsilon
    step_count: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)
    steps: List[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.lr < 0:
            raise ValueError(f"learning rate must be non-negative, got {self.lr}")
        for name in ("beta1", "beta2"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {value}")

    def track(self, params: Sequence[Tensor]) -> None:
        if not self.m:
            self.m = [np.zeros_like(p.values) for p in params]
            self.v = [np.zeros_like(p.values) for p in params]
            self.steps = [0] * len(params)
        elif len(self.m) != len(params):
            raise OptimizerStateError(
                f"optimizer tracks {len(self.m)} parameters but step received {len(params)}"
            )


def adam_step(params: Sequence[Tensor], state: AdamState) -> AdamState:
    """Apply one bias-corrected Adam update in place.

    A parameter whose gradient is identically zero is left untouched together
    with its moments and its own step count, so an all-zero gradient step is
    the identity and later bias corrections count only real updates.
    """

    missing = [p.name or f"#{idx}" for idx, p in enumerate(params) if p.grad is None]
    if missing:
        raise OptimizerStateError(f"missing gradients for parameters: {missing}")
    state.track(params)
    for idx, param in enumerate(params):
        grad = param.grad
        if grad.shape != param.values.shape:
            raise OptimizerStateError(
                f"gradient shape {grad.shape} does not match parameter {param.name} {param.values.shape}"
            )
        if not np.any(grad):
            continue
        state.steps[idx] += 1
        t = state.steps[idx]
        m = state.m[idx]
        v = state.v[idx]
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        param.values -= state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    state.step_count += 1
    return state


class Adam:
    """Thin stateful wrapper binding a parameter list to an ``AdamState``."""

    def __init__(self, params: Sequence[Tensor], *, lr: float = 0.0005, **kwargs) -> None:
        self.params = list(params)
        self.state = AdamState(lr=lr, **kwargs)
        self.state.track(self.params)

    def step(self) -> None:
        adam_step(self.params, self.state)
