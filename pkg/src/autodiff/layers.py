"""Parameterized layers built on the functional kernels."""
from __future__ import annotations

import math
from typing import Dict, List, Optional

import numpy as np

from src.autodiff.functional import (
    ActivationKind,
    BatchNormMode,
    BatchNormState,
    ConvParams,
    activation_forward,
    batchnorm_forward,
    conv1d_forward,
    dense_forward,
    maxpool1d_forward,
)
from src.autodiff.tensor import Tape, Tensor, flatten
from src.config import NUMERIC


def kaiming_normal(
    shape: tuple, fan_in: int, rng: np.random.Generator, slope: float = NUMERIC.leaky_slope
) -> np.ndarray:
    """Fan-in scaled normal init with the Leaky-ReLU gain."""

    gain = math.sqrt(2.0 / (1.0 + slope**2))
    return rng.normal(0.0, gain / math.sqrt(fan_in), size=shape)


class Layer:
    """Base class: forward on tensors, expose parameters and persistent state."""

    name: str = "layer"

    def forward(self, x: Tensor, tape: Optional[Tape] = None, *, training: bool = False) -> Tensor:
        raise NotImplementedError

    def parameters(self) -> List[Tensor]:
        return []

    def buffers(self) -> Dict[str, np.ndarray]:
        return {}

    def load_buffers(self, buffers: Dict[str, np.ndarray]) -> None:
        return None


class Conv1d(Layer):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        *,
        padding: int = 0,
        stride: int = 1,
        bias: bool = True,
        rng: Optional[np.random.Generator] = None,
        name: str = "conv",
    ) -> None:
        rng = rng or np.random.default_rng(0)
        self.name = name
        fan_in = in_channels * kernel_size
        kernels = Tensor(
            kaiming_normal((out_channels, in_channels, kernel_size), fan_in, rng), name=f"{name}.kernels"
        )
        bias_tensor = Tensor(np.zeros(out_channels), name=f"{name}.bias") if bias else None
        self.params = ConvParams(kernels=kernels, bias=bias_tensor, padding=padding, stride=stride)

    def forward(self, x: Tensor, tape: Optional[Tape] = None, *, training: bool = False) -> Tensor:
        return conv1d_forward(x, self.params, tape)

    def parameters(self) -> List[Tensor]:
        return [p for p in (self.params.kernels, self.params.bias) if p is not None]


class Dense(Layer):
    def __init__(
        self,
        in_features: int,
        out_features: int,
        *,
        bias: bool = True,
        rng: Optional[np.random.Generator] = None,
        name: str = "dense",
    ) -> None:
        rng = rng or np.random.default_rng(0)
        self.name = name
        self.weights = Tensor(kaiming_normal((in_features, out_features), in_features, rng), name=f"{name}.weights")
        self.bias = Tensor(np.zeros(out_features), name=f"{name}.bias") if bias else None

    def forward(self, x: Tensor, tape: Optional[Tape] = None, *, training: bool = False) -> Tensor:
        return dense_forward(x, self.weights, self.bias, tape)

    def parameters(self) -> List[Tensor]:
        return [p for p in (self.weights, self.bias) if p is not None]


class BatchNorm1d(Layer):
    def __init__(self, channels: int, *, name: str = "bn") -> None:
        self.name = name
        self.state = BatchNormState.fresh(channels, name=name)

    def forward(self, x: Tensor, tape: Optional[Tape] = None, *, training: bool = False) -> Tensor:
        self.state.mode = BatchNormMode.TRAIN if training else BatchNormMode.INFER
        return batchnorm_forward(x, self.state, tape)

    def parameters(self) -> List[Tensor]:
        return [self.state.gamma, self.state.beta]

    def buffers(self) -> Dict[str, np.ndarray]:
        return {"running_mean": self.state.running_mean, "running_var": self.state.running_var}

    def load_buffers(self, buffers: Dict[str, np.ndarray]) -> None:
        self.state.running_mean = np.array(buffers["running_mean"], dtype=np.float64)
        self.state.running_var = np.array(buffers["running_var"], dtype=np.float64)


class Activation(Layer):
    def __init__(
        self, kind: ActivationKind = ActivationKind.LEAKY_RELU, *, slope: float = NUMERIC.leaky_slope, name: str = "act"
    ) -> None:
        self.name = name
        self.kind = ActivationKind(kind)
        self.slope = slope

    def forward(self, x: Tensor, tape: Optional[Tape] = None, *, training: bool = False) -> Tensor:
        return activation_forward(x, self.kind, slope=self.slope, tape=tape)


class MaxPool1d(Layer):
    def __init__(self, window: int = 2, stride: int = 2, *, name: str = "pool") -> None:
        self.name = name
        self.window = window
        self.stride = stride

    def forward(self, x: Tensor, tape: Optional[Tape] = None, *, training: bool = False) -> Tensor:
        out, _ = maxpool1d_forward(x, self.window, self.stride, tape)
        return out


class Flatten(Layer):
    name = "flatten"

    def forward(self, x: Tensor, tape: Optional[Tape] = None, *, training: bool = False) -> Tensor:
        return flatten(x, tape)
