"""Forward/backward kernels for the fixed layer set."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.autodiff.errors import DegenerateBatchError, DimensionError
from src.autodiff.tensor import Tape, Tensor
from src.config import NUMERIC

LOGGER = logging.getLogger(__name__)


@dataclass(slots=True)
class ConvParams:
    """Kernel set, bias and geometry of a 1-D convolution."""

    kernels: Tensor
    bias: Optional[Tensor] = None
    padding: int = 0
    stride: int = 1

    def __post_init__(self) -> None:
        if len(self.kernels.shape) != 3:
            raise DimensionError(f"kernels must be [N_out, C_in, F], got {self.kernels.shape}", axis="kernels")
        n_out, _, width = self.kernels.shape
        if n_out < 1 or width < 1:
            raise DimensionError(f"kernels need N_out >= 1 and F >= 1, got {self.kernels.shape}", axis="kernels")
        if self.stride < 1:
            raise DimensionError(f"stride must be >= 1, got {self.stride}", axis="stride")
        if self.padding < 0:
            raise DimensionError(f"padding must be >= 0, got {self.padding}", axis="padding")
        if self.bias is not None and self.bias.shape != (n_out,):
            raise DimensionError(f"bias must have shape ({n_out},), got {self.bias.shape}", axis="bias")

    @property
    def out_channels(self) -> int:
        return self.kernels.shape[0]

    @property
    def in_channels(self) -> int:
        return self.kernels.shape[1]

    @property
    def kernel_size(self) -> int:
        return self.kernels.shape[2]


class BatchNormMode(str, Enum):
    TRAIN = "train"
    INFER = "infer"


@dataclass(slots=True)
class BatchNormState:
    """Per-channel affine parameters and running statistics."""

    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = NUMERIC.bn_epsilon
    momentum: float = NUMERIC.bn_momentum
    mode: BatchNormMode = BatchNormMode.TRAIN

    @classmethod
    def fresh(cls, channels: int, *, name: str = "bn", **kwargs) -> "BatchNormState":
        return cls(
            gamma=Tensor(np.ones(channels), name=f"{name}.gamma"),
            beta=Tensor(np.zeros(channels), name=f"{name}.beta"),
            running_mean=np.zeros(channels),
            running_var=np.ones(channels),
            **kwargs,
        )


class ActivationKind(str, Enum):
    LEAKY_RELU = "leaky_relu"
    RELU = "relu"
    SIGMOID = "sigmoid"
    TANH = "tanh"


def conv_output_length(length: int, kernel_size: int, padding: int, stride: int) -> int:
    span = length + 2 * padding - kernel_size
    if span < 0:
        raise DimensionError(
            f"padded length {length + 2 * padding} shorter than kernel size {kernel_size}", axis="length"
        )
    return span // stride + 1


def conv_windows(padded: np.ndarray, kernel_size: int, stride: int) -> np.ndarray:
    """View of shape [B, C, L_out, F] over an already padded input."""

    return sliding_window_view(padded, kernel_size, axis=2)[:, :, ::stride, :]


def _conv1d_backward(
    grad: np.ndarray,
    windows: np.ndarray,
    kernels: np.ndarray,
    input_shape: Tuple[int, ...],
    padding: int,
    stride: int,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    kernel_size = kernels.shape[2]
    out_len = grad.shape[2]
    grad_kernels = np.tensordot(grad, windows, axes=([0, 2], [0, 2]))
    grad_bias = grad.sum(axis=(0, 2))
    grad_windows = np.tensordot(grad, kernels, axes=([1], [0])).transpose(0, 2, 1, 3)
    batch, channels, length = input_shape
    grad_padded = np.zeros((batch, channels, length + 2 * padding), dtype=grad.dtype)
    stop_offset = stride * (out_len - 1) + 1
    for tap in range(kernel_size):
        grad_padded[:, :, tap : tap + stop_offset : stride] += grad_windows[:, :, :, tap]
    grad_input = grad_padded[:, :, padding : padding + length]
    return grad_input, grad_kernels, grad_bias


def conv1d_forward(x: Tensor, params: ConvParams, tape: Optional[Tape] = None) -> Tensor:
    """Cross-correlate ``x`` [B, C_in, L] with every kernel set, zero padded."""

    if len(x.shape) != 3:
        raise DimensionError(f"conv1d input must be [B, C_in, L], got {x.shape}", axis="input")
    batch, channels, length = x.shape
    if channels != params.in_channels:
        raise DimensionError(
            f"conv1d input has {channels} channels but kernels expect {params.in_channels}", axis="C_in"
        )
    conv_output_length(length, params.kernel_size, params.padding, params.stride)
    dtype = x.values.dtype
    kernels = params.kernels.values.astype(dtype, copy=False)
    padded = np.pad(x.values, ((0, 0), (0, 0), (params.padding, params.padding)))
    windows = conv_windows(padded, params.kernel_size, params.stride)
    out_values = np.ascontiguousarray(np.tensordot(windows, kernels, axes=([1, 3], [1, 2])).transpose(0, 2, 1))
    if params.bias is not None:
        out_values = out_values + params.bias.values.astype(dtype, copy=False)[None, :, None]
    out = Tensor(out_values)
    if tape is not None:
        has_bias = params.bias is not None

        def _backward(grad: np.ndarray):
            grad_input, grad_kernels, grad_bias = _conv1d_backward(
                grad, windows, kernels, x.shape, params.padding, params.stride
            )
            return (grad_input, grad_kernels, grad_bias) if has_bias else (grad_input, grad_kernels)

        inputs = (x, params.kernels, params.bias) if has_bias else (x, params.kernels)
        tape.record("conv1d", inputs, out, _backward)
    return out


def dense_forward(x: Tensor, weights: Tensor, bias: Optional[Tensor] = None, tape: Optional[Tape] = None) -> Tensor:
    """Affine map ``x @ weights + bias`` for ``x`` of shape [B, D_in]."""

    if len(x.shape) != 2 or len(weights.shape) != 2:
        raise DimensionError(f"dense expects [B, D_in] x [D_in, D_out], got {x.shape} x {weights.shape}", axis="input")
    if x.shape[1] != weights.shape[0]:
        raise DimensionError(
            f"dense inner dimensions disagree: input has {x.shape[1]}, weights expect {weights.shape[0]}", axis="D_in"
        )
    if bias is not None and bias.shape != (weights.shape[1],):
        raise DimensionError(f"bias must have shape ({weights.shape[1]},), got {bias.shape}", axis="D_out")
    dtype = x.values.dtype
    w = weights.values.astype(dtype, copy=False)
    out_values = x.values @ w
    if bias is not None:
        out_values = out_values + bias.values.astype(dtype, copy=False)
    out = Tensor(out_values)
    if tape is not None:
        def _backward(grad: np.ndarray):
            grads = [grad @ w.T, x.values.T @ grad]
            if bias is not None:
                grads.append(grad.sum(axis=0))
            return grads

        inputs = (x, weights, bias) if bias is not None else (x, weights)
        tape.record("dense", inputs, out, _backward)
    return out


def leaky_relu_forward(x: Tensor, slope: float = NUMERIC.leaky_slope, tape: Optional[Tape] = None) -> Tensor:
    """Elementwise ``x`` for ``x >= 0`` and ``slope * x`` otherwise."""

    positive = x.values >= 0
    out = Tensor(np.where(positive, x.values, slope * x.values))
    if tape is not None:
        local = np.where(positive, 1.0, slope).astype(x.values.dtype)
        margin = float(np.min(np.abs(x.values))) if x.size else math.inf
        tape.record("leaky_relu", (x,), out, lambda grad: (grad * local,), kink_margin=margin)
    return out


def activation_forward(
    x: Tensor,
    kind: ActivationKind = ActivationKind.LEAKY_RELU,
    *,
    slope: float = NUMERIC.leaky_slope,
    tape: Optional[Tape] = None,
) -> Tensor:
    """Apply one of the compared activation functions."""

    kind = ActivationKind(kind)
    if kind is ActivationKind.LEAKY_RELU:
        return leaky_relu_forward(x, slope, tape)
    if kind is ActivationKind.RELU:
        return leaky_relu_forward(x, 0.0, tape)
    if kind is ActivationKind.SIGMOID:
        values = 0.5 * (1.0 + np.tanh(0.5 * x.values))
        local = values * (1.0 - values)
    else:
        values = np.tanh(x.values)
        local = 1.0 - values**2
    out = Tensor(values)
    if tape is not None:
        tape.record(kind.value, (x,), out, lambda grad: (grad * local,))
    return out


def batchnorm_normalize(
    values: np.ndarray,
    mean: np.ndarray,
    var: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    epsilon: float,
) -> np.ndarray:
    """Infer-mode normalization shared with the packed inference engine."""

    dtype = values.dtype
    shape = (1, -1) + (1,) * (values.ndim - 2)
    inv_std = (1.0 / np.sqrt(var + epsilon)).astype(dtype).reshape(shape)
    centered = values - mean.astype(dtype).reshape(shape)
    return centered * inv_std * gamma.astype(dtype).reshape(shape) + beta.astype(dtype).reshape(shape)


def batchnorm_forward(x: Tensor, state: BatchNormState, tape: Optional[Tape] = None) -> Tensor:
    """Per-channel normalization over the batch and length axes."""

    if len(x.shape) not in (2, 3):
        raise DimensionError(f"batchnorm input must be [B, C] or [B, C, L], got {x.shape}", axis="input")
    channels = x.shape[1]
    if state.gamma.shape != (channels,):
        raise DimensionError(
            f"batchnorm has {state.gamma.shape[0]} channels but input has {channels}", axis="C"
        )
    gamma = state.gamma.values
    beta = state.beta.values
    if state.mode is BatchNormMode.INFER:
        out = Tensor(batchnorm_normalize(x.values, state.running_mean, state.running_var, gamma, beta, state.epsilon))
        if tape is not None:
            shape = (1, -1) + (1,) * (x.values.ndim - 2)
            inv_std = (1.0 / np.sqrt(state.running_var + state.epsilon)).reshape(shape)
            normalized = (x.values - state.running_mean.reshape(shape)) * inv_std
            axes = (0,) + tuple(range(2, x.values.ndim))

            def _infer_backward(grad: np.ndarray):
                return (
                    grad * gamma.reshape(shape) * inv_std,
                    np.sum(grad * normalized, axis=axes),
                    np.sum(grad, axis=axes),
                )

            tape.record("batchnorm", (x, state.gamma, state.beta), out, _infer_backward)
        return out

    axes = (0,) + tuple(range(2, x.values.ndim))
    count = x.values.size // channels
    if count < 2:
        raise DegenerateBatchError(
            f"train-mode batchnorm needs at least 2 values per channel, got {count}"
        )
    shape = (1, -1) + (1,) * (x.values.ndim - 2)
    mean = x.values.mean(axis=axes)
    var = x.values.var(axis=axes)
    inv_std = 1.0 / np.sqrt(var + state.epsilon)
    normalized = (x.values - mean.reshape(shape)) * inv_std.reshape(shape)
    out = Tensor(normalized * gamma.reshape(shape) + beta.reshape(shape))

    state.running_mean = state.momentum * state.running_mean + (1.0 - state.momentum) * mean
    state.running_var = state.momentum * state.running_var + (1.0 - state.momentum) * var

    if tape is not None:
        def _train_backward(grad: np.ndarray):
            grad_gamma = np.sum(grad * normalized, axis=axes)
            grad_beta = np.sum(grad, axis=axes)
            grad_norm = grad * gamma.reshape(shape)
            sum1 = np.sum(grad_norm, axis=axes).reshape(shape)
            sum2 = np.sum(grad_norm * normalized, axis=axes).reshape(shape)
            grad_input = (inv_std.reshape(shape) / count) * (count * grad_norm - sum1 - normalized * sum2)
            return grad_input, grad_gamma, grad_beta

        tape.record("batchnorm", (x, state.gamma, state.beta), out, _train_backward)
    return out


def maxpool1d_forward(
    x: Tensor, window: int = 2, stride: int = 2, tape: Optional[Tape] = None
) -> Tuple[Tensor, np.ndarray]:
    """Max over sliding windows; returns the output and the argmax input index per output."""

    if len(x.shape) != 3:
        raise DimensionError(f"maxpool input must be [B, C, L], got {x.shape}", axis="input")
    length = x.shape[2]
    if window > length:
        raise DimensionError(f"pool window {window} exceeds length {length}", axis="length")
    if window < 1 or stride < 1:
        raise DimensionError(f"pool window and stride must be >= 1, got {window}/{stride}", axis="window")
    windows = sliding_window_view(x.values, window, axis=2)[:, :, ::stride, :]
    offsets = np.argmax(windows, axis=3)
    out_len = windows.shape[2]
    argmax = offsets + stride * np.arange(out_len)[None, None, :]
    out = Tensor(np.take_along_axis(windows, offsets[..., None], axis=3)[..., 0])
    if tape is not None:
        margin = math.inf
        if window > 1:
            top_two = np.sort(windows, axis=3)[..., -2:]
            margin = float(np.min(top_two[..., 1] - top_two[..., 0])) / 2.0

        def _backward(grad: np.ndarray):
            grad_input = np.zeros(x.shape, dtype=grad.dtype)
            batch_idx, channel_idx, _ = np.indices(grad.shape)
            np.add.at(grad_input, (batch_idx, channel_idx, argmax), grad)
            return (grad_input,)

        tape.record("maxpool1d", (x,), out, _backward, kink_margin=margin)
    return out, argmax
