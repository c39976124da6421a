"""Bit-packed inference for a trained binarized CNN."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.autodiff.functional import activation_forward, batchnorm_normalize
from src.autodiff.layers import Activation, BatchNorm1d, Flatten, Layer, MaxPool1d
from src.autodiff.tensor import Tensor
from src.binary.ops import (
    Binarize,
    BinaryConv1d,
    BinaryDense,
    SignTensor,
    binarize,
    binary_conv1d,
    binary_dense,
)
from src.binary.packing import PackedBits, pack, pack_kernels, packed_conv1d, xnor_popcount_matmul

LOGGER = logging.getLogger(__name__)


@dataclass(slots=True)
class _ConvStage:
    signs: SignTensor
    packed: PackedBits
    kernel_size: int
    padding: int
    stride: int


@dataclass(slots=True)
class _NormStage:
    mean: np.ndarray
    var: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    epsilon: float


@dataclass(slots=True)
class _ActStage:
    layer: Activation


@dataclass(slots=True)
class _PoolStage:
    window: int
    stride: int


class _SignStage:
    pass


class _FlattenStage:
    pass


@dataclass(slots=True)
class _DenseStage:
    signs: SignTensor
    packed: PackedBits
    scale: float


Stage = Union[_ConvStage, _NormStage, _ActStage, _PoolStage, _SignStage, _FlattenStage, _DenseStage]


def _pool(values: np.ndarray, window: int, stride: int) -> np.ndarray:
    return sliding_window_view(values, window, axis=2)[:, :, ::stride, :].max(axis=3)


class PackedBcnn:
    """Read-only packed snapshot of a BCNN's binarized kernels and infer-mode statistics.

    Max-pooling runs after binarization on signs: max then msb equals msb then
    max under msb(0) = +1, so decisions match the latent float path exactly.
    """

    def __init__(self, stages: Sequence[Stage]) -> None:
        self.stages: Tuple[Stage, ...] = tuple(stages)
        if not any(isinstance(stage, _DenseStage) for stage in self.stages):
            raise ValueError("packed BCNN needs a binary output layer")

    @classmethod
    def from_model(cls, model) -> "PackedBcnn":
        layers: List[Layer] = list(getattr(model, "layers", model))
        stages: List[Stage] = []
        idx = 0
        while idx < len(layers):
            layer = layers[idx]
            following = layers[idx + 1] if idx + 1 < len(layers) else None
            if isinstance(layer, MaxPool1d) and isinstance(following, Binarize):
                stages.extend([_SignStage(), _PoolStage(layer.window, layer.stride)])
                idx += 2
                continue
            if isinstance(layer, Binarize):
                stages.append(_SignStage())
            elif isinstance(layer, BinaryConv1d):
                signs = layer.kernel_signs()
                stages.append(
                    _ConvStage(signs, pack_kernels(signs), signs.shape[2], layer.padding, layer.stride)
                )
            elif isinstance(layer, BatchNorm1d):
                state = layer.state
                stages.append(
                    _NormStage(
                        state.running_mean.copy(),
                        state.running_var.copy(),
                        state.gamma.values.copy(),
                        state.beta.values.copy(),
                        state.epsilon,
                    )
                )
            elif isinstance(layer, Activation):
                stages.append(_ActStage(layer))
            elif isinstance(layer, MaxPool1d):
                stages.append(_PoolStage(layer.window, layer.stride))
            elif isinstance(layer, Flatten):
                stages.append(_FlattenStage())
            elif isinstance(layer, BinaryDense):
                signs = layer.weight_signs()
                stages.append(_DenseStage(signs, pack(signs.signs.T), 1.0 / layer.fan_in))
            else:
                raise ValueError(f"layer {type(layer).__name__} has no packed counterpart")
            idx += 1
        LOGGER.debug("Packed BCNN with %s stages", len(stages))
        return cls(stages)

    def integer_logits(self, windows: np.ndarray, *, naive: bool = False) -> np.ndarray:
        """Pre-scale integer logits [B, K]; ``naive`` uses the unpacked ±1 kernels."""

        x: Union[np.ndarray, SignTensor] = np.asarray(windows, dtype=np.float64)
        for stage in self.stages:
            if isinstance(stage, _SignStage):
                x = binarize(x)
            elif isinstance(stage, _ConvStage):
                if naive:
                    ints = binary_conv1d(x, stage.signs, stage.padding, stage.stride)
                else:
                    ints = packed_conv1d(x, stage.packed, stage.kernel_size, padding=stage.padding, stride=stage.stride)
                x = ints.astype(np.float64)
            elif isinstance(stage, _NormStage):
                x = batchnorm_normalize(x, stage.mean, stage.var, stage.gamma, stage.beta, stage.epsilon)
            elif isinstance(stage, _ActStage):
                x = activation_forward(Tensor(x), stage.layer.kind, slope=stage.layer.slope).values
            elif isinstance(stage, _PoolStage):
                if isinstance(x, SignTensor):
                    x = SignTensor(_pool(x.signs, stage.window, stage.stride))
                else:
                    x = _pool(x, stage.window, stage.stride)
            elif isinstance(stage, _FlattenStage):
                x = SignTensor(x.signs.reshape(x.signs.shape[0], -1))
            elif isinstance(stage, _DenseStage):
                if naive:
                    return binary_dense(x, stage.signs)
                return xnor_popcount_matmul(pack(x), stage.packed)
        raise ValueError("packed BCNN ended without an output layer")

    @property
    def output_scale(self) -> float:
        return next(stage.scale for stage in self.stages if isinstance(stage, _DenseStage))

    def logits(self, windows: np.ndarray) -> np.ndarray:
        return self.integer_logits(windows) * self.output_scale

    def predict(self, windows: np.ndarray) -> np.ndarray:
        return np.argmax(self.integer_logits(windows), axis=1)


def measure_throughput(engine: PackedBcnn, windows: np.ndarray, *, repeats: int = 3) -> Dict[str, float]:
    """Windows per second for the packed and naive ±1 paths (best of ``repeats``)."""

    rates: Dict[str, float] = {}
    for label, naive in (("packed", False), ("naive", True)):
        best = float("inf")
        for _ in range(repeats):
            start = time.perf_counter()
            engine.integer_logits(windows, naive=naive)
            best = min(best, time.perf_counter() - start)
        rates[label] = len(windows) / max(best, 1e-12)
    rates["speedup"] = rates["packed"] / rates["naive"]
    LOGGER.info(
        "Packed path %.0f windows/s, naive path %.0f windows/s (x%.2f)",
        rates["packed"],
        rates["naive"],
        rates["speedup"],
    )
    return rates
