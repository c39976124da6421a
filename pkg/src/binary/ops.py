"""Sign-domain arithmetic and the straight-through training path for binarized layers."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Union

import numpy as np

from src.autodiff.errors import DimensionError
from src.autodiff.functional import ConvParams, conv1d_forward, conv_output_length, conv_windows, dense_forward
from src.autodiff.layers import Layer, kaiming_normal
from src.autodiff.tensor import Tape, Tensor, scale
from src.config import NUMERIC

LOGGER = logging.getLogger(__name__)

ArrayLike = Union[Tensor, np.ndarray]


class NumericDomainError(ValueError):
    """Raised when a sign is requested for a NaN or infinite value."""


def msb(x: float) -> int:
    """Sign bit as +1/-1; zero maps to +1."""

    if not math.isfinite(x):
        raise NumericDomainError(f"msb undefined for {x!r}")
    return 1 if x >= 0 else -1


@dataclass(slots=True)
class SignTensor:
    """Array whose every element is exactly -1 or +1."""

    signs: np.ndarray

    def __post_init__(self) -> None:
        self.signs = np.asarray(self.signs, dtype=np.int8)
        if not np.all((self.signs == 1) | (self.signs == -1)):
            raise NumericDomainError("SignTensor elements must be -1 or +1")

    @property
    def shape(self) -> tuple:
        return tuple(self.signs.shape)

    def as_real(self, dtype: np.dtype = np.float64) -> np.ndarray:
        return self.signs.astype(dtype)


def _values(x: ArrayLike) -> np.ndarray:
    return x.values if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def binarize(x: ArrayLike) -> SignTensor:
    """Elementwise msb of a real array."""

    values = _values(x)
    if not np.all(np.isfinite(values)):
        raise NumericDomainError("cannot binarize non-finite values")
    return SignTensor(np.where(values >= 0, 1, -1).astype(np.int8))


def ste_backward(upstream_grad: Tensor, latent: Tensor, clip: float = NUMERIC.ste_clip) -> Tensor:
    """Pass the gradient where ``|latent| <= clip``; zero it elsewhere."""

    if upstream_grad.shape != latent.shape:
        raise DimensionError(
            f"upstream {upstream_grad.shape} and latent {latent.shape} shapes differ", axis="latent"
        )
    return Tensor(_ste_mask(upstream_grad.values, latent.values, clip))


def _ste_mask(grad: np.ndarray, latent: np.ndarray, clip: float) -> np.ndarray:
    return np.where(np.abs(latent) <= clip, grad, 0.0).astype(grad.dtype, copy=False)


def binarize_forward(
    x: Tensor,
    tape: Optional[Tape] = None,
    *,
    clip: float = NUMERIC.ste_clip,
    relaxed: bool = False,
) -> Tensor:
    """Binarize with a straight-through backward.

    In relaxed mode the forward is hard-tanh on ``[-clip, clip]``, whose exact
    derivative is the STE mask; gradient checks run the network that way.
    """

    if relaxed:
        out = Tensor(np.clip(x.values, -clip, clip))
    else:
        out = Tensor(binarize(x).as_real(x.values.dtype))
    if tape is not None:
        margin = math.inf
        if relaxed and x.size:
            margin = float(np.min(np.abs(np.abs(x.values) - clip)))
        latent = x.values
        tape.record(
            "binarize",
            (x,),
            out,
            lambda grad: (_ste_mask(grad, latent, clip),),
            kink_margin=margin,
        )
    return out


def pad_constant(x: Tensor, padding: int, value: float, tape: Optional[Tape] = None) -> Tensor:
    """Pad the length axis of [B, C, L] with a constant."""

    if padding == 0:
        return x
    out = Tensor(np.pad(x.values, ((0, 0), (0, 0), (padding, padding)), constant_values=value))
    if tape is not None:
        tape.record("pad", (x,), out, lambda grad: (grad[:, :, padding:-padding],))
    return out


def binary_conv1d(input: SignTensor, kernels: SignTensor, padding: int = 0, stride: int = 1) -> np.ndarray:
    """Integer ±1 correlation; padded positions contribute +1."""

    if len(input.shape) != 3 or len(kernels.shape) != 3:
        raise DimensionError(
            f"binary conv expects [B, C_in, L] and [N_out, C_in, F], got {input.shape} and {kernels.shape}",
            axis="input",
        )
    if input.shape[1] != kernels.shape[1]:
        raise DimensionError(
            f"input has {input.shape[1]} channels but kernels expect {kernels.shape[1]}", axis="C_in"
        )
    conv_output_length(input.shape[2], kernels.shape[2], padding, stride)
    padded = np.pad(input.signs, ((0, 0), (0, 0), (padding, padding)), constant_values=1).astype(np.int64)
    windows = conv_windows(padded, kernels.shape[2], stride)
    return np.einsum("bclf,ncf->bnl", windows, kernels.signs.astype(np.int64))


def binary_dense(input_signs: SignTensor, weight_signs: SignTensor) -> np.ndarray:
    """Integer ±1 dot products, [B, D_in] x [D_in, D_out]."""

    if len(input_signs.shape) != 2 or len(weight_signs.shape) != 2 or input_signs.shape[1] != weight_signs.shape[0]:
        raise DimensionError(
            f"binary dense inner dimensions disagree: {input_signs.shape} x {weight_signs.shape}", axis="D_in"
        )
    return input_signs.signs.astype(np.int64) @ weight_signs.signs.astype(np.int64)


class Binarize(Layer):
    """Activation binarization with the straight-through backward."""

    def __init__(self, *, clip: float = NUMERIC.ste_clip, name: str = "binarize") -> None:
        self.name = name
        self.clip = clip
        self.relaxed = False

    def forward(self, x: Tensor, tape: Optional[Tape] = None, *, training: bool = False) -> Tensor:
        return binarize_forward(x, tape, clip=self.clip, relaxed=self.relaxed)


class BinaryConv1d(Layer):
    """Convolution over binarized inputs with binarized latent kernels and no bias."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        *,
        padding: int = 0,
        stride: int = 1,
        clip: float = NUMERIC.ste_clip,
        rng: Optional[np.random.Generator] = None,
        name: str = "bconv",
    ) -> None:
        rng = rng or np.random.default_rng(0)
        self.name = name
        self.padding = padding
        self.stride = stride
        self.clip = clip
        self.relaxed = False
        fan_in = in_channels * kernel_size
        self.latent = Tensor(
            kaiming_normal((out_channels, in_channels, kernel_size), fan_in, rng), name=f"{name}.kernels"
        )

    def forward(self, x: Tensor, tape: Optional[Tape] = None, *, training: bool = False) -> Tensor:
        kernels = binarize_forward(self.latent, tape, clip=self.clip, relaxed=self.relaxed)
        padded = pad_constant(x, self.padding, 1.0, tape)
        return conv1d_forward(padded, ConvParams(kernels=kernels, stride=self.stride), tape)

    def parameters(self) -> List[Tensor]:
        return [self.latent]

    def kernel_signs(self) -> SignTensor:
        return binarize(self.latent)

    def clip_latent(self) -> None:
        np.clip(self.latent.values, -1.0, 1.0, out=self.latent.values)


class BinaryDense(Layer):
    """Sign-weight output layer; logits are scaled by ``1 / fan_in``."""

    def __init__(
        self,
        in_features: int,
        out_features: int,
        *,
        clip: float = NUMERIC.ste_clip,
        rng: Optional[np.random.Generator] = None,
        name: str = "bdense",
    ) -> None:
        rng = rng or np.random.default_rng(0)
        self.name = name
        self.clip = clip
        self.relaxed = False
        self.fan_in = in_features
        self.latent = Tensor(kaiming_normal((in_features, out_features), in_features, rng), name=f"{name}.weights")

    def forward(self, x: Tensor, tape: Optional[Tape] = None, *, training: bool = False) -> Tensor:
        weights = binarize_forward(self.latent, tape, clip=self.clip, relaxed=self.relaxed)
        return scale(dense_forward(x, weights, None, tape), 1.0 / self.fan_in, tape)

    def parameters(self) -> List[Tensor]:
        return [self.latent]

    def weight_signs(self) -> SignTensor:
        return binarize(self.latent)

    def clip_latent(self) -> None:
        np.clip(self.latent.values, -1.0, 1.0, out=self.latent.values)
