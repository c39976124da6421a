"""Bit packing of sign tensors and XNOR/popcount kernels."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from src.autodiff.errors import DimensionError
from src.autodiff.functional import conv_output_length, conv_windows
from src.binary.ops import SignTensor

LOGGER = logging.getLogger(__name__)

WORD_BITS = 64
_WORD = np.dtype("<u8")

# SWAR popcount constants for numpy builds without ``bitwise_count``.
_M1 = np.uint64(0x5555555555555555)
_M2 = np.uint64(0x3333333333333333)
_M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
_H01 = np.uint64(0x0101010101010101)


@dataclass(slots=True)
class PackedBits:
    """Signs packed along the innermost axis, bit ``i`` of word ``i // 64`` set for +1."""

    shape: tuple
    words: np.ndarray
    valid_bits: int

    @property
    def n(self) -> int:
        return int(self.shape[-1])

    @property
    def word_count(self) -> int:
        return int(self.words.shape[-1])

    def mask(self) -> np.ndarray:
        """Per-word mask with only the meaningful bits set."""

        masks = np.full(self.word_count, np.iinfo(np.uint64).max, dtype=np.uint64)
        if self.valid_bits < WORD_BITS:
            masks[-1] = np.uint64((1 << self.valid_bits) - 1)
        return masks


def _signs(x: Union[SignTensor, np.ndarray]) -> np.ndarray:
    return x.signs if isinstance(x, SignTensor) else SignTensor(x).signs


def pack(signs: Union[SignTensor, np.ndarray]) -> PackedBits:
    values = _signs(signs)
    if values.ndim == 0 or values.shape[-1] == 0:
        raise DimensionError("cannot pack an empty reduction axis", axis="innermost")
    n = values.shape[-1]
    word_count = -(-n // WORD_BITS)
    bits = np.zeros(values.shape[:-1] + (word_count * WORD_BITS,), dtype=np.uint8)
    bits[..., :n] = values > 0
    packed_bytes = np.packbits(bits, axis=-1, bitorder="little")
    words = np.ascontiguousarray(packed_bytes).view(_WORD).astype(np.uint64)
    return PackedBits(shape=tuple(values.shape), words=words, valid_bits=n - WORD_BITS * (word_count - 1))


def unpack(packed: PackedBits) -> SignTensor:
    as_bytes = np.ascontiguousarray(packed.words.astype(_WORD)).view(np.uint8)
    bits = np.unpackbits(as_bytes, axis=-1, bitorder="little")[..., : packed.n]
    return SignTensor(bits.astype(np.int8) * 2 - 1)


def popcount(words: np.ndarray) -> np.ndarray:
    """Set-bit count per uint64 word."""

    words = np.asarray(words, dtype=np.uint64)
    if hasattr(np, "bitwise_count"):
        return np.bitwise_count(words).astype(np.int64)
    x = words - ((words >> np.uint64(1)) & _M1)
    x = (x & _M2) + ((x >> np.uint64(2)) & _M2)
    x = (x + (x >> np.uint64(4))) & _M4
    return ((x * _H01) >> np.uint64(56)).astype(np.int64)


def xnor_popcount_dot(a: PackedBits, b: PackedBits, n: Optional[int] = None) -> Union[int, np.ndarray]:
    """±1 dot product of packed rows as ``2 * popcount(xnor) - n``; broadcasts over leading axes."""

    n = a.n if n is None else n
    if a.n != n or b.n != n:
        raise DimensionError(f"packed rows hold {a.n} and {b.n} elements, expected {n}", axis="n")
    agree = ~(a.words ^ b.words) & a.mask()
    dots = 2 * popcount(agree).sum(axis=-1) - n
    return int(dots) if np.ndim(dots) == 0 else dots


def xnor_popcount_matmul(rows: PackedBits, columns: PackedBits) -> np.ndarray:
    """All pairwise dots between [M, W] rows and [K, W] columns, as an [M, K] integer matrix."""

    if rows.n != columns.n:
        raise DimensionError(f"packed operands hold {rows.n} and {columns.n} elements", axis="n")
    agree = ~(rows.words[:, None, :] ^ columns.words[None, :, :]) & rows.mask()
    return 2 * popcount(agree).sum(axis=-1) - rows.n


def pack_kernels(kernels: Union[SignTensor, np.ndarray]) -> PackedBits:
    """Pack [N_out, C_in, F] kernels with C_in*F flattened as the reduction axis."""

    values = _signs(kernels)
    return pack(values.reshape(values.shape[0], -1))


def packed_conv1d(
    input: Union[SignTensor, np.ndarray],
    kernels: PackedBits,
    kernel_size: int,
    *,
    padding: int = 0,
    stride: int = 1,
) -> np.ndarray:
    """XNOR/popcount correlation of [B, C_in, L] signs with packed kernels; padded positions are +1."""

    values = _signs(input)
    if values.ndim != 3:
        raise DimensionError(f"packed conv expects [B, C_in, L], got {values.shape}", axis="input")
    batch, channels, length = values.shape
    if channels * kernel_size != kernels.n:
        raise DimensionError(
            f"input has {channels} channels x {kernel_size} taps but kernels pack {kernels.n}", axis="C_in"
        )
    out_len = conv_output_length(length, kernel_size, padding, stride)
    padded = np.pad(values, ((0, 0), (0, 0), (padding, padding)), constant_values=1)
    windows = conv_windows(padded, kernel_size, stride)
    patches = windows.transpose(0, 2, 1, 3).reshape(batch * out_len, channels * kernel_size)
    dots = xnor_popcount_matmul(pack(patches), kernels)
    return dots.reshape(batch, out_len, -1).transpose(0, 2, 1)
