"""Binarized convolution: sign extraction, STE training path and packed kernels."""

from .engine import PackedBcnn, measure_throughput
from .ops import (
    Binarize,
    BinaryConv1d,
    BinaryDense,
    NumericDomainError,
    SignTensor,
    binarize,
    binarize_forward,
    binary_conv1d,
    binary_dense,
    msb,
    ste_backward,
)
from .packing import PackedBits, pack, packed_conv1d, popcount, unpack, xnor_popcount_dot

__all__ = [
    "Binarize",
    "BinaryConv1d",
    "BinaryDense",
    "NumericDomainError",
    "PackedBcnn",
    "PackedBits",
    "SignTensor",
    "binarize",
    "binarize_forward",
    "binary_conv1d",
    "binary_dense",
    "measure_throughput",
    "msb",
    "pack",
    "packed_conv1d",
    "popcount",
    "ste_backward",
    "unpack",
    "xnor_popcount_dot",
]
