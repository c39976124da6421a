"""Minimal reverse-mode differentiation for the decision networks."""

from .errors import (
    DegenerateBatchError,
    DimensionError,
    LabelFormatError,
    NonFiniteError,
    OptimizerStateError,
    TapeStateError,
)
from .functional import (
    ActivationKind,
    BatchNormMode,
    BatchNormState,
    ConvParams,
    activation_forward,
    batchnorm_forward,
    conv1d_forward,
    dense_forward,
    leaky_relu_forward,
    maxpool1d_forward,
)
from .loss import one_hot, softmax_cross_entropy
from .optim import Adam, AdamState, adam_step
from .tensor import Tape, Tensor, backward, flatten, scale, sum_all

__all__ = [
    "ActivationKind",
    "Adam",
    "AdamState",
    "BatchNormMode",
    "BatchNormState",
    "ConvParams",
    "DegenerateBatchError",
    "DimensionError",
    "LabelFormatError",
    "NonFiniteError",
    "OptimizerStateError",
    "Tape",
    "TapeStateError",
    "Tensor",
    "activation_forward",
    "adam_step",
    "backward",
    "batchnorm_forward",
    "conv1d_forward",
    "dense_forward",
    "flatten",
    "leaky_relu_forward",
    "maxpool1d_forward",
    "one_hot",
    "scale",
    "softmax_cross_entropy",
    "sum_all",
]
