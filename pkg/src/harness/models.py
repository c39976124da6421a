"""Declarative network specs, the CNN/BCNN/FC-NN presets and the no-NN threshold detector."""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field

from src.autodiff.functional import ActivationKind
from src.autodiff.layers import Activation, BatchNorm1d, Conv1d, Dense, Flatten, Layer, MaxPool1d
from src.autodiff.tensor import Tape, Tensor
from src.binary.ops import Binarize, BinaryConv1d, BinaryDense
from src.binary.packing import WORD_BITS
from src.config import SAMPLES_PER_SYMBOL, WINDOW_WIDTH
from src.dataset.windows import WindowedDataset

LOGGER = logging.getLogger(__name__)


class SpecError(ValueError):
    """Raised when a model spec has inconsistent layer dimensions or unknown kinds."""

    def __init__(self, message: str, *, layer: Optional[int] = None) -> None:
        super().__init__(message)
        self.layer = layer


class ModelKind(str, Enum):
    CNN = "cnn"
    BCNN = "bcnn"
    FCNN = "fcnn"
    THRESHOLD = "threshold"


class LayerKind(str, Enum):
    CONV = "conv"
    BINARY_CONV = "binary_conv"
    DENSE = "dense"
    BINARY_DENSE = "binary_dense"
    BATCHNORM = "batchnorm"
    ACTIVATION = "activation"
    POOL = "pool"
    BINARIZE = "binarize"
    FLATTEN = "flatten"


class LayerSpec(BaseModel):
    kind: LayerKind
    size: Optional[int] = Field(default=None, ge=1)  # kernel sets or dense units
    kernel_size: int = Field(default=1, ge=1)
    padding: int = Field(default=0, ge=0)
    stride: int = Field(default=1, ge=1)
    window: int = Field(default=2, ge=1)
    bias: bool = True
    activation: Optional[ActivationKind] = None

    model_config = {"extra": "forbid"}


class ModelSpec(BaseModel):
    kind: ModelKind
    layers: List[LayerSpec] = Field(default_factory=list)
    seed: int = 0
    decide_index: int = Field(default=2, ge=0, le=3)

    model_config = {"extra": "forbid"}


def _conv_block(
    size: int, kernel_size: int, activation: ActivationKind, *, binary: bool, pool: bool
) -> List[LayerSpec]:
    conv_kind = LayerKind.BINARY_CONV if binary else LayerKind.CONV
    block = [
        LayerSpec(kind=conv_kind, size=size, kernel_size=kernel_size, padding=(kernel_size - 1) // 2, bias=not binary),
        LayerSpec(kind=LayerKind.BATCHNORM),
        LayerSpec(kind=LayerKind.ACTIVATION, activation=activation),
    ]
    if pool:
        block.append(LayerSpec(kind=LayerKind.POOL, window=2, stride=2))
    if binary:
        block.append(LayerSpec(kind=LayerKind.BINARIZE))
    return block


def preset_spec(
    kind: Union[ModelKind, str],
    *,
    seed: int = 0,
    activation: Union[ActivationKind, str] = ActivationKind.LEAKY_RELU,
    decide_index: int = 2,
) -> ModelSpec:
    """Layer list of a named preset."""

    kind = ModelKind(kind)
    activation = ActivationKind(activation)
    layers: List[LayerSpec] = []
    if kind is ModelKind.CNN:
        layers += _conv_block(8, 3, activation, binary=False, pool=True)
        layers += _conv_block(16, 3, activation, binary=False, pool=True)
        layers += [LayerSpec(kind=LayerKind.FLATTEN), LayerSpec(kind=LayerKind.DENSE, size=2)]
    elif kind is ModelKind.BCNN:
        layers.append(LayerSpec(kind=LayerKind.BINARIZE))
        layers += _conv_block(48, 5, activation, binary=True, pool=True)
        layers += _conv_block(64, 5, activation, binary=True, pool=True)
        layers += _conv_block(72, 5, activation, binary=True, pool=False)
        layers += [LayerSpec(kind=LayerKind.FLATTEN), LayerSpec(kind=LayerKind.BINARY_DENSE, size=2, bias=False)]
    elif kind is ModelKind.FCNN:
        layers.append(LayerSpec(kind=LayerKind.FLATTEN))
        for width in (56, 60, 64, 52):
            layers += [
                LayerSpec(kind=LayerKind.DENSE, size=width),
                LayerSpec(kind=LayerKind.ACTIVATION, activation=activation),
            ]
        layers.append(LayerSpec(kind=LayerKind.DENSE, size=2))
    return ModelSpec(kind=kind, layers=layers, seed=seed, decide_index=decide_index)


class DecisionModel:
    """Sequential network over [B, 1, 16] windows producing two logits."""

    def __init__(self, spec: ModelSpec, layers: List[Layer]) -> None:
        self.spec = spec
        self.kind = spec.kind
        self.layers = layers

    def forward(self, x: Tensor, tape: Optional[Tape] = None, *, training: bool = False) -> Tensor:
        for layer in self.layers:
            x = layer.forward(x, tape, training=training)
        return x

    def parameters(self) -> List[Tensor]:
        return [param for layer in self.layers for param in layer.parameters()]

    def buffers(self) -> Dict[str, np.ndarray]:
        return {
            f"{layer.name}.{key}": value for layer in self.layers for key, value in layer.buffers().items()
        }

    def load_buffers(self, buffers: Dict[str, np.ndarray]) -> None:
        for layer in self.layers:
            own = {key.split(".", 1)[1]: value for key, value in buffers.items() if key.split(".", 1)[0] == layer.name}
            if own:
                layer.load_buffers(own)

    def set_relaxed(self, relaxed: bool) -> None:
        """Swap binarization for hard-tanh so the STE backward is the exact derivative."""

        for layer in self.layers:
            if hasattr(layer, "relaxed"):
                layer.relaxed = relaxed

    def after_step(self) -> None:
        for layer in self.layers:
            if isinstance(layer, (BinaryConv1d, BinaryDense)):
                layer.clip_latent()

    def logits(self, inputs: np.ndarray, *, batch_size: int = 8192, dtype: np.dtype = np.float64) -> np.ndarray:
        """Infer-mode logits without recording a tape."""

        inputs = np.asarray(inputs)
        chunks = [
            self.forward(Tensor(inputs[start : start + batch_size].astype(dtype))).values
            for start in range(0, inputs.shape[0], batch_size)
        ]
        return np.concatenate(chunks) if chunks else np.zeros((0, 2), dtype=dtype)

    def predict(self, inputs: np.ndarray, *, dtype: np.dtype = np.float64) -> np.ndarray:
        return np.argmax(self.logits(inputs, dtype=dtype), axis=1).astype(np.uint8)

    def decide(self, dataset: WindowedDataset) -> np.ndarray:
        return self.predict(dataset.inputs)

    def fingerprint(self) -> str:
        return fingerprint(self)


class ThresholdModel:
    """No-NN reference: sign of the decided symbol's sample, center compensated."""

    kind = ModelKind.THRESHOLD

    def __init__(self, spec: Optional[ModelSpec] = None) -> None:
        self.spec = spec or ModelSpec(kind=ModelKind.THRESHOLD)
        self.layers: List[Layer] = []

    def parameters(self) -> List[Tensor]:
        return []

    def buffers(self) -> Dict[str, np.ndarray]:
        return {}

    def decide(self, dataset: WindowedDataset) -> np.ndarray:
        return (dataset.decision_samples() >= 0).astype(np.uint8)

    def predict(self, inputs: np.ndarray, *, center: float = 0.0) -> np.ndarray:
        samples = np.asarray(inputs)[:, 0, self.spec.decide_index * SAMPLES_PER_SYMBOL] + center
        return (samples >= 0).astype(np.uint8)

    def fingerprint(self) -> str:
        return fingerprint(self)


Model = Union[DecisionModel, ThresholdModel]


def build_model(spec: ModelSpec) -> Model:
    """Instantiate ``spec``, checking layer dimensions along the way."""

    if spec.kind is ModelKind.THRESHOLD:
        return ThresholdModel(spec)
    if not spec.layers:
        raise SpecError(f"{spec.kind.value} spec has no layers")
    rng = np.random.default_rng(spec.seed)
    shape: Tuple[int, ...] = (1, WINDOW_WIDTH)
    layers: List[Layer] = []
    counts: Dict[str, int] = {}

    def _name(prefix: str) -> str:
        counts[prefix] = counts.get(prefix, 0) + 1
        return f"{prefix}{counts[prefix]}"

    for idx, layer_spec in enumerate(spec.layers):
        kind = layer_spec.kind
        if kind in (LayerKind.CONV, LayerKind.BINARY_CONV):
            if len(shape) != 2 or layer_spec.size is None:
                raise SpecError(f"layer {idx}: convolution needs a [C, L] input and a size", layer=idx)
            channels, length = shape
            span = length + 2 * layer_spec.padding - layer_spec.kernel_size
            if span < 0:
                raise SpecError(f"layer {idx}: kernel {layer_spec.kernel_size} exceeds padded length", layer=idx)
            if kind is LayerKind.CONV:
                layer = Conv1d(
                    channels,
                    layer_spec.size,
                    layer_spec.kernel_size,
                    padding=layer_spec.padding,
                    stride=layer_spec.stride,
                    bias=layer_spec.bias,
                    rng=rng,
                    name=_name("conv"),
                )
            else:
                layer = BinaryConv1d(
                    channels,
                    layer_spec.size,
                    layer_spec.kernel_size,
                    padding=layer_spec.padding,
                    stride=layer_spec.stride,
                    rng=rng,
                    name=_name("bconv"),
                )
            shape = (layer_spec.size, span // layer_spec.stride + 1)
        elif kind in (LayerKind.DENSE, LayerKind.BINARY_DENSE):
            if len(shape) != 1 or layer_spec.size is None:
                raise SpecError(f"layer {idx}: dense layer needs a flattened input and a size", layer=idx)
            if kind is LayerKind.DENSE:
                layer = Dense(shape[0], layer_spec.size, bias=layer_spec.bias, rng=rng, name=_name("dense"))
            else:
                layer = BinaryDense(shape[0], layer_spec.size, rng=rng, name=_name("bdense"))
            shape = (layer_spec.size,)
        elif kind is LayerKind.BATCHNORM:
            layer = BatchNorm1d(shape[0], name=_name("bn"))
        elif kind is LayerKind.ACTIVATION:
            layer = Activation(layer_spec.activation or ActivationKind.LEAKY_RELU, name=_name("act"))
        elif kind is LayerKind.POOL:
            if len(shape) != 2 or shape[1] < layer_spec.window:
                raise SpecError(f"layer {idx}: pool window {layer_spec.window} exceeds input {shape}", layer=idx)
            layer = MaxPool1d(layer_spec.window, layer_spec.stride, name=_name("pool"))
            shape = (shape[0], (shape[1] - layer_spec.window) // layer_spec.stride + 1)
        elif kind is LayerKind.BINARIZE:
            layer = Binarize(name=_name("binarize"))
        elif kind is LayerKind.FLATTEN:
            layer = Flatten()
            shape = (int(np.prod(shape)),)
        else:  # pragma: no cover - enum is exhaustive
            raise SpecError(f"layer {idx}: unknown kind {kind}", layer=idx)
        layers.append(layer)

    if shape != (2,):
        raise SpecError(f"{spec.kind.value} spec ends with shape {shape}, expected two logits")
    return DecisionModel(spec, layers)


def parameter_count(model: Model) -> int:
    return int(sum(param.size for param in model.parameters()))


@dataclass(slots=True, frozen=True)
class ModelCost:
    """Per-window arithmetic of one forward pass."""

    parameters: int
    real_macs: int
    binary_macs: int
    packed_word_ops: int


def model_cost(model: Model) -> ModelCost:
    real = binary = words = 0
    shape: Tuple[int, ...] = (1, WINDOW_WIDTH)
    for layer in model.layers:
        if isinstance(layer, Conv1d):
            params = layer.params
            out_len = (shape[1] + 2 * params.padding - params.kernel_size) // params.stride + 1
            real += params.out_channels * params.in_channels * params.kernel_size * out_len
            shape = (params.out_channels, out_len)
        elif isinstance(layer, BinaryConv1d):
            n_out, c_in, width = layer.latent.shape
            out_len = (shape[1] + 2 * layer.padding - width) // layer.stride + 1
            binary += n_out * c_in * width * out_len
            words += n_out * out_len * math.ceil(c_in * width / WORD_BITS)
            shape = (n_out, out_len)
        elif isinstance(layer, Dense):
            real += layer.weights.size
            shape = (layer.weights.shape[1],)
        elif isinstance(layer, BinaryDense):
            d_in, d_out = layer.latent.shape
            binary += d_in * d_out
            words += d_out * math.ceil(d_in / WORD_BITS)
            shape = (d_out,)
        elif isinstance(layer, MaxPool1d):
            shape = (shape[0], (shape[1] - layer.window) // layer.stride + 1)
        elif isinstance(layer, Flatten):
            shape = (int(np.prod(shape)),)
    return ModelCost(parameter_count(model), real, binary, words)


def fingerprint(model: Model) -> str:
    """sha256 over every parameter and running statistic."""

    digest = hashlib.sha256()
    for param in model.parameters():
        digest.update((param.name or "").encode("utf-8"))
        digest.update(np.ascontiguousarray(param.values).tobytes())
    for key, value in sorted(model.buffers().items()):
        digest.update(key.encode("utf-8"))
        digest.update(np.ascontiguousarray(value).tobytes())
    return digest.hexdigest()


def save_model(model: Model, path: Union[str, Path]) -> Path:
    """Parameters, running statistics and the spec as one ``.npz`` archive."""

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays: Dict[str, np.ndarray] = {"__spec__": np.array(model.spec.model_dump_json())}
    for param in model.parameters():
        arrays[f"param:{param.name}"] = param.values
    for key, value in model.buffers().items():
        arrays[f"buffer:{key}"] = value
    with path.open("wb") as handle:
        np.savez(handle, **arrays)
    LOGGER.info("Saved %s model to %s", model.kind.value, path)
    return path


def load_model(path: Union[str, Path]) -> Model:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"model file not found: {path}")
    with np.load(path, allow_pickle=False) as archive:
        spec = ModelSpec.model_validate(json.loads(str(archive["__spec__"])))
        model = build_model(spec)
        for param in model.parameters():
            key = f"param:{param.name}"
            if key not in archive:
                raise SpecError(f"{path} lacks parameter {param.name}")
            param.values[...] = archive[key]
        buffers = {key[len("buffer:") :]: archive[key] for key in archive.files if key.startswith("buffer:")}
    if buffers and isinstance(model, DecisionModel):
        model.load_buffers(buffers)
    return model
