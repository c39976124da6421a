import numpy as np
import pytest

from src.autodiff.tensor import Tensor
from src.binary.ops import BinaryConv1d
from src.dataset.windows import generate_cell
from src.harness.models import (
    DecisionModel,
    LayerKind,
    LayerSpec,
    ModelKind,
    ModelSpec,
    SpecError,
    ThresholdModel,
    build_model,
    load_model,
    model_cost,
    parameter_count,
    preset_spec,
    save_model,
)
from src.link.channel import ChannelConfig


def _inputs(n: int = 32) -> np.ndarray:
    return np.random.default_rng(0).normal(size=(n, 1, 16))


@pytest.mark.parametrize(
    "kind, expected",
    [(ModelKind.CNN, 610), (ModelKind.BCNN, 39584), (ModelKind.FCNN, 11762), (ModelKind.THRESHOLD, 0)],
)
def test_preset_parameter_counts(kind: ModelKind, expected: int) -> None:
    assert parameter_count(build_model(preset_spec(kind))) == expected


@pytest.mark.parametrize("kind", [ModelKind.CNN, ModelKind.BCNN, ModelKind.FCNN])
def test_presets_emit_two_logits(kind: ModelKind) -> None:
    model = build_model(preset_spec(kind))
    assert model.logits(_inputs()).shape == (32, 2)


def test_preset_layer_structure() -> None:
    bcnn = build_model(preset_spec(ModelKind.BCNN))
    assert sum(isinstance(layer, BinaryConv1d) for layer in bcnn.layers) == 3
    fcnn = preset_spec(ModelKind.FCNN)
    dense = [layer for layer in fcnn.layers if layer.kind is LayerKind.DENSE]
    assert len(dense) == 5
    cnn = preset_spec(ModelKind.CNN)
    assert [layer.size for layer in cnn.layers if layer.kind is LayerKind.CONV] == [8, 16]


def test_model_cost_counts() -> None:
    cnn = model_cost(build_model(preset_spec(ModelKind.CNN)))
    assert (cnn.real_macs, cnn.binary_macs, cnn.packed_word_ops) == (3584, 0, 0)
    bcnn = model_cost(build_model(preset_spec(ModelKind.BCNN)))
    assert bcnn.real_macs == 0
    assert bcnn.binary_macs == 219_456
    assert bcnn.packed_word_ops == 4266


def test_activation_choice_is_applied() -> None:
    spec = preset_spec(ModelKind.CNN, activation="tanh")
    kinds = {layer.activation.value for layer in spec.layers if layer.kind is LayerKind.ACTIVATION}
    assert kinds == {"tanh"}


def test_same_seed_same_initialization() -> None:
    first = build_model(preset_spec(ModelKind.CNN, seed=5))
    second = build_model(preset_spec(ModelKind.CNN, seed=5))
    third = build_model(preset_spec(ModelKind.CNN, seed=6))
    assert first.fingerprint() == second.fingerprint()
    assert first.fingerprint() != third.fingerprint()


def test_inference_leaves_parameters_untouched() -> None:
    model = build_model(preset_spec(ModelKind.BCNN))
    before = model.fingerprint()
    model.predict(_inputs(64))
    assert model.fingerprint() == before


def test_bad_spec_is_rejected() -> None:
    too_wide = ModelSpec(
        kind=ModelKind.CNN,
        layers=[LayerSpec(kind=LayerKind.CONV, size=4, kernel_size=20), LayerSpec(kind=LayerKind.FLATTEN)],
    )
    with pytest.raises(SpecError) as excinfo:
        build_model(too_wide)
    assert excinfo.value.layer == 0
    wrong_output = ModelSpec(
        kind=ModelKind.FCNN, layers=[LayerSpec(kind=LayerKind.FLATTEN), LayerSpec(kind=LayerKind.DENSE, size=3)]
    )
    with pytest.raises(SpecError):
        build_model(wrong_output)
    with pytest.raises(SpecError):
        build_model(ModelSpec(kind=ModelKind.CNN))


def test_threshold_model_on_clean_data() -> None:
    dataset = generate_cell(ChannelConfig.preset("d10km", isi_taps=[1.0], a3=0.0), None, 500, 1)
    detector = build_model(preset_spec(ModelKind.THRESHOLD))
    assert isinstance(detector, ThresholdModel)
    np.testing.assert_array_equal(detector.decide(dataset), dataset.labels)
    np.testing.assert_array_equal(detector.predict(dataset.inputs), dataset.labels)


def test_single_precision_path_agrees() -> None:
    model = build_model(preset_spec(ModelKind.CNN, seed=2))
    model.forward(Tensor(_inputs(256)), training=True)
    inputs = _inputs(2000)
    agreement = np.mean(model.predict(inputs) == model.predict(inputs, dtype=np.float32))
    assert agreement >= 0.9999


@pytest.mark.parametrize("kind", [ModelKind.CNN, ModelKind.BCNN, ModelKind.FCNN])
def test_save_and_load_reproduce_decisions(tmp_path, kind: ModelKind) -> None:
    model = build_model(preset_spec(kind, seed=3))
    assert isinstance(model, DecisionModel)
    model.forward(Tensor(_inputs(128)), training=True)
    path = save_model(model, tmp_path / f"{kind.value}.npz")
    loaded = load_model(path)
    assert loaded.fingerprint() == model.fingerprint()
    np.testing.assert_array_equal(loaded.logits(_inputs()), model.logits(_inputs()))


def test_load_missing_model(tmp_path) -> None:
    with pytest.raises(FileNotFoundError):
        load_model(tmp_path / "none.npz")
