import numpy as np
import pytest

from src.dataset.windows import WindowedDataset, generate_cell, split
from src.harness.models import ModelKind, build_model, preset_spec
from src.harness.training import (
    DivergenceError,
    EmptyDatasetError,
    TrainConfig,
    accuracy,
    evaluate_ber,
    train,
)
from src.link.channel import ChannelConfig


def _clean_sets(n: int = 3000):
    config = ChannelConfig.preset("d10km", isi_taps=[1.0], a3=0.0)
    return split(generate_cell(config, None, n, 1), 0.8, seed=2)


def _noisy_sets(n: int = 3000):
    return split(generate_cell(ChannelConfig.preset("d15km"), -18.0, n, 3), 0.8, seed=4)


class _CoinFlip:
    kind = ModelKind.THRESHOLD

    def __init__(self, seed: int) -> None:
        self.rng = np.random.default_rng(seed)

    def decide(self, dataset: WindowedDataset) -> np.ndarray:
        return self.rng.integers(0, 2, len(dataset)).astype(np.uint8)


def test_train_config_defaults() -> None:
    cfg = TrainConfig()
    assert (cfg.batch_size, cfg.lr, cfg.target_accuracy) == (1024, 0.0005, 0.985)


def test_threshold_on_clean_data_has_zero_ber() -> None:
    _, test = _clean_sets()
    assert evaluate_ber(build_model(preset_spec(ModelKind.THRESHOLD)), test) == (0.0, 0, len(test))


def test_coin_flip_ber_is_half() -> None:
    _, test = _noisy_sets(20_000)
    ber, _, count = evaluate_ber(_CoinFlip(5), test)
    assert abs(ber - 0.5) <= 3.0 * np.sqrt(0.25 / count)


def test_accuracy_is_one_minus_ber() -> None:
    _, test = _noisy_sets()
    model = build_model(preset_spec(ModelKind.CNN))
    ber, _, _ = evaluate_ber(model, test)
    assert accuracy(model, test) == 1.0 - ber


def test_clean_data_reaches_full_accuracy() -> None:
    train_set, test = _clean_sets()
    model = build_model(preset_spec(ModelKind.CNN, seed=1))
    cfg = TrainConfig(batch_size=128, lr=0.01, max_iterations=300, target_accuracy=1.0)
    trace = train(model, train_set, test, cfg)
    assert trace.converged
    assert max(record.test_accuracy for record in trace.records) == 1.0


def test_zero_learning_rate_freezes_model() -> None:
    train_set, test = _noisy_sets()
    model = build_model(preset_spec(ModelKind.FCNN, seed=2))
    params_before = [param.values.copy() for param in model.parameters()]
    trace = train(model, train_set, test, TrainConfig(batch_size=64, lr=0.0, max_iterations=60, eval_every=20))
    for before, param in zip(params_before, model.parameters()):
        np.testing.assert_array_equal(param.values, before)
    accuracies = [record.test_accuracy for record in trace.records]
    assert max(accuracies) - min(accuracies) < 0.05


def test_training_is_deterministic() -> None:
    train_set, test = _noisy_sets()
    cfg = TrainConfig(batch_size=64, max_iterations=40, eval_every=20, lr=0.005)
    first = build_model(preset_spec(ModelKind.BCNN, seed=3))
    second = build_model(preset_spec(ModelKind.BCNN, seed=3))
    trace_a = train(first, train_set, test, cfg)
    trace_b = train(second, train_set, test, cfg)
    assert first.fingerprint() == second.fingerprint()
    assert [r.train_loss for r in trace_a.records] == [r.train_loss for r in trace_b.records]


def test_binary_latents_stay_clipped() -> None:
    train_set, test = _noisy_sets()
    model = build_model(preset_spec(ModelKind.BCNN, seed=4))
    train(model, train_set, test, TrainConfig(batch_size=64, max_iterations=20, lr=0.05))
    for param in model.parameters():
        if param.name.endswith((".kernels", ".weights")):
            assert np.max(np.abs(param.values)) <= 1.0


def test_trace_records_every_evaluation() -> None:
    train_set, test = _noisy_sets()
    model = build_model(preset_spec(ModelKind.CNN))
    cfg = TrainConfig(batch_size=64, max_iterations=55, eval_every=25, target_accuracy=1.0)
    trace = train(model, train_set, test, cfg)
    assert [record.iteration for record in trace.records] == [25, 50, 55]
    assert trace.iterations_run == 55
    assert not trace.converged


def test_threshold_training_is_a_single_evaluation() -> None:
    train_set, test = _noisy_sets()
    trace = train(build_model(preset_spec(ModelKind.THRESHOLD)), train_set, test)
    assert len(trace.records) == 1
    assert trace.records[0].iteration == 0


def test_non_finite_parameters_raise_divergence() -> None:
    train_set, test = _noisy_sets()
    model = build_model(preset_spec(ModelKind.CNN))
    model.parameters()[0].values[...] = np.inf
    with pytest.raises(DivergenceError) as excinfo:
        train(model, train_set, test, TrainConfig(batch_size=64, max_iterations=5))
    assert excinfo.value.iteration == 1


def test_empty_sets_are_rejected() -> None:
    train_set, test = _noisy_sets()
    with pytest.raises(EmptyDatasetError):
        train(build_model(preset_spec(ModelKind.CNN)), train_set.subset([]), test)
