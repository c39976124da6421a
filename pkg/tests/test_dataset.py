import math
import struct

import numpy as np
import pytest

from src.dataset.storage import HEADER, DatasetFormatError, decode_dataset, encode_dataset, load_dataset, save_dataset
from src.dataset.windows import (
    DatasetSizeError,
    WindowedDataset,
    apply_center,
    evaluation_sets,
    generate_cell,
    pool_across_powers,
    split,
    window,
)
from src.harness.stats import binomial_bounds
from src.link.channel import ChannelConfig
from src.link.simulate import derive_seed, pam2_modulate, random_bits, upsample_shape


def _clean_config() -> ChannelConfig:
    return ChannelConfig.preset("d10km", isi_taps=[1.0], a3=0.0)


def _dataset(n: int = 1000, seed: int = 0) -> WindowedDataset:
    return generate_cell(ChannelConfig.preset("d15km"), -18.0, n, seed)


def test_eight_symbols_give_five_windows() -> None:
    bits = random_bits(8, 1)
    dataset = window(upsample_shape(pam2_modulate(bits), 4, np.ones(4), bits=bits))
    assert len(dataset) == 5
    assert dataset.inputs.shape == (5, 1, 16)


def test_too_few_symbols() -> None:
    bits = random_bits(3, 1)
    with pytest.raises(DatasetSizeError):
        window(upsample_shape(pam2_modulate(bits), 4, np.ones(4), bits=bits))


def test_clean_rectangular_windows_match_labels() -> None:
    bits = random_bits(200, 2)
    for decide_index in range(4):
        dataset = window(upsample_shape(pam2_modulate(bits), 4, np.ones(4), bits=bits), decide_index)
        np.testing.assert_array_equal(dataset.decision_samples(), 2.0 * dataset.labels - 1.0)


def test_clean_channel_threshold_reproduces_labels() -> None:
    dataset = generate_cell(_clean_config(), None, 5000, 3)
    decisions = (dataset.decision_samples() >= 0).astype(np.uint8)
    np.testing.assert_array_equal(decisions, dataset.labels)


def test_split_sizes_and_determinism() -> None:
    dataset = _dataset()
    train, test = split(dataset, 0.8, seed=4)
    assert (len(train), len(test)) == (800, 200)
    again_train, _ = split(dataset, 0.8, seed=4)
    np.testing.assert_array_equal(train.inputs, again_train.inputs)


def test_split_centers_on_training_mean() -> None:
    train, test = split(_dataset(), 0.8, seed=5)
    assert abs(float(np.mean(train.inputs))) < 1e-12
    assert train.center == test.center


def test_split_label_balance() -> None:
    _, test = split(_dataset(20_000), 0.8, seed=6)
    low, high = binomial_bounds(0.5, len(test))
    assert low <= test.labels.mean() <= high


def test_split_rejects_degenerate_fraction() -> None:
    with pytest.raises(ValueError):
        split(_dataset(10), 1.0, seed=0)
    with pytest.raises(DatasetSizeError):
        split(_dataset(1), 0.5, seed=0)


def test_apply_center_round_trips_decision_samples() -> None:
    dataset = _dataset(50)
    shifted = apply_center(dataset, 0.25)
    np.testing.assert_allclose(shifted.decision_samples(), dataset.decision_samples())
    np.testing.assert_allclose(shifted.inputs, dataset.inputs - 0.25)


def test_pool_has_equal_counts_per_power() -> None:
    config = ChannelConfig.preset("d10km")
    pooled = pool_across_powers(config, 500, seed=7)
    assert len(pooled) == 8 * 500
    for power in config.power_grid_dbm:
        assert len(pooled.at_power(power)) == 500
    assert pooled.meta.powers == list(config.power_grid_dbm)


def test_pool_matches_the_standalone_cells() -> None:
    config = ChannelConfig.preset("d10km")
    pooled = pool_across_powers(config, 100, seed=8)
    standalone = generate_cell(config, -20.0, 100, derive_seed(8, "pool", -20.0))
    np.testing.assert_array_equal(
        np.sort(pooled.at_power(-20.0).inputs[:, 0, 0]), np.sort(standalone.inputs[:, 0, 0])
    )


def test_evaluation_sets_are_centered_and_independent() -> None:
    config = ChannelConfig.preset("d15km")
    sets = evaluation_sets(config, 200, seed=9, center=0.1, powers=[-20.0, -17.0])
    assert sorted(sets) == [-20.0, -17.0]
    assert all(part.center == 0.1 for part in sets.values())
    assert not np.array_equal(sets[-20.0].labels, sets[-17.0].labels)


def test_generate_cell_window_count() -> None:
    assert len(generate_cell(ChannelConfig.preset("d20km"), -19.0, 997, 1)) == 997
    with pytest.raises(DatasetSizeError):
        generate_cell(ChannelConfig.preset("d20km"), -19.0, 0, 1)


def test_dataset_file_round_trip(tmp_path) -> None:
    dataset = apply_center(_dataset(300), 0.125)
    path = save_dataset(dataset, tmp_path / "cell.rwds")
    loaded = load_dataset(path)
    assert loaded.center == 0.125
    assert loaded.decide_index == dataset.decide_index
    np.testing.assert_array_equal(loaded.labels, dataset.labels)
    np.testing.assert_allclose(loaded.inputs, dataset.inputs.astype(np.float32), rtol=0, atol=0)


def test_dataset_file_size_is_documented_layout() -> None:
    payload = encode_dataset(_dataset(10))
    assert len(payload) == HEADER.size + 10 * 16 * 4 + 10
    assert payload[:4] == b"RWDS"


def test_dataset_format_errors(tmp_path) -> None:
    payload = encode_dataset(_dataset(10))
    with pytest.raises(DatasetFormatError):
        decode_dataset(payload[:-1])
    with pytest.raises(DatasetFormatError):
        decode_dataset(b"XXXX" + payload[4:])
    with pytest.raises(DatasetFormatError):
        decode_dataset(payload[:4] + struct.pack("<H", 9) + payload[6:])
    with pytest.raises(DatasetFormatError):
        decode_dataset(b"RW")
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path / "missing.rwds")


def test_labels_must_be_binary() -> None:
    with pytest.raises(ValueError):
        WindowedDataset(inputs=np.zeros((2, 1, 16)), labels=np.array([0, 2]))
    with pytest.raises(DatasetSizeError):
        WindowedDataset(inputs=np.zeros((2, 1, 8)), labels=np.array([0, 1]))


def test_non_finite_windows_are_rejected(tmp_path) -> None:
    inputs = np.zeros((3, 1, 16))
    inputs[1, 0, 5] = np.nan
    with pytest.raises(DatasetSizeError, match="non-finite"):
        WindowedDataset(inputs=inputs, labels=np.array([0, 1, 0]))
    inputs[1, 0, 5] = np.inf
    with pytest.raises(DatasetSizeError):
        WindowedDataset(inputs=inputs, labels=np.array([0, 1, 0]))

    payload = bytearray(encode_dataset(_dataset(10)))
    payload[HEADER.size : HEADER.size + 4] = struct.pack("<f", float("nan"))
    path = tmp_path / "corrupt.rwds"
    path.write_bytes(bytes(payload))
    with pytest.raises(DatasetFormatError) as excinfo:
        load_dataset(path)
    assert excinfo.value.path == path


def test_noisy_cell_is_reproducible() -> None:
    first = _dataset(100, seed=11)
    second = _dataset(100, seed=11)
    np.testing.assert_array_equal(first.inputs, second.inputs)
    assert not math.isclose(float(first.inputs.sum()), float(_dataset(100, seed=12).inputs.sum()))
