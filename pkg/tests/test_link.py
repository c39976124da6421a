import math

import numpy as np
import pytest
from pydantic import ValidationError

from src.harness.stats import wilson_interval
from src.link.channel import BitSource, Calibration, ChannelConfig, Waveform
from src.link.simulate import (
    apply_awgn,
    apply_isi,
    apply_nonlinearity,
    derive_seed,
    eye_closure,
    eye_opening,
    hard_decision_errors,
    noise_variance,
    pam2_modulate,
    power_to_snr,
    prbs_bits,
    random_bits,
    simulate_link,
    upsample_shape,
)


def _clean_config(**overrides) -> ChannelConfig:
    return ChannelConfig.preset("d10km", isi_taps=[1.0], a3=0.0, **overrides)


def _rect(symbols) -> Waveform:
    return upsample_shape(np.asarray(symbols, dtype=np.float64), 4, np.ones(4))


def test_random_bits_are_deterministic() -> None:
    np.testing.assert_array_equal(random_bits(1000, 3), random_bits(1000, 3))
    assert not np.array_equal(random_bits(1000, 3), random_bits(1000, 4))


def test_random_bits_balance() -> None:
    bits = random_bits(1_000_000, 11)
    assert abs(bits.mean() - 0.5) < 0.002


def test_prbs_is_periodic() -> None:
    bits = prbs_bits(2 * 127, 7, seed=2)
    np.testing.assert_array_equal(bits[:127], bits[127:])
    assert int(bits[:127].sum()) == 64


def test_bit_source_order() -> None:
    assert BitSource.RANDOM.order is None
    assert BitSource.PRBS15.order == 15


def test_pam2_mapping() -> None:
    np.testing.assert_array_equal(pam2_modulate(np.array([0, 1, 1, 0])), [-1.0, 1.0, 1.0, -1.0])
    np.testing.assert_array_equal(pam2_modulate(np.zeros(5)), -1.0)


def test_rectangular_pulse_repeats_symbols() -> None:
    waveform = _rect([1.0, -1.0, 1.0])
    np.testing.assert_array_equal(waveform.samples, np.repeat([1.0, -1.0, 1.0], 4))


def test_impulse_reproduces_pulse() -> None:
    pulse = np.array([0.2, 1.0, 0.5, 0.1])
    waveform = upsample_shape(np.array([1.0, 0.0, 0.0]), 4, pulse)
    np.testing.assert_allclose(waveform.samples[:3], pulse[1:])


def test_shaped_waveform_aligns_with_symbol_grid() -> None:
    bits = random_bits(2000, 5)
    waveform = upsample_shape(pam2_modulate(bits))
    lags = [float(np.dot(np.roll(waveform.samples, -lag)[::4], pam2_modulate(bits))) for lag in range(4)]
    assert int(np.argmax(lags)) == 0


def test_isi_identity_and_averaging() -> None:
    waveform = _rect([1.0, -1.0, 1.0, -1.0, 1.0])
    np.testing.assert_array_equal(apply_isi(waveform, [1.0]).samples, waveform.samples)
    smoothed = apply_isi(waveform, [0.25, 0.5, 0.25])
    np.testing.assert_allclose(smoothed.decision_samples()[1:4], [0.0, 0.0, 0.0])


def test_isi_rejects_even_taps() -> None:
    with pytest.raises(ValueError):
        apply_isi(_rect([1.0]), [0.5, 0.5])


def test_nonlinearity_examples() -> None:
    waveform = _rect([1.0, -0.5])
    np.testing.assert_allclose(apply_nonlinearity(waveform, 2.0, 0.0).samples, 2.0 * waveform.samples)
    assert apply_nonlinearity(_rect([1.0]), 1.0, -0.1).samples[0] == pytest.approx(0.9)
    positive = apply_nonlinearity(waveform, 1.0, -0.15).samples
    negative = apply_nonlinearity(waveform.replace_samples(-waveform.samples), 1.0, -0.15).samples
    np.testing.assert_allclose(negative, -positive)
    with pytest.raises(ValueError):
        apply_nonlinearity(waveform, 0.0, 0.1)


def test_power_to_snr_is_affine() -> None:
    calibration = Calibration(slope_db_per_db=2.0, offset_db=-24.0)
    assert power_to_snr(-17.0, calibration) - power_to_snr(-18.0, calibration) == pytest.approx(2.0)
    assert power_to_snr(-20.0, calibration) == pytest.approx(8.0)


def test_infinite_snr_is_noise_free() -> None:
    waveform = _rect([1.0, -1.0])
    assert apply_awgn(waveform, math.inf, 0) is waveform


def test_awgn_variance_matches_commanded() -> None:
    waveform = simulate_link(ChannelConfig.preset("d15km"), 25_000, None, 1)
    noisy = apply_awgn(waveform, 10.0, 2)
    measured = np.var(noisy.samples - waveform.samples)
    assert measured == pytest.approx(noise_variance(waveform.samples, 10.0), rel=0.02)
    assert noisy.meta["snr_db"] == 10.0


def test_clean_chain_has_no_errors() -> None:
    waveform = simulate_link(_clean_config(), 5000, None, 9)
    assert hard_decision_errors(waveform) == (0, 5000)


def test_clean_chain_with_prbs_source() -> None:
    waveform = simulate_link(_clean_config(bit_source="prbs7"), 300, None, 9)
    assert hard_decision_errors(waveform)[0] == 0


def test_same_seed_same_waveform() -> None:
    config = ChannelConfig.preset("d20km")
    first = simulate_link(config, 3000, -18.0, 7)
    second = simulate_link(config, 3000, -18.0, 7)
    np.testing.assert_array_equal(first.samples, second.samples)
    assert first.meta["distance"] == "d20km"
    assert first.meta["power_dbm"] == -18.0


def test_derive_seed_separates_streams() -> None:
    assert derive_seed(1, "bits") == derive_seed(1, "bits")
    assert derive_seed(1, "bits") != derive_seed(1, "noise")
    assert derive_seed(1, "eval", -18.0) != derive_seed(1, "eval", -17.5)


def test_eye_opening_ordered_by_distance() -> None:
    openings = {
        name: eye_opening(simulate_link(ChannelConfig.preset(name), 10_000, None, 3))
        for name in ("d10km", "d15km", "d20km")
    }
    assert openings["d10km"] > openings["d15km"] > openings["d20km"]
    closure_10 = eye_closure(simulate_link(ChannelConfig.preset("d10km"), 10_000, None, 3))
    closure_20 = eye_closure(simulate_link(ChannelConfig.preset("d20km"), 10_000, None, 3))
    assert closure_20 > closure_10


def test_longer_link_has_more_errors() -> None:
    power = ChannelConfig.preset("d10km").median_power
    errs = {}
    for name in ("d10km", "d15km"):
        errors, bits = hard_decision_errors(simulate_link(ChannelConfig.preset(name), 100_000, power, 4), guard=8)
        errs[name] = wilson_interval(errors, bits)
    assert errs["d15km"][0] > errs["d10km"][1]


def test_channel_config_validation() -> None:
    with pytest.raises(ValidationError):
        ChannelConfig.preset("d10km", isi_taps=[0.5, 0.5])
    with pytest.raises(ValidationError):
        ChannelConfig.preset("d10km", isi_taps=[0.2, 0.5, 0.2])
    with pytest.raises(ValidationError):
        ChannelConfig.preset("d10km", power_grid_dbm=[-20.0, -19.0])
    with pytest.raises(ValidationError):
        ChannelConfig.preset("d10km", sps=8)
    with pytest.raises(ValueError):
        ChannelConfig.preset("d40km")


def test_waveform_rejects_wrong_length() -> None:
    with pytest.raises(ValueError):
        Waveform(samples=np.zeros(7), sps=4, symbol_count=2, origin_bits=np.zeros(2))
