"""Baseband surrogate of the mm-wave radio-over-fiber link."""

from .channel import BitSource, Calibration, ChannelConfig, Waveform
from .simulate import (
    apply_awgn,
    apply_isi,
    apply_nonlinearity,
    derive_seed,
    eye_closure,
    eye_opening,
    hard_decision_errors,
    pam2_modulate,
    power_to_snr,
    prbs_bits,
    random_bits,
    raised_cosine_pulse,
    simulate_link,
    upsample_shape,
)

__all__ = [
    "BitSource",
    "Calibration",
    "ChannelConfig",
    "Waveform",
    "apply_awgn",
    "apply_isi",
    "apply_nonlinearity",
    "derive_seed",
    "eye_closure",
    "eye_opening",
    "hard_decision_errors",
    "pam2_modulate",
    "power_to_snr",
    "prbs_bits",
    "random_bits",
    "raised_cosine_pulse",
    "simulate_link",
    "upsample_shape",
]
