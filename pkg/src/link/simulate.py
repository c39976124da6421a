"""Seeded generation of received waveforms: modulate, shape, distort and add noise."""
from __future__ import annotations

import logging
import math
import zlib
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.signal import max_len_seq

from src.link.channel import BitSource, Calibration, ChannelConfig, Waveform

LOGGER = logging.getLogger(__name__)


def derive_seed(seed: int, *parts: object) -> int:
    """Stable child seed for a named sub-stream (same inputs, same seed, on every platform)."""

    entropy = [int(seed)] + [zlib.crc32(str(part).encode("utf-8")) for part in parts]
    return int(np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint32)[0])


def random_bits(n: int, seed: int) -> np.ndarray:
    if n < 1:
        raise ValueError(f"need at least one bit, got n={n}")
    rng = np.random.default_rng(seed)
    return rng.integers(0, 2, size=n, dtype=np.uint8)


def prbs_bits(n: int, order: int, seed: int) -> np.ndarray:
    """Maximal-length sequence of the given order; the seed picks the starting register state."""

    if n < 1:
        raise ValueError(f"need at least one bit, got n={n}")
    rng = np.random.default_rng(seed)
    state = rng.integers(0, 2, size=order, dtype=np.int8)
    if not state.any():
        state[0] = 1
    sequence, _ = max_len_seq(order, state=state, length=n)
    return sequence.astype(np.uint8)


def source_bits(n: int, source: BitSource, seed: int) -> np.ndarray:
    source = BitSource(source)
    if source is BitSource.RANDOM:
        return random_bits(n, seed)
    return prbs_bits(n, source.order, seed)


def pam2_modulate(bits: np.ndarray) -> np.ndarray:
    """Bit 0 to -1, bit 1 to +1."""

    return 2.0 * np.asarray(bits, dtype=np.float64) - 1.0


def raised_cosine_pulse(sps: int, rolloff: float = 0.5, span_symbols: int = 8) -> np.ndarray:
    """Unit-peak raised-cosine taps over ``span_symbols`` symbols."""

    half = span_symbols * sps // 2
    t = np.arange(-half, half + 1) / sps
    pulse = np.sinc(t)
    if rolloff > 0:
        denom = 1.0 - (2.0 * rolloff * t) ** 2
        singular = np.isclose(denom, 0.0)
        safe = np.where(singular, 1.0, denom)
        pulse = np.where(
            singular,
            (math.pi / 4.0) * np.sinc(1.0 / (2.0 * rolloff)),
            pulse * np.cos(math.pi * rolloff * t) / safe,
        )
    return pulse / pulse[half]


def upsample_shape(
    symbols: np.ndarray, sps: int = 4, pulse: Optional[np.ndarray] = None, bits: Optional[np.ndarray] = None
) -> Waveform:
    """Zero-stuff by ``sps`` and filter; sample ``sps * k`` lines up with symbol ``k``."""

    symbols = np.asarray(symbols, dtype=np.float64)
    if pulse is None:
        pulse = raised_cosine_pulse(sps)
    pulse = np.asarray(pulse, dtype=np.float64)
    count = symbols.size
    stuffed = np.zeros(count * sps)
    stuffed[::sps] = symbols
    delay = int(np.argmax(pulse))
    shaped = np.convolve(stuffed, pulse)[delay : delay + count * sps]
    if bits is None:
        bits = (symbols >= 0).astype(np.uint8)
    return Waveform(samples=shaped, sps=sps, symbol_count=count, origin_bits=bits)


def apply_isi(waveform: Waveform, isi_taps: Sequence[float], spacing: Optional[int] = None) -> Waveform:
    """Centered FIR with taps ``spacing`` samples apart (one symbol by default)."""

    taps = np.asarray(isi_taps, dtype=np.float64)
    if taps.size % 2 != 1:
        raise ValueError(f"isi_taps must have odd length, got {taps.size}")
    spacing = waveform.sps if spacing is None else spacing
    impulse = np.zeros((taps.size - 1) * spacing + 1)
    impulse[::spacing] = taps
    delay = (impulse.size - 1) // 2
    n = waveform.samples.size
    filtered = np.convolve(waveform.samples, impulse)[delay : delay + n]
    return waveform.replace_samples(filtered)


def apply_nonlinearity(waveform: Waveform, a1: float, a3: float) -> Waveform:
    if a1 <= 0:
        raise ValueError(f"a1 must be positive, got {a1}")
    x = waveform.samples
    return waveform.replace_samples(a1 * x + a3 * x**3)


def power_to_snr(power_dbm: float, calibration: Calibration) -> float:
    return calibration.slope_db_per_db * (power_dbm - calibration.offset_db)


def noise_variance(samples: np.ndarray, snr_db: float) -> float:
    signal_power = float(np.mean(samples**2))
    return signal_power / 10.0 ** (snr_db / 10.0)


def apply_awgn(waveform: Waveform, snr_db: float, seed: int) -> Waveform:
    """White Gaussian noise at ``snr_db`` relative to the measured signal power."""

    if math.isinf(snr_db) and snr_db > 0:
        return waveform
    sigma = math.sqrt(noise_variance(waveform.samples, snr_db))
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma, size=waveform.samples.size)
    return waveform.replace_samples(waveform.samples + noise, snr_db=snr_db, noise_sigma=sigma)


def simulate_link(
    config: ChannelConfig, n_symbols: int, power_dbm: Optional[float], seed: int
) -> Waveform:
    """Modulate, shape, distort and add noise; ``power_dbm=None`` disables the noise stage."""

    bits = source_bits(n_symbols, config.bit_source, derive_seed(seed, "bits"))
    pulse = raised_cosine_pulse(config.sps, config.rolloff, config.span_symbols)
    waveform = upsample_shape(pam2_modulate(bits), config.sps, pulse, bits=bits)
    waveform = apply_nonlinearity(waveform, config.a1, config.a3)
    waveform = apply_isi(waveform, config.isi_taps, config.isi_spacing)
    if power_dbm is not None:
        snr_db = power_to_snr(power_dbm, config.calibration)
        waveform = apply_awgn(waveform, snr_db, derive_seed(seed, "noise"))
    waveform.meta.update(distance=config.distance_preset, power_dbm=power_dbm, seed=seed)
    LOGGER.debug(
        "Simulated %s symbols on %s at %s dBm", n_symbols, config.distance_preset, power_dbm
    )
    return waveform


def hard_decision_errors(waveform: Waveform, offset: int = 0, guard: int = 0) -> Tuple[int, int]:
    """Sign decisions at the symbol instants; returns (bit errors, bits compared)."""

    samples = waveform.decision_samples(offset)
    bits = waveform.origin_bits
    if guard:
        samples = samples[guard:-guard]
        bits = bits[guard:-guard]
    decisions = (samples >= 0).astype(np.uint8)
    return int(np.count_nonzero(decisions != bits)), int(bits.size)


def eye_opening(waveform: Waveform, offset: int = 0, guard: int = 8) -> float:
    """Lowest +1 level minus highest -1 level at the decision instants, edges excluded."""

    samples = waveform.decision_samples(offset)[guard : waveform.symbol_count - guard]
    bits = waveform.origin_bits[guard : waveform.symbol_count - guard]
    ones = samples[bits == 1]
    zeros = samples[bits == 0]
    if ones.size == 0 or zeros.size == 0:
        raise ValueError("eye opening needs both symbol levels present")
    return float(ones.min() - zeros.max())


def eye_closure(waveform: Waveform, offset: int = 0, guard: int = 8) -> float:
    """1 - opening / mean level separation; 0 for an ideal eye."""

    samples = waveform.decision_samples(offset)[guard : waveform.symbol_count - guard]
    bits = waveform.origin_bits[guard : waveform.symbol_count - guard]
    separation = float(samples[bits == 1].mean() - samples[bits == 0].mean())
    return 1.0 - eye_opening(waveform, offset, guard) / separation
