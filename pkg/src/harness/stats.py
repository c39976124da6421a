"""Binomial confidence intervals and Gaussian error-probability helpers."""
from __future__ import annotations

import math
from typing import Sequence, Tuple

import numpy as np
from scipy.special import erfc
from scipy.stats import norm


def wilson_interval(errors: int, count: int, confidence: float = 0.95) -> Tuple[float, float]:
    """Wilson score interval for an error probability."""

    if count <= 0:
        raise ValueError("Wilson interval needs a positive count")
    z = float(norm.ppf(0.5 + confidence / 2.0))
    p = errors / count
    denom = 1.0 + z * z / count
    middle = (p + z * z / (2 * count)) / denom
    half = z * math.sqrt(p * (1.0 - p) / count + z * z / (4 * count * count)) / denom
    return max(0.0, middle - half), min(1.0, middle + half)


def not_significantly_greater(
    errors_a: int, count_a: int, errors_b: int, count_b: int, confidence: float = 0.95
) -> bool:
    """True unless the interval of ``a`` lies entirely above that of ``b``."""

    low_a, _ = wilson_interval(errors_a, count_a, confidence)
    _, high_b = wilson_interval(errors_b, count_b, confidence)
    return low_a <= high_b


def monotone_non_increasing(errors: Sequence[int], counts: Sequence[int], confidence: float = 0.95) -> bool:
    """BER sequence never rises significantly from one point to the next."""

    return all(
        not_significantly_greater(errors[i + 1], counts[i + 1], errors[i], counts[i], confidence)
        for i in range(len(errors) - 1)
    )


def q_function(x: float | np.ndarray) -> float | np.ndarray:
    return 0.5 * erfc(np.asarray(x) / math.sqrt(2.0))


def pam2_awgn_ber(amplitude: float, sigma: float) -> float:
    """Threshold-detector error probability for levels ±amplitude in Gaussian noise."""

    return float(q_function(amplitude / sigma))


def binomial_bounds(p: float, count: int, sigmas: float = 3.0) -> Tuple[float, float]:
    """``count * p`` ± ``sigmas`` standard deviations, as fractions of ``count``."""

    spread = sigmas * math.sqrt(p * (1.0 - p) / count)
    return p - spread, p + spread
