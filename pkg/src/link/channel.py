"""Channel presets for the baseband link surrogate."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator

from src.config import DISTANCE_PRESETS, SAMPLES_PER_SYMBOL, PulseConfig

DEFAULT_POWER_GRID: Tuple[float, ...] = tuple(-20.0 + 0.5 * i for i in range(8))
MIN_GRID_SPAN_DB = 3.5

PRESET_TAPS: Dict[str, Tuple[float, ...]] = {
    "d10km": (0.05, 0.9, 0.05),
    "d15km": (0.08, 0.12, 0.6, 0.12, 0.08),
    "d20km": (0.1, 0.15, 0.5, 0.15, 0.1),
}
PRESET_NONLINEARITY: Tuple[float, float] = (1.0, -0.15)
PRESET_CALIBRATION: Tuple[float, float] = (2.0, -24.0)


class BitSource(str, Enum):
    RANDOM = "random"
    PRBS7 = "prbs7"
    PRBS15 = "prbs15"

    @property
    def order(self) -> Optional[int]:
        return None if self is BitSource.RANDOM else int(self.value[4:])


class Calibration(BaseModel):
    """Affine received-power to SNR map: ``snr_db = slope * (power_dbm - offset)``."""

    slope_db_per_db: float = Field(gt=0.0)
    offset_db: float

    model_config = {"extra": "forbid", "frozen": True}


class ChannelConfig(BaseModel):
    """One distance preset of the link surrogate."""

    distance_preset: str
    isi_taps: List[float]
    a1: float = Field(gt=0.0)
    a3: float
    sps: int = SAMPLES_PER_SYMBOL
    power_grid_dbm: List[float]
    calibration: Calibration
    bit_source: BitSource = BitSource.RANDOM
    rolloff: float = Field(default=PulseConfig().rolloff, ge=0.0, le=1.0)
    span_symbols: int = Field(default=PulseConfig().span_symbols, ge=1)
    tap_spacing: Optional[int] = Field(default=None, ge=1)

    model_config = {"extra": "forbid", "frozen": True}

    @field_validator("isi_taps")
    @classmethod
    def _taps(cls, value: List[float]) -> List[float]:
        if len(value) % 2 != 1:
            raise ValueError(f"isi_taps must have odd length, got {len(value)}")
        if abs(math.fsum(value) - 1.0) > 1e-12:
            raise ValueError(f"isi_taps must sum to 1, got {math.fsum(value)!r}")
        return value

    @field_validator("sps")
    @classmethod
    def _sps(cls, value: int) -> int:
        if value != SAMPLES_PER_SYMBOL:
            raise ValueError(f"sps is fixed at {SAMPLES_PER_SYMBOL}, got {value}")
        return value

    @field_validator("power_grid_dbm")
    @classmethod
    def _grid(cls, value: List[float]) -> List[float]:
        if len(value) < 2 or any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("power_grid_dbm needs at least 2 strictly ascending points")
        if value[-1] - value[0] < MIN_GRID_SPAN_DB - 1e-9:
            raise ValueError(f"power_grid_dbm must span at least {MIN_GRID_SPAN_DB} dB")
        return value

    @property
    def isi_spacing(self) -> int:
        """Sample distance between ISI taps; one symbol unless overridden."""

        return self.tap_spacing or self.sps

    @property
    def nl_coeffs(self) -> Tuple[float, float]:
        return (self.a1, self.a3)

    @property
    def median_power(self) -> float:
        return self.power_grid_dbm[len(self.power_grid_dbm) // 2]

    @classmethod
    def preset(cls, name: str, **overrides) -> "ChannelConfig":
        """Shipped preset by name, with optional field overrides."""

        if name not in PRESET_TAPS:
            raise ValueError(f"unknown distance preset {name!r}; expected one of {DISTANCE_PRESETS}")
        a1, a3 = PRESET_NONLINEARITY
        slope, offset = PRESET_CALIBRATION
        fields = {
            "distance_preset": name,
            "isi_taps": list(PRESET_TAPS[name]),
            "a1": a1,
            "a3": a3,
            "power_grid_dbm": list(DEFAULT_POWER_GRID),
            "calibration": Calibration(slope_db_per_db=slope, offset_db=offset),
        }
        fields.update(overrides)
        return cls(**fields)


@dataclass(slots=True)
class Waveform:
    """Sampled received signal together with the transmitted bits."""

    samples: np.ndarray
    sps: int
    symbol_count: int
    origin_bits: np.ndarray
    meta: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.origin_bits = np.asarray(self.origin_bits, dtype=np.uint8)
        if self.samples.shape != (self.symbol_count * self.sps,):
            raise ValueError(
                f"waveform has {self.samples.size} samples, expected {self.symbol_count} x {self.sps}"
            )
        if self.origin_bits.shape != (self.symbol_count,):
            raise ValueError(f"origin_bits has {self.origin_bits.size} entries, expected {self.symbol_count}")

    def replace_samples(self, samples: np.ndarray, **meta) -> "Waveform":
        return Waveform(
            samples=samples,
            sps=self.sps,
            symbol_count=self.symbol_count,
            origin_bits=self.origin_bits,
            meta={**self.meta, **meta},
        )

    def decision_samples(self, offset: int = 0) -> np.ndarray:
        return self.samples[offset :: self.sps][: self.symbol_count]
