"""Project-wide configuration and constants."""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

from pydantic import BaseModel, Field, field_validator

BASE_DIR = Path(__file__).resolve().parent.parent
CONFIG_DIR = BASE_DIR / "configs"
DEFAULT_CONFIG_PATH = CONFIG_DIR / "default.ini"
RUNS_DIR = BASE_DIR / "runs"
OUTPUT_DIR_ENV = "ROF_OUTPUT_DIR"

FEC_THRESHOLD = 3.8e-3
SAMPLES_PER_SYMBOL = 4
WINDOW_SYMBOLS = 4
WINDOW_WIDTH = WINDOW_SYMBOLS * SAMPLES_PER_SYMBOL
DISTANCE_PRESETS = ("d10km", "d15km", "d20km")


@dataclass(slots=True, frozen=True)
class NumericConfig:
    """Constants shared by the differentiation engine and its checks."""

    leaky_slope: float = 0.2
    bn_epsilon: float = 1e-5
    bn_momentum: float = 0.9
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    ste_clip: float = 1.0
    gradcheck_step: float = 1e-5
    gradcheck_tolerance: float = 1e-4
    gradcheck_floor: float = 1e-8
    gradcheck_kink_margin: float = 1e-4


@dataclass(slots=True, frozen=True)
class PulseConfig:
    """Transmit pulse shaping parameters."""

    rolloff: float = 0.5
    span_symbols: int = 8


NUMERIC = NumericConfig()


class ConfigError(ValueError):
    """Raised when a config file is missing, malformed or fails validation."""

    def __init__(self, message: str, *, section: Optional[str] = None) -> None:
        super().__init__(message)
        self.section = section


class DatasetSettings(BaseModel):
    """Windowing and split parameters from the ``[dataset]`` section."""

    decide_index: int = Field(default=2, ge=0, le=WINDOW_SYMBOLS - 1)
    train_fraction: float = Field(default=0.8, gt=0.0, lt=1.0)
    symbols_per_cell: int = Field(default=100_000, ge=WINDOW_SYMBOLS)
    eval_symbols: int = Field(default=100_000, ge=WINDOW_SYMBOLS)

    model_config = {"extra": "forbid"}


class SweepSettings(BaseModel):
    """Sweep grids, model list and worker count from the ``[sweep]`` section."""

    datasize_sizes: List[int] = Field(default_factory=lambda: [5_000, 10_000, 20_000, 40_000, 80_000, 160_000])
    datasize_distance: str = "d10km"
    datasize_power_dbm: float = -17.78
    plateau_tolerance: float = Field(default=0.1, gt=0.0)
    models: List[str] = Field(default_factory=lambda: ["cnn", "bcnn", "fcnn", "threshold"])
    workers: int = Field(default=1, ge=1)

    model_config = {"extra": "forbid"}

    @field_validator("datasize_sizes")
    @classmethod
    def _ascending(cls, value: List[int]) -> List[int]:
        if not value or value[0] < 1 or any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("datasize_sizes must be positive and strictly ascending")
        return value


def default_output_dir(configured: Optional[str] = None) -> Path:
    """Resolve the output directory: env var, then config value, then ``runs/``."""

    env_value = os.environ.get(OUTPUT_DIR_ENV)
    if env_value:
        return Path(env_value)
    if configured:
        candidate = Path(configured)
        return candidate if candidate.is_absolute() else BASE_DIR / candidate
    return RUNS_DIR


def ensure_output_dir(path: Path) -> Path:
    """Ensure an output directory exists and return it."""

    path.mkdir(parents=True, exist_ok=True)
    return path
