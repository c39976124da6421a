"""Labeled 16-sample windows cut from received waveforms."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.config import SAMPLES_PER_SYMBOL, WINDOW_SYMBOLS, WINDOW_WIDTH
from src.link.channel import ChannelConfig, Waveform
from src.link.simulate import derive_seed, simulate_link

LOGGER = logging.getLogger(__name__)


class DatasetSizeError(ValueError):
    """Raised when there are too few symbols or windows for the requested operation."""


@dataclass(slots=True)
class DatasetMeta:
    distance: Optional[str] = None
    powers: List[float] = field(default_factory=list)
    seed: Optional[int] = None


@dataclass(slots=True)
class WindowedDataset:
    """Inputs [N, 1, 16] with one hard label per window.

    ``center`` is the offset already subtracted from ``inputs``; ``powers``
    holds the per-window received power when the set was pooled.
    """

    inputs: np.ndarray
    labels: np.ndarray
    decide_index: int = 2
    center: float = 0.0
    meta: DatasetMeta = field(default_factory=DatasetMeta)
    powers: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        if self.inputs.ndim != 3 or self.inputs.shape[1:] != (1, WINDOW_WIDTH):
            raise DatasetSizeError(f"inputs must be [N, 1, {WINDOW_WIDTH}], got {self.inputs.shape}")
        if self.labels.shape != (self.inputs.shape[0],):
            raise DatasetSizeError(f"{self.labels.size} labels for {self.inputs.shape[0]} windows")
        if not np.all(np.isfinite(self.inputs)):
            raise DatasetSizeError(f"{int(np.sum(~np.isfinite(self.inputs)))} non-finite input samples")
        if np.any(self.labels > 1):
            raise ValueError("labels must be 0 or 1")
        if not 0 <= self.decide_index < WINDOW_SYMBOLS:
            raise ValueError(f"decide_index must lie in [0, {WINDOW_SYMBOLS - 1}], got {self.decide_index}")
        if self.powers is not None:
            self.powers = np.asarray(self.powers, dtype=np.float64)

    def __len__(self) -> int:
        return int(self.labels.size)

    def subset(self, indices: Sequence[int]) -> "WindowedDataset":
        indices = np.asarray(indices, dtype=np.int64)
        return replace(
            self,
            inputs=self.inputs[indices],
            labels=self.labels[indices],
            powers=None if self.powers is None else self.powers[indices],
        )

    def at_power(self, power_dbm: float) -> "WindowedDataset":
        if self.powers is None:
            raise ValueError("dataset carries no per-window power provenance")
        return self.subset(np.flatnonzero(np.isclose(self.powers, power_dbm)))

    def decision_samples(self) -> np.ndarray:
        """Center-compensated sample at the decided symbol of every window."""

        return self.inputs[:, 0, self.decide_index * SAMPLES_PER_SYMBOL] + self.center


def window(waveform: Waveform, decide_index: int = 2) -> WindowedDataset:
    """Stride-one-symbol windows of 4 symbols, labeled by the symbol at ``decide_index``."""

    count = waveform.symbol_count - WINDOW_SYMBOLS + 1
    if count < 1:
        raise DatasetSizeError(
            f"need at least {WINDOW_SYMBOLS} symbols to cut a window, got {waveform.symbol_count}"
        )
    width = WINDOW_SYMBOLS * waveform.sps
    views = sliding_window_view(waveform.samples, width)[:: waveform.sps][:count]
    labels = waveform.origin_bits[decide_index : decide_index + count]
    meta = DatasetMeta(
        distance=waveform.meta.get("distance"),
        powers=[] if waveform.meta.get("power_dbm") is None else [float(waveform.meta["power_dbm"])],
        seed=waveform.meta.get("seed"),
    )
    return WindowedDataset(
        inputs=np.ascontiguousarray(views)[:, None, :],
        labels=labels,
        decide_index=decide_index,
        meta=meta,
    )


def apply_center(dataset: WindowedDataset, center: float) -> WindowedDataset:
    """Re-express ``dataset`` relative to ``center``."""

    shift = dataset.center - center
    return replace(dataset, inputs=dataset.inputs + shift, center=center)


def split(dataset: WindowedDataset, train_fraction: float, seed: int) -> Tuple[WindowedDataset, WindowedDataset]:
    """Seeded shuffle, split, and center both parts on the training mean."""

    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    total = len(dataset)
    n_train = int(round(total * train_fraction))
    if n_train < 1 or n_train >= total:
        raise DatasetSizeError(f"cannot split {total} windows at fraction {train_fraction}")
    order = np.random.default_rng(seed).permutation(total)
    train = dataset.subset(order[:n_train])
    test = dataset.subset(np.sort(order[n_train:]))
    center = float(np.mean(train.inputs + train.center))
    return apply_center(train, center), apply_center(test, center)


def generate_cell(
    config: ChannelConfig, power_dbm: Optional[float], n_windows: int, seed: int, decide_index: int = 2
) -> WindowedDataset:
    """``n_windows`` windows at one received power (``None`` for noise-free)."""

    if n_windows < 1:
        raise DatasetSizeError(f"n_windows must be positive, got {n_windows}")
    waveform = simulate_link(config, n_windows + WINDOW_SYMBOLS - 1, power_dbm, seed)
    return window(waveform, decide_index)


def pool_across_powers(
    config: ChannelConfig, n_per_power: int, seed: int, decide_index: int = 2
) -> WindowedDataset:
    """Equal-sized window sets at every grid power, concatenated and shuffled."""

    if n_per_power < 1:
        raise DatasetSizeError(f"n_per_power must be positive, got {n_per_power}")
    parts = [
        generate_cell(config, power, n_per_power, derive_seed(seed, "pool", power), decide_index)
        for power in config.power_grid_dbm
    ]
    inputs = np.concatenate([part.inputs for part in parts])
    labels = np.concatenate([part.labels for part in parts])
    powers = np.repeat(np.asarray(config.power_grid_dbm, dtype=np.float64), n_per_power)
    order = np.random.default_rng(derive_seed(seed, "pool-shuffle")).permutation(labels.size)
    LOGGER.info(
        "Pooled %s windows over %s powers for %s", labels.size, len(parts), config.distance_preset
    )
    return WindowedDataset(
        inputs=inputs[order],
        labels=labels[order],
        decide_index=decide_index,
        meta=DatasetMeta(distance=config.distance_preset, powers=list(config.power_grid_dbm), seed=seed),
        powers=powers[order],
    )


def evaluation_sets(
    config: ChannelConfig,
    n_windows: int,
    seed: int,
    center: float,
    *,
    decide_index: int = 2,
    powers: Optional[Sequence[float]] = None,
) -> Dict[float, WindowedDataset]:
    """Independent per-power test sets, centered with the training offset."""

    grid = list(config.power_grid_dbm if powers is None else powers)
    return {
        power: apply_center(
            generate_cell(config, power, n_windows, derive_seed(seed, "eval", power), decide_index), center
        )
        for power in grid
    }
