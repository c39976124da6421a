"""Experiment sweeps: BER versus power, training-set size, iterations and activation."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from src.autodiff.functional import ActivationKind
from src.config import FEC_THRESHOLD, DatasetSettings
from src.dataset.windows import (
    WindowedDataset,
    apply_center,
    evaluation_sets,
    generate_cell,
    pool_across_powers,
    split,
)
from src.harness.models import ModelKind, ModelSpec, ThresholdModel, build_model, preset_spec
from src.harness.training import TrainConfig, TrainTrace, evaluate_ber, train
from src.link.channel import ChannelConfig
from src.link.simulate import derive_seed

LOGGER = logging.getLogger(__name__)


@dataclass(slots=True, frozen=True)
class BerRow:
    power_dbm: float
    errors: int
    bits: int

    @property
    def ber(self) -> float:
        return self.errors / self.bits


@dataclass
class BerCurve:
    model: str
    distance: str
    rows: List[BerRow] = field(default_factory=list)

    def sorted_rows(self) -> List[BerRow]:
        return sorted(self.rows, key=lambda row: row.power_dbm)

    def ber_at(self, power_dbm: float) -> float:
        for row in self.rows:
            if math.isclose(row.power_dbm, power_dbm):
                return row.ber
        raise KeyError(f"no BER point at {power_dbm} dBm")

    def row_at(self, power_dbm: float) -> BerRow:
        for row in self.rows:
            if math.isclose(row.power_dbm, power_dbm):
                return row
        raise KeyError(f"no BER point at {power_dbm} dBm")


@dataclass
class PowerSweepResult:
    """One trained-once model evaluated across the power grid."""

    curve: BerCurve
    trace: Optional[TrainTrace]
    train_calls: int
    fingerprints: List[Tuple[str, str]] = field(default_factory=list)

    @property
    def parameters_untouched(self) -> bool:
        return all(before == after for before, after in self.fingerprints)


@dataclass(slots=True, frozen=True)
class SizeRow:
    size: int
    errors: int
    bits: int

    @property
    def ber(self) -> float:
        return self.errors / self.bits


@dataclass
class SizeSweepResult:
    model: str
    rows: List[SizeRow]
    plateau_size: int


@dataclass(slots=True, frozen=True)
class ActivationRow:
    activation: str
    distance: str
    power_dbm: float
    errors: int
    bits: int

    @property
    def ber(self) -> float:
        return self.errors / self.bits


def hard_decision_baseline(dataset: WindowedDataset) -> float:
    """BER of the sign decision on the decided sample (no network)."""

    detector = ThresholdModel(ModelSpec(kind=ModelKind.THRESHOLD, decide_index=dataset.decide_index))
    ber, _, _ = evaluate_ber(detector, dataset)
    return ber


def pooled_training_sets(
    channel: ChannelConfig, settings: DatasetSettings, seed: int
) -> Tuple[WindowedDataset, WindowedDataset]:
    """Power-pooled windows split into centered train and held-out parts."""

    per_power = max(1, settings.symbols_per_cell - 3)
    pool_seed = derive_seed(seed, "train", channel.distance_preset)
    pooled = pool_across_powers(channel, per_power, pool_seed, settings.decide_index)
    return split(pooled, settings.train_fraction, derive_seed(seed, "split"))


def sweep_power(
    model_spec: ModelSpec,
    channel: ChannelConfig,
    powers: Optional[Sequence[float]] = None,
    *,
    settings: Optional[DatasetSettings] = None,
    train_cfg: Optional[TrainConfig] = None,
    seed: int = 0,
    datasets: Optional[Tuple[WindowedDataset, WindowedDataset]] = None,
    eval_sets: Optional[Dict[float, WindowedDataset]] = None,
    progress: bool = False,
) -> PowerSweepResult:
    """Train once on the power-pooled set, then evaluate every grid power without retraining."""

    settings = settings or DatasetSettings()
    grid = list(channel.power_grid_dbm if powers is None else powers)
    train_set, test_set = datasets or pooled_training_sets(channel, settings, seed)
    if eval_sets is None:
        eval_sets = evaluation_sets(
            channel,
            settings.eval_symbols - 3,
            derive_seed(seed, "eval", channel.distance_preset),
            train_set.center,
            decide_index=settings.decide_index,
            powers=grid,
        )

    model = build_model(model_spec)
    trace = train(model, train_set, test_set, train_cfg, progress=progress)
    curve = BerCurve(model=model_spec.kind.value, distance=channel.distance_preset)
    result = PowerSweepResult(curve=curve, trace=trace, train_calls=1)
    for power in grid:
        before = model.fingerprint()
        _, errors, count = evaluate_ber(model, eval_sets[power])
        result.fingerprints.append((before, model.fingerprint()))
        curve.rows.append(BerRow(power, errors, count))
        LOGGER.info(
            "%s %s %.2f dBm: %s errors / %s bits", curve.model, curve.distance, power, errors, count
        )
    return result


def sweep_power_models(
    model_specs: Sequence[ModelSpec],
    channel: ChannelConfig,
    *,
    settings: Optional[DatasetSettings] = None,
    train_cfg: Optional[TrainConfig] = None,
    seed: int = 0,
    workers: int = 1,
    progress: bool = False,
) -> Dict[str, PowerSweepResult]:
    """``sweep_power`` for several models sharing one training pool and one set of test sets."""

    settings = settings or DatasetSettings()
    datasets = pooled_training_sets(channel, settings, seed)
    eval_sets = evaluation_sets(
        channel,
        settings.eval_symbols - 3,
        derive_seed(seed, "eval", channel.distance_preset),
        datasets[0].center,
        decide_index=settings.decide_index,
    )

    def _cell(spec: ModelSpec) -> PowerSweepResult:
        return sweep_power(
            spec, channel, settings=settings, train_cfg=train_cfg, seed=seed, datasets=datasets, eval_sets=eval_sets
        )

    return _run_cells({spec.kind.value: spec for spec in model_specs}, _cell, workers, progress, "Power sweep")


def _run_cells(cells: Dict[str, object], fn: Callable, workers: int, progress: bool, desc: str) -> Dict:
    results: Dict[str, object] = {}
    bar = tqdm(total=len(cells), desc=desc, disable=not progress)
    if workers <= 1:
        for key, cell in cells.items():
            results[key] = fn(cell)
            bar.update(1)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {key: pool.submit(fn, cell) for key, cell in cells.items()}
            for key, future in futures.items():
                results[key] = future.result()
                bar.update(1)
    bar.close()
    return {key: results[key] for key in sorted(results)}


def plateau_size(rows: Sequence[SizeRow], tolerance: float = 0.1) -> int:
    """Smallest size whose BER is within ``tolerance`` (relative) of the largest size's BER."""

    ordered = sorted(rows, key=lambda row: row.size)
    if not ordered:
        raise ValueError("plateau needs at least one size")
    plateau = ordered[-1].ber
    for row in ordered:
        if row.ber <= plateau * (1.0 + tolerance):
            return row.size
    return ordered[-1].size


def sweep_training_size(
    model_spec: ModelSpec,
    channel: ChannelConfig,
    power_dbm: float,
    sizes: Sequence[int],
    fixed_test_set: WindowedDataset,
    *,
    train_cfg: Optional[TrainConfig] = None,
    seed: int = 0,
    decide_index: int = 2,
    tolerance: float = 0.1,
    holdout_windows: int = 10_000,
    progress: bool = False,
) -> SizeSweepResult:
    """Fresh model per training-set size; all sizes share one nested pool and one test set."""

    sizes = list(sizes)
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("sizes must be strictly ascending")
    pool = generate_cell(channel, power_dbm, sizes[-1], derive_seed(seed, "datasize"), decide_index)
    holdout = generate_cell(channel, power_dbm, holdout_windows, derive_seed(seed, "datasize-holdout"), decide_index)
    rows: List[SizeRow] = []
    for size in tqdm(sizes, desc=f"Data size {model_spec.kind.value}", disable=not progress):
        raw = pool.subset(np.arange(size))
        center = float(np.mean(raw.inputs))
        train_set = apply_center(raw, center)
        model = build_model(model_spec)
        train(model, train_set, apply_center(holdout, center), train_cfg)
        _, errors, count = evaluate_ber(model, apply_center(fixed_test_set, center))
        rows.append(SizeRow(size, errors, count))
        LOGGER.info("%s trained on %s windows: BER %.3e", model_spec.kind.value, size, errors / count)
    return SizeSweepResult(model=model_spec.kind.value, rows=rows, plateau_size=plateau_size(rows, tolerance))


def sweep_iterations(
    model_specs: Sequence[ModelSpec],
    train_set: WindowedDataset,
    test_set: WindowedDataset,
    cfg: Optional[TrainConfig] = None,
    *,
    workers: int = 1,
    progress: bool = False,
) -> Dict[str, TrainTrace]:
    """Train every model on the same data and target; non-converged traces are kept, not raised."""

    def _cell(spec: ModelSpec) -> TrainTrace:
        return train(build_model(spec), train_set, test_set, cfg)

    traces = _run_cells({spec.kind.value: spec for spec in model_specs}, _cell, workers, progress, "Iterations")
    for name, trace in traces.items():
        LOGGER.info("%s iterations to target: %s", name, trace.iterations_to_target)
    return traces


def sweep_activations(
    channel: ChannelConfig,
    power_dbm: float,
    kinds: Sequence[ActivationKind] = tuple(ActivationKind),
    *,
    model_kind: ModelKind = ModelKind.CNN,
    settings: Optional[DatasetSettings] = None,
    train_cfg: Optional[TrainConfig] = None,
    seed: int = 0,
    progress: bool = False,
) -> List[ActivationRow]:
    """Same preset and data, one run per activation function."""

    settings = settings or DatasetSettings()
    train_set, test_set = pooled_training_sets(channel, settings, seed)
    eval_set = evaluation_sets(
        channel,
        settings.eval_symbols - 3,
        derive_seed(seed, "eval", channel.distance_preset),
        train_set.center,
        decide_index=settings.decide_index,
        powers=[power_dbm],
    )[power_dbm]
    rows: List[ActivationRow] = []
    for kind in tqdm(kinds, desc="Activations", disable=not progress):
        kind = ActivationKind(kind)
        model = build_model(preset_spec(model_kind, seed=seed, activation=kind, decide_index=settings.decide_index))
        train(model, train_set, test_set, train_cfg)
        _, errors, count = evaluate_ber(model, eval_set)
        rows.append(ActivationRow(kind.value, channel.distance_preset, power_dbm, errors, count))
    return sorted(rows, key=lambda row: row.activation)


def receiver_sensitivity(curve: BerCurve, threshold: float = FEC_THRESHOLD) -> Optional[float]:
    """Lowest power at which the BER reaches ``threshold``, interpolated in log10(BER)."""

    rows = curve.sorted_rows()
    if not rows:
        return None

    def _log(row: BerRow) -> float:
        return math.log10(max(row.ber, 0.5 / row.bits))

    if rows[0].ber <= threshold:
        return rows[0].power_dbm
    target = math.log10(threshold)
    for low, high in zip(rows, rows[1:]):
        if low.ber > threshold >= high.ber:
            fraction = (_log(low) - target) / (_log(low) - _log(high))
            return low.power_dbm + fraction * (high.power_dbm - low.power_dbm)
    return None


def sensitivity_gain(curve: BerCurve, baseline: BerCurve, threshold: float = FEC_THRESHOLD) -> Optional[float]:
    """Sensitivity improvement in dB over ``baseline``; ``None`` if either never reaches the threshold."""

    ours = receiver_sensitivity(curve, threshold)
    theirs = receiver_sensitivity(baseline, threshold)
    if ours is None or theirs is None:
        return None
    return theirs - ours
