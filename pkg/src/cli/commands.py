"""Command implementations; ``main`` parses flags into a ``RunConfig`` and dispatches here."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.config import DISTANCE_PRESETS, FEC_THRESHOLD, ConfigError
from src.dataset.storage import DatasetFormatError, load_dataset, save_dataset
from src.dataset.windows import DatasetMeta, WindowedDataset, generate_cell, split
from src.harness.models import ModelKind, build_model, model_cost, preset_spec, save_model
from src.harness.results import (
    write_activation_rows,
    write_ber_curves,
    write_datasize,
    write_sensitivity,
    write_train_traces,
)
from src.harness.sweeps import (
    pooled_training_sets,
    receiver_sensitivity,
    sensitivity_gain,
    sweep_activations,
    sweep_iterations,
    sweep_power_models,
    sweep_training_size,
)
from src.harness.training import train
from src.link.simulate import derive_seed
from src.cli.settings import RunConfig
from src.cli.verify import VerifyOptions, run_verification

LOGGER = logging.getLogger(__name__)

SWEEP_KINDS = ("power", "datasize", "iterations", "activations")
SINGLE_DISTANCE_DEFAULT = "d15km"


@dataclass
class CommandOutcome:
    exit_code: int = 0
    artifacts: List[Path] = field(default_factory=list)
    summary: Dict[str, object] = field(default_factory=dict)


def dataset_filename(distance: str, power_dbm: float) -> str:
    return f"{distance}_{power_dbm:+.2f}dBm.rwds"


def _model_specs(run: RunConfig):
    decide_index = run.workbench.dataset.decide_index
    return [preset_spec(ModelKind(name), seed=run.seed, decide_index=decide_index) for name in run.models]


def _cost_summary(run: RunConfig) -> Dict[str, Dict[str, int]]:
    costs = {}
    for spec in _model_specs(run):
        cost = model_cost(build_model(spec))
        costs[spec.kind.value] = {
            "parameters": cost.parameters,
            "real_macs": cost.real_macs,
            "binary_macs": cost.binary_macs,
            "packed_word_ops": cost.packed_word_ops,
        }
    return costs


def _distances(run: RunConfig, *, single: bool) -> List[str]:
    if run.distances:
        return run.distances[:1] if single else list(run.distances)
    if single:
        return [SINGLE_DISTANCE_DEFAULT]
    return [name for name in DISTANCE_PRESETS if name in run.workbench.channels]


def cmd_gen(run: RunConfig, output_dir: Path) -> CommandOutcome:
    """One dataset file per (distance, grid power), raw windows with zero center."""

    outcome = CommandOutcome()
    settings = run.workbench.dataset
    n_windows = settings.symbols_per_cell - 3
    for distance in _distances(run, single=False):
        channel = run.workbench.channel(distance)
        for power in channel.power_grid_dbm:
            cell = generate_cell(
                channel, power, n_windows, derive_seed(run.seed, "gen", distance, power), settings.decide_index
            )
            path = save_dataset(cell, output_dir / dataset_filename(distance, power))
            outcome.artifacts.append(path)
            print(f"{path.name}: {len(cell)} windows")
    outcome.summary["files"] = len(outcome.artifacts)
    outcome.summary["windows_per_file"] = n_windows
    return outcome


def _concat(parts: Sequence[WindowedDataset], paths: Sequence[Path]) -> WindowedDataset:
    decide = {part.decide_index for part in parts}
    if len(decide) != 1:
        raise DatasetFormatError(
            f"dataset files disagree on decide_index: {sorted(decide)}", path=", ".join(str(p) for p in paths)
        )
    inputs = np.concatenate([part.inputs + part.center for part in parts])
    labels = np.concatenate([part.labels for part in parts])
    return WindowedDataset(inputs=inputs, labels=labels, decide_index=decide.pop(), meta=DatasetMeta())


def _dataset_paths(raw: Sequence[str]) -> List[Path]:
    paths: List[Path] = []
    for item in raw:
        path = Path(item)
        if path.is_dir():
            found = sorted(path.glob("*.rwds"))
            if not found:
                raise FileNotFoundError(f"no .rwds files under {path}")
            paths.extend(found)
        elif not path.exists():
            raise FileNotFoundError(f"dataset not found: {path}")
        else:
            paths.append(path)
    return paths


def cmd_train(run: RunConfig, output_dir: Path, *, progress: bool = False) -> CommandOutcome:
    """Train one model on stored dataset files; writes the model archive and its trace."""

    outcome = CommandOutcome()
    raw = run.options.get("dataset")
    if not raw:
        raise FileNotFoundError("train needs --dataset")
    paths = _dataset_paths(str(raw).split(","))
    pooled = _concat([load_dataset(path) for path in paths], paths)
    train_set, test_set = split(pooled, run.workbench.dataset.train_fraction, derive_seed(run.seed, "split"))

    kind = ModelKind(run.models[0])
    model = build_model(preset_spec(kind, seed=run.seed, decide_index=pooled.decide_index))
    trace = train(model, train_set, test_set, run.workbench.train, progress=progress)
    if kind is not ModelKind.THRESHOLD:
        outcome.artifacts.append(save_model(model, output_dir / f"model_{kind.value}.npz"))
    outcome.artifacts.append(write_train_traces(output_dir / "train_trace.csv", {kind.value: trace}))
    outcome.summary.update(
        {
            "model": kind.value,
            "windows": len(pooled),
            "iterations_run": trace.iterations_run,
            "iterations_to_target": trace.iterations_to_target,
            "final_accuracy": trace.final_accuracy,
            "center": train_set.center,
            "cost": _cost_summary(run),
        }
    )
    print(f"{kind.value}: final accuracy {trace.final_accuracy}, iterations to target {trace.iterations_to_target}")
    return outcome


def _check_calibration(distance: str, curve) -> None:
    """The shortest link's baseline should pass FEC somewhere, the longest nowhere."""

    bers = [row.ber for row in curve.rows]
    if distance == DISTANCE_PRESETS[0] and min(bers) >= FEC_THRESHOLD:
        LOGGER.warning("Threshold detector never reaches the FEC limit on %s; check the calibration", distance)
    if distance == DISTANCE_PRESETS[-1] and min(bers) < FEC_THRESHOLD:
        LOGGER.warning("Threshold detector already passes the FEC limit on %s; check the calibration", distance)


def _sweep_power(run: RunConfig, output_dir: Path, progress: bool) -> CommandOutcome:
    outcome = CommandOutcome()
    wb = run.workbench
    curves, traces, sensitivity_rows = [], {}, []
    for distance in _distances(run, single=False):
        channel = wb.channel(distance)
        results = sweep_power_models(
            _model_specs(run),
            channel,
            settings=wb.dataset,
            train_cfg=wb.train,
            seed=run.seed,
            workers=wb.sweep.workers,
            progress=progress,
        )
        baseline = results.get(ModelKind.THRESHOLD.value)
        if baseline is not None:
            _check_calibration(distance, baseline.curve)
        for name, result in results.items():
            curves.append(result.curve)
            if result.trace is not None:
                traces[f"{name}@{distance}"] = result.trace
            gain = sensitivity_gain(result.curve, baseline.curve) if baseline else None
            sensitivity_rows.append((name, distance, receiver_sensitivity(result.curve, FEC_THRESHOLD), gain))
    outcome.artifacts.append(write_ber_curves(output_dir / "ber_curve.csv", curves))
    outcome.artifacts.append(write_sensitivity(output_dir / "sensitivity.csv", sensitivity_rows))
    outcome.artifacts.append(write_train_traces(output_dir / "train_trace.csv", traces))
    outcome.summary["sensitivity_dbm"] = {f"{m}@{d}": s for m, d, s, _ in sensitivity_rows}
    for model, distance, sens, gain in sorted(sensitivity_rows):
        sens_text = "not reached" if sens is None else f"{sens:.2f} dBm"
        gain_text = "" if gain is None else f" (gain {gain:+.2f} dB)"
        print(f"{model} {distance}: sensitivity {sens_text}{gain_text}")
    return outcome


def _sweep_datasize(run: RunConfig, output_dir: Path, progress: bool) -> CommandOutcome:
    outcome = CommandOutcome()
    wb = run.workbench
    distance = run.distances[0] if run.distances else wb.sweep.datasize_distance
    channel = wb.channel(distance)
    power = wb.sweep.datasize_power_dbm
    test_set = generate_cell(
        channel, power, wb.dataset.eval_symbols - 3, derive_seed(run.seed, "datasize-test"), wb.dataset.decide_index
    )
    results = [
        sweep_training_size(
            spec,
            channel,
            power,
            wb.sweep.datasize_sizes,
            test_set,
            train_cfg=wb.train,
            seed=run.seed,
            decide_index=wb.dataset.decide_index,
            tolerance=wb.sweep.plateau_tolerance,
            progress=progress,
        )
        for spec in _model_specs(run)
    ]
    outcome.artifacts.append(write_datasize(output_dir / "datasize.csv", results))
    outcome.summary["plateau_size"] = {result.model: result.plateau_size for result in results}
    for result in sorted(results, key=lambda item: item.model):
        print(f"{result.model}: BER plateau from {result.plateau_size} training windows")
    return outcome


def _sweep_iterations(run: RunConfig, output_dir: Path, progress: bool) -> CommandOutcome:
    outcome = CommandOutcome()
    wb = run.workbench
    channel = wb.channel(_distances(run, single=True)[0])
    train_set, test_set = pooled_training_sets(channel, wb.dataset, run.seed)
    traces = sweep_iterations(
        _model_specs(run), train_set, test_set, wb.train, workers=wb.sweep.workers, progress=progress
    )
    outcome.artifacts.append(write_train_traces(output_dir / "train_trace.csv", traces))
    outcome.summary["iterations_to_target"] = {name: trace.iterations_to_target for name, trace in traces.items()}
    for name, trace in traces.items():
        reached = trace.iterations_to_target
        print(f"{name}: iterations to target {'not reached' if reached is None else reached}")
    return outcome


def _sweep_activations(run: RunConfig, output_dir: Path, progress: bool) -> CommandOutcome:
    outcome = CommandOutcome()
    wb = run.workbench
    channel = wb.channel(_distances(run, single=True)[0])
    rows = sweep_activations(
        channel,
        channel.median_power,
        settings=wb.dataset,
        train_cfg=wb.train,
        seed=run.seed,
        progress=progress,
    )
    outcome.artifacts.append(write_activation_rows(output_dir / "activation_ber.csv", rows))
    outcome.summary["activation_ber"] = {row.activation: row.ber for row in rows}
    for row in rows:
        print(f"{row.activation}: BER {row.ber:.3e} at {row.power_dbm:.2f} dBm")
    return outcome


def cmd_sweep(run: RunConfig, output_dir: Path, *, progress: bool = False) -> CommandOutcome:
    handlers = {
        "power": _sweep_power,
        "datasize": _sweep_datasize,
        "iterations": _sweep_iterations,
        "activations": _sweep_activations,
    }
    if run.sweep_kind not in handlers:
        raise ConfigError(
            f"unknown sweep kind {run.sweep_kind!r}; expected one of {', '.join(SWEEP_KINDS)}", section="sweep"
        )
    LOGGER.info("Running %s sweep for models %s", run.sweep_kind, ", ".join(run.models))
    outcome = handlers[run.sweep_kind](run, output_dir, progress)
    outcome.summary["cost"] = _cost_summary(run)
    return outcome


def cmd_verify(run: RunConfig, output_dir: Path, *, options: Optional[VerifyOptions] = None) -> CommandOutcome:
    report = run_verification(options or VerifyOptions(seed=run.seed))
    rendered = report.render()
    print(rendered)
    path = output_dir / "verify_report.txt"
    path.write_text(rendered + "\n", encoding="utf-8")
    return CommandOutcome(
        exit_code=0 if report.passed else 1,
        artifacts=[path],
        summary={
            "passed": report.passed,
            "failed_checks": [result.name for result in report.results if not result.passed],
            **report.informational,
        },
    )
