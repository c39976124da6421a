"""CSV emission and run manifests."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

from pydantic import BaseModel, Field

from src.harness.sweeps import ActivationRow, BerCurve, SizeSweepResult
from src.harness.training import TrainTrace

LOGGER = logging.getLogger(__name__)

BER_CURVE_HEADER = ("model", "distance", "power_dbm", "errors", "bits", "ber")
TRAIN_TRACE_HEADER = ("model", "iteration", "loss", "accuracy")
DATASIZE_HEADER = ("model", "size", "ber")
SENSITIVITY_HEADER = ("model", "distance", "sensitivity_dbm", "gain_db")
ACTIVATION_HEADER = ("activation", "distance", "power_dbm", "errors", "bits", "ber")
MANIFEST_NAME = "manifest.json"


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def _write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence[object]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    LOGGER.info("Wrote %s", path)
    return path


def write_ber_curves(path: Path, curves: Iterable[BerCurve]) -> Path:
    rows = [
        (curve.model, curve.distance, _fmt(row.power_dbm), row.errors, row.bits, _fmt(row.ber))
        for curve in curves
        for row in curve.rows
    ]
    rows.sort(key=lambda row: (row[0], row[1], float(row[2])))
    return _write_rows(path, BER_CURVE_HEADER, rows)


def write_train_traces(path: Path, traces: Dict[str, TrainTrace]) -> Path:
    rows = [
        (name, record.iteration, _fmt(record.train_loss), _fmt(record.test_accuracy))
        for name, trace in sorted(traces.items())
        for record in trace.records
    ]
    return _write_rows(path, TRAIN_TRACE_HEADER, rows)


def write_datasize(path: Path, results: Iterable[SizeSweepResult]) -> Path:
    rows = [(result.model, row.size, _fmt(row.ber)) for result in results for row in result.rows]
    rows.sort(key=lambda row: (row[0], row[1]))
    return _write_rows(path, DATASIZE_HEADER, rows)


def write_sensitivity(path: Path, rows: Iterable[Sequence[object]]) -> Path:
    formatted = [(model, distance, _fmt(sens), _fmt(gain)) for model, distance, sens, gain in rows]
    formatted.sort(key=lambda row: (row[0], row[1]))
    return _write_rows(path, SENSITIVITY_HEADER, formatted)


def write_activation_rows(path: Path, rows: Iterable[ActivationRow]) -> Path:
    formatted = [
        (row.activation, row.distance, _fmt(row.power_dbm), row.errors, row.bits, _fmt(row.ber)) for row in rows
    ]
    formatted.sort(key=lambda row: (row[0], row[1], float(row[2])))
    return _write_rows(path, ACTIVATION_HEADER, formatted)


def read_csv(path: Path) -> List[Dict[str, str]]:
    with Path(path).open("r", encoding="utf-8", newline="") as handle:
        return list(csv.DictReader(handle))


def sha256_file(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


class RunManifest(BaseModel):
    """Everything needed to reproduce a run's artifacts."""

    command: str
    argv: List[str] = Field(default_factory=list)
    run_config: Dict[str, object]
    seed: int
    version: str
    created_at: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    artifacts: Dict[str, str] = Field(default_factory=dict)
    summary: Dict[str, object] = Field(default_factory=dict)

    model_config = {"extra": "forbid"}


def write_manifest(output_dir: Path, manifest: RunManifest, artifacts: Iterable[Path]) -> Path:
    for artifact in sorted(set(artifacts)):
        manifest.artifacts[Path(artifact).relative_to(output_dir).as_posix()] = sha256_file(artifact)
    path = output_dir / MANIFEST_NAME
    path.write_text(json.dumps(manifest.model_dump(mode="json"), ensure_ascii=False, indent=2), encoding="utf-8")
    LOGGER.info("Manifest with %s artifacts written to %s", len(manifest.artifacts), path)
    return path


def read_manifest(path: Union[str, Path]) -> RunManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    return RunManifest.model_validate_json(path.read_text(encoding="utf-8"))
