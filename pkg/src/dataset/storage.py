"""Flat little-endian binary persistence for windowed datasets.

Layout (version 1)::

    magic        4 bytes  b"RWDS"
    version      uint16
    count        uint64   N windows
    width        uint16   samples per window
    decide_index uint8
    center       float64
    windows      N * width float32
    labels       N uint8
"""
from __future__ import annotations

import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np

from src.config import WINDOW_WIDTH
from src.dataset.windows import DatasetMeta, WindowedDataset

LOGGER = logging.getLogger(__name__)

MAGIC = b"RWDS"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sHQHBd")


class DatasetFormatError(ValueError):
    """Raised when a dataset file is truncated, foreign or from an unknown version."""

    def __init__(self, message: str, *, path: Union[str, Path, None] = None) -> None:
        super().__init__(message)
        self.path = path


def encode_dataset(dataset: WindowedDataset) -> bytes:
    count = len(dataset)
    header = HEADER.pack(MAGIC, FORMAT_VERSION, count, WINDOW_WIDTH, dataset.decide_index, dataset.center)
    windows = dataset.inputs.reshape(count, WINDOW_WIDTH).astype("<f4").tobytes()
    return header + windows + dataset.labels.astype(np.uint8).tobytes()


def decode_dataset(payload: bytes, *, path: Union[str, Path, None] = None) -> WindowedDataset:
    if len(payload) < HEADER.size:
        raise DatasetFormatError("file shorter than the dataset header", path=path)
    magic, version, count, width, decide_index, center = HEADER.unpack_from(payload)
    if magic != MAGIC:
        raise DatasetFormatError(f"bad magic {magic!r}", path=path)
    if version != FORMAT_VERSION:
        raise DatasetFormatError(f"unsupported dataset version {version}", path=path)
    if width != WINDOW_WIDTH:
        raise DatasetFormatError(f"window width {width} differs from {WINDOW_WIDTH}", path=path)
    expected = HEADER.size + count * width * 4 + count
    if len(payload) != expected:
        raise DatasetFormatError(f"expected {expected} bytes, found {len(payload)}", path=path)
    offset = HEADER.size
    windows = np.frombuffer(payload, dtype="<f4", count=count * width, offset=offset)
    labels = np.frombuffer(payload, dtype=np.uint8, count=count, offset=offset + count * width * 4)
    if not (np.all(np.isfinite(windows)) and np.isfinite(center)):
        raise DatasetFormatError("non-finite samples in dataset payload", path=path)
    return WindowedDataset(
        inputs=windows.astype(np.float64).reshape(count, 1, width),
        labels=labels.copy(),
        decide_index=decide_index,
        center=center,
        meta=DatasetMeta(),
    )


def save_dataset(dataset: WindowedDataset, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_dataset(dataset))
    LOGGER.info("Wrote %s windows to %s", len(dataset), path)
    return path


def load_dataset(path: Union[str, Path]) -> WindowedDataset:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    return decode_dataset(path.read_bytes(), path=path)
