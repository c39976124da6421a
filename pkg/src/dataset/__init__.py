"""Windowed training and evaluation sets."""

from .storage import DatasetFormatError, load_dataset, save_dataset
from .windows import (
    DatasetMeta,
    DatasetSizeError,
    WindowedDataset,
    apply_center,
    evaluation_sets,
    generate_cell,
    pool_across_powers,
    split,
    window,
)

__all__ = [
    "DatasetFormatError",
    "DatasetMeta",
    "DatasetSizeError",
    "WindowedDataset",
    "apply_center",
    "evaluation_sets",
    "generate_cell",
    "load_dataset",
    "pool_across_powers",
    "save_dataset",
    "split",
    "window",
]
