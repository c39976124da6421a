"""INI config loading and the resolved run configuration recorded in manifests."""
from __future__ import annotations

import configparser
import logging
from pathlib import Path
from typing import Dict, List, Optional, Union

from pydantic import BaseModel, Field, ValidationError

from src.config import DEFAULT_CONFIG_PATH, DISTANCE_PRESETS, ConfigError, DatasetSettings, SweepSettings
from src.harness.training import TrainConfig
from src.link.channel import Calibration, ChannelConfig

LOGGER = logging.getLogger(__name__)

REQUIRED_LINK_KEYS = (
    "isi_taps",
    "a1",
    "a3",
    "sps",
    "power_grid_dbm",
    "calibration_slope_db_per_db",
    "calibration_offset_db",
)
LIST_KEYS = {"isi_taps", "power_grid_dbm", "datasize_sizes", "models"}


class OutputSettings(BaseModel):
    directory: str = "runs"
    seed: int = 0

    model_config = {"extra": "forbid"}


class WorkbenchConfig(BaseModel):
    """Every section of the config file, validated."""

    channels: Dict[str, ChannelConfig]
    dataset: DatasetSettings = Field(default_factory=DatasetSettings)
    train: TrainConfig = Field(default_factory=TrainConfig)
    sweep: SweepSettings = Field(default_factory=SweepSettings)
    output: OutputSettings = Field(default_factory=OutputSettings)

    model_config = {"extra": "forbid"}

    def channel(self, distance: str) -> ChannelConfig:
        try:
            return self.channels[distance]
        except KeyError as exc:
            raise ConfigError(f"no channel preset named {distance!r}", section=f"link.{distance}") from exc


class RunConfig(BaseModel):
    """Resolved parameters of one CLI invocation; enough to replay it from a manifest."""

    command: str
    sweep_kind: Optional[str] = None
    distances: List[str] = Field(default_factory=list)
    models: List[str] = Field(default_factory=list)
    seed: int = 0
    options: Dict[str, Union[int, float, str, bool, None]] = Field(default_factory=dict)
    workbench: WorkbenchConfig

    model_config = {"extra": "forbid"}


def _split_list(raw: str) -> List[str]:
    return [item.strip() for item in raw.replace("\n", ",").split(",") if item.strip()]


def _section_values(parser: configparser.ConfigParser, name: str) -> Dict[str, object]:
    values: Dict[str, object] = {}
    for key, raw in parser.items(name):
        values[key] = _split_list(raw) if key in LIST_KEYS else raw.strip()
    return values


def _validate(model: type, section: str, values: Dict[str, object]):
    try:
        return model.model_validate(values)
    except ValidationError as exc:
        raise ConfigError(f"[{section}] is invalid: {exc}", section=section) from exc


def _channel(name: str, values: Dict[str, object]) -> ChannelConfig:
    section = f"link.{name}"
    missing = [key for key in REQUIRED_LINK_KEYS if key not in values]
    if missing:
        raise ConfigError(f"[{section}] is missing {', '.join(missing)}", section=section)
    fields = dict(values)
    calibration = _validate(
        Calibration,
        section,
        {
            "slope_db_per_db": fields.pop("calibration_slope_db_per_db"),
            "offset_db": fields.pop("calibration_offset_db"),
        },
    )
    return _validate(ChannelConfig, section, {**fields, "distance_preset": name, "calibration": calibration})


def load_workbench_config(path: Union[str, Path, None] = None) -> WorkbenchConfig:
    """Parse the INI file; ``[link]`` holds shared channel keys that ``[link.<preset>]`` may override."""

    path = Path(path) if path else DEFAULT_CONFIG_PATH
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc

    shared = _section_values(parser, "link") if parser.has_section("link") else {}
    channels: Dict[str, ChannelConfig] = {}
    for section in parser.sections():
        if section.startswith("link."):
            name = section.split(".", 1)[1]
            channels[name] = _channel(name, {**shared, **_section_values(parser, section)})
    if not channels:
        raise ConfigError(f"{path} defines no [link.<preset>] sections", section="link")
    unknown = set(channels) - set(DISTANCE_PRESETS)
    if unknown:
        LOGGER.info("Config defines extra channel presets: %s", ", ".join(sorted(unknown)))

    def _optional(name: str, model: type):
        return _validate(model, name, _section_values(parser, name)) if parser.has_section(name) else model()

    return WorkbenchConfig(
        channels=channels,
        dataset=_optional("dataset", DatasetSettings),
        train=_optional("train", TrainConfig),
        sweep=_optional("sweep", SweepSettings),
        output=_optional("output", OutputSettings),
    )
