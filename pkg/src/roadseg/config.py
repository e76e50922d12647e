"""Experiment configuration: one YAML file drives every pipeline command.

Unknown keys are rejected everywhere (typo safety). Every field has a
documented default except dataset roots. Default road/lane colors are shipped
per dataset kind but are only conventions; verify them against the actual
label files of your copy of the data.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Optional

import yaml

from .datasets import (
    DATASET_KINDS,
    DEFAULT_SPLIT_RATIOS,
    SYNTHETIC_LANE_COLOR,
    SYNTHETIC_ROAD_COLOR,
)
from .errors import ConfigError
from .mask_ops import ColorSpec, StructuringElement
from .models import ModelConfig
from .training import TrainConfig

DEFAULT_ROAD_COLORS = {
    "comma10k": ColorSpec(64, 32, 32),
    "kitti_road": ColorSpec(255, 0, 255),
    "synthetic": SYNTHETIC_ROAD_COLOR,
}
DEFAULT_LANE_COLORS = {
    "comma10k": ColorSpec(255, 0, 0),
    "kitti_road": None,
    "synthetic": SYNTHETIC_LANE_COLOR,
}

# batch size defaults to 8 for the VGG path and 4 for the U-Net when omitted
_DEFAULT_BATCH_SIZE = {"vgg16_decoder": 8, "unet": 4}


def _check_keys(section: dict, allowed, where: str) -> None:
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {where}; allowed: {sorted(allowed)}")


def _parse_color(value, where: str) -> ColorSpec:
    if isinstance(value, dict):
        _check_keys(value, {"r", "g", "b", "tolerance"}, where)
        try:
            return ColorSpec(**value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    if isinstance(value, (list, tuple)) and len(value) in (3, 4):
        try:
            return ColorSpec(*value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where} must be {{r,g,b[,tolerance]}} or a 3/4-element list, got {value!r}")


@dataclass(frozen=True)
class DatasetSettings:
    root: Path
    kind: str
    road_color: ColorSpec
    lane_color: Optional[ColorSpec]


@dataclass(frozen=True)
class DilationSettings:
    """Lane-artifact repair applied to training targets when enabled."""

    enabled: bool = False
    shape: str = "square"
    radius: int = 1

    def element(self) -> StructuringElement:
        return StructuringElement(shape=self.shape, radius=self.radius)


@dataclass(frozen=True)
class ExperimentConfig:
    datasets: dict  # name -> DatasetSettings
    train_dataset: str
    output_dir: Path = Path("runs/experiment")
    seed: int = 0
    split_ratios: tuple = DEFAULT_SPLIT_RATIOS
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    dilation: DilationSettings = field(default_factory=DilationSettings)

    def require_roots(self) -> None:
        for name, ds in sorted(self.datasets.items()):
            if not Path(ds.root).is_dir():
                raise ConfigError(f"dataset {name!r}: root {ds.root} does not exist")

    def to_dict(self) -> dict:
        def color(c):
            return None if c is None else {"r": c.r, "g": c.g, "b": c.b, "tolerance": c.tolerance}

        return {
            "seed": self.seed,
            "output_dir": str(self.output_dir),
            "train_dataset": self.train_dataset,
            "split_ratios": list(self.split_ratios),
            "datasets": {
                name: {
                    "root": str(ds.root),
                    "kind": ds.kind,
                    "road_color": color(ds.road_color),
                    "lane_color": color(ds.lane_color),
                }
                for name, ds in sorted(self.datasets.items())
            },
            "model": {
                "architecture": self.model.architecture,
                "input_size": self.model.input_size,
                "pretrained_encoder": self.model.pretrained_encoder,
                "base_channels": self.model.base_channels,
                "freeze_encoder": self.model.freeze_encoder,
            },
            "train": {
                "learning_rate": self.train.learning_rate,
                "batch_size": self.train.batch_size,
                "max_epochs": self.train.max_epochs,
                "target_pixel_accuracy": self.train.target_pixel_accuracy,
                "adam_betas": list(self.train.adam_betas),
                "adam_eps": self.train.adam_eps,
            },
            "dilation": {
                "enabled": self.dilation.enabled,
                "shape": self.dilation.shape,
                "radius": self.dilation.radius,
            },
        }

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))
        return path


def _parse_dataset(name: str, section, where: str) -> DatasetSettings:
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be a mapping")
    _check_keys(section, {"root", "kind", "road_color", "lane_color"}, where)
    if "root" not in section:
        raise ConfigError(f"{where}: 'root' is required")
    kind = section.get("kind", "synthetic")
    if kind not in DATASET_KINDS:
        raise ConfigError(f"{where}: kind must be one of {DATASET_KINDS}, got {kind!r}")
    road = (
        _parse_color(section["road_color"], f"{where}.road_color")
        if "road_color" in section
        else DEFAULT_ROAD_COLORS[kind]
    )
    if "lane_color" in section:
        lane = (
            None
            if section["lane_color"] is None
            else _parse_color(section["lane_color"], f"{where}.lane_color")
        )
    else:
        lane = DEFAULT_LANE_COLORS[kind]
    return DatasetSettings(root=Path(section["root"]), kind=kind, road_color=road, lane_color=lane)


def config_from_dict(payload: dict) -> ExperimentConfig:
    if not isinstance(payload, dict):
        raise ConfigError("experiment config must be a mapping")
    _check_keys(
        payload,
        {"seed", "output_dir", "train_dataset", "split_ratios", "datasets", "model", "train", "dilation"},
        "config",
    )
    if "datasets" not in payload or not isinstance(payload["datasets"], dict) or not payload["datasets"]:
        raise ConfigError("config requires a non-empty 'datasets' mapping")
    datasets = {
        name: _parse_dataset(name, section, f"datasets.{name}")
        for name, section in payload["datasets"].items()
    }
    train_dataset = payload.get("train_dataset")
    if train_dataset is None:
        if len(datasets) != 1:
            raise ConfigError("'train_dataset' is required when multiple datasets are configured")
        train_dataset = next(iter(datasets))
    if train_dataset not in datasets:
        raise ConfigError(f"train_dataset {train_dataset!r} is not in datasets {sorted(datasets)}")

    ratios = tuple(payload.get("split_ratios", DEFAULT_SPLIT_RATIOS))
    if len(ratios) != 3 or sum(Fraction(str(r)) for r in ratios) != 1:
        raise ConfigError(f"split_ratios must be three values summing to 1.0, got {ratios!r}")

    model_section = dict(payload.get("model", {}))
    _check_keys(
        model_section,
        {"architecture", "input_size", "pretrained_encoder", "base_channels", "freeze_encoder"},
        "model",
    )
    try:
        model = ModelConfig(**model_section)
    except ConfigError:
        raise
    except TypeError as exc:
        raise ConfigError(f"model: {exc}") from exc

    seed = payload.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError(f"seed must be an integer, got {seed!r}")
    train_section = dict(payload.get("train", {}))
    _check_keys(
        train_section,
        {"learning_rate", "batch_size", "max_epochs", "target_pixel_accuracy", "adam_betas", "adam_eps"},
        "train",
    )
    train_section.setdefault("batch_size", _DEFAULT_BATCH_SIZE[model.architecture])
    if "adam_betas" in train_section:
        train_section["adam_betas"] = tuple(train_section["adam_betas"])
    try:
        train = TrainConfig(seed=seed, **train_section)
    except ConfigError:
        raise
    except TypeError as exc:
        raise ConfigError(f"train: {exc}") from exc

    dilation_section = dict(payload.get("dilation", {}))
    _check_keys(dilation_section, {"enabled", "shape", "radius"}, "dilation")
    try:
        dilation = DilationSettings(**dilation_section)
        dilation.element()  # validate shape/radius eagerly
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"dilation: {exc}") from exc

    return ExperimentConfig(
        datasets=datasets,
        train_dataset=train_dataset,
        output_dir=Path(payload.get("output_dir", "runs/experiment")),
        seed=seed,
        split_ratios=ratios,
        model=model,
        train=train,
        dilation=dilation,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    try:
        payload = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
    return config_from_dict(payload)


def with_overrides(config: ExperimentConfig, *, seed: Optional[int] = None, output_dir=None) -> ExperimentConfig:
    """Apply command-line overrides; flags win over the file."""
    if seed is not None:
        config = replace(config, seed=seed, train=replace(config.train, seed=seed))
    if output_dir is not None:
        config = replace(config, output_dir=Path(output_dir))
    return config
