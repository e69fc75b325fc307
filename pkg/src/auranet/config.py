"""Declarative run configuration: one YAML file covering dataset, model,
loss, augmentation and training, with a documented default for every key.

Unknown keys are rejected by name to catch typos; `lambda` is accepted as
an alias for the loss key `lam`.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import yaml

from .data import AugmentationConfig, DatasetSpec
from .losses import LossConfig
from .model import ModelConfig
from .training import TrainConfig

__all__ = [
    "ConfigError",
    "RunConfig",
    "load_run_config",
    "run_config_from_dict",
    "train_config_to_yaml",
]

VERBOSITY_LEVELS = ("quiet", "info", "debug")

_LOSS_ALIASES = {"lambda": "lam"}


class ConfigError(ValueError):
    """Malformed or contradictory run configuration."""


@dataclass(frozen=True)
class RunConfig:
    train: TrainConfig
    output_dir: Path = Path("runs/run")
    verbosity: str = "info"

    def __post_init__(self) -> None:
        if self.verbosity not in VERBOSITY_LEVELS:
            raise ConfigError(
                f"verbosity must be one of {VERBOSITY_LEVELS}, got {self.verbosity!r}"
            )


def _section(raw: dict, name: str) -> dict:
    value = raw.get(name, {})
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    return dict(value)


def _check_keys(section: str, given: dict, allowed: set[str]) -> None:
    unknown = set(given) - allowed
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown key {key!r} in section {section!r}")


def _build(section: str, cls, given: dict, aliases: dict[str, str] | None = None):
    if aliases:
        given = {aliases.get(k, k): v for k, v in given.items()}
    fields = {f.name for f in dataclasses.fields(cls)}
    _check_keys(section, given, fields)
    try:
        return cls(**given)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {section} config: {exc}") from exc


def run_config_from_dict(raw: dict) -> RunConfig:
    """Build a validated RunConfig from a parsed YAML mapping."""
    if not isinstance(raw, dict):
        raise ConfigError("run config must be a mapping of sections")
    _check_keys(
        "<top level>",
        raw,
        {"dataset", "model", "loss", "augmentation", "training", "output_dir",
         "verbosity"},
    )

    dataset_raw = _section(raw, "dataset")
    if "root" not in dataset_raw:
        raise ConfigError("dataset.root is required")
    dataset_raw["root"] = Path(dataset_raw["root"])
    dataset = _build("dataset", DatasetSpec, dataset_raw)

    model_raw = _section(raw, "model")
    if "input_size" in model_raw:
        raise ConfigError(
            "model.input_size is derived from dataset.target_size; remove it"
        )
    model_raw["input_size"] = (dataset.target_size, dataset.target_size)
    model = _build("model", ModelConfig, model_raw)

    loss = _build("loss", LossConfig, _section(raw, "loss"), aliases=_LOSS_ALIASES)
    augmentation = _build("augmentation", AugmentationConfig,
                          _section(raw, "augmentation"))

    training_raw = _section(raw, "training")
    _check_keys(
        "training",
        training_raw,
        {"batch_size", "learning_rate", "epochs", "optimizer", "seed",
         "validation_fraction"},
    )
    try:
        train = TrainConfig(
            dataset=dataset, model=model, loss=loss, augmentation=augmentation,
            **training_raw,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid training config: {exc}") from exc

    try:
        return RunConfig(
            train=train,
            output_dir=Path(raw.get("output_dir", "runs/run")),
            verbosity=raw.get("verbosity", "info"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_run_config(path: Path, overrides: dict | None = None) -> RunConfig:
    """Read a YAML run config; overrides are {section.key: value} pairs
    applied before validation (top-level keys use the bare name)."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"could not parse {path}: {exc}") from exc
    if raw is None:
        raw = {}
    for dotted, value in (overrides or {}).items():
        parts = dotted.split(".")
        node = raw
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot override {dotted}: {p} is not a section")
        node[parts[-1]] = value
    return run_config_from_dict(raw)


def train_config_to_dict(config: TrainConfig) -> dict:
    """Plain-data view of a TrainConfig, suitable for YAML round-tripping."""
    return {
        "dataset": {
            "root": str(config.dataset.root),
            "target_size": config.dataset.target_size,
            "train_count": config.dataset.train_count,
            "test_count": config.dataset.test_count,
            "split_seed": config.dataset.split_seed,
            "dataset_id": config.dataset.dataset_id,
        },
        "model": {
            "encoder": config.model.encoder,
            "pretrained": config.model.pretrained,
            "attention": config.model.attention,
            "in_channels": config.model.in_channels,
            "base_channels": config.model.base_channels,
            "depth": config.model.depth,
            "freeze_encoder_bn": config.model.freeze_encoder_bn,
        },
        "loss": {
            "lam": config.loss.lam,
            "alpha": config.loss.alpha,
            "beta": config.loss.beta,
            "gamma": config.loss.gamma,
            "epsilon": config.loss.epsilon,
            "prob_clamp": config.loss.prob_clamp,
            "dice_smooth": config.loss.dice_smooth,
        },
        "augmentation": {
            f.name: getattr(config.augmentation, f.name)
            for f in dataclasses.fields(AugmentationConfig)
        },
        "training": {
            "batch_size": config.batch_size,
            "learning_rate": config.learning_rate,
            "epochs": config.epochs,
            "optimizer": config.optimizer,
            "seed": config.seed,
            "validation_fraction": config.validation_fraction,
        },
    }


def train_config_to_yaml(config: TrainConfig) -> str:
    return yaml.safe_dump(train_config_to_dict(config), sort_keys=False)


def train_config_from_snapshot(path: Path) -> TrainConfig:
    """Rebuild the exact TrainConfig persisted by a run."""
    raw = yaml.safe_load(Path(path).read_text())
    run = run_config_from_dict(raw)
    return run.train
