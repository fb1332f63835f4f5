"""Experiment configuration: every hyperparameter in one serializable object.

Defaults mirror the published protocol: source segmentation lr 1e-2,
shape-prior lr 2e-3, 60 epochs, Adam with cosine annealing, Ring target 1.0,
Dice weights 1.0. Desk-scale presets shrink the networks and epoch counts so
the synthetic experiments run in minutes.

Configs load from JSON; dotted-key overrides (``network.width_multiplier=0.25``)
apply after file parsing and unknown keys are hard errors. The environment
variable SFUDA_SEED, when set, wins over both.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .losses import LossWeights
from .networks import SegmentationNetworkSpec, ShapePriorSpec
from .synthetic import SyntheticShiftConfig

SETTINGS = ("N", "S", "NS")
SEED_ENV_VAR = "SFUDA_SEED"
DEFAULT_LR_GRID = (1e-5, 1e-4, 1e-3, 1e-2)


@dataclass(frozen=True)
class ExperimentConfig:
    setting: str = "NS"
    weights: LossWeights = field(default_factory=LossWeights)
    source_lr: float = 1e-2
    prior_lr: float = 2e-3
    adapt_lr: float = 1e-4
    oracle_lr: float | None = None  # None -> adapt_lr
    lr_grid: tuple[float, ...] = DEFAULT_LR_GRID
    epochs: int = 60
    source_epochs: int | None = None  # None -> epochs
    prior_epochs: int | None = None
    adapt_epochs: int | None = None
    oracle_epochs: int | None = None
    batch_size: int = 8
    seed: int = 0
    fold_seed: int = 0
    threshold: float = 0.5
    corrupt_prior_input: bool = True
    augment_prior_input: bool = True
    adaent_prior_weight: float = 1.0
    network: SegmentationNetworkSpec = field(default_factory=SegmentationNetworkSpec)
    shape_prior: ShapePriorSpec = field(default_factory=ShapePriorSpec)
    synthetic: SyntheticShiftConfig = field(default_factory=SyntheticShiftConfig)
    source_manifest: str | None = None
    target_manifest: str | None = None

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise ConfigError(f"setting must be one of {SETTINGS}, got {self.setting!r}")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not self.lr_grid:
            raise ConfigError("lr_grid must not be empty")

    def epochs_for(self, phase: str) -> int:
        override = getattr(self, f"{phase}_epochs")
        return self.epochs if override is None else override

    def lr_for(self, phase: str) -> float:
        if phase == "oracle":
            return self.adapt_lr if self.oracle_lr is None else self.oracle_lr
        return getattr(self, f"{phase}_lr")

    def resolved_weights(self) -> LossWeights:
        """Weight set implied by the adaptation setting.

        Setting S trains the Ring-free source network and drops the Ring term
        during adaptation (w_r = w_r' = 0); N and NS use w_r = w_r' = 1.
        """
        ring_on = self.setting != "S"
        return dataclasses.replace(
            self.weights,
            w_r=1.0 if ring_on else 0.0,
            w_r_prime=1.0 if ring_on else 0.0,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))


def desk_scale_config(**overrides) -> ExperimentConfig:
    """Small networks and short schedules for minutes-scale synthetic runs."""
    base = dict(
        epochs=10,
        source_epochs=50,
        prior_epochs=80,
        prior_lr=1e-2,
        oracle_lr=3e-3,
        oracle_epochs=15,
        batch_size=8,
        network=SegmentationNetworkSpec(width_multiplier=0.25),
        shape_prior=ShapePriorSpec(base_channels=8, bottleneck_dim=64),
    )
    base.update(overrides)
    return ExperimentConfig(**base)


_NESTED_TYPES = {
    "weights": LossWeights,
    "network": SegmentationNetworkSpec,
    "shape_prior": ShapePriorSpec,
    "synthetic": SyntheticShiftConfig,
}


def _build_dataclass(cls, data: dict, context: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{context}: expected an object, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{context}: unknown key(s) {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        sub = _NESTED_TYPES.get(key)
        if sub is not None and isinstance(value, dict):
            value = _build_dataclass(sub, value, f"{context}.{key}")
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{context}: {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    return _build_dataclass(ExperimentConfig, data, "config")


def load_config(
    path: str | Path | None = None,
    overrides: list[str] | None = None,
    env: dict | None = None,
) -> ExperimentConfig:
    """Assemble a config from (optional) file, dotted overrides and SFUDA_SEED."""
    data: dict[str, Any] = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {p}: {exc}") from exc
    for item in overrides or []:
        data = _apply_override(data, item)
    env = os.environ if env is None else env
    if SEED_ENV_VAR in env:
        try:
            data["seed"] = int(env[SEED_ENV_VAR])
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer") from exc
    return config_from_dict(data)


def _apply_override(data: dict, item: str) -> dict:
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like key=value")
    dotted, raw = item.split("=", 1)
    keys = dotted.strip().split(".")
    _check_override_path(ExperimentConfig, keys, dotted)
    node = data
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {dotted!r} descends into a non-object value")
    node[keys[-1]] = _parse_value(raw)
    return data


def _check_override_path(cls, keys: list[str], dotted: str) -> None:
    for i, key in enumerate(keys):
        names = {f.name for f in dataclasses.fields(cls)}
        if key not in names:
            raise ConfigError(f"unknown config key {dotted!r} (no field {key!r})")
        if i < len(keys) - 1:
            cls = _NESTED_TYPES.get(key)
            if cls is None:
                raise ConfigError(f"config key {dotted!r} descends into a scalar field")


def _parse_value(raw: str):
    raw = raw.strip()
    lowered = raw.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    if lowered in ("null", "none"):
        return None
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw
