"""Run configuration: typed blocks, JSON round-trip, strict key checking.

Unknown keys are hard errors (silent typos in experiment configs are how
wrong numbers end up in tables).  Every block has working defaults, so an
empty JSON object is a valid desk-scale run.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .core import ConfigError

MODES = ("fixed", "uscl", "satpl", "full")
DATASET_KINDS = ("two_moons", "blobs", "tiny_images")


@dataclass(frozen=True)
class BatchSizes:
    labeled: int = 16
    mu: int = 7


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "two_moons"
    size: int = 1000
    noise: float = 0.1
    labels_per_class: int = 4
    eval_size: int = 500
    num_classes: int = 2
    spread: float | tuple[float, ...] = 1.0
    dim: int = 2
    distractor_fraction: float = 0.0
    path: str | None = None
    eval_path: str | None = None


@dataclass(frozen=True)
class ModelConfig:
    hidden: tuple[int, ...] = (64, 64)
    embed_dim: int = 16
    activation: str = "leaky_relu"
    leaky_slope: float = 0.1


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 0.03
    momentum: float = 0.9
    cosine_decay: bool = False
    shadow_decay: float = 0.999


@dataclass(frozen=True)
class AugmentConfig:
    weak_noise: float = 0.05
    strong_noise: float = 0.25
    strong_dropout: float = 0.1
    image_flip: float = 0.5
    image_shift: int = 2
    image_noise: float = 0.1
    image_erase: int = 3


@dataclass(frozen=True)
class ThresholdConfig:
    ema_decay: float = 0.999
    fixed_value: float = 0.95


@dataclass(frozen=True)
class ContrastConfig:
    temperature: float = 0.1
    eps_weak: float = 0.8
    eps_strong: float = 0.6
    negatives: int = 16


@dataclass(frozen=True)
class LossWeights:
    unsupervised: float = 1.0
    contrast_init: float = 1.0
    contrast_timescale: float = 300.0


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    iterations: int = 1000
    mode: str = "full"
    eval_interval: int = 200
    batch: BatchSizes = field(default_factory=BatchSizes)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    thresholds: ThresholdConfig = field(default_factory=ThresholdConfig)
    contrastive: ContrastConfig = field(default_factory=ContrastConfig)
    weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if self.eval_interval < 1:
            raise ConfigError(f"eval_interval must be >= 1, got {self.eval_interval}")
        if self.dataset.kind not in DATASET_KINDS:
            raise ConfigError(
                f"dataset kind must be one of {DATASET_KINDS}, got {self.dataset.kind!r}"
            )

    @property
    def adaptive_thresholds(self) -> bool:
        """Per-class thresholds track the model in satpl/full modes; the
        other two pin a fixed global cutoff."""
        return self.mode in ("satpl", "full")

    @property
    def use_contrastive(self) -> bool:
        return self.mode in ("uscl", "full")


_BLOCKS = {
    "batch": BatchSizes,
    "dataset": DatasetConfig,
    "model": ModelConfig,
    "optimizer": OptimizerConfig,
    "augment": AugmentConfig,
    "thresholds": ThresholdConfig,
    "contrastive": ContrastConfig,
    "weights": LossWeights,
}


def _coerce(name: str, value, default, path: str):
    """Coerce a JSON value to the type of the field's default."""
    where = f"{path}.{name}" if path else name
    if name in ("path", "eval_path"):
        if value is None or isinstance(value, str):
            return value
        raise ConfigError(f"{where} must be a string or null")
    if name == "spread":
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        if isinstance(value, (list, tuple)):
            return tuple(float(v) for v in value)
        raise ConfigError(f"{where} must be a number or a list of numbers")
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{where} must be a boolean")
    if isinstance(default, int):
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        raise ConfigError(f"{where} must be an integer")
    if isinstance(default, float):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        raise ConfigError(f"{where} must be a number")
    if isinstance(default, tuple):
        if isinstance(value, (list, tuple)):
            return tuple(int(v) for v in value)
        raise ConfigError(f"{where} must be a list")
    if isinstance(default, str):
        if isinstance(value, str):
            return value
        raise ConfigError(f"{where} must be a string")
    return value


def _build_block(cls, payload: dict, path: str):
    if not isinstance(payload, dict):
        raise ConfigError(f"config block {path!r} must be an object")
    defaults = cls()
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(payload) - known)
    if unknown:
        raise ConfigError(f"unknown config key(s) in {path or 'top level'}: {unknown}")
    kwargs = {}
    for name in known & set(payload):
        kwargs[name] = _coerce(name, payload[name], getattr(defaults, name), path)
    return cls(**kwargs)


def config_from_dict(payload: dict) -> TrainConfig:
    if not isinstance(payload, dict):
        raise ConfigError("config root must be a JSON object")
    top_fields = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = sorted(set(payload) - top_fields)
    if unknown:
        raise ConfigError(f"unknown config key(s) in top level: {unknown}")
    kwargs = {}
    for name, value in payload.items():
        if name in _BLOCKS:
            kwargs[name] = _build_block(_BLOCKS[name], value, name)
        else:
            default = getattr(TrainConfig(), name)
            kwargs[name] = _coerce(name, value, default, "")
    return TrainConfig(**kwargs)


def config_to_dict(cfg: TrainConfig) -> dict:
    def clean(obj):
        if isinstance(obj, tuple):
            return [clean(v) for v in obj]
        if isinstance(obj, dict):
            return {k: clean(v) for k, v in obj.items()}
        return obj

    return clean(dataclasses.asdict(cfg))


def load_config(path) -> TrainConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return config_from_dict(payload)


def save_config(cfg: TrainConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
