"""Run configuration: a key=value text file merged with CLI overrides.

Unknown keys are rejected, values are type-checked against the schema below,
and flags always win over file values. `data_root` falls back to the
X_TEMPORAL_DATA_ROOT environment variable when neither source sets it.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

from .losses import LOSS_KINDS, WEIGHT_RULES
from .model import HEAD_MODES, TEMPORAL_MODES

DATA_ROOT_ENV = "X_TEMPORAL_DATA_ROOT"


class ConfigError(ValueError):
    pass


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.split(",") if tok.strip() != "")


@dataclass
class RunConfig:
    temporal_mode: str = "none"
    groups: int = 2
    delta_max: float = 0.0  # 0 means frames/2
    fold: float = 0.25
    frames: int = 16
    segments: int = 5
    stride: int = 1
    sampler: str = "strided"  # strided | segments
    crop: int = 32
    scales: tuple[int, ...] = (32, 36, 40)
    scale_min: int = 32
    scale_max: int = 40
    flip: bool = False
    head: str = "pool"
    channels: tuple[int, ...] = (8, 16, 32)
    classes: int = 6
    dropout: float = 0.5
    loss: str = "bce"
    loss_scale: float = 160.0
    weight_rule: str = "none"
    lr: float = 3e-4
    momentum: float = 0.9
    weight_decay: float = 1e-4
    schedule: str = "cosine"
    milestones: tuple[int, ...] = (10, 20)
    lr_factor: float = 0.1
    warmup_iters: int = 100
    warmup_start_factor: float = 0.1
    max_iters: int = 2000
    batch: int = 8
    seed: int = 0
    data_root: str = ""
    train_manifest: str = ""
    val_manifest: str = ""
    out_dir: str = "run"
    eval_interval: int = 250
    checkpoint_interval: int = 500

    def __post_init__(self):
        if self.temporal_mode not in TEMPORAL_MODES:
            raise ConfigError(f"temporal_mode must be one of {TEMPORAL_MODES}")
        if self.sampler not in ("strided", "segments"):
            raise ConfigError("sampler must be 'strided' or 'segments'")
        if self.head not in HEAD_MODES:
            raise ConfigError(f"head must be one of {HEAD_MODES}")
        if self.loss not in LOSS_KINDS:
            raise ConfigError(f"loss must be one of {LOSS_KINDS}")
        if self.weight_rule not in WEIGHT_RULES:
            raise ConfigError(f"weight_rule must be one of {WEIGHT_RULES}")
        if self.schedule not in ("cosine", "step", "constant"):
            raise ConfigError("schedule must be cosine, step or constant")
        for key in ("frames", "segments", "stride", "crop", "classes", "max_iters", "batch"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be >= 1")
        if self.loss_scale <= 0 or self.lr <= 0:
            raise ConfigError("loss_scale and lr must be positive")
        if not self.scales or self.crop > min(self.scales):
            raise ConfigError("crop must fit the smallest eval scale")
        if not 1 <= self.scale_min <= self.scale_max or self.crop > self.scale_min:
            raise ConfigError("need crop <= scale_min <= scale_max")

    @property
    def resolved_delta_max(self) -> float:
        return self.delta_max if self.delta_max > 0 else self.frames / 2.0

    def resolve_data_root(self) -> str:
        if self.data_root:
            return self.data_root
        env = os.environ.get(DATA_ROOT_ENV, "")
        if env:
            return env
        raise ConfigError(f"data_root not set (flag, config file, or ${DATA_ROOT_ENV})")


# field annotations are strings under `from __future__ import annotations`
_PARSERS = {
    "str": lambda s: s,
    "int": int,
    "float": float,
    "bool": _parse_bool,
    "tuple[int, ...]": _parse_int_list,
}

SCHEMA = {f.name: f.type for f in fields(RunConfig)}


def parse_value(key: str, text: str):
    if key not in SCHEMA:
        raise ConfigError(f"unknown config key {key!r}")
    try:
        return _PARSERS[SCHEMA[key]](text)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {exc}") from exc


def parse_config_file(path) -> dict:
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, _, text = line.partition("=")
            key = key.strip()
            values[key] = parse_value(key, text.strip())
    return values


def build_config(file_path=None, overrides=None) -> RunConfig:
    """File values first, CLI overrides on top, then validate as a whole."""
    merged = {}
    if file_path:
        merged.update(parse_config_file(file_path))
    if overrides:
        for key, value in overrides.items():
            if key not in SCHEMA:
                raise ConfigError(f"unknown config key {key!r}")
            merged[key] = value
    try:
        return RunConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
