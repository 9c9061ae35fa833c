"""Training configuration and TOML config-file loading."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Any

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib


@dataclass
class TrainConfig:
    """Hyperparameters shared by classifier training and self-training.

    Defaults are the working preset: lr 0.01 decayed 5% per epoch, attention
    weight 0.001, pseudo-label confidence gate 0.8, and top-20% refinement.
    """

    learning_rate: float = 0.01
    lr_decay: float = 0.95
    epochs: int = 80
    alpha: float = 0.001
    confidence_threshold: float = 0.8
    refine_fraction: float = 0.2
    batch_points: int = 64
    seed: int = 0
    hidden: tuple[int, ...] = (32, 64, 64)
    context: bool = False  # geometric input encoding already carries local stats
    context_k: int = 16
    attention: bool = True
    pseudo_labeling: bool = True
    stop_grad_attention: bool = False
    refresh_every: int = 1
    restrict_bg_classes: bool = True

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if not (0 < self.lr_decay <= 1):
            raise ValueError("lr decay must be in (0, 1]")
        if self.epochs < 0:
            raise ValueError("epoch count must be nonnegative")
        if self.alpha < 0:
            raise ValueError("attention weight must be nonnegative")
        # Values above 1 are allowed: they disable pseudo labeling outright.
        if self.confidence_threshold < 0:
            raise ValueError("confidence threshold must be nonnegative")
        if not (0 < self.refine_fraction <= 1):
            raise ValueError("refine fraction must be in (0, 1]")
        if self.batch_points < 1:
            raise ValueError("batch point cap must be positive")
        if self.refresh_every < 1:
            raise ValueError("refresh cadence must be >= 1")


def load_toml(path) -> dict[str, Any]:
    with open(path, "rb") as f:
        return tomllib.load(f)


def dataclass_from_dict(cls, data: dict[str, Any], where: str):
    """Build a dataclass from a config section, rejecting unknown keys."""
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError("unknown %s config keys: %s" % (where, ", ".join(sorted(unknown))))
    coerced = dict(data)
    for f in dataclasses.fields(cls):
        if f.name in coerced and isinstance(coerced[f.name], list):
            coerced[f.name] = tuple(coerced[f.name])
    return cls(**coerced)
