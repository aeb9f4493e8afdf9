"""Run configuration loaded from JSON."""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .types import ValidationError


@dataclass
class TrainingConfig:
    lambda_weight: float = 1.0
    beta_weight: float = 0.0
    num_groups: int = 4
    target_layer: str = "conv4"
    partition_update_period: int = 1
    task_mode: str = "binary"
    epsilon_sigma: float = 1e-8
    random_seed: int = 0

    arch: str = "tiny-cnn"
    num_classes: int = 2
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    gamma: float = 0.2
    curve_points: int = 20
    concept_mode: str = "parts"  # or "object-background"

    train_data: Optional[str] = None
    test_data: Optional[str] = None
    synth_spec: Optional[dict] = None
    n_train: int = 2000
    n_test: int = 400
    image_size: int = 64
    output_dir: str = "runs/default"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self, d_filters: Optional[int] = None) -> None:
        # a zero weight switches the group term off for baseline runs
        if self.lambda_weight < 0:
            raise ValidationError("lambda_weight must be >= 0")
        if self.beta_weight < 0:
            raise ValidationError("beta_weight must be >= 0")
        if self.num_groups < 1:
            raise ValidationError("num_groups must be >= 1")
        if d_filters is not None and self.num_groups > d_filters:
            raise ValidationError(f"num_groups={self.num_groups} exceeds {d_filters} filters")
        if self.task_mode not in ("binary", "multi"):
            raise ValidationError(f"unknown task_mode {self.task_mode!r}")
        if self.partition_update_period < 1:
            raise ValidationError("partition_update_period must be >= 1")
        if self.task_mode == "multi" and self.batch_size < self.num_classes:
            raise ValidationError("batch_size must be >= num_classes for stratified batches")
        if self.batch_size < 2 or self.epochs < 0:
            raise ValidationError("batch_size must be >= 2 and epochs >= 0")

    @classmethod
    def from_dict(cls, data: dict) -> "TrainingConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        known = {k: v for k, v in data.items() if k in names}
        extra = {k: v for k, v in data.items() if k not in names}
        if "K" in extra:
            known.setdefault("num_groups", extra.pop("K"))
        cfg = cls(**known)
        cfg.extra.update(extra)
        seed = os.environ.get("CFCNN_SEED")
        if seed is not None:
            cfg.random_seed = int(seed)
        return cfg

    @classmethod
    def load(cls, path) -> "TrainingConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    def replace(self, **changes) -> "TrainingConfig":
        return dataclasses.replace(self, **changes)
