"""Run configuration and subject-independent fold plans."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from compfer.errors import ConfigError
from compfer.model.config import FerBranchConfig, LossWeights, ModelConfig

TAGS = ("base", "no_apex", "plus_motion")


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    alpha: float = 0.1
    beta: float = 0.5
    e_warm: int = 5
    epochs: int = 30
    batch_size: int = 8
    lr: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    tag: str = "base"
    id_epochs: int = 40
    k: int = 10

    def __post_init__(self):
        LossWeights(self.alpha, self.beta)  # range check
        if self.tag not in TAGS:
            raise ConfigError(f"tag must be one of {TAGS}, got {self.tag!r}")
        if self.tag == "no_apex" and self.beta != 0:
            raise ConfigError("tag no_apex requires beta = 0")
        mode = self.model.fer.input_mode
        if (self.tag == "plus_motion") != (mode == "residual_plus_motion"):
            raise ConfigError(f"tag {self.tag!r} is inconsistent with input_mode {mode!r}")
        if self.epochs < 1 or self.batch_size < 2 or self.e_warm < 0 or self.k < 2:
            raise ConfigError("epochs >= 1, batch_size >= 2, e_warm >= 0 and k >= 2 required")
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.alpha, self.beta)

    def with_tag(self, tag: str) -> "RunConfig":
        """The same run under another ablation tag (base settings otherwise kept)."""
        fer = self.model.fer
        mode = "residual_plus_motion" if tag == "plus_motion" else "residual_only"
        model = replace(self.model, fer=replace(fer, input_mode=mode))
        beta = 0.0 if tag == "no_apex" else self.beta
        return replace(self, tag=tag, model=model, beta=beta)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown run config keys {sorted(unknown)}")
        if "model" in d and not isinstance(d["model"], ModelConfig):
            d["model"] = ModelConfig.from_dict(d["model"])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config {path}: {err}") from None


def default_config() -> RunConfig:
    return RunConfig(model=ModelConfig(fer=FerBranchConfig()))


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignment: dict[str, int]
    seed: int = 0

    def __post_init__(self):
        if set(self.assignment.values()) != set(range(self.k)):
            raise ConfigError("every fold must receive at least one subject")

    def _check(self, fold: int) -> None:
        if not 0 <= fold < self.k:
            raise ValueError(f"fold {fold} outside [0, {self.k})")

    def test_subjects(self, fold: int) -> list[str]:
        self._check(fold)
        return sorted(s for s, f in self.assignment.items() if f == fold)

    def train_subjects(self, fold: int) -> list[str]:
        self._check(fold)
        return sorted(s for s, f in self.assignment.items() if f != fold)

    def digest(self) -> str:
        text = json.dumps({"k": self.k, "assignment": self.assignment}, sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def make_folds(subjects, k: int = 10, seed: int = 0) -> FoldPlan:
    """Shuffle the distinct subjects with ``seed`` and deal them round-robin into ``k`` folds."""
    if hasattr(subjects, "subjects") and callable(subjects.subjects):
        subjects = subjects.subjects()
    distinct = sorted(set(subjects))
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if len(distinct) < k:
        raise ValueError(f"{len(distinct)} subjects cannot fill {k} subject-independent folds")
    order = np.random.default_rng([0xF01D, int(seed)]).permutation(len(distinct))
    return FoldPlan(k, {distinct[j]: i % k for i, j in enumerate(order)}, seed)
