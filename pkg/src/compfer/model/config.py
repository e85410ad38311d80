"""Model configuration dataclasses and their JSON form."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from compfer.errors import ConfigError

INPUT_MODES = ("residual_only", "residual_plus_motion")


@dataclass(frozen=True)
class FerBranchConfig:
    """Residual-stream branch: per-frame CNN, LSTM and linear classifier.

    Each conv layer in ``channels`` uses a ``kernel`` x ``kernel`` window with
    stride ``kernel``, so frame size must be divisible by ``kernel**len(channels)``.
    """

    input_mode: str = "residual_only"
    channels: tuple[int, ...] = (8, 16)
    kernel: int = 4
    frame_dim: int = 64
    z_dim: int = 64
    hidden: int = 64
    n_classes: int = 7
    # residual levels lie in [-255, 255]; typical expression residuals are a
    # few tens of levels, so this brings them to order one
    residual_scale: float = 1.0 / 32.0
    motion_scale: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if self.input_mode not in INPUT_MODES:
            raise ConfigError(f"input_mode must be one of {INPUT_MODES}, got {self.input_mode!r}")
        if self.z_dim != self.hidden:
            raise ConfigError(f"z_dim ({self.z_dim}) must equal the LSTM hidden size ({self.hidden})")
        if self.n_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.n_classes}")
        if not self.channels or min(self.channels) < 1 or self.kernel < 1 or self.frame_dim < 1:
            raise ConfigError("channel plan, kernel and frame_dim must be positive")

    @property
    def in_channels(self) -> int:
        return 5 if self.input_mode == "residual_plus_motion" else 3


@dataclass(frozen=True)
class ModelConfig:
    fer: FerBranchConfig = field(default_factory=FerBranchConfig)
    height: int = 64
    width: int = 64
    id_channels: tuple[int, ...] = (8, 16)
    id_dim: int = 128
    dec_channels: int = 16
    dec_grid: int = 8
    apex_policy: str = "last"

    def __post_init__(self):
        object.__setattr__(self, "id_channels", tuple(int(c) for c in self.id_channels))
        k = self.fer.kernel
        for name, plan in (("fer", self.fer.channels), ("identity", self.id_channels)):
            div = k ** len(plan)
            if self.height % div or self.width % div:
                raise ConfigError(f"{name} conv stack needs frame sides divisible by {div}")
        if self.height % self.dec_grid or self.width % self.dec_grid or self.height != self.width:
            raise ConfigError("decoder needs square frames divisible by dec_grid")
        up = self.height // self.dec_grid
        if up % 2:
            raise ConfigError("decoder upsampling factor must be even")
        if self.apex_policy not in ("last", "middle"):
            raise ConfigError(f"unknown apex policy {self.apex_policy!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys {sorted(unknown)}")
        if "fer" in d and not isinstance(d["fer"], FerBranchConfig):
            fer = dict(d["fer"])
            bad = set(fer) - {f.name for f in fields(FerBranchConfig)}
            if bad:
                raise ConfigError(f"unknown fer config keys {sorted(bad)}")
            d["fer"] = FerBranchConfig(**fer)
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ModelConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.1
    beta: float = 0.5

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
