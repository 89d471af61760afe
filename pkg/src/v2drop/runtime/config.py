from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

from ..errors import ConfigError

POSITIONAL_MODES = ("rope", "nope")
RMS_EPS = 1e-6


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters of the toy decoder (LLaMA-style blocks, pre-norm, SwiGLU)."""

    n_layers: int = 8
    d_model: int = 64
    n_heads: int = 4
    d_ff: int = 172
    vocab_size: int = 256
    positional_mode: str = "rope"
    rope_base: float = 10000.0

    def __post_init__(self):
        if self.n_layers < 1:
            raise ConfigError("n_layers must be >= 1")
        if min(self.d_model, self.n_heads, self.d_ff, self.vocab_size) < 1:
            raise ConfigError("d_model, n_heads, d_ff and vocab_size must be positive")
        if self.d_model % self.n_heads:
            raise ConfigError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.positional_mode not in POSITIONAL_MODES:
            raise ConfigError(f"positional_mode must be one of {POSITIONAL_MODES}")
        if self.positional_mode == "rope" and self.head_dim % 2:
            raise ConfigError(f"rope needs an even head_dim, got {self.head_dim}")
        if not self.rope_base > 0:
            raise ConfigError("rope_base must be positive")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        try:
            return cls(
                n_layers=int(d["n_layers"]),
                d_model=int(d["d_model"]),
                n_heads=int(d["n_heads"]),
                d_ff=int(d["d_ff"]),
                vocab_size=int(d["vocab_size"]),
                positional_mode=str(d["positional_mode"]),
                rope_base=float(d["rope_base"]),
            )
        except KeyError as exc:
            raise ConfigError(f"config is missing key {exc}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json_file(cls, path) -> "ModelConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
