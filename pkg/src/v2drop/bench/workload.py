from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from ..errors import ConfigError
from ..oracle.needle import needle_embeddings
from ..prng import Xoshiro256
from ..runtime.sequence import TokenSequence, assemble_sequence

EMBEDDING_MODES = ("random_gaussian", "duplicated_background_with_needles")
SEED_ENV = "V2DROP_SEED"


def env_seed() -> Optional[int]:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return None
    try:
        return int(raw, 0)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


@dataclass(frozen=True)
class WorkloadSpec:
    seed: int = 0
    M: int = 64
    system_len: int = 2
    text_len: int = 4
    decode_steps: int = 4
    embedding_mode: str = "random_gaussian"
    n_needles: int = 0
    name: str = "workload"

    def __post_init__(self):
        for key in ("M", "system_len", "text_len", "decode_steps", "n_needles"):
            if getattr(self, key) < 0:
                raise ConfigError(f"workload {key} must be >= 0")
        if self.M + self.system_len + self.text_len < 1:
            raise ConfigError("workload needs at least one token")
        if self.embedding_mode not in EMBEDDING_MODES:
            raise ConfigError(f"embedding_mode must be one of {EMBEDDING_MODES}")
        if self.n_needles > self.M:
            raise ConfigError("more needles than vision tokens")
        if self.embedding_mode == "random_gaussian" and self.n_needles:
            raise ConfigError("needles need embedding_mode=duplicated_background_with_needles")

    @classmethod
    def from_dict(cls, d: dict, name: Optional[str] = None) -> "WorkloadSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown workload keys: {sorted(unknown)}")
        spec = cls(**d)
        if name is not None and "name" not in d:
            spec = replace(spec, name=name)
        return spec

    @classmethod
    def load(cls, path) -> "WorkloadSpec":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read workload {path}: {exc}") from None
        spec = cls.from_dict(data, name=path.stem)
        seed = env_seed()
        return spec if seed is None else replace(spec, seed=seed)

    def to_dict(self) -> dict:
        return asdict(self)


def build_sequence(spec: WorkloadSpec, embedding_table: np.ndarray) -> Tuple[TokenSequence, List[int]]:
    """Synthesize the prompt for ``spec``; returns the sequence and needle block indices."""
    vocab, d_model = embedding_table.shape
    rng = Xoshiro256(spec.seed)
    needles: List[int] = []
    if spec.embedding_mode == "random_gaussian":
        vision = rng.normal(spec.M * d_model).reshape(spec.M, d_model).astype(np.float32)
    else:
        pick = Xoshiro256(spec.seed ^ 0x4E45454C, lanes=1)
        pool = list(range(spec.M))
        for i in range(spec.n_needles):
            j = i + pick.below(spec.M - i)
            pool[i], pool[j] = pool[j], pool[i]
        needles = sorted(pool[:spec.n_needles])
        vision = needle_embeddings(rng, spec.M, d_model, needles)
    ids = Xoshiro256(spec.seed + 1, lanes=1)
    system_ids = [ids.below(vocab) for _ in range(spec.system_len)]
    text_ids = [ids.below(vocab) for _ in range(spec.text_len)]
    return assemble_sequence(system_ids, vision, text_ids, embedding_table), needles
