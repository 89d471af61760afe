"""Model weights: deterministic generation and the ``V2DM`` binary format.

File layout (all integers little-endian, no padding anywhere)::

    b"V2DM"                     magic
    u32  version                currently 1
    u32  tensor count
    per tensor:
        u16  name length in bytes
        ...  UTF-8 name
        u8   rank
        u64  dim, repeated rank times
        f32  payload, row-major, prod(dims) values

The config lives next to the weights as UTF-8 JSON in ``<file>.json``.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, Tuple

import numpy as np

from ..errors import (
    BadMagicError,
    EmptyModelError,
    InconsistentModelError,
    ModelFormatError,
    TruncatedPayloadError,
    VersionMismatchError,
)
from ..prng import Xoshiro256
from .config import ModelConfig

MAGIC = b"V2DM"
VERSION = 1
LAYER_TENSORS = ("attn_norm_gain", "wq", "wk", "wv", "wo",
                 "mlp_norm_gain", "w_gate", "w_up", "w_down")


def layer_name(layer: int, name: str) -> str:
    return f"layers.{layer}.{name}"


def expected_shapes(config: ModelConfig) -> Dict[str, Tuple[int, ...]]:
    """Canonical tensor names (in file order) mapped to their shapes."""
    d, f, v = config.d_model, config.d_ff, config.vocab_size
    per_layer = {
        "attn_norm_gain": (d,), "wq": (d, d), "wk": (d, d), "wv": (d, d), "wo": (d, d),
        "mlp_norm_gain": (d,), "w_gate": (d, f), "w_up": (d, f), "w_down": (f, d),
    }
    shapes = {"embedding_table": (v, d)}
    for layer in range(1, config.n_layers + 1):
        for name in LAYER_TENSORS:
            shapes[layer_name(layer, name)] = per_layer[name]
    shapes["final_norm_gain"] = (d,)
    shapes["lm_head"] = (d, v)
    return shapes


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


@dataclass
class ModelWeights:
    tensors: Dict[str, np.ndarray]

    def __post_init__(self):
        frozen = {}
        for name, arr in self.tensors.items():
            arr = np.array(arr, dtype=np.float32, copy=True)
            arr.setflags(write=False)
            frozen[name] = arr
        self.tensors = frozen

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def layer(self, layer: int, name: str) -> np.ndarray:
        return self.tensors[layer_name(layer, name)]

    def validate(self, config: ModelConfig) -> None:
        expected = expected_shapes(config)
        missing = sorted(set(expected) - set(self.tensors))
        extra = sorted(set(self.tensors) - set(expected))
        if missing or extra:
            raise InconsistentModelError(f"tensor names disagree with config: missing={missing} extra={extra}")
        for name, shape in expected.items():
            if self.tensors[name].shape != shape:
                raise InconsistentModelError(
                    f"{name}: shape {self.tensors[name].shape} != expected {shape}")
            if not np.isfinite(self.tensors[name]).all():
                raise InconsistentModelError(f"{name}: non-finite values")

    def ordered(self, config: ModelConfig) -> Iterator[Tuple[str, np.ndarray]]:
        for name in expected_shapes(config):
            yield name, self.tensors[name]


def generate_weights(config: ModelConfig, seed: int) -> ModelWeights:
    """Draw every matrix from one :class:`Xoshiro256` stream in canonical order.

    Matrices are ``uniform(-sqrt(3), sqrt(3)) / sqrt(d_model)`` (unit variance
    before scaling); norm gains are ones and consume no draws.
    """
    rng = Xoshiro256(seed)
    scale = math.sqrt(3.0) / math.sqrt(config.d_model)
    tensors = {}
    for name, shape in expected_shapes(config).items():
        if len(shape) == 1:
            tensors[name] = np.ones(shape, dtype=np.float32)
            continue
        u = rng.uniform(int(np.prod(shape)))
        tensors[name] = ((2.0 * u - 1.0) * scale).astype(np.float32).reshape(shape)
    return ModelWeights(tensors)


def encode_weights(weights: ModelWeights, config: ModelConfig) -> bytes:
    weights.validate(config)
    chunks = [MAGIC, struct.pack("<II", VERSION, len(weights.tensors))]
    for name, arr in weights.ordered(config):
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(chunks)


def decode_tensors(blob: bytes) -> Dict[str, np.ndarray]:
    """Parse a ``V2DM`` payload into raw tensors without consulting a config."""
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise BadMagicError(f"bad magic: expected {MAGIC!r}, got {blob[:4]!r}")
    offset = 4

    def take(n: int, what: str) -> bytes:
        nonlocal offset
        if offset + n > len(blob):
            raise TruncatedPayloadError(f"truncated payload while reading {what} at byte {offset}")
        out = blob[offset:offset + n]
        offset += n
        return out

    (version,) = struct.unpack("<I", take(4, "version"))
    if version != VERSION:
        raise VersionMismatchError(f"version mismatch: file has {version}, reader supports {VERSION}")
    (count,) = struct.unpack("<I", take(4, "tensor count"))
    if count == 0:
        raise EmptyModelError("empty model: tensor count is 0")
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2, "name length"))
        try:
            name = take(name_len, "name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise InconsistentModelError(f"tensor name is not UTF-8: {exc}") from None
        (rank,) = struct.unpack("<B", take(1, f"{name} rank"))
        dims = struct.unpack(f"<{rank}Q", take(8 * rank, f"{name} dims"))
        n = int(np.prod(dims, dtype=np.uint64)) if rank else 1
        payload = take(4 * n, f"{name} payload")
        if name in tensors:
            raise InconsistentModelError(f"duplicate tensor name {name!r}")
        tensors[name] = np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(dims)
    if offset != len(blob):
        raise InconsistentModelError(f"{len(blob) - offset} trailing bytes after last tensor")
    return tensors


def save_model(weights: ModelWeights, config: ModelConfig, path) -> None:
    path = Path(path)
    blob = encode_weights(weights, config)
    path.write_bytes(blob)
    sidecar_path(path).write_text(config.to_json(), encoding="utf-8")


def load_model(path) -> Tuple[ModelWeights, ModelConfig]:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise ModelFormatError(f"cannot read model file {path}: {exc}") from None
    tensors = decode_tensors(blob)
    side = sidecar_path(path)
    try:
        config = ModelConfig.from_json_file(side)
    except OSError as exc:
        raise ModelFormatError(f"cannot read config sidecar {side}: {exc}") from None
    except ValueError as exc:
        raise ModelFormatError(f"invalid config sidecar {side}: {exc}") from None
    weights = ModelWeights(tensors)
    weights.validate(config)
    return weights, config
