import struct

import numpy as np
import pytest

from v2drop.errors import (
    BadMagicError,
    EmptyModelError,
    InconsistentModelError,
    ModelFormatError,
    TruncatedPayloadError,
    VersionMismatchError,
)
from v2drop.runtime import ModelConfig, generate_weights, load_model, save_model, sidecar_path
from v2drop.runtime.weights import decode_tensors, encode_weights, expected_shapes


@pytest.fixture(scope="module")
def default_pair():
    cfg = ModelConfig()
    return generate_weights(cfg, 42), cfg


def test_generation_is_deterministic(default_pair, tmp_path):
    w, cfg = default_pair
    a, b = tmp_path / "a.v2dm", tmp_path / "b.v2dm"
    save_model(w, cfg, a)
    save_model(generate_weights(cfg, 42), cfg, b)
    assert a.read_bytes() == b.read_bytes()


def test_seed_sensitivity(default_pair):
    w, cfg = default_pair
    assert encode_weights(w, cfg) != encode_weights(generate_weights(cfg, 43), cfg)


def test_round_trip_bit_exact(default_pair, tmp_path):
    w, cfg = default_pair
    p1, p2 = tmp_path / "m.v2dm", tmp_path / "n.v2dm"
    save_model(w, cfg, p1)
    w2, cfg2 = load_model(p1)
    assert cfg2 == cfg
    for name, arr in w.tensors.items():
        assert arr.tobytes() == w2[name].tobytes()
    save_model(w2, cfg2, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert sidecar_path(p1).read_bytes() == sidecar_path(p2).read_bytes()


def test_header_layout(default_pair):
    w, cfg = default_pair
    blob = encode_weights(w, cfg)
    assert blob[:4] == bytes([0x56, 0x32, 0x44, 0x4D])
    version, count = struct.unpack("<II", blob[4:12])
    assert version == 1 and count == len(expected_shapes(cfg))
    (name_len,) = struct.unpack("<H", blob[12:14])
    assert blob[14:14 + name_len] == b"embedding_table"
    rank = blob[14 + name_len]
    dims = struct.unpack("<2Q", blob[15 + name_len:31 + name_len])
    assert rank == 2 and dims == (cfg.vocab_size, cfg.d_model)
    first = np.frombuffer(blob[31 + name_len:35 + name_len], "<f4")[0]
    assert first == w["embedding_table"][0, 0]


def test_weights_are_scaled_and_finite(default_pair):
    w, cfg = default_pair
    bound = np.sqrt(3.0) / np.sqrt(cfg.d_model)
    for name, arr in w.tensors.items():
        assert np.isfinite(arr).all()
        if arr.ndim == 2:
            assert np.abs(arr).max() <= bound + 1e-7
        else:
            np.testing.assert_array_equal(arr, 1.0)


def test_weights_immutable(default_pair):
    w, _ = default_pair
    with pytest.raises(ValueError):
        w["lm_head"][0, 0] = 1.0


def _saved(tmp_path, blob, cfg):
    p = tmp_path / "x.v2dm"
    p.write_bytes(blob)
    sidecar_path(p).write_text(cfg.to_json())
    return p


def test_bad_magic(default_pair, tmp_path):
    w, cfg = default_pair
    blob = bytearray(encode_weights(w, cfg))
    blob[0] = ord("X")
    with pytest.raises(BadMagicError, match="bad magic"):
        load_model(_saved(tmp_path, bytes(blob), cfg))


def test_version_mismatch(default_pair, tmp_path):
    w, cfg = default_pair
    blob = bytearray(encode_weights(w, cfg))
    blob[4:8] = struct.pack("<I", 2)
    with pytest.raises(VersionMismatchError):
        load_model(_saved(tmp_path, bytes(blob), cfg))


def test_empty_model(tmp_path):
    blob = b"V2DM" + struct.pack("<II", 1, 0)
    with pytest.raises(EmptyModelError, match="empty model"):
        decode_tensors(blob)


@pytest.mark.parametrize("cut", [2, 10, 13, 100, -1])
def test_truncated(default_pair, tmp_path, cut):
    w, cfg = default_pair
    blob = encode_weights(w, cfg)
    with pytest.raises((TruncatedPayloadError, BadMagicError)):
        load_model(_saved(tmp_path, blob[:cut], cfg))


def test_shape_inconsistency(default_pair, tmp_path):
    w, cfg = default_pair
    other = ModelConfig(d_ff=cfg.d_ff + 1)
    with pytest.raises(InconsistentModelError):
        load_model(_saved(tmp_path, encode_weights(w, cfg), other))


def test_trailing_bytes_and_missing_sidecar(default_pair, tmp_path):
    w, cfg = default_pair
    with pytest.raises(InconsistentModelError):
        decode_tensors(encode_weights(w, cfg) + b"\0")
    p = tmp_path / "lonely.v2dm"
    p.write_bytes(encode_weights(w, cfg))
    with pytest.raises(ModelFormatError):
        load_model(p)


def test_duplicate_names():
    one = b"\x01\x00" + b"a" + b"\x01" + struct.pack("<Q", 1) + struct.pack("<f", 1.0)
    blob = b"V2DM" + struct.pack("<II", 1, 2) + one + one
    with pytest.raises(InconsistentModelError, match="duplicate"):
        decode_tensors(blob)
