"""Dense kernels for the toy decoder.

Every public function accepts and returns 2-D ``float32`` arrays (row-major).
Arithmetic is carried out in ``float64`` and the result is rounded back to
``float32`` once, at the end of the op.

Two attention paths are provided. :func:`attention_dense` materializes the
full post-softmax matrix and returns it. :func:`attention_streaming` walks the
keys in fixed-size blocks with a running max and running denominator, so its
scratch is O(n_q * head_dim) and it never holds an ``n_q x n_k`` buffer.
"""
from __future__ import annotations

import math
from typing import Optional, Protocol

import numpy as np

from .errors import ConfigError, ShapeError

STREAM_BLOCK = 16


class AllocationTracker(Protocol):
    def alloc(self, elems: int, tag: str) -> None: ...

    def free(self, elems: int, tag: str) -> None: ...


def as_tensor(x, name: str = "x") -> np.ndarray:
    """Coerce ``x`` to a 2-D float32 array, raising :class:`ShapeError` otherwise."""
    arr = np.asarray(x, dtype=np.float32)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def as_vector(x, name: str = "x") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float32)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    return arr


def _store(x: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(x, dtype=np.float32)
    if not np.isfinite(out).all():
        raise FloatingPointError("operation produced non-finite values")
    return out


def matmul(a, b) -> np.ndarray:
    a = as_tensor(a, "a")
    b = as_tensor(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return _store(a.astype(np.float64) @ b.astype(np.float64))


def rms_norm(x, gain, epsilon: float = 1e-6) -> np.ndarray:
    x = as_tensor(x)
    gain = as_vector(gain, "gain")
    if gain.shape[0] != x.shape[1]:
        raise ShapeError(f"gain length {gain.shape[0]} != x.cols {x.shape[1]}")
    if epsilon < 0:
        raise ConfigError("epsilon must be non-negative")
    x64 = x.astype(np.float64)
    ms = np.mean(x64 * x64, axis=1, keepdims=True) + epsilon
    # eps=0 on an all-zero row: define the output as zero rather than 0/0
    inv = np.divide(1.0, np.sqrt(ms), out=np.zeros_like(ms), where=ms > 0)
    return _store(x64 * inv * gain.astype(np.float64))


def rope_apply(x, positions, head_dim: int, base: float = 10000.0) -> np.ndarray:
    """Rotate each (2k, 2k+1) pair of every head by ``pos * base**(-2k/head_dim)``.

    Negative positions are allowed and give the inverse rotation.
    """
    x = as_tensor(x)
    if head_dim <= 0 or head_dim % 2:
        raise ConfigError(f"head_dim must be positive and even, got {head_dim}")
    if x.shape[1] % head_dim:
        raise ShapeError(f"x.cols {x.shape[1]} not divisible by head_dim {head_dim}")
    pos = np.asarray(positions, dtype=np.float64).reshape(-1)
    if pos.shape[0] != x.shape[0]:
        raise ShapeError(f"{pos.shape[0]} positions for {x.shape[0]} rows")
    n_heads = x.shape[1] // head_dim
    inv_freq = base ** (-np.arange(0, head_dim, 2, dtype=np.float64) / head_dim)
    ang = pos[:, None] * inv_freq[None, :]
    cos, sin = np.cos(ang)[:, None, :], np.sin(ang)[:, None, :]
    xh = x.astype(np.float64).reshape(x.shape[0], n_heads, head_dim // 2, 2)
    even, odd = xh[..., 0], xh[..., 1]
    out = np.empty_like(xh)
    out[..., 0] = even * cos - odd * sin
    out[..., 1] = even * sin + odd * cos
    return _store(out.reshape(x.shape))


def _check_attn(q, k, v, causal: bool):
    q, k, v = as_tensor(q, "q"), as_tensor(k, "k"), as_tensor(v, "v")
    if q.shape[1] != k.shape[1]:
        raise ShapeError(f"q.cols != k.cols: {q.shape} vs {k.shape}")
    if k.shape[0] != v.shape[0]:
        raise ShapeError(f"k.rows != v.rows: {k.shape} vs {v.shape}")
    if k.shape[0] == 0:
        raise ShapeError("attention needs at least one key")
    if causal and k.shape[0] < q.shape[0]:
        raise ShapeError(f"causal attention needs n_k >= n_q, got {k.shape} for {q.shape}")
    return q, k, v


def _causal_limit(n_q: int, n_k: int) -> np.ndarray:
    # query i (aligned to the end of the key sequence) may see keys j <= i + n_k - n_q
    return np.arange(n_q) + (n_k - n_q)


def attention_dense(q, k, v, causal_mask: bool = True,
                    tracker: Optional[AllocationTracker] = None):
    """Return ``(out, weights)``; ``weights`` is the full post-softmax matrix.

    The weights buffer is reported to ``tracker`` as an ``attn_matrix``
    allocation and is owned by the caller afterwards.
    """
    q, k, v = _check_attn(q, k, v, causal_mask)
    n_q, n_k = q.shape[0], k.shape[0]
    logits = (q.astype(np.float64) @ k.astype(np.float64).T) / math.sqrt(q.shape[1])
    if causal_mask:
        masked = np.arange(n_k)[None, :] > _causal_limit(n_q, n_k)[:, None]
        logits[masked] = -np.inf
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=1, keepdims=True)
    if tracker is not None:
        tracker.alloc(n_q * n_k, "attn_matrix")
    out = w @ v.astype(np.float64)
    return _store(out), _store(w)


def attention_streaming(q, k, v, causal_mask: bool = True,
                        tracker: Optional[AllocationTracker] = None,
                        block: int = STREAM_BLOCK) -> np.ndarray:
    """Single-pass online-softmax attention over key blocks of size ``block``."""
    q, k, v = _check_attn(q, k, v, causal_mask)
    n_q, n_k, dv = q.shape[0], k.shape[0], v.shape[1]
    tile = min(block, n_k)
    scratch = n_q * (dv + 2) + n_q * tile
    if tracker is not None:
        tracker.alloc(scratch, "stream_scratch")
    scale = 1.0 / math.sqrt(q.shape[1])
    q64 = q.astype(np.float64)
    limit = _causal_limit(n_q, n_k)
    run_max = np.full(n_q, -np.inf)
    run_den = np.zeros(n_q)
    acc = np.zeros((n_q, dv))
    for start in range(0, n_k, tile):
        stop = min(start + tile, n_k)
        s = (q64 @ k[start:stop].astype(np.float64).T) * scale
        if causal_mask:
            s[np.arange(start, stop)[None, :] > limit[:, None]] = -np.inf
        blk_max = s.max(axis=1)
        new_max = np.maximum(run_max, blk_max)
        live = np.isfinite(new_max)
        ref = np.where(live, new_max, 0.0)
        # rows that have seen no visible key yet keep zero state
        rescale = np.where(np.isfinite(run_max), np.exp(run_max - ref), 0.0)
        p = np.exp(s - ref[:, None])
        run_den = run_den * rescale + p.sum(axis=1)
        acc = acc * rescale[:, None] + p @ v[start:stop].astype(np.float64)
        run_max = new_max
    if tracker is not None:
        tracker.free(scratch, "stream_scratch")
    return _store(acc / run_den[:, None])


def silu(z):
    z = np.asarray(z, dtype=np.float64)
    return z / (1.0 + np.exp(-z))


def swiglu_mlp(x, w_gate, w_up, w_down) -> np.ndarray:
    x = as_tensor(x)
    w_gate, w_up, w_down = as_tensor(w_gate, "w_gate"), as_tensor(w_up, "w_up"), as_tensor(w_down, "w_down")
    if not (x.shape[1] == w_gate.shape[0] == w_up.shape[0]
            and w_gate.shape[1] == w_up.shape[1] == w_down.shape[0]):
        raise ShapeError(
            f"swiglu shapes not conformable: x{x.shape} gate{w_gate.shape} "
            f"up{w_up.shape} down{w_down.shape}"
        )
    x64 = x.astype(np.float64)
    hidden = silu(x64 @ w_gate.astype(np.float64)) * (x64 @ w_up.astype(np.float64))
    return _store(hidden @ w_down.astype(np.float64))
