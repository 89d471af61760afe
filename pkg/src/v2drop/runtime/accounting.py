"""Analytic FLOP and activation-element accounting.

FLOPs (multiply-add = 2), for one layer with ``n_q`` query rows attending
``n_k`` keys, model width ``d`` and MLP width ``f``::

    projections  8 * n_q * d**2        (Q, K, V, O)
    attention    4 * n_q * n_k * d     (scores + weighted sum)
    mlp          6 * n_q * d * f       (gate, up, down)

Prefill uses ``n_q = n_k = n_l``, the rows retained when layer ``l`` runs.
Decode pass ``s`` (1-based) uses ``n_q = 1`` and ``n_k = n_l + s``, the
layer's KV-cache length including the token being processed. Embedding
lookup, norms and the LM head are not counted.

Activation elements follow the buffer timeline of the runtime. Per layer::

    attention phase   6*n_q*d + P      P = H*n_q*n_k (dense, all heads kept)
                                       P = n_q*(head_dim + 2 + min(B, n_k)) (streaming, one head live)
    mlp phase         4*n_q*d + 2*n_q*f + D      D = H*n_q*n_k on the dense path, else 0

and after the last layer (and each decode pass) the logits step holds
``rows*d + d + vocab``. The reported peak is the max over all of these.
KV caches and weights are not activations and are not counted.
"""
from __future__ import annotations

from collections import Counter
from typing import Optional, Sequence

from ..tensor_math import STREAM_BLOCK
from .config import ModelConfig

ATTN_PATHS = ("dense", "streaming")


def layer_flops(n_q: int, n_k: int, d: int, d_ff: int) -> int:
    return 8 * n_q * d * d + 4 * n_q * n_k * d + 6 * n_q * d * d_ff


def flop_breakdown(config: ModelConfig, retained_per_layer: Sequence[int], decode_steps: int = 0) -> dict:
    """Closed-form FLOP totals split into projection / attention / mlp terms.

    ``decode_steps`` counts incremental decode passes (one less than the
    number of generated tokens, since the first comes from prefill).
    """
    if len(retained_per_layer) != config.n_layers:
        raise ValueError(f"need {config.n_layers} retained counts, got {len(retained_per_layer)}")
    d, f = config.d_model, config.d_ff
    counts = [int(n) for n in retained_per_layer]
    proj = sum(8 * n * d * d for n in counts)
    attn = sum(4 * n * n * d for n in counts)
    mlp = sum(6 * n * d * f for n in counts)
    dec_proj = dec_attn = dec_mlp = 0
    for n in counts:
        dec_proj += decode_steps * 8 * d * d
        # cache lengths n+1 .. n+steps
        dec_attn += 4 * d * (decode_steps * n + decode_steps * (decode_steps + 1) // 2)
        dec_mlp += decode_steps * 6 * d * f
    prefill = proj + attn + mlp
    decode = dec_proj + dec_attn + dec_mlp
    return {
        "projections": proj + dec_proj,
        "attention": attn + dec_attn,
        "mlp": mlp + dec_mlp,
        "prefill": prefill,
        "decode": decode,
        "total": prefill + decode,
    }


def count_flops(config: ModelConfig, retained_per_layer: Sequence[int], decode_steps: int = 0) -> int:
    return flop_breakdown(config, retained_per_layer, decode_steps)["total"]


def _layer_peak(config: ModelConfig, n_q: int, n_k: int, attn_path: str, block: int) -> int:
    d, f, h = config.d_model, config.d_ff, config.n_heads
    dense = h * n_q * n_k if attn_path == "dense" else 0
    if attn_path == "dense":
        attn_extra = dense
    else:
        attn_extra = n_q * (config.head_dim + 2 + min(block, n_k))
    return max(6 * n_q * d + attn_extra, 4 * n_q * d + 2 * n_q * f + dense)


def peak_activation_elems(config: ModelConfig, retained_per_layer: Sequence[int], attn_path: str,
                          decode_steps: int = 0, final_count: Optional[int] = None,
                          block: int = STREAM_BLOCK) -> int:
    """Closed-form peak activation elements for one prefill (+ decode) run."""
    if attn_path not in ATTN_PATHS:
        raise ValueError(f"attn_path must be one of {ATTN_PATHS}")
    counts = [int(n) for n in retained_per_layer]
    if final_count is None:
        final_count = counts[-1]
    d, v = config.d_model, config.vocab_size
    peak = max(_layer_peak(config, n, n, attn_path, block) for n in counts)
    peak = max(peak, final_count * d + d + v)
    for s in range(1, decode_steps + 1):
        for n in counts:
            peak = max(peak, _layer_peak(config, 1, n + s, attn_path, block))
        peak = max(peak, 2 * d + v)
    return peak


class Accountant:
    """Counts FLOPs and tracks live/peak activation elements during a run.

    Allocations are tagged; ``allocs_by_tag["attn_matrix"]`` counts how many
    ``n_q x n_k`` attention matrices were materialized.
    """

    def __init__(self):
        self.flops = 0
        self.prefill_flops = 0
        self.live = 0
        self.peak = 0
        self.allocs_by_tag: Counter = Counter()

    def alloc(self, elems: int, tag: str) -> None:
        self.live += int(elems)
        self.allocs_by_tag[tag] += 1
        self.peak = max(self.peak, self.live)

    def free(self, elems: int, tag: str) -> None:
        self.live -= int(elems)
        if self.live < 0:
            raise RuntimeError(f"accountant freed more than allocated ({tag})")

    def add_flops(self, n: int) -> None:
        self.flops += int(n)

    @property
    def attn_matrix_allocs(self) -> int:
        return self.allocs_by_tag["attn_matrix"]

    def snapshot(self) -> dict:
        return {"flops": self.flops, "peak": self.peak, "live": self.live,
                "allocs_by_tag": dict(self.allocs_by_tag)}

    def copy(self) -> "Accountant":
        other = Accountant()
        other.flops, other.prefill_flops = self.flops, self.prefill_flops
        other.live, other.peak = self.live, self.peak
        other.allocs_by_tag = Counter(self.allocs_by_tag)
        return other
