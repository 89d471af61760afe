"""Prefill/decode loop of the toy decoder with token-dropping hook points."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from ..errors import ConfigError, ContractViolation
from ..tensor_math import attention_dense, attention_streaming, matmul, rms_norm, rope_apply, swiglu_mlp
from .accounting import ATTN_PATHS, Accountant, layer_flops
from .config import RMS_EPS, ModelConfig
from .sequence import Segment, TokenSequence
from .weights import ModelWeights


@dataclass
class LayerState:
    """Hidden rows of the retained tokens right after ``layer_index`` ran.

    ``prev_hidden`` is the same rows' input to that layer (the previous
    layer's output, or the embeddings for layer 1).
    """

    layer_index: int
    hidden: np.ndarray
    prev_hidden: np.ndarray
    content_ids: np.ndarray
    positions: np.ndarray
    segments: np.ndarray

    @property
    def retained(self) -> List[tuple]:
        return list(zip(self.content_ids.tolist(), self.positions.tolist()))

    @property
    def vision_mask(self) -> np.ndarray:
        return self.segments == Segment.VISION

    @property
    def vision_ids(self) -> np.ndarray:
        return self.content_ids[self.vision_mask]


# hook(layer, state, attn_weights) -> retained content ids, or None for "keep everything".
# attn_weights is (n_heads, n, n) on the dense path and None on the streaming path.
Hook = Callable[[int, LayerState, Optional[np.ndarray]], Optional[Sequence[int]]]


@dataclass
class KVCache:
    keys: np.ndarray
    values: np.ndarray
    positions: np.ndarray
    content_ids: np.ndarray

    def __len__(self) -> int:
        return self.keys.shape[0]


@dataclass
class PrefillResult:
    final_state: LayerState
    caches: List[KVCache]
    logits: np.ndarray
    accountant: Accountant
    retained_per_layer: List[int]
    seq_len: int
    attn_path: str
    # vision content ids still retained after each hook call that changed the set
    vision_after_layer: Dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def final_count(self) -> int:
        return self.final_state.hidden.shape[0]

    @property
    def prefill_flops(self) -> int:
        return self.accountant.prefill_flops


@dataclass
class DecodeResult:
    generated_ids: List[int]
    per_step_logits_digest: List[str]
    flop_total: int
    peak_activation_elems: int
    prefill_flops: int
    decode_flops: int


def logits_digest(logits: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(logits, dtype="<f4").tobytes()).hexdigest()[:16]


def _add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (a.astype(np.float64) + b.astype(np.float64)).astype(np.float32)


class DecoderRuntime:
    """One model instance; weights are shared read-only, each call owns its state."""

    def __init__(self, weights: ModelWeights, config: ModelConfig):
        weights.validate(config)
        self.weights = weights
        self.config = config

    def _rope(self, x: np.ndarray, positions: np.ndarray) -> np.ndarray:
        if self.config.positional_mode == "nope":
            return x
        return rope_apply(x, positions, self.config.head_dim, self.config.rope_base)

    def _layer(self, layer: int, x: np.ndarray, positions: np.ndarray, cache: Optional[KVCache],
               attn_path: str, acct: Accountant):
        """Run one block. Returns (output, new_keys, new_values, attention weights or None).

        Dense attention matrices stay allocated in ``acct`` until the caller frees them.
        """
        cfg, w = self.config, self.weights
        d, hd, n_q = cfg.d_model, cfg.head_dim, x.shape[0]
        unit = n_q * d
        h = rms_norm(x, w.layer(layer, "attn_norm_gain"), RMS_EPS)
        q = self._rope(matmul(h, w.layer(layer, "wq")), positions)
        k_new = self._rope(matmul(h, w.layer(layer, "wk")), positions)
        v_new = matmul(h, w.layer(layer, "wv"))
        acct.alloc(5 * unit, "attn_io")  # h, q, k, v, head outputs
        if cache is not None:
            keys = np.concatenate([cache.keys, k_new])
            values = np.concatenate([cache.values, v_new])
        else:
            keys, values = k_new, v_new
        n_k = keys.shape[0]
        heads, weights = [], []
        for i in range(cfg.n_heads):
            cols = slice(i * hd, (i + 1) * hd)
            if attn_path == "dense":
                out_h, w_h = attention_dense(q[:, cols], keys[:, cols], values[:, cols], True, acct)
                weights.append(w_h)
            else:
                out_h = attention_streaming(q[:, cols], keys[:, cols], values[:, cols], True, acct)
            heads.append(out_h)
        attn_out = np.concatenate(heads, axis=1)
        acct.free(4 * unit, "attn_io")
        resid = _add(x, matmul(attn_out, w.layer(layer, "wo")))
        acct.alloc(unit, "resid")
        acct.free(unit, "attn_io")
        h2 = rms_norm(resid, w.layer(layer, "mlp_norm_gain"), RMS_EPS)
        mlp = swiglu_mlp(h2, w.layer(layer, "w_gate"), w.layer(layer, "w_up"), w.layer(layer, "w_down"))
        acct.alloc(2 * unit + 2 * n_q * cfg.d_ff, "mlp")  # h2, gate, up, down
        acct.free(unit + 2 * n_q * cfg.d_ff, "mlp")
        out = _add(resid, mlp)
        acct.alloc(unit, "out")
        acct.free(2 * unit, "resid")  # resid and mlp output
        acct.add_flops(layer_flops(n_q, n_k, d, cfg.d_ff))
        attn_w = np.stack(weights) if weights else None
        return out, k_new, v_new, attn_w

    def _logits(self, row: np.ndarray, acct: Accountant) -> np.ndarray:
        cfg = self.config
        acct.alloc(cfg.d_model + cfg.vocab_size, "logits")
        normed = rms_norm(row.reshape(1, -1), self.weights["final_norm_gain"], RMS_EPS)
        logits = matmul(normed, self.weights["lm_head"])[0]
        acct.free(cfg.d_model + cfg.vocab_size, "logits")
        return logits

    def prefill(self, seq: TokenSequence, hook: Optional[Hook] = None,
                attn_path: str = "dense") -> PrefillResult:
        if attn_path not in ATTN_PATHS:
            raise ConfigError(f"attn_path must be one of {ATTN_PATHS}, got {attn_path!r}")
        if len(seq) == 0:
            raise ConfigError("cannot prefill an empty sequence")
        cfg = self.config
        acct = Accountant()
        x = seq.embeddings
        ids, pos, seg = seq.content_ids, seq.positions, seq.segments
        acct.alloc(x.shape[0] * cfg.d_model, "x")
        caches: List[KVCache] = []
        retained_per_layer: List[int] = []
        vision_after: Dict[int, np.ndarray] = {}
        state = None
        for layer in range(1, cfg.n_layers + 1):
            n = x.shape[0]
            retained_per_layer.append(n)
            out, k_new, v_new, attn_w = self._layer(layer, x, pos, None, attn_path, acct)
            caches.append(KVCache(k_new, v_new, pos, ids))
            state = LayerState(layer, out, x, ids, pos, seg)
            keep = hook(layer, state, attn_w) if hook is not None else None
            if attn_w is not None:
                acct.free(attn_w.size, "attn_matrix")
            acct.free(n * cfg.d_model, "x")  # previous hidden
            if keep is not None:
                idx = self._resolve_keep(keep, ids, seg, layer)
                if idx is not None:
                    acct.free((n - idx.size) * cfg.d_model, "out")
                    out, ids, pos, seg = out[idx], ids[idx], pos[idx], seg[idx]
                    state = LayerState(layer, out, x[idx], ids, pos, seg)
                    vision_after[layer] = ids[seg == Segment.VISION]
            x = out
        logits = self._logits(x[-1], acct)
        acct.free(x.shape[0] * cfg.d_model, "out")
        acct.prefill_flops = acct.flops
        return PrefillResult(state, caches, logits, acct, retained_per_layer, len(seq), attn_path, vision_after)

    @staticmethod
    def _resolve_keep(keep, ids: np.ndarray, seg: np.ndarray, layer: int) -> Optional[np.ndarray]:
        keep = np.asarray(list(keep), dtype=np.int64)
        if np.unique(keep).size != keep.size:
            raise ContractViolation(f"layer {layer}: hook returned duplicate ids")
        member = np.isin(keep, ids)
        if not member.all():
            raise ContractViolation(
                f"layer {layer}: hook returned ids not in the retained set: {keep[~member][:5].tolist()}")
        mask = np.isin(ids, keep)
        dropped_non_vision = (~mask) & (seg != Segment.VISION)
        if dropped_non_vision.any():
            raise ContractViolation(
                f"layer {layer}: hook dropped non-vision tokens {ids[dropped_non_vision][:5].tolist()}")
        if mask.all():
            return None
        return np.flatnonzero(mask)

    def decode(self, prefill: PrefillResult, steps: int, stop_id: Optional[int] = None) -> DecodeResult:
        """Greedy decoding; ``steps`` tokens need ``steps - 1`` incremental passes.

        The first token comes from the prefill logits. Generated tokens take
        positions ``seq_len, seq_len + 1, ...`` and attend, at each layer, to
        that layer's cache (its own retained set) plus earlier generated tokens.
        """
        cfg = self.config
        acct = prefill.accountant.copy()
        caches = list(prefill.caches)
        generated: List[int] = []
        digests: List[str] = []
        logits = prefill.logits
        next_pos = prefill.seq_len
        for step in range(steps):
            if step > 0:
                emb = self.weights["embedding_table"][[generated[-1]]]
                positions = np.array([next_pos], dtype=np.int64)
                x = np.asarray(emb, dtype=np.float32)
                acct.alloc(cfg.d_model, "x")
                for layer in range(1, cfg.n_layers + 1):
                    cache = caches[layer - 1]
                    out, k_new, v_new, attn_w = self._layer(layer, x, positions, cache, prefill.attn_path, acct)
                    caches[layer - 1] = KVCache(
                        np.concatenate([cache.keys, k_new]), np.concatenate([cache.values, v_new]),
                        np.concatenate([cache.positions, positions]),
                        np.concatenate([cache.content_ids, [-(next_pos + 1)]]),
                    )
                    if attn_w is not None:
                        acct.free(attn_w.size, "attn_matrix")
                    acct.free(cfg.d_model, "x")
                    x = out
                logits = self._logits(x[0], acct)
                acct.free(cfg.d_model, "out")
                next_pos += 1
            digests.append(logits_digest(logits))
            token = int(np.argmax(logits))  # first max -> lowest id on ties
            generated.append(token)
            if stop_id is not None and token == stop_id:
                break
        return DecodeResult(generated, digests, acct.flops, acct.peak,
                            prefill.prefill_flops, acct.flops - prefill.prefill_flops)
