"""Drop policies wired into the prefill hook.

``v2drop`` keeps the vision tokens whose hidden state moved most across the
stage layer. ``random`` samples uniformly. ``attention_guided`` is an
attention-score baseline: a vision token's importance is the attention it gets
from the final sequence token at the stage layer, averaged over heads. It
needs the dense attention path. ``one_time_v2drop`` is v2drop with a single
stage sized to match a multi-stage schedule's equivalent token count.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ConfigError, StreamingIncompatibleError
from ..prng import Xoshiro256
from ..runtime.engine import Hook, LayerState
from .metrics import VariationMetric
from .schedule import DropSchedule, matched_one_time_schedule, resolve_schedule
from .selection import VariationScores, score_tokens, select_topk

POLICY_KINDS = ("none", "v2drop", "random", "attention_guided", "one_time_v2drop")


@dataclass(frozen=True)
class PolicyDescriptor:
    kind: str = "v2drop"
    metric: VariationMetric = field(default_factory=VariationMetric)
    seed: int = 0
    one_time_layer: Optional[int] = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ConfigError(f"unknown policy {self.kind!r}; expected one of {POLICY_KINDS}")

    @property
    def needs_attention_weights(self) -> bool:
        return self.kind == "attention_guided"


def effective_schedule(policy: PolicyDescriptor, schedule: DropSchedule,
                       initial_vision_count: int) -> DropSchedule:
    """The schedule a policy actually runs: empty for ``none``, matched single stage for one-time."""
    if policy.kind == "none":
        return DropSchedule((), schedule.total_llm_layers)
    if policy.kind == "one_time_v2drop":
        return matched_one_time_schedule(schedule, initial_vision_count, policy.one_time_layer)
    return schedule


def _sample_without_replacement(rng: Xoshiro256, n: int, k: int) -> np.ndarray:
    # partial Fisher-Yates over 0..n-1
    idx = list(range(n))
    for i in range(min(k, n)):
        j = i + rng.below(n - i)
        idx[i], idx[j] = idx[j], idx[i]
    return np.array(sorted(idx[:k]), dtype=np.int64)


def attention_scores(state: LayerState, attn_weights: np.ndarray) -> VariationScores:
    """Head-averaged attention from the last retained row onto each vision token."""
    vis = np.flatnonzero(state.vision_mask)
    received = attn_weights[:, -1, :].astype(np.float64).mean(axis=0)
    return VariationScores(state.layer_index, state.content_ids[vis], state.positions[vis], received[vis])


def policy_select(policy: PolicyDescriptor, k: int, state: LayerState,
                  attn_weights: Optional[np.ndarray], rng: Optional[Xoshiro256] = None) -> List[int]:
    """Vision ids kept at one stage layer (in sequence order)."""
    vision_ids = state.vision_ids
    if policy.kind in ("v2drop", "one_time_v2drop"):
        return select_topk(score_tokens(policy.metric, state, vision_ids), k)
    if policy.kind == "attention_guided":
        if attn_weights is None:
            raise StreamingIncompatibleError(policy.kind)
        return select_topk(attention_scores(state, attn_weights), k)
    if policy.kind == "random":
        if rng is None:
            raise ConfigError("random policy needs a generator")
        picked = _sample_without_replacement(rng, vision_ids.size, min(k, vision_ids.size))
        return vision_ids[picked].tolist()
    raise ConfigError(f"policy {policy.kind!r} does not select tokens")


def build_hook(policy: PolicyDescriptor, resolved: Sequence[Tuple[int, int]]) -> Optional[Hook]:
    """Make a fresh per-run prefill hook; ``resolved`` is ``[(layer, K), ...]``.

    Returns ``None`` for the ``none`` policy. Each call creates its own
    generator, so two hooks built from the same descriptor behave identically.
    """
    if policy.kind == "none":
        return None
    targets: Dict[int, int] = dict(resolved)
    rng = Xoshiro256(policy.seed, lanes=1) if policy.kind == "random" else None

    def hook(layer: int, state: LayerState, attn_weights: Optional[np.ndarray]):
        if policy.needs_attention_weights and attn_weights is None:
            # fail on the first layer, before any compute is wasted
            raise StreamingIncompatibleError(policy.kind)
        if layer not in targets:
            return None
        kept_vision = set(policy_select(policy, targets[layer], state, attn_weights, rng))
        keep = [cid for cid, is_vis in zip(state.content_ids.tolist(), state.vision_mask.tolist())
                if not is_vis or cid in kept_vision]
        return keep

    return hook


def make_hook(policy: PolicyDescriptor, schedule: DropSchedule, initial_vision_count: int) -> Optional[Hook]:
    resolved = resolve_schedule(effective_schedule(policy, schedule, initial_vision_count), initial_vision_count)
    return build_hook(policy, resolved)


def positional_bias_stat(block_indices: Sequence[int], m: int) -> float:
    """Mean retained index within the vision block, rescaled to [-1, 1].

    ``block_indices`` are 0-based offsets inside the vision block; +1 means
    everything kept sits at the last position, -1 at the first, 0 is centred.
    An empty selection and a single-token block both give 0.
    """
    if m < 1:
        raise ConfigError("vision block size must be >= 1")
    idx = np.asarray(list(block_indices), dtype=np.float64)
    if idx.size == 0 or m == 1:
        return 0.0
    half = (m - 1) / 2.0
    return float((idx.mean() - half) / half)
