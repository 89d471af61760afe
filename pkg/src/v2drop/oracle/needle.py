"""Hand-built "needle" model and needle-recall calibration.

Construction (starting from :func:`generate_weights` at the given seed):

* Channel 0 of the residual stream is the needle channel. No layer writes
  to it (``wo[:, 0] = w_down[:, 0] = 0``) and no projection reads it except
  the detector below (``wq/wk/wv[0, :] = 0``), so a token's channel-0 value
  is fixed by its embedding.
* In every layer, the first ``DETECTOR_UNITS`` MLP hidden units read only
  channel 0 (``w_gate/w_up[0, unit] = DETECTOR_GAIN`` with all other input
  rows zeroed for those units) and write along a fixed random direction with
  zero channel-0 component.
* All other weights are scaled by ``BACKGROUND_SCALE`` so ordinary tokens
  barely move between layers.

A workload of identical background vision embeddings (channel 0 = 0) with
one needle (the background plus ``NEEDLE_AMPLITUDE`` on channel 0) then has
a needle whose hidden state changes much more per layer than the rest.
"""
from __future__ import annotations

import argparse
import json
from pathlib import Path
from typing import List, Optional

import numpy as np

from ..compression.metrics import VariationMetric
from ..compression.policies import PolicyDescriptor, build_hook, effective_schedule
from ..compression.schedule import (
    CANONICAL_SCHEDULES,
    DropSchedule,
    equivalent_token_count,
    matched_one_time_schedule,
    resolve_schedule,
)
from ..errors import ModelFormatError, V2DropError
from ..prng import Xoshiro256
from ..runtime.config import ModelConfig
from ..runtime.engine import DecoderRuntime
from ..runtime.sequence import assemble_sequence
from ..runtime.weights import ModelWeights, generate_weights, layer_name, load_model

NEEDLE_CONFIG = ModelConfig(n_layers=24, d_model=32, n_heads=2, d_ff=64, vocab_size=64)
DETECTOR_UNITS = 4
DETECTOR_GAIN = 1.0
BACKGROUND_SCALE = 0.25
NEEDLE_AMPLITUDE = 4.0


class NeedleSetupError(V2DropError):
    pass


def build_needle_weights(config: ModelConfig = NEEDLE_CONFIG, seed: int = 7) -> ModelWeights:
    base = generate_weights(config, seed)
    rng = Xoshiro256(seed ^ 0x5EED)
    tensors = {name: np.array(arr) for name, arr in base.tensors.items()}
    units = slice(0, DETECTOR_UNITS)
    for layer in range(1, config.n_layers + 1):
        t = {n: tensors[layer_name(layer, n)] for n in ("wq", "wk", "wv", "wo", "w_gate", "w_up", "w_down")}
        for n in t:
            t[n] *= BACKGROUND_SCALE
        for n in ("wq", "wk", "wv"):
            t[n][0, :] = 0.0
        t["wo"][:, 0] = 0.0
        t["w_gate"][:, units] = 0.0
        t["w_up"][:, units] = 0.0
        t["w_gate"][0, units] = DETECTOR_GAIN
        t["w_up"][0, units] = DETECTOR_GAIN
        direction = rng.normal(config.d_model)
        direction[0] = 0.0
        direction /= np.linalg.norm(direction)
        t["w_down"][units, :] = direction[None, :] / DETECTOR_UNITS
        t["w_down"][:, 0] = 0.0
        for n, arr in t.items():
            tensors[layer_name(layer, n)] = arr
    return ModelWeights(tensors)


def needle_embeddings(rng: Xoshiro256, m: int, d_model: int, needle_positions) -> np.ndarray:
    """``m`` copies of one random background row; needles add amplitude on channel 0."""
    background = rng.normal(d_model)
    background[0] = 0.0
    emb = np.tile(background, (m, 1))
    for p in needle_positions:
        emb[p, 0] = NEEDLE_AMPLITUDE
    return emb.astype(np.float32)


class _StopPrefill(Exception):
    pass


def _last_live_stage(resolved) -> Optional[int]:
    """Layer of the last stage that still keeps at least one vision token."""
    live = [layer for layer, k in resolved if k > 0]
    return live[-1] if live else None


def needle_survives(runtime: DecoderRuntime, policy: PolicyDescriptor, schedule: DropSchedule,
                    m: int, needle_index: int, rng: Xoshiro256, system_len: int = 2,
                    text_len: int = 4, attn_path: str = "dense") -> bool:
    """Run prefill up to the last non-empty stage; report whether the needle is still retained."""
    cfg = runtime.config
    emb = needle_embeddings(rng, m, cfg.d_model, [needle_index])
    sys_ids = [rng.below(cfg.vocab_size) for _ in range(system_len)]
    txt_ids = [rng.below(cfg.vocab_size) for _ in range(text_len)]
    seq = assemble_sequence(sys_ids, emb, txt_ids, runtime.weights["embedding_table"])
    resolved = resolve_schedule(effective_schedule(policy, schedule, m), m)
    stop_at = _last_live_stage(resolved)
    if stop_at is None:
        return False
    inner = build_hook(policy, resolved)
    needle_id = int(seq.vision_ids[needle_index])
    verdict = {}

    def hook(layer, state, attn_w):
        keep = inner(layer, state, attn_w) if inner is not None else None
        if layer == stop_at:
            kept = state.content_ids.tolist() if keep is None else keep
            verdict["alive"] = needle_id in kept
            raise _StopPrefill
        return keep

    try:
        runtime.prefill(seq, hook, attn_path)
    except _StopPrefill:
        pass
    return verdict.get("alive", False)


def needle_recall(runtime: DecoderRuntime, policy: PolicyDescriptor, schedule: DropSchedule, m: int,
                  trials: int, seed: int, needle_index: Optional[int] = None) -> float:
    """Fraction of trials in which the needle survives; placement is random unless fixed."""
    rng = Xoshiro256(seed, lanes=1)
    hits = 0
    for t in range(trials):
        idx = rng.below(m) if needle_index is None else needle_index
        trial_policy = policy
        if policy.kind == "random":
            trial_policy = PolicyDescriptor("random", policy.metric, seed=policy.seed + t)
        hits += needle_survives(runtime, trial_policy, schedule, m, idx, rng)
    return hits / trials if trials else 0.0


def calibrate_needle(model_path, trials: int, seed: int, schedule: Optional[DropSchedule] = None,
                     m: int = 64, metric: VariationMetric = VariationMetric()):
    """Needle recall of (v2drop, random) under ``schedule`` (default: the 192 budget)."""
    try:
        weights, config = load_model(model_path)
    except FileNotFoundError as exc:
        raise NeedleSetupError(f"needle model not found: {exc}") from None
    except ModelFormatError as exc:
        if not Path(model_path).exists():
            raise NeedleSetupError(f"needle model not found: {model_path}") from None
        raise
    runtime = DecoderRuntime(weights, config)
    if schedule is None:
        schedule = DropSchedule.parse(CANONICAL_SCHEDULES["192"])
    v2 = needle_recall(runtime, PolicyDescriptor("v2drop", metric), schedule, m, trials, seed)
    rnd = needle_recall(runtime, PolicyDescriptor("random", seed=seed), schedule, m, trials, seed)
    return v2, rnd


def analytic_random_recall(schedule: DropSchedule, m: int) -> float:
    """Survival probability of one fixed token under uniform sampling = K_last_live / M."""
    resolved = resolve_schedule(schedule, m)
    live = [k for _, k in resolved if k > 0]
    return live[-1] / m if live else 0.0


def record_calibration(model_path, out_path, trials: int = 200, seed: int = 0, m: int = 64) -> dict:
    """Measure and write the baseline that the regression tests enforce."""
    weights, config = load_model(model_path)
    runtime = DecoderRuntime(weights, config)
    prog = DropSchedule.parse(CANONICAL_SCHEDULES["192"])
    one_sched = matched_one_time_schedule(prog, m)
    v2 = PolicyDescriptor("v2drop")
    fixed_trials = max(trials // 10, 1)
    record = {
        "m": m,
        "trials": trials,
        "seed": seed,
        "schedule": str(prog),
        "one_time_schedule": str(one_sched),
        "equivalent_count_progressive": equivalent_token_count(resolve_schedule(prog, m), m, prog.total_llm_layers),
        "equivalent_count_one_time": equivalent_token_count(resolve_schedule(one_sched, m), m, prog.total_llm_layers),
        "v2drop_progressive": needle_recall(runtime, v2, prog, m, trials, seed),
        "v2drop_one_time": needle_recall(runtime, PolicyDescriptor("one_time_v2drop"), prog, m, trials, seed),
        "random_progressive": needle_recall(runtime, PolicyDescriptor("random", seed=seed), prog, m, trials, seed),
        "random_progressive_analytic": analytic_random_recall(prog, m),
        "attention_guided_progressive": needle_recall(
            runtime, PolicyDescriptor("attention_guided"), prog, m, trials, seed),
        "v2drop_needle_first": needle_recall(runtime, v2, prog, m, fixed_trials, seed, needle_index=0),
        "v2drop_needle_last": needle_recall(runtime, v2, prog, m, fixed_trials, seed, needle_index=m - 1),
        "attention_guided_needle_first": needle_recall(
            runtime, PolicyDescriptor("attention_guided"), prog, m, fixed_trials, seed, needle_index=0),
        "attention_guided_needle_last": needle_recall(
            runtime, PolicyDescriptor("attention_guided"), prog, m, fixed_trials, seed, needle_index=m - 1),
    }
    record["v2drop_first_last_difference"] = record["v2drop_needle_last"] - record["v2drop_needle_first"]
    Path(out_path).write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return record


def main(argv: Optional[List[str]] = None) -> int:
    from ..runtime.weights import save_model

    ap = argparse.ArgumentParser(description="build the needle model and record its calibration")
    ap.add_argument("--model", required=True, help="needle model path (created if missing)")
    ap.add_argument("--out", required=True, help="calibration JSON to write")
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if not Path(args.model).exists():
        save_model(build_needle_weights(), NEEDLE_CONFIG, args.model)
    print(json.dumps(record_calibration(args.model, args.out, args.trials, args.seed), indent=2))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
