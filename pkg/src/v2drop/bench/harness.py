"""Single runs and policy comparison grids."""
from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from ..compression.metrics import VariationMetric
from ..compression.policies import PolicyDescriptor, build_hook, effective_schedule, positional_bias_stat
from ..compression.schedule import DropSchedule, equivalent_token_count, resolve_schedule, resolve_schedule_exact
from ..errors import ConfigError, StreamingIncompatibleError
from ..runtime.engine import DecoderRuntime
from .workload import WorkloadSpec, build_sequence


@dataclass(frozen=True)
class RunConfig:
    policy: PolicyDescriptor
    schedule: DropSchedule
    attn_path: str = "streaming"


def _bits(block_indices: Iterable[int], m: int) -> str:
    mask = ["0"] * m
    for i in block_indices:
        mask[i] = "1"
    return "".join(mask)


def _reference_stage(resolved) -> Optional[int]:
    live = [layer for layer, k in resolved if k > 0]
    return live[-1] if live else None


def run_single(runtime: DecoderRuntime, workload: WorkloadSpec, run: RunConfig) -> dict:
    """Execute one prefill + decode and return a report record.

    Raises :class:`StreamingIncompatibleError` for attention-guided runs on
    the streaming path.
    """
    policy, schedule = run.policy, run.schedule
    if policy.needs_attention_weights and run.attn_path == "streaming":
        raise StreamingIncompatibleError(policy.kind)
    cfg = runtime.config
    if schedule.stages and schedule.stages[-1].layer > cfg.n_layers:
        raise ConfigError(
            f"schedule layer {schedule.stages[-1].layer} exceeds the model's {cfg.n_layers} layers")
    seq, needles = build_sequence(workload, runtime.weights["embedding_table"])
    m = seq.n_vision
    eff = effective_schedule(policy, schedule, m)
    resolved = resolve_schedule(eff, m)
    hook = build_hook(policy, resolved)

    start = time.perf_counter()
    prefill = runtime.prefill(seq, hook, run.attn_path)
    decoded = runtime.decode(prefill, workload.decode_steps)
    wall_ms = (time.perf_counter() - start) * 1000.0

    vision_start = seq.vision_start
    all_vision = seq.vision_ids
    # vision tokens alive after each stage layer (stages that dropped nothing are absent from the map)
    alive = all_vision
    stage_masks: Dict[str, str] = {}
    for layer, _ in resolved:
        alive = prefill.vision_after_layer.get(layer, alive)
        stage_masks[str(layer)] = _bits((int(i) - vision_start for i in alive), m)
    final_vision = prefill.final_state.vision_ids
    ref_layer = _reference_stage(resolved)
    if ref_layer is not None:
        ref_mask = stage_masks[str(ref_layer)]
    else:
        # no stage keeps anything (all dropped), or no stages at all (all kept)
        ref_mask = _bits(range(m) if not resolved else (), m)
    ref_idx = [i for i, b in enumerate(ref_mask) if b == "1"]
    bias = positional_bias_stat(ref_idx, m) if m else 0.0
    needle_recall = None
    if needles:
        needle_recall = sum(1 for i in needles if ref_mask[i] == "1") / len(needles)

    total_layers = schedule.total_llm_layers
    nominal = equivalent_token_count(resolve_schedule_exact(eff, m), m, total_layers) if m else 0.0
    vis_per_layer = _vision_per_layer(prefill.retained_per_layer, len(seq) - m)
    realized = float(np.mean(vis_per_layer)) if vis_per_layer else 0.0

    digest = hashlib.sha256("".join(decoded.per_step_logits_digest).encode()).hexdigest()[:16]
    return {
        "workload": workload.name,
        "seed": workload.seed,
        "M": m,
        "policy": policy.kind,
        "policy_seed": policy.seed,
        "metric": policy.metric.kind,
        "schedule": str(schedule),
        "effective_schedule": str(eff),
        "resolved_schedule": [[layer, k] for layer, k in resolved],
        "attn_path": run.attn_path,
        "prefill_flops": decoded.prefill_flops,
        "decode_flops": decoded.decode_flops,
        "peak_activation_elems": decoded.peak_activation_elems,
        "attn_matrix_allocs": prefill.accountant.attn_matrix_allocs,
        "retained_per_layer": list(prefill.retained_per_layer),
        "equivalent_token_count": round(nominal, 2),
        "realized_equivalent_token_count": round(realized, 2),
        "positional_bias_stat": round(bias, 6),
        "retained_mask": _bits((int(i) - vision_start for i in final_vision), m),
        "stage_masks": stage_masks,
        "needle_positions": needles,
        "needle_recall": needle_recall,
        "generated_ids": decoded.generated_ids,
        "logits_digest": digest,
        "wall_time_ms": round(wall_ms, 3),
    }


def _vision_per_layer(retained_per_layer: Sequence[int], n_non_vision: int) -> List[int]:
    return [n - n_non_vision for n in retained_per_layer]


def parse_policy(kind: str, metric: str = "l2", seed: int = 0, one_time_layer: Optional[int] = None) -> PolicyDescriptor:
    return PolicyDescriptor(kind, VariationMetric(metric), seed, one_time_layer)


def compare_grid(runtime: DecoderRuntime, workloads: Sequence[WorkloadSpec], policies: Sequence[PolicyDescriptor],
                 schedules: Sequence[DropSchedule], attn_paths: Sequence[str]) -> List[dict]:
    """Every (workload, policy, schedule, attn_path) combination, in that nesting order.

    Incompatible combinations become rows with ``status = "incompatible"``.
    """
    if not policies:
        raise ConfigError("empty policy list")
    if not workloads:
        raise ConfigError("no workloads")
    rows = []
    for wl in workloads:
        for pol in policies:
            for sched in schedules:
                for path in attn_paths:
                    try:
                        rec = run_single(runtime, wl, RunConfig(pol, sched, path))
                        rec["status"] = "ok"
                    except StreamingIncompatibleError as exc:
                        rec = {"workload": wl.name, "policy": pol.kind, "metric": pol.metric.kind,
                               "schedule": str(sched), "attn_path": path, "status": "incompatible",
                               "error": str(exc)}
                    rows.append(rec)
    return rows
