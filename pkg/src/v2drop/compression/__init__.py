"""Vision token dropping by hidden-state variation, plus baselines."""
from .metrics import METRIC_KINDS, VariationMetric, variation, variation_rows
from .policies import (
    POLICY_KINDS,
    PolicyDescriptor,
    attention_scores,
    build_hook,
    effective_schedule,
    make_hook,
    policy_select,
    positional_bias_stat,
)
from .schedule import (
    CANONICAL_SCHEDULES,
    DropSchedule,
    Stage,
    equivalent_token_count,
    matched_one_time_schedule,
    resolve_schedule,
    resolve_schedule_exact,
    round_half_away,
)
from .selection import ClampWarning, VariationScores, score_tokens, select_topk

__all__ = [
    "METRIC_KINDS", "VariationMetric", "variation", "variation_rows", "POLICY_KINDS",
    "PolicyDescriptor", "attention_scores", "build_hook", "effective_schedule", "make_hook",
    "policy_select", "positional_bias_stat", "CANONICAL_SCHEDULES", "DropSchedule", "Stage",
    "equivalent_token_count", "matched_one_time_schedule", "resolve_schedule",
    "resolve_schedule_exact", "round_half_away", "ClampWarning", "VariationScores",
    "score_tokens", "select_topk",
]
