"""Independent float64 references and needle-recall calibration (test support, not runtime)."""
from .needle import (
    NEEDLE_CONFIG,
    NeedleSetupError,
    analytic_random_recall,
    build_needle_weights,
    calibrate_needle,
    needle_recall,
)
from .reference import (
    oracle_attention,
    oracle_equivalent_count,
    oracle_matmul,
    oracle_prefill_flops,
    oracle_rms_norm,
    oracle_rope,
    oracle_swiglu,
    oracle_topk,
    oracle_variation,
)
from .report import OracleReport, compare, write_jsonl

__all__ = [
    "NEEDLE_CONFIG", "NeedleSetupError", "analytic_random_recall", "build_needle_weights",
    "calibrate_needle", "needle_recall", "oracle_attention", "oracle_equivalent_count",
    "oracle_matmul", "oracle_prefill_flops", "oracle_rms_norm", "oracle_rope", "oracle_swiglu",
    "oracle_topk", "oracle_variation", "OracleReport", "compare", "write_jsonl",
]
