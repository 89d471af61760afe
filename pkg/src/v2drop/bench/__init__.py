"""Benchmark harness: workloads, runs, comparison grids, reports and masks."""
from .harness import RunConfig, compare_grid, parse_policy, run_single
from .masks import emit_mask, pgm_bytes, text_grid
from .report import CSV_COLUMNS, dumps_report, load_schema, make_report, rows_to_csv, validate_report
from .workload import WorkloadSpec, build_sequence

__all__ = [
    "RunConfig", "compare_grid", "parse_policy", "run_single", "emit_mask", "pgm_bytes", "text_grid",
    "CSV_COLUMNS", "dumps_report", "load_schema", "make_report", "rows_to_csv", "validate_report",
    "WorkloadSpec", "build_sequence",
]
