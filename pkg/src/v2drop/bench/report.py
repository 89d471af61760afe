"""Report serialization: JSON (schema-checked) and the comparison CSV."""
from __future__ import annotations

import csv
import io
import json
from importlib import resources
from pathlib import Path
from typing import Iterable, List

import jsonschema

from ..runtime.config import ModelConfig

SCHEMA_ID = "v2drop.bench-report/1"
CSV_COLUMNS = (
    "workload", "policy", "metric", "schedule", "effective_schedule", "attn_path", "status",
    "prefill_flops", "decode_flops", "peak_activation_elems", "attn_matrix_allocs",
    "equivalent_token_count", "realized_equivalent_token_count", "positional_bias_stat",
    "needle_recall", "retained_count", "logits_digest",
)


def load_schema() -> dict:
    return json.loads(resources.files("v2drop.bench").joinpath("report_schema.json").read_text(encoding="utf-8"))


def make_report(model: str, config: ModelConfig, runs: List[dict]) -> dict:
    return {"schema": SCHEMA_ID, "model": model, "model_config": config.to_dict(), "runs": runs}


def validate_report(report: dict) -> None:
    jsonschema.validate(report, load_schema())


def dumps_report(report: dict) -> str:
    validate_report(report)
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def write_report(report: dict, path) -> None:
    Path(path).write_text(dumps_report(report), encoding="utf-8")


def _csv_value(row: dict, col: str):
    if col == "retained_count":
        mask = row.get("retained_mask")
        return "" if mask is None else mask.count("1")
    val = row.get(col)
    return "" if val is None else val


def rows_to_csv(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_csv_value(row, c) for c in CSV_COLUMNS])
    return buf.getvalue()
