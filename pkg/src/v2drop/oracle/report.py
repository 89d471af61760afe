from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Iterable, Optional

import numpy as np


@dataclass
class OracleReport:
    op_name: str
    max_abs_err: float
    max_rel_err: float
    cases: int
    pass_: bool

    def to_json(self) -> str:
        d = asdict(self)
        d["pass"] = d.pop("pass_")
        return json.dumps(d, sort_keys=True)


def compare(op_name: str, pairs: Iterable, abs_tol: Optional[float] = None,
            rel_tol: Optional[float] = None, rel_floor: float = 1e-30) -> OracleReport:
    """Aggregate ``(got, want)`` pairs into one report.

    A case passes when it meets every tolerance given. Relative error is
    ``|got - want| / max(|want|, rel_floor)``.
    """
    max_abs = max_rel = 0.0
    cases = 0
    for got, want in pairs:
        got = np.asarray(got, dtype=np.float64)
        want = np.asarray(want, dtype=np.float64)
        err = np.abs(got - want)
        rel = err / np.maximum(np.abs(want), rel_floor)
        max_abs = max(max_abs, float(err.max(initial=0.0)))
        max_rel = max(max_rel, float(rel.max(initial=0.0)))
        cases += 1
    ok = cases > 0
    if abs_tol is not None:
        ok = ok and max_abs <= abs_tol
    if rel_tol is not None:
        ok = ok and max_rel <= rel_tol
    return OracleReport(op_name, max_abs, max_rel, cases, ok)


def write_jsonl(reports: Iterable[OracleReport], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in reports:
            fh.write(r.to_json() + "\n")
