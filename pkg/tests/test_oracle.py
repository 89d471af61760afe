import json

import numpy as np
import pytest

from v2drop.oracle.reference import (
    oracle_attention,
    oracle_equivalent_count,
    oracle_matmul,
    oracle_prefill_flops,
    oracle_rms_norm,
    oracle_topk,
    oracle_variation,
)
from v2drop.oracle.report import OracleReport, compare, write_jsonl


def test_compare_aggregates():
    r = compare("x", [(1.0, 1.0), ([1.0, 2.1], [1.0, 2.0])], abs_tol=0.2, rel_tol=0.06)
    assert r.cases == 2 and r.pass_
    assert r.max_abs_err == pytest.approx(0.1)
    assert r.max_rel_err == pytest.approx(0.05)
    assert not compare("x", [(1.0, 2.0)], abs_tol=0.5).pass_
    assert not compare("empty", []).pass_


def test_jsonl(tmp_path):
    path = tmp_path / "r.jsonl"
    write_jsonl([OracleReport("a", 0.0, 0.0, 3, True), OracleReport("b", 1.0, 2.0, 1, False)], path)
    lines = [json.loads(l) for l in path.read_text().splitlines()]
    assert lines[0] == {"op_name": "a", "max_abs_err": 0.0, "max_rel_err": 0.0, "cases": 3, "pass": True}
    assert lines[1]["pass"] is False


def test_oracles_self_consistent():
    a = [[1.0, 2.0], [3.0, 4.0]]
    assert oracle_matmul(a, [[1.0, 0.0], [0.0, 1.0]]) == a
    norm = oracle_rms_norm([[3.0, 4.0]], [1.0, 1.0], 0.0)
    assert norm[0] == pytest.approx([3 / np.sqrt(12.5), 4 / np.sqrt(12.5)])
    out = oracle_attention([[1.0]], [[0.0], [0.0]], [[2.0], [4.0]], causal=False)
    assert out == [[3.0]]
    assert oracle_variation("l1", [0, 0], [1, -2]) == 3.0
    assert oracle_topk([(1, 0.5, 0), (2, 0.5, 1), (3, 0.9, 2)], 2) == [1, 3]
    assert oracle_equivalent_count(10, [(1, 5)], 2) == 7.5
    assert oracle_prefill_flops(1, 1, [1]) == 8 + 4 + 6
