"""Naive float64 reference implementations.

Nothing here imports the runtime or compression code paths: inputs are
converted to nested Python lists of floats and every sum is an explicit loop
(``math.fsum`` where it matters). These are slow on purpose; keep shapes small.
"""
from __future__ import annotations

import math
from typing import List, Sequence, Tuple

Matrix = List[List[float]]


def _rows(x) -> Matrix:
    return [[float(v) for v in row] for row in (x.tolist() if hasattr(x, "tolist") else x)]


def _vec(x) -> List[float]:
    return [float(v) for v in (x.tolist() if hasattr(x, "tolist") else x)]


def oracle_matmul(a, b) -> Matrix:
    a, b = _rows(a), _rows(b)
    if len(a[0]) != len(b):
        raise ValueError(f"shape mismatch {len(a)}x{len(a[0])} . {len(b)}x{len(b[0])}")
    n, m, p = len(a), len(b), len(b[0])
    out = [[0.0] * p for _ in range(n)]
    for i in range(n):
        for j in range(p):
            s = 0.0
            for k in range(m):
                s += a[i][k] * b[k][j]
            out[i][j] = s
    return out


def oracle_rms_norm(x, gain, epsilon: float) -> Matrix:
    out = []
    g = _vec(gain)
    for row in _rows(x):
        ms = math.fsum(v * v for v in row) / len(row) + epsilon
        r = 1.0 / math.sqrt(ms) if ms > 0 else 0.0
        out.append([v * r * gi for v, gi in zip(row, g)])
    return out


def oracle_rope(x, positions: Sequence[float], head_dim: int, base: float) -> Matrix:
    out = []
    for row, p in zip(_rows(x), positions):
        new = list(row)
        for h0 in range(0, len(row), head_dim):
            for k in range(head_dim // 2):
                theta = float(p) * base ** (-2.0 * k / head_dim)
                a, b = row[h0 + 2 * k], row[h0 + 2 * k + 1]
                new[h0 + 2 * k] = a * math.cos(theta) - b * math.sin(theta)
                new[h0 + 2 * k + 1] = a * math.sin(theta) + b * math.cos(theta)
        out.append(new)
    return out


def oracle_attention(q, k, v, causal: bool = True) -> Matrix:
    """Explicit softmax attention; causal rows are aligned to the end of the keys."""
    q, k, v = _rows(q), _rows(k), _rows(v)
    if len(q[0]) != len(k[0]) or len(k) != len(v):
        raise ValueError("attention shape mismatch")
    n_q, n_k, d = len(q), len(k), len(q[0])
    out = []
    for i in range(n_q):
        visible = range(n_k) if not causal else range(i + (n_k - n_q) + 1)
        logits = []
        for j in visible:
            s = 0.0
            for c in range(d):
                s += q[i][c] * k[j][c]
            logits.append(s / math.sqrt(d))
        top = max(logits)
        ex = [math.exp(s - top) for s in logits]
        z = math.fsum(ex)
        row = []
        for c in range(len(v[0])):
            row.append(math.fsum(e * v[j][c] for e, j in zip(ex, visible)) / z)
        out.append(row)
    return out


def oracle_swiglu(x, w_gate, w_up, w_down) -> Matrix:
    gate = oracle_matmul(x, w_gate)
    up = oracle_matmul(x, w_up)
    hidden = [[(g / (1.0 + math.exp(-g))) * u for g, u in zip(gr, ur)] for gr, ur in zip(gate, up)]
    return oracle_matmul(hidden, w_down)


def oracle_variation(kind: str, prev, curr, epsilon: float = 1e-12) -> float:
    a, b = _vec(prev), _vec(curr)
    if len(a) != len(b):
        raise ValueError("length mismatch")
    if kind == "l1":
        return math.fsum(abs(y - x) for x, y in zip(a, b))
    if kind == "l2":
        return math.sqrt(math.fsum((y - x) ** 2 for x, y in zip(a, b)))
    if kind == "cosine_distance":
        na = math.sqrt(math.fsum(x * x for x in a))
        nb = math.sqrt(math.fsum(y * y for y in b))
        if na < epsilon or nb < epsilon:
            return 1.0
        return 1.0 - math.fsum(x * y for x, y in zip(a, b)) / (na * nb)
    raise ValueError(f"unknown metric {kind!r}")


def oracle_topk(scores: Sequence[Tuple[int, float, int]], k: int) -> List[int]:
    """``scores`` is ``[(id, score, position), ...]``; full stable sort, take prefix, restore order."""
    ranked = sorted(scores, key=lambda t: t[2])
    ranked = sorted(ranked, key=lambda t: t[1], reverse=True)  # stable: equal scores keep position order
    chosen = ranked[:max(k, 0)]
    return [t[0] for t in sorted(chosen, key=lambda t: t[2])]


def oracle_equivalent_count(m: float, stages: Sequence[Tuple[int, float]], total_layers: int) -> float:
    """Count the vision tokens seen by every layer one at a time, then average."""
    per_layer = []
    for layer in range(1, total_layers + 1):
        count = m
        for stage_layer, k in stages:
            if stage_layer < layer:
                count = k
        per_layer.append(count)
    return math.fsum(per_layer) / total_layers


def oracle_prefill_flops(d: int, d_ff: int, retained: Sequence[int]) -> int:
    """Multiply-add count of each matmul in a layer, spelled out term by term."""
    total = 0
    for n in retained:
        q_k_v_o = 4 * (2 * n * d * d)
        scores = 2 * n * n * d
        weighted = 2 * n * n * d
        gate_up = 2 * (2 * n * d * d_ff)
        down = 2 * n * d_ff * d
        total += q_k_v_o + scores + weighted + gate_up + down
    return total
