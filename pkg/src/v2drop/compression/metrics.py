"""Per-token variation between a token's hidden state at consecutive layers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ShapeError

METRIC_KINDS = ("l1", "l2", "cosine_distance")


@dataclass(frozen=True)
class VariationMetric:
    kind: str = "l2"
    epsilon: float = 1e-12  # norm floor, cosine_distance only

    def __post_init__(self):
        if self.kind not in METRIC_KINDS:
            raise ConfigError(f"unknown variation metric {self.kind!r}; expected one of {METRIC_KINDS}")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be > 0")


def variation_rows(metric: VariationMetric, prev, curr) -> np.ndarray:
    """Row-wise variation of two aligned ``(n, d)`` matrices, in float64."""
    prev = np.asarray(prev, dtype=np.float64)
    curr = np.asarray(curr, dtype=np.float64)
    if prev.shape != curr.shape or prev.ndim != 2:
        raise ShapeError(f"variation needs equal 2-D shapes, got {prev.shape} and {curr.shape}")
    if metric.kind == "l1":
        return np.abs(curr - prev).sum(axis=1)
    if metric.kind == "l2":
        diff = curr - prev
        return np.sqrt((diff * diff).sum(axis=1))
    pp = (prev * prev).sum(axis=1)
    cc = (curr * curr).sum(axis=1)
    ok = (np.sqrt(pp) >= metric.epsilon) & (np.sqrt(cc) >= metric.epsilon)
    dot = (prev * curr).sum(axis=1)
    # sqrt(pp * cc) rather than |prev|*|curr| so identical vectors give exactly 1
    cos = np.divide(dot, np.sqrt(pp * cc), out=np.zeros_like(dot), where=ok)
    # rounding can push |cos| a hair past 1
    return np.maximum(1.0 - np.clip(cos, -1.0, 1.0), 0.0)


def variation(metric: VariationMetric, prev, curr) -> float:
    prev = np.asarray(prev, dtype=np.float64)
    curr = np.asarray(curr, dtype=np.float64)
    if prev.ndim != 1 or prev.shape != curr.shape:
        raise ShapeError(f"variation needs equal-length vectors, got {prev.shape} and {curr.shape}")
    return float(variation_rows(metric, prev[None, :], curr[None, :])[0])
