from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable, List, Optional, Tuple

import numpy as np

from ..errors import ContractViolation
from .metrics import VariationMetric, variation_rows


class ClampWarning(UserWarning):
    """A requested count exceeded what was available and was clamped."""


@dataclass
class VariationScores:
    """Scores for the vision tokens retained at ``layer_index``, in sequence order."""

    layer_index: int
    ids: np.ndarray
    positions: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.positions = np.asarray(self.positions, dtype=np.int64)
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if not (self.ids.shape == self.positions.shape == self.scores.shape):
            raise ValueError("ids, positions and scores must have equal length")

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[int, float]], positions: Optional[Iterable[int]] = None,
                   layer_index: int = 0) -> "VariationScores":
        pairs = list(pairs)
        ids = [p[0] for p in pairs]
        pos = list(positions) if positions is not None else list(range(len(pairs)))
        return cls(layer_index, ids, pos, [p[1] for p in pairs])

    def __len__(self) -> int:
        return self.ids.size

    def as_pairs(self) -> List[Tuple[int, float]]:
        return list(zip(self.ids.tolist(), self.scores.tolist()))


def score_tokens(metric: VariationMetric, state, vision_ids) -> VariationScores:
    """Variation of each retained vision token between ``state.prev_hidden`` and ``state.hidden``."""
    vision_ids = np.asarray(list(vision_ids), dtype=np.int64)
    present = np.isin(vision_ids, state.content_ids)
    if not present.all():
        raise ContractViolation(f"vision ids not in retained set: {vision_ids[~present][:5].tolist()}")
    rows = np.flatnonzero(np.isin(state.content_ids, vision_ids))
    scores = variation_rows(metric, state.prev_hidden[rows], state.hidden[rows])
    return VariationScores(state.layer_index, state.content_ids[rows], state.positions[rows], scores)


def select_topk(scores: VariationScores, k: int) -> List[int]:
    """Ids of the ``k`` highest scores, returned in original sequence order.

    Equal scores are resolved by ascending original position.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    n = len(scores)
    if k > n:
        warnings.warn(f"select_topk: k={k} exceeds {n} candidates; clamped", ClampWarning, stacklevel=2)
        k = n
    order = np.lexsort((scores.positions, -scores.scores))[:k]
    chosen = order[np.argsort(scores.positions[order], kind="stable")]
    return scores.ids[chosen].tolist()
