from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Sequence

import numpy as np

from ..errors import ShapeError
from ..tensor_math import as_tensor


class Segment(IntEnum):
    SYSTEM = 0
    VISION = 1
    TEXT = 2


@dataclass
class TokenSequence:
    """A prefill prompt: system prefix, one contiguous vision block, text suffix.

    ``content_ids`` are stable per-entry identifiers; they are assigned equal
    to ``positions`` at assembly time but callers should not rely on that.
    Vision entries carry embeddings verbatim; system/text rows are table
    lookups and ``token_ids`` records them (``-1`` for vision entries).
    """

    content_ids: np.ndarray
    segments: np.ndarray
    positions: np.ndarray
    token_ids: np.ndarray
    embeddings: np.ndarray

    def __post_init__(self):
        n = len(self.content_ids)
        if not (len(self.segments) == len(self.positions) == len(self.token_ids)
                == self.embeddings.shape[0] == n):
            raise ShapeError("TokenSequence fields have inconsistent lengths")
        if n and (self.positions[0] != 0 or np.any(np.diff(self.positions) <= 0)):
            raise ShapeError("original positions must start at 0 and strictly increase")
        if len(np.unique(self.content_ids)) != n:
            raise ShapeError("content ids must be unique")
        vis = np.flatnonzero(self.segments == Segment.VISION)
        if vis.size and vis[-1] - vis[0] + 1 != vis.size:
            raise ShapeError("vision entries must form one contiguous block")

    def __len__(self) -> int:
        return len(self.content_ids)

    @property
    def n_vision(self) -> int:
        return int(np.count_nonzero(self.segments == Segment.VISION))

    @property
    def vision_ids(self) -> np.ndarray:
        return self.content_ids[self.segments == Segment.VISION]

    @property
    def vision_start(self) -> int:
        """Original position of the first vision entry (the system prefix length)."""
        return int(np.count_nonzero(self.segments == Segment.SYSTEM))

    def counts(self) -> dict:
        return {seg.name.lower(): int(np.count_nonzero(self.segments == seg)) for seg in Segment}


def assemble_sequence(system_ids: Sequence[int], vision_embeddings, text_ids: Sequence[int],
                      embedding_table) -> TokenSequence:
    table = as_tensor(embedding_table, "embedding_table")
    vocab, d_model = table.shape
    vision = np.asarray(vision_embeddings, dtype=np.float32)
    if vision.size == 0:
        vision = np.zeros((0, d_model), dtype=np.float32)
    vision = as_tensor(vision, "vision_embeddings")
    if vision.shape[1] != d_model:
        raise ShapeError(f"vision embeddings have {vision.shape[1]} cols, model has d_model={d_model}")
    sys_ids = np.asarray(system_ids, dtype=np.int64).reshape(-1)
    txt_ids = np.asarray(text_ids, dtype=np.int64).reshape(-1)
    for ids, what in ((sys_ids, "system"), (txt_ids, "text")):
        bad = ids[(ids < 0) | (ids >= vocab)]
        if bad.size:
            raise ValueError(f"{what} token id {int(bad[0])} out of range for vocab_size {vocab}")
    n_sys, n_vis, n_txt = len(sys_ids), vision.shape[0], len(txt_ids)
    n = n_sys + n_vis + n_txt
    segments = np.concatenate([
        np.full(n_sys, Segment.SYSTEM), np.full(n_vis, Segment.VISION), np.full(n_txt, Segment.TEXT),
    ]).astype(np.int8)
    token_ids = np.concatenate([sys_ids, np.full(n_vis, -1, dtype=np.int64), txt_ids])
    embeddings = np.concatenate([table[sys_ids], vision, table[txt_ids]]).astype(np.float32)
    positions = np.arange(n, dtype=np.int64)
    return TokenSequence(positions.copy(), segments, positions, token_ids, embeddings)
