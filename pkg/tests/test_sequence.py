import numpy as np
import pytest

from v2drop.errors import ShapeError
from v2drop.runtime import Segment, assemble_sequence


def table(vocab=16, d=8):
    return np.arange(vocab * d, dtype=np.float32).reshape(vocab, d)


def test_layout():
    vis = np.random.default_rng(0).normal(size=(4, 8)).astype(np.float32)
    seq = assemble_sequence([1, 2], vis, [3, 4, 5], table())
    assert len(seq) == 9
    np.testing.assert_array_equal(seq.positions, np.arange(9))
    assert list(np.flatnonzero(seq.segments == Segment.VISION)) == [2, 3, 4, 5]
    assert seq.counts() == {"system": 2, "vision": 4, "text": 3}
    assert seq.embeddings[2:6].tobytes() == vis.tobytes()
    np.testing.assert_array_equal(seq.embeddings[0], table()[1])
    assert seq.vision_start == 2


def test_no_vision():
    seq = assemble_sequence([1], np.zeros((0, 8)), [2], table())
    assert seq.n_vision == 0 and len(seq) == 2


def test_errors():
    with pytest.raises(ValueError, match="out of range"):
        assemble_sequence([16], np.zeros((0, 8)), [], table())
    with pytest.raises(ShapeError):
        assemble_sequence([], np.zeros((2, 7)), [], table())
