"""Portable, bit-reproducible pseudo-random numbers.

Algorithm (frozen, any change alters every generated weight file):

* ``splitmix64(seed, i)`` is the i-th output (0-based) of the standard
  SplitMix64 generator started at ``seed``: ``x = seed + (i + 1) * 0x9E3779B97F4A7C15``
  followed by the usual xor-shift-multiply finalizer.
* :class:`Xoshiro256` runs ``lanes`` independent xoshiro256** generators side
  by side. Lane ``j`` state word ``w`` is ``splitmix64(seed, 4*j + w)``.
  One *step* advances every lane once; outputs are laid out step-major, so
  value ``i`` of a draw comes from lane ``i % lanes`` at step ``i // lanes``.
  Each draw consumes ``ceil(n / lanes)`` whole steps; surplus values are
  discarded.
* ``uniform`` maps a 64-bit output ``x`` to ``(x >> 11) * 2**-53`` in [0, 1).
* ``normal`` uses Box-Muller on consecutive uniform pairs ``(u1, u2)``:
  ``sqrt(-2 ln(1 - u1)) * cos(2 pi u2)``.
* ``below(bound)`` buffers one whole step and hands its lane values out in
  lane order; values ``>= 2**64 - (2**64 % bound)`` are rejected to remove
  modulo bias.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _rotl(x: np.ndarray, k: int) -> np.ndarray:
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


def splitmix64(seed: int, index) -> np.ndarray:
    """Vectorized SplitMix64: outputs ``index`` (array of ints) of the stream at ``seed``."""
    idx = np.atleast_1d(np.asarray(index, dtype=np.uint64))
    with np.errstate(over="ignore"):
        z = np.uint64(seed & MASK64) + (idx + np.uint64(1)) * GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


class Xoshiro256:
    """``lanes`` parallel xoshiro256** streams seeded through SplitMix64."""

    def __init__(self, seed: int, lanes: int = 64):
        if lanes < 1:
            raise ValueError("lanes must be >= 1")
        self.seed = int(seed) & MASK64
        self.lanes = lanes
        words = splitmix64(self.seed, np.arange(4 * lanes)).reshape(lanes, 4)
        self._s = [words[:, w].copy() for w in range(4)]
        self._pending: list[int] = []

    def _step(self) -> np.ndarray:
        s0, s1, s2, s3 = self._s
        with np.errstate(over="ignore"):
            result = _rotl(s1 * np.uint64(5), 7) * np.uint64(9)
        t = s1 << np.uint64(17)
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        self._s[3] = _rotl(s3, 45)
        return result

    def next_u64(self, n: int) -> np.ndarray:
        steps = -(-n // self.lanes)
        if steps == 0:
            return np.zeros(0, dtype=np.uint64)
        out = np.stack([self._step() for _ in range(steps)])
        return out.reshape(-1)[:n]

    def uniform(self, n: int) -> np.ndarray:
        return (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)

    def normal(self, n: int) -> np.ndarray:
        u = self.uniform(2 * n)
        u1, u2 = u[0::2], u[1::2]
        return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)

    def _scalar(self) -> int:
        if not self._pending:
            self._pending = [int(v) for v in self.next_u64(self.lanes)][::-1]
        return self._pending.pop()

    def below(self, bound: int) -> int:
        """Unbiased integer in ``[0, bound)``."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        limit = (1 << 64) - ((1 << 64) % bound)
        while True:
            x = self._scalar()
            if x < limit:
                return x % bound
