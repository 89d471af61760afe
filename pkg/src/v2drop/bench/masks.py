"""Retention-mask images: binary PGM (P5) plus a '#'/'.' text grid."""
from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence, Tuple, Union

from ..errors import ShapeError

RETAINED = 255
DROPPED = 128


def default_grid(m: int) -> Tuple[int, int]:
    side = math.isqrt(m)
    return (side, side) if side * side == m else (m, 1)


def _as_bits(mask: Union[str, Sequence]) -> list:
    if isinstance(mask, str):
        return [c == "1" for c in mask]
    return [bool(b) for b in mask]


def pgm_bytes(mask, grid_w: int, grid_h: int) -> bytes:
    bits = _as_bits(mask)
    if grid_w * grid_h != len(bits):
        raise ShapeError(f"grid {grid_w}x{grid_h} does not cover {len(bits)} tokens")
    header = f"P5\n{grid_w} {grid_h}\n255\n".encode("ascii")
    return header + bytes(RETAINED if b else DROPPED for b in bits)


def text_grid(mask, grid_w: int, grid_h: int) -> str:
    bits = _as_bits(mask)
    if grid_w * grid_h != len(bits):
        raise ShapeError(f"grid {grid_w}x{grid_h} does not cover {len(bits)} tokens")
    rows = ("".join("#" if b else "." for b in bits[r * grid_w:(r + 1) * grid_w]) for r in range(grid_h))
    return "\n".join(rows) + "\n"


def emit_mask(mask, grid_w: int, grid_h: int, path) -> Path:
    """Write ``path`` (PGM) and ``path`` with a ``.txt`` suffix; returns the text path."""
    path = Path(path)
    data = pgm_bytes(mask, grid_w, grid_h)
    txt = text_grid(mask, grid_w, grid_h)
    path.write_bytes(data)
    txt_path = path.with_suffix(".txt")
    txt_path.write_text(txt, encoding="ascii")
    return txt_path
