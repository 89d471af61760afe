"""Drop schedules: parsing, resolution to absolute counts, equivalent token count.

A schedule is a list of stages. Each stage fires after its (1-based) layer
and keeps either an absolute number of vision tokens (``layer=K``) or prunes
a fraction of the tokens still present (``layer:ratio``).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

from ..errors import ConfigError
from .selection import ClampWarning

# Three-stage schedules over a 32-layer accounting depth for M=576 that give
# the 192 / 128 / 64 average-retained-token budgets.
CANONICAL_SCHEDULES = {
    "192": "3:0.50,17:0.70,22:1.00",
    "128": "3:0.72,17:0.75,22:1.00",
    "64": "3:0.95,17:0.95,22:1.00",
}
DEFAULT_LAYERS = (3, 17, 22)


@dataclass(frozen=True)
class Stage:
    layer: int
    ratio: Optional[Fraction] = None
    count: Optional[int] = None

    def __post_init__(self):
        if (self.ratio is None) == (self.count is None):
            raise ConfigError("a stage needs exactly one of ratio or count")
        if self.layer < 1:
            raise ConfigError(f"stage layer must be >= 1 (1-based), got {self.layer}")
        if self.ratio is not None and not (0 <= self.ratio <= 1):
            raise ConfigError(f"prune ratio must lie in [0, 1], got {float(self.ratio)}")
        if self.count is not None and self.count < 0:
            raise ConfigError(f"stage count must be >= 0, got {self.count}")

    def __str__(self) -> str:
        if self.ratio is not None:
            return f"{self.layer}:{_fmt_ratio(self.ratio)}"
        return f"{self.layer}={self.count}"


def _fmt_ratio(r: Fraction) -> str:
    return format(float(r), "g")


@dataclass(frozen=True)
class DropSchedule:
    stages: Tuple[Stage, ...]
    total_llm_layers: int = 32

    def __post_init__(self):
        layers = [s.layer for s in self.stages]
        if any(b <= a for a, b in zip(layers, layers[1:])):
            raise ConfigError(f"stage layers must be strictly increasing, got {layers}")
        if layers and layers[-1] > self.total_llm_layers:
            raise ConfigError(f"stage layer {layers[-1]} exceeds total_llm_layers={self.total_llm_layers}")

    @classmethod
    def parse(cls, text: str, total_llm_layers: int = 32) -> "DropSchedule":
        """Parse ``"3:0.5,17:0.7,22:1.0"`` (ratios) or ``"3=288,17=86"`` (counts); forms may mix."""
        text = CANONICAL_SCHEDULES.get(text.strip(), text)
        stages = []
        for item in filter(None, (part.strip() for part in text.split(","))):
            try:
                if ":" in item:
                    layer, ratio = item.split(":", 1)
                    stages.append(Stage(int(layer), ratio=Fraction(ratio.strip())))
                elif "=" in item:
                    layer, count = item.split("=", 1)
                    stages.append(Stage(int(layer), count=int(count)))
                else:
                    raise ValueError
            except ValueError:
                raise ConfigError(f"bad schedule stage {item!r}; expected layer:ratio or layer=K") from None
        return cls(tuple(stages), total_llm_layers)

    @property
    def layers(self) -> List[int]:
        return [s.layer for s in self.stages]

    def __str__(self) -> str:
        return ",".join(str(s) for s in self.stages)


def round_half_away(x: Fraction) -> int:
    # counts are never negative, so half-away-from-zero is floor(x + 1/2)
    return int(x + Fraction(1, 2)) if x >= 0 else -int(-x + Fraction(1, 2))


def resolve_schedule(schedule: DropSchedule, initial_vision_count: int) -> List[Tuple[int, int]]:
    """Absolute vision-token budget after each stage, as ``[(layer, K), ...]``.

    Ratios apply to the count left by the previous stage and are rounded
    half away from zero using exact decimal arithmetic.
    """
    current = int(initial_vision_count)
    out = []
    for stage in schedule.stages:
        if stage.ratio is not None:
            k = round_half_away((1 - stage.ratio) * current)
        else:
            k = stage.count
            if k > current:
                warnings.warn(f"stage {stage}: K={k} exceeds {current} vision tokens; clamped",
                              ClampWarning, stacklevel=2)
                k = current
        out.append((stage.layer, k))
        current = k
    return out


def resolve_schedule_exact(schedule: DropSchedule, initial_vision_count: int) -> List[Tuple[int, float]]:
    """Like :func:`resolve_schedule` but without rounding ratio stages (e.g. 288 -> 86.4)."""
    current = Fraction(initial_vision_count)
    out = []
    for stage in schedule.stages:
        k = (1 - stage.ratio) * current if stage.ratio is not None else min(Fraction(stage.count), current)
        out.append((stage.layer, float(k)))
        current = k
    return out


def equivalent_token_count(resolved: Sequence[Tuple[int, float]], initial_vision_count: float,
                           total_llm_layers: int) -> float:
    """Layer-averaged vision count: layers 1..l1 see M, l1+1..l2 see K1, and so on."""
    total = 0.0
    prev_layer, current = 0, float(initial_vision_count)
    for layer, k in resolved:
        if not 1 <= layer <= total_llm_layers:
            raise ConfigError(f"stage layer {layer} outside [1, {total_llm_layers}]")
        total += (layer - prev_layer) * current
        prev_layer, current = layer, float(k)
    total += (total_llm_layers - prev_layer) * current
    return total / total_llm_layers


def matched_one_time_schedule(reference: DropSchedule, initial_vision_count: int,
                              layer: Optional[int] = None) -> DropSchedule:
    """Single-stage schedule at ``layer`` whose equivalent count matches ``reference`` within 1 token.

    ``layer`` defaults to the reference's first stage layer.
    """
    m, total = initial_vision_count, reference.total_llm_layers
    if layer is None:
        if not reference.stages:
            raise ConfigError("reference schedule has no stages")
        layer = reference.stages[0].layer
    if not 1 <= layer < total:
        raise ConfigError(f"one-time layer must lie in [1, {total - 1}]")
    target = equivalent_token_count(resolve_schedule(reference, m), m, total)
    k = round_half_away(Fraction(target * total - layer * m).limit_denominator(10**6) / (total - layer))
    k = min(max(k, 0), m)
    one = DropSchedule((Stage(layer, count=k),), total)
    got = equivalent_token_count(resolve_schedule(one, m), m, total)
    if abs(got - target) > 1:
        raise ConfigError(
            f"no single stage at layer {layer} matches equivalent count {target:.2f} (best {got:.2f})")
    return one
