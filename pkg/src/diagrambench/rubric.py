"""Scoring mathematics for the three-criterion diagram rubric.

C1 (logical organization) is a weighted blend of three 1..5 subscores,
rounded half to odd. C2 (connectivity) is a holistic human/LLM judgment
and is only range-checked here. C3 (layout aesthetic) is derived from a
seven-flag layout-issue checklist.

All arithmetic is exact: the C1 weights (0.6, 0.3, 0.1) are handled in
integer tenths so .5 ties are hit exactly, never approximated by binary
floats.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from fractions import Fraction

SCORE_MIN = 1
SCORE_MAX = 5
SCORE_SCALE = tuple(range(SCORE_MIN, SCORE_MAX + 1))

# C1 weights as integer tenths: 0.6*L1 + 0.3*L2 + 0.1*L3.
_C1_WEIGHTS_TENTHS = (6, 3, 1)


class ScoreRangeError(ValueError):
    """A score fell outside the 1..5 rubric scale."""


def _check_score(name: str, value) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise ScoreRangeError(f"{name} must be an integer in 1..5, got {value!r}")
    if not SCORE_MIN <= value <= SCORE_MAX:
        raise ScoreRangeError(f"{name} must be in 1..5, got {value}")
    return value


def round_half_to_odd(x) -> int:
    """Round to the nearest integer; exact .5 ties go to the odd neighbor.

    Accepts int, Fraction, or float (floats are converted exactly, and a
    binary float can only represent a .5 tie exactly, so tie detection is
    safe). Requires x >= 0.
    """
    if isinstance(x, float):
        x = Fraction(x)
    else:
        x = Fraction(x)
    if x < 0:
        raise ValueError(f"round_half_to_odd requires x >= 0, got {x}")
    whole, frac = divmod(x, 1)
    whole = int(whole)
    half = Fraction(1, 2)
    if frac < half:
        return whole
    if frac > half:
        return whole + 1
    # Tie: one of the two neighbors is always odd.
    return whole if whole % 2 == 1 else whole + 1


def compute_c1(l1: int, l2: int, l3: int) -> int:
    """Weighted logical-organization score: 0.6*L1 + 0.3*L2 + 0.1*L3, rounded half to odd."""
    _check_score("L1", l1)
    _check_score("L2", l2)
    _check_score("L3", l3)
    tenths = _C1_WEIGHTS_TENTHS[0] * l1 + _C1_WEIGHTS_TENTHS[1] * l2 + _C1_WEIGHTS_TENTHS[2] * l3
    return round_half_to_odd(Fraction(tenths, 10))


@dataclass(frozen=True)
class LayoutChecklist:
    """Presence flags for the seven layout issues behind the C3 grade.

    k1 line crossings or excessive bends; k2 obscured elements; k3 elements
    incomprehensible due to color, size, or shape; k4 asymmetry; k5 vertical
    or horizontal misalignment; k6 excessive width; k7 dishomogeneous
    appearance.
    """

    k1: bool = False
    k2: bool = False
    k3: bool = False
    k4: bool = False
    k5: bool = False
    k6: bool = False
    k7: bool = False

    def __post_init__(self):
        for f in fields(self):
            if not isinstance(getattr(self, f.name), bool):
                raise TypeError(f"{f.name} must be a bool")

    def count(self) -> int:
        return sum(getattr(self, f.name) for f in fields(self))

    def as_tuple(self) -> tuple[bool, ...]:
        return tuple(getattr(self, f.name) for f in fields(self))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "LayoutChecklist":
        return cls(**{f.name: bool(d[f.name]) for f in fields(cls)})

    @classmethod
    def from_flags(cls, flags) -> "LayoutChecklist":
        flags = list(flags)
        if len(flags) != 7:
            raise ValueError(f"expected exactly 7 layout flags, got {len(flags)}")
        return cls(*(bool(f) for f in flags))


def compute_c3(flags) -> int:
    """Layout-aesthetic grade from the issue count s over the 7 flags.

    s=0 -> 5; 1<=s<3 -> 4; s=3 -> 3; s=4 -> 2; s>4 -> 1.
    """
    if not isinstance(flags, LayoutChecklist):
        flags = LayoutChecklist.from_flags(flags)
    s = flags.count()
    if s < 1:
        return 5
    if s < 3:
        return 4
    if s == 3:
        return 3
    if s == 4:
        return 2
    return 1


def validate_c2(score: int) -> int:
    """Range-check the holistic connectivity score; no computation is defined for it."""
    return _check_score("C2", score)


def c1_test_vectors() -> list[dict]:
    """All 125 (L1, L2, L3) triples with their expected C1."""
    return [
        {"l1": l1, "l2": l2, "l3": l3, "c1": compute_c1(l1, l2, l3)}
        for l1 in SCORE_SCALE
        for l2 in SCORE_SCALE
        for l3 in SCORE_SCALE
    ]


def c3_test_vectors() -> list[dict]:
    """All 128 flag combinations with their expected C3."""
    vectors = []
    for bits in range(128):
        flags = [bool(bits >> i & 1) for i in range(7)]
        vectors.append({"flags": flags, "c3": compute_c3(flags)})
    return vectors


def export_test_vectors() -> dict:
    """Shared C1/C3 vectors consumed by client implementations for formula parity."""
    return {"c1": c1_test_vectors(), "c3": c3_test_vectors()}
