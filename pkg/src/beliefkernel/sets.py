"""Finite representations of Borel sets.

Two concrete kinds are supported: :class:`IntervalSet`, a normalized finite
union of intervals on the real line, and :class:`PointSet`, an explicit
subset of a finite space.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

__all__ = [
    "Interval",
    "IntervalSet",
    "PointSet",
    "BorelSet",
    "contains",
    "set_from_json",
    "set_to_json",
]


@dataclass(frozen=True, order=True)
class Interval:
    lo: float
    hi: float
    lo_closed: bool = False
    hi_closed: bool = False

    def is_empty(self) -> bool:
        if self.lo > self.hi:
            return True
        if self.lo == self.hi:
            return not (self.lo_closed and self.hi_closed) or math.isinf(self.lo)
        return False

    def __contains__(self, x: float) -> bool:
        if x < self.lo or x > self.hi:
            return False
        if x == self.lo and not self.lo_closed:
            return False
        if x == self.hi and not self.hi_closed:
            return False
        return True

    def intersect(self, other: "Interval") -> "Interval":
        if self.lo > other.lo:
            lo, lo_closed = self.lo, self.lo_closed
        elif self.lo < other.lo:
            lo, lo_closed = other.lo, other.lo_closed
        else:
            lo, lo_closed = self.lo, self.lo_closed and other.lo_closed
        if self.hi < other.hi:
            hi, hi_closed = self.hi, self.hi_closed
        elif self.hi > other.hi:
            hi, hi_closed = other.hi, other.hi_closed
        else:
            hi, hi_closed = self.hi, self.hi_closed and other.hi_closed
        return Interval(lo, hi, lo_closed, hi_closed)

    def __repr__(self) -> str:
        left = "[" if self.lo_closed else "("
        right = "]" if self.hi_closed else ")"
        return f"{left}{self.lo!r}, {self.hi!r}{right}"


def _touching(a: Interval, b: Interval) -> bool:
    # a sorted before b; True if a ∪ b is a single interval
    if b.lo < a.hi:
        return True
    if b.lo == a.hi:
        return a.hi_closed or b.lo_closed
    return False


def _normalize(intervals: Iterable[Interval]) -> tuple[Interval, ...]:
    items = sorted(
        (iv for iv in intervals if not iv.is_empty()),
        key=lambda iv: (iv.lo, not iv.lo_closed),
    )
    merged: list[Interval] = []
    for iv in items:
        if merged and _touching(merged[-1], iv):
            last = merged[-1]
            if iv.hi > last.hi:
                hi, hi_closed = iv.hi, iv.hi_closed
            elif iv.hi < last.hi:
                hi, hi_closed = last.hi, last.hi_closed
            else:
                hi, hi_closed = last.hi, last.hi_closed or iv.hi_closed
            merged[-1] = Interval(last.lo, hi, last.lo_closed, hi_closed)
        else:
            merged.append(iv)
    return tuple(merged)


class IntervalSet:
    """A finite union of intervals on the real line, kept disjoint and sorted."""

    __slots__ = ("intervals",)

    def __init__(self, intervals: Iterable[Interval] = ()):
        self.intervals = _normalize(intervals)

    # constructors
    @classmethod
    def empty(cls) -> "IntervalSet":
        return cls(())

    @classmethod
    def real_line(cls) -> "IntervalSet":
        return cls([Interval(-math.inf, math.inf)])

    @classmethod
    def open(cls, lo: float, hi: float) -> "IntervalSet":
        return cls([Interval(lo, hi, False, False)])

    @classmethod
    def closed(cls, lo: float, hi: float) -> "IntervalSet":
        return cls([Interval(lo, hi, True, True)])

    @classmethod
    def half_line(cls, x: float) -> "IntervalSet":
        """The set (-inf, x]."""
        return cls([Interval(-math.inf, x, False, True)])

    @classmethod
    def points(cls, xs: Iterable[float]) -> "IntervalSet":
        return cls([Interval(x, x, True, True) for x in xs])

    # algebra
    def union(self, other: "IntervalSet") -> "IntervalSet":
        return IntervalSet(self.intervals + other.intervals)

    def intersection(self, other: "IntervalSet") -> "IntervalSet":
        return IntervalSet(a.intersect(b) for a in self.intervals for b in other.intervals)

    def complement(self) -> "IntervalSet":
        gaps = []
        lo, lo_closed = -math.inf, False
        for iv in self.intervals:
            gaps.append(Interval(lo, iv.lo, lo_closed, not iv.lo_closed))
            lo, lo_closed = iv.hi, not iv.hi_closed
        gaps.append(Interval(lo, math.inf, lo_closed, False))
        return IntervalSet(gaps)

    def difference(self, other: "IntervalSet") -> "IntervalSet":
        return self.intersection(other.complement())

    def issubset(self, other: "IntervalSet") -> bool:
        return self.difference(other).is_empty()

    def is_empty(self) -> bool:
        return not self.intervals

    def is_open(self) -> bool:
        return all(
            (not iv.lo_closed or math.isinf(iv.lo)) and (not iv.hi_closed or math.isinf(iv.hi))
            for iv in self.intervals
        )

    def is_closed(self) -> bool:
        return self.complement().is_open()

    def __contains__(self, x: Any) -> bool:
        try:
            x = float(x)
        except (TypeError, ValueError):
            return False
        return any(x in iv for iv in self.intervals)

    def __or__(self, other):
        return self.union(other)

    def __and__(self, other):
        return self.intersection(other)

    def __eq__(self, other) -> bool:
        return isinstance(other, IntervalSet) and self.intervals == other.intervals

    def __hash__(self) -> int:
        return hash(self.intervals)

    def __repr__(self) -> str:
        if not self.intervals:
            return "IntervalSet(∅)"
        return "IntervalSet(" + " ∪ ".join(map(repr, self.intervals)) + ")"


class PointSet:
    """An explicit subset of a finite space."""

    __slots__ = ("points",)

    def __init__(self, points: Iterable[Any] = ()):
        self.points = frozenset(points)

    def union(self, other: "PointSet") -> "PointSet":
        return PointSet(self.points | other.points)

    def intersection(self, other: "PointSet") -> "PointSet":
        return PointSet(self.points & other.points)

    def complement_in(self, universe: Iterable[Any]) -> "PointSet":
        return PointSet(p for p in universe if p not in self.points)

    def difference(self, other: "PointSet") -> "PointSet":
        return PointSet(self.points - other.points)

    def issubset(self, other: "PointSet") -> bool:
        return self.points <= other.points

    def is_empty(self) -> bool:
        return not self.points

    def __contains__(self, x: Any) -> bool:
        return x in self.points

    def __or__(self, other):
        return self.union(other)

    def __and__(self, other):
        return self.intersection(other)

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __eq__(self, other) -> bool:
        return isinstance(other, PointSet) and self.points == other.points

    def __hash__(self) -> int:
        return hash(self.points)

    def __repr__(self) -> str:
        try:
            body = sorted(self.points)
        except TypeError:
            body = sorted(self.points, key=repr)
        return f"PointSet({body!r})"


BorelSet = IntervalSet | PointSet


def contains(B: BorelSet, x: Any) -> bool:
    return x in B


def union_all(sets: Sequence[BorelSet]) -> BorelSet:
    out = sets[0]
    for s in sets[1:]:
        out = out.union(s)
    return out


def intersect_all(sets: Sequence[BorelSet]) -> BorelSet:
    out = sets[0]
    for s in sets[1:]:
        out = out.intersection(s)
    return out


# JSON

def _num_to_json(x: float):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _num_from_json(x) -> float:
    if isinstance(x, str):
        return float(x)
    return float(x)


def set_to_json(B: BorelSet) -> dict:
    if isinstance(B, PointSet):
        try:
            pts = sorted(B.points)
        except TypeError:
            pts = sorted(B.points, key=repr)
        return {"points": [list(p) if isinstance(p, tuple) else p for p in pts]}
    return {
        "intervals": [
            [_num_to_json(iv.lo), _num_to_json(iv.hi), iv.lo_closed, iv.hi_closed]
            for iv in B.intervals
        ]
    }


def set_from_json(obj: dict) -> BorelSet:
    """Parse ``{"points": [...]}`` or ``{"intervals": [[lo, hi, lo_closed, hi_closed], ...]}``.

    Interval bounds may be the strings ``"inf"``/``"-inf"``; the closedness
    flags default to open.
    """
    if not isinstance(obj, dict):
        raise ValueError(f"set must be an object, got {type(obj).__name__}")
    if "points" in obj:
        return PointSet(tuple(p) if isinstance(p, list) else p for p in obj["points"])
    if "intervals" in obj:
        ivs = []
        for item in obj["intervals"]:
            if len(item) not in (2, 4):
                raise ValueError(f"interval must have 2 or 4 entries, got {item!r}")
            lo, hi = _num_from_json(item[0]), _num_from_json(item[1])
            flags = (bool(item[2]), bool(item[3])) if len(item) == 4 else (False, False)
            ivs.append(Interval(lo, hi, *flags))
        return IntervalSet(ivs)
    raise ValueError("set object needs a 'points' or 'intervals' field")
