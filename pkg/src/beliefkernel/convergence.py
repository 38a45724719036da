"""Finite-sample diagnostics for weak, setwise and total-variation convergence.

All checks inspect a sequence at indices ``n_min..n_max`` and estimate
liminf/limsup by extrema over the tail window (the last quarter of the
sampled indices). A "consistent" verdict certifies that the sampled values
do not contradict the convergence mode; it is not a proof.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .config import DEFAULT_TOL, CapExceeded, get_cap
from .measures import (
    REAL_LINE,
    DistributionFunction,
    PiecewiseFunction,
    SignedMeasure,
    dirac,
    measure_of_set,
    total_variation_of_function,
    tv_distance,
)
from .sets import BorelSet, Interval, IntervalSet, PointSet, intersect_all, set_to_json, union_all

DISCLAIMER = (
    "finite-sample diagnostic: tail-window extrema estimate liminf/limsup; "
    "a consistent verdict does not prove convergence"
)

SQRT2 = math.sqrt(2.0)
MAX_CANTOR_LEVEL = 12


# sequences and reports

@dataclass(frozen=True)
class MeasureSequence:
    """Terms ``generator(n)`` for ``n_min <= n <= n_max`` and a limit candidate."""

    generator: Callable[[int], Any]
    limit: Any
    n_max: int
    n_min: int = 1
    name: str = ""

    def __post_init__(self):
        if self.n_max < self.n_min:
            raise ValueError("n_max must be at least n_min")

    def indices(self) -> range:
        return range(self.n_min, self.n_max + 1)

    def tail(self) -> range:
        idx = self.indices()
        width = max(1, math.ceil(0.25 * len(idx)))
        return idx[-width:]

    def head(self) -> range:
        idx = self.indices()
        width = max(1, math.ceil(0.25 * len(idx)))
        return idx[:width]

    def term(self, n: int):
        return self.generator(n)


@dataclass(frozen=True)
class BaseFamily:
    """A finite truncation of a countable base of open sets."""

    members: tuple
    labels: tuple = ()

    def __post_init__(self):
        members = tuple(self.members)
        object.__setattr__(self, "members", members)
        for B in members:
            if isinstance(B, IntervalSet) and not B.is_open():
                raise ValueError(f"base member {B!r} is not open")
        if not self.labels:
            object.__setattr__(self, "labels", tuple(repr(B) for B in members))

    @property
    def closed_under_intersection(self) -> bool:
        present = set(self.members)
        return all(a.intersection(b) in present for a, b in itertools.combinations(self.members, 2))

    def __len__(self) -> int:
        return len(self.members)


@dataclass
class ConvergenceReport:
    mode: str
    verdict: str = "consistent"
    entries: list = field(default_factory=list)
    witness: dict | None = None
    notes: list = field(default_factory=list)
    disclaimer: str = DISCLAIMER
    extra: dict = field(default_factory=dict)

    @property
    def consistent(self) -> bool:
        return self.verdict == "consistent"

    def entry(self, label: str) -> dict:
        for e in self.entries:
            if e["label"] == label:
                return e
        raise KeyError(label)

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "verdict": self.verdict,
            "entries": [_entry_json(e) for e in self.entries],
            "witness": _entry_json(self.witness) if self.witness else None,
            "notes": list(self.notes),
            "disclaimer": self.disclaimer,
            **({"extra": self.extra} if self.extra else {}),
        }


def _entry_json(e: dict) -> dict:
    out = {}
    for k, v in e.items():
        if k == "set":
            out[k] = set_to_json(v) if v is not None else None
        elif k == "values":
            out[k] = {str(n): x for n, x in v.items()}
        else:
            out[k] = v
    return out


def _finish(report: ConvergenceReport) -> ConvergenceReport:
    bad = [e for e in report.entries if not e["ok"]]
    if bad:
        worst = max(bad, key=lambda e: e["margin"])
        report.verdict = "violated"
        report.witness = {
            "label": worst["label"],
            "set": worst.get("set"),
            "kind": worst["kind"],
            "index_range": worst["tail"],
            "margin": worst["margin"],
            "limit_value": worst["limit_value"],
            "tail_liminf": worst["liminf"],
            "tail_limsup": worst["limsup"],
        }
    else:
        report.verdict = "consistent"
        report.witness = None
    return report


def _evaluate(seq: MeasureSequence, B: BorelSet) -> dict[int, float]:
    return {n: measure_of_set(seq.term(n), B) for n in seq.indices()}


def _set_entry(seq, B, kind: str, label: str, tol: float) -> dict:
    values = _evaluate(seq, B)
    limit_value = measure_of_set(seq.limit, B)
    tail = [values[n] for n in seq.tail()]
    lo, hi = min(tail), max(tail)
    if kind == "open":
        # liminf P_n(O) >= P(O)
        margin = limit_value - lo
    elif kind == "closed":
        # limsup P_n(C) <= P(C)
        margin = hi - limit_value
    else:
        margin = max(limit_value - lo, hi - limit_value)
    return {
        "label": label,
        "set": B,
        "kind": kind,
        "limit_value": limit_value,
        "values": values,
        "liminf": lo,
        "limsup": hi,
        "tail": [seq.tail()[0], seq.tail()[-1]],
        "margin": margin,
        "ok": margin <= tol,
    }


def _labels(sets, labels, prefix):
    if labels is None:
        return [f"{prefix}{i}" for i in range(len(sets))]
    if len(labels) != len(sets):
        raise ValueError("labels must match sets")
    return list(labels)


def portmanteau_weak_check(
    seq: MeasureSequence,
    opens: Sequence[BorelSet] = (),
    closeds: Sequence[BorelSet] = (),
    *,
    tol: float = DEFAULT_TOL,
    open_labels=None,
    closed_labels=None,
) -> ConvergenceReport:
    """Check liminf P_n(O) >= P(O) on opens and limsup P_n(C) <= P(C) on closeds."""
    if not opens and not closeds:
        raise ValueError("supply at least one open or closed set")
    report = ConvergenceReport(mode="weak")
    for B, lab in zip(opens, _labels(opens, open_labels, "open")):
        report.entries.append(_set_entry(seq, B, "open", lab, tol))
    for B, lab in zip(closeds, _labels(closeds, closed_labels, "closed")):
        report.entries.append(_set_entry(seq, B, "closed", lab, tol))
    return _finish(report)


def setwise_check(
    seq: MeasureSequence,
    sets: Sequence[BorelSet],
    *,
    tol: float = DEFAULT_TOL,
    labels=None,
) -> ConvergenceReport:
    """Check that P_n(B) stays within ``tol`` of P(B) over the tail window."""
    if not sets:
        raise ValueError("supply at least one set")
    report = ConvergenceReport(mode="setwise")
    for B, lab in zip(sets, _labels(sets, labels, "set")):
        report.entries.append(_set_entry(seq, B, "set", lab, tol))
    return _finish(report)


def tv_check(seq: MeasureSequence, *, tol: float = DEFAULT_TOL) -> ConvergenceReport:
    """Check dist(P_n, P) <= tol over the tail window."""
    report = ConvergenceReport(mode="tv")
    values = {}
    for n in seq.indices():
        term = seq.term(n)
        if isinstance(term, SignedMeasure):
            values[n] = tv_distance(term, seq.limit)
        elif isinstance(term, PiecewiseFunction) and isinstance(seq.limit, PiecewiseFunction):
            values[n] = total_variation_of_function(term - seq.limit)
        else:
            raise TypeError("tv mode needs finite measures or piecewise distribution functions")
    tail = [values[n] for n in seq.tail()]
    margin = max(tail)
    report.entries.append(
        {
            "label": "tv",
            "set": None,
            "kind": "tv",
            "limit_value": 0.0,
            "values": values,
            "liminf": min(tail),
            "limsup": max(tail),
            "tail": [seq.tail()[0], seq.tail()[-1]],
            "margin": margin,
            "ok": margin <= tol,
        }
    )
    return _finish(report)


def cdf_weak_check(
    seq: MeasureSequence,
    probes: Sequence[float],
    *,
    tol: float = DEFAULT_TOL,
    bound: Callable[[int], float] | None = None,
    jump_points: Sequence[float] | None = None,
) -> ConvergenceReport:
    """Compare F_n with the limit F at probe points where F is continuous.

    Probes at jumps of F are excluded and listed. With ``bound`` the check
    certifies ``sup_probes |F_n - F| <= bound(n) + tol`` for every sampled
    ``n``; without it the tail-window deviation must be below ``tol`` or at
    most half the head-window deviation.
    """
    F = seq.limit
    xs = np.asarray(probes, dtype=float)
    if xs.size == 0:
        raise ValueError("supply at least one probe point")
    if not np.all(np.isfinite(xs)):
        raise ValueError("probe points must be finite reals")
    if jump_points is not None:
        jumps = set(map(float, jump_points))
        is_jump = np.array([x in jumps for x in xs])
    elif hasattr(F, "jump"):
        is_jump = np.array([F.jump(float(x)) != 0.0 for x in xs])
    else:
        is_jump = np.zeros(xs.shape, dtype=bool)
    cont = xs[~is_jump]
    report = ConvergenceReport(mode="cdf")
    report.extra["excluded_probes"] = [float(x) for x in xs[is_jump]]
    if is_jump.any():
        report.notes.append(f"{int(is_jump.sum())} probe(s) at jumps of the limit excluded")
    if cont.size == 0:
        report.notes.append("no continuity probes left")
        return _finish(report)
    f_lim = _evaluate_many(F, cont)
    sup_dev = {}
    worst_probe = {}
    for n in seq.indices():
        dev = np.abs(_evaluate_many(seq.term(n), cont) - f_lim)
        k = int(np.argmax(dev))
        sup_dev[n] = float(dev[k])
        worst_probe[n] = float(cont[k])
    tail = [sup_dev[n] for n in seq.tail()]
    head = [sup_dev[n] for n in seq.head()]
    if bound is not None:
        excess = {n: sup_dev[n] - bound(n) for n in seq.indices()}
        n_worst = max(excess, key=excess.get)
        margin = excess[n_worst]
        ok = margin <= tol
        report.extra["bound"] = {str(n): bound(n) for n in seq.indices()}
    else:
        margin = max(tail)
        ok = margin <= tol or margin <= 0.5 * max(head)
        n_worst = max(seq.tail(), key=sup_dev.get)
    report.entries.append(
        {
            "label": "sup_probes|F_n-F|",
            "set": None,
            "kind": "cdf",
            "limit_value": 0.0,
            "values": sup_dev,
            "liminf": min(tail),
            "limsup": max(tail),
            "tail": [seq.tail()[0], seq.tail()[-1]],
            "margin": margin,
            "ok": bool(ok),
            "worst_probe": worst_probe[n_worst],
            "worst_index": n_worst,
            "continuity_probes": int(cont.size),
        }
    )
    return _finish(report)


def _evaluate_many(F, xs: np.ndarray) -> np.ndarray:
    if hasattr(F, "evaluate"):
        return np.asarray(F.evaluate(xs), dtype=float)
    if isinstance(F, SignedMeasure):
        F = _cdf(F)
    return np.array([F(float(x)) for x in xs])


def _cdf(m):
    from .measures import cdf_of_measure

    return cdf_of_measure(m)


def _union_count(m: int, k: int) -> int:
    return sum(math.comb(m, i) for i in range(1, min(k, m) + 1))


def base_criterion_weak(
    seq: MeasureSequence,
    base: BaseFamily,
    union_arity: int,
    *,
    tol: float = DEFAULT_TOL,
) -> ConvergenceReport:
    """Liminf test on every union of at most ``union_arity`` base members."""
    if union_arity < 1:
        raise ValueError("union_arity must be at least 1")
    cap = get_cap("composite_sets")
    count = _union_count(len(base), union_arity)
    if count > cap:
        raise CapExceeded("composite_sets", cap, count)
    report = ConvergenceReport(mode="base-weak")
    for r in range(1, min(union_arity, len(base)) + 1):
        for combo in itertools.combinations(range(len(base)), r):
            U = union_all([base.members[i] for i in combo])
            label = " ∪ ".join(base.labels[i] for i in combo)
            report.entries.append(_set_entry(seq, U, "open", label, tol))
    report.extra["unions_checked"] = count
    return _finish(report)


def base_criterion_setwise(
    seq: MeasureSequence,
    base: BaseFamily,
    closed_covers: Sequence[tuple[BorelSet, Sequence[BorelSet]]] | Mapping,
    *,
    union_arity: int = 1,
    tol: float = DEFAULT_TOL,
) -> ConvergenceReport:
    """Setwise criterion: base unions plus covered closed sets.

    Each closed set ``B`` comes with a finite prefix ``B_1..B_m`` of a cover by
    measurable subsets. The coverage deficit ``P(B) - P(B_1 ∪ ... ∪ B_m)`` is
    reported, and the liminf test is applied to every partial union and to
    ``B`` itself.
    """
    if isinstance(closed_covers, Mapping):
        closed_covers = list(closed_covers.items())
    weak = base_criterion_weak(seq, base, union_arity, tol=tol)
    report = ConvergenceReport(mode="base-setwise", entries=list(weak.entries))
    cap = get_cap("composite_sets")
    total = sum(len(c) for _, c in closed_covers)
    if total > cap:
        raise CapExceeded("composite_sets", cap, total)
    deficits = []
    for ci, (B, cover) in enumerate(closed_covers):
        if not cover:
            raise ValueError(f"closed set {ci} has an empty cover prefix")
        for j, Bj in enumerate(cover):
            if not Bj.issubset(B):
                raise ValueError(f"cover member {j} of closed set {ci} is not inside it")
        U = cover[0]
        for j, Bj in enumerate(cover):
            if j:
                U = U.union(Bj)
            report.entries.append(_set_entry(seq, U, "open", f"closed{ci}: B_1..B_{j + 1}", tol))
        for e in report.entries[-len(cover):]:
            e["kind"] = "cover-union"
        concl = _set_entry(seq, B, "open", f"closed{ci}", tol)
        concl["kind"] = "closed-liminf"
        report.entries.append(concl)
        deficits.append(
            {
                "closed_set": ci,
                "limit_deficit": measure_of_set(seq.limit, B) - measure_of_set(seq.limit, U),
                "tail_max_deficit": max(
                    measure_of_set(seq.term(n), B) - measure_of_set(seq.term(n), U) for n in seq.tail()
                ),
            }
        )
    report.extra["coverage"] = deficits
    return _finish(report)


# inclusion-exclusion

def _popcount(x: int) -> int:
    return bin(x).count("1")


def _signed_submask_sum(values: dict[int, float], mask: int) -> float:
    terms = []
    sub = mask
    while sub:
        sign = 1.0 if _popcount(sub) % 2 else -1.0
        terms.append(sign * values[sub])
        sub = (sub - 1) & mask
    return math.fsum(terms)


def inclusion_exclusion_transfer(
    measures: Sequence[Any],
    sets: Sequence[BorelSet],
    *,
    tol: float = DEFAULT_TOL,
) -> bool:
    """Check that intersection values and union values determine each other.

    For every measure and every nonempty subfamily the union value must equal
    the alternating sum of intersection values, and vice versa. Treating the
    last measure as the limit, the deviations must also transfer: a union
    deviation is at most ``2^|L'| - 1`` times the largest intersection
    deviation over subfamilies of ``L'``, and conversely.
    """
    if len(sets) > 10:
        raise ValueError("at most 10 sets are supported")
    if not measures or not sets:
        raise ValueError("need at least one measure and one set")
    N = len(sets)
    masks = range(1, 1 << N)
    members = {m: [sets[i] for i in range(N) if m >> i & 1] for m in masks}
    inter_sets = {m: intersect_all(members[m]) for m in masks}
    union_sets = {m: union_all(members[m]) for m in masks}
    inter_vals, union_vals = [], []
    for mu in measures:
        iv = {m: measure_of_set(mu, inter_sets[m]) for m in masks}
        uv = {m: measure_of_set(mu, union_sets[m]) for m in masks}
        for m in masks:
            if abs(uv[m] - _signed_submask_sum(iv, m)) > tol:
                return False
            if abs(iv[m] - _signed_submask_sum(uv, m)) > tol:
                return False
        inter_vals.append(iv)
        union_vals.append(uv)
    lim_i, lim_u = inter_vals[-1], union_vals[-1]
    for iv, uv in zip(inter_vals[:-1], union_vals[:-1]):
        di = {m: abs(iv[m] - lim_i[m]) for m in masks}
        du = {m: abs(uv[m] - lim_u[m]) for m in masks}
        for m in masks:
            subs = [s for s in masks if s & m == s]
            factor = (1 << _popcount(m)) - 1
            if du[m] > factor * max(di[s] for s in subs) + tol:
                return False
            if di[m] > factor * max(du[s] for s in subs) + tol:
                return False
    return True


# Cantor construction

@lru_cache(maxsize=None)
def _cantor_pieces(n: int) -> tuple[tuple[Fraction, ...], tuple[Fraction, ...], tuple[str, ...]]:
    if n == 0:
        return (Fraction(0), Fraction(1)), (Fraction(0), Fraction(1)), ("linear",)
    xs, vs, ks = _cantor_pieces(n - 1)
    third, half = Fraction(1, 3), Fraction(1, 2)
    left_x = tuple(x * third for x in xs)
    left_v = tuple(v * half for v in vs)
    right_x = tuple(Fraction(2, 3) + x * third for x in xs)
    right_v = tuple(half + v * half for v in vs)
    return left_x + right_x, left_v + right_v, ks + ("constant",) + ks


@lru_cache(maxsize=32)
def cantor_sequence(n: int) -> DistributionFunction:
    """The n-th piecewise-linear iterate converging to the Cantor function.

    ``F_0(x) = x`` on [0, 1]; ``F_{n+1}`` equals ``F_n(3x)/2`` below 1/3,
    1/2 on [1/3, 2/3] and ``1/2 + F_n(3x - 2)/2`` above 2/3.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n > 16:
        raise ValueError("cantor iterates are supported up to n = 16")
    xs, vs, ks = _cantor_pieces(n)
    return _FastCDF([float(x) for x in xs], [float(v) for v in vs], ks)


class _FastCDF(DistributionFunction):
    """Continuous distribution function with vectorized evaluation."""

    __slots__ = ()

    def evaluate(self, xs) -> np.ndarray:
        return np.interp(np.asarray(xs, dtype=float), self.breakpoints, self.values)


def _cantor_triadic(j: int, m: int) -> float:
    # C(j / 3**m) from the ternary digits of j
    out = 0.0
    for i in range(m):
        d = (j // 3 ** (m - 1 - i)) % 3
        if d == 1:
            return out + 0.5 ** (i + 1)
        if d == 2:
            out += 0.5 ** (i + 1)
    return out


def cantor_function(x: float) -> float:
    """The Cantor function, exact at floats that round triadic rationals."""
    if x <= 0:
        return 0.0
    if x >= 1:
        return 1.0
    for m in range(1, 34):
        j = round(x * 3**m)
        if j / 3**m == x:
            return _cantor_triadic(j, m)
    r = Fraction(x)
    out = Fraction(0)
    for i in range(1, 64):
        r *= 3
        d = math.floor(r)
        r -= d
        if d == 1:
            return float(out + Fraction(1, 2**i))
        if d == 2:
            out += Fraction(1, 2**i)
    return float(out)


class CantorDistribution:
    """Distribution function of the Cantor measure (continuous, no atoms)."""

    def __call__(self, x: float) -> float:
        return cantor_function(x)

    def left_limit(self, x: float) -> float:
        return cantor_function(x)

    def jump(self, x: float) -> float:
        return 0.0

    def evaluate(self, xs) -> np.ndarray:
        return np.array([cantor_function(float(x)) for x in np.asarray(xs, dtype=float).ravel()])

    def __repr__(self) -> str:
        return "CantorDistribution()"


@lru_cache(maxsize=None)
def _cover_endpoints(k: int) -> tuple[tuple[Fraction, Fraction], ...]:
    if k == 0:
        return ((Fraction(0), Fraction(1)),)
    out = []
    for a, b in _cover_endpoints(k - 1):
        w = (b - a) / 3
        out.append((a, a + w))
        out.append((b - w, b))
    return tuple(out)


def cantor_cover_intervals(k: int) -> list[IntervalSet]:
    """The 2^k closed triadic intervals of length 3^-k covering the Cantor set."""
    if not 0 <= k <= MAX_CANTOR_LEVEL:
        raise ValueError(f"cover level must be in [0, {MAX_CANTOR_LEVEL}]")
    return [IntervalSet.closed(float(a), float(b)) for a, b in _cover_endpoints(k)]


def cantor_cover(k: int) -> IntervalSet:
    if not 0 <= k <= MAX_CANTOR_LEVEL:
        raise ValueError(f"cover level must be in [0, {MAX_CANTOR_LEVEL}]")
    return IntervalSet(Interval(float(a), float(b), True, True) for a, b in _cover_endpoints(k))


def cantor_measure_sequence(n_max: int = 10, n_min: int = 1) -> MeasureSequence:
    return MeasureSequence(cantor_sequence, CantorDistribution(), n_max, n_min, name="cantor")


# point masses

def point_mass_sequence(n: int):
    """Dirac mass at sqrt(2) + 1/n."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return dirac(REAL_LINE, SQRT2 + 1.0 / n)


def point_mass_limit():
    return dirac(REAL_LINE, SQRT2)


def point_mass_measure_sequence(n_max: int = 400) -> MeasureSequence:
    return MeasureSequence(point_mass_sequence, point_mass_limit(), n_max, name="point-mass")


def rational_interval_base(endpoints: Sequence[Fraction | float], include_trivial: bool = True) -> BaseFamily:
    """Open intervals between the given (rational) endpoints, plus ∅ and the real line."""
    pts = sorted(set(Fraction(p) for p in endpoints))
    members, labels = [], []
    if include_trivial:
        members += [IntervalSet.empty(), IntervalSet.real_line()]
        labels += ["∅", "R"]
    for a, b in itertools.combinations(pts, 2):
        members.append(IntervalSet.open(float(a), float(b)))
        labels.append(f"({a}, {b})")
    return BaseFamily(tuple(members), tuple(labels))
