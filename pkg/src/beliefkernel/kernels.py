"""Stochastic kernels on finite parameter sets: marginals, disintegration,
and continuity/equicontinuity diagnostics."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from .config import DEFAULT_TOL, CapExceeded, get_cap
from .convergence import (
    SQRT2,
    BaseFamily,
    ConvergenceReport,
    MeasureSequence,
    _finish,
    portmanteau_weak_check,
    setwise_check,
    tv_check,
)
from .measures import (
    REAL_LINE,
    MetricSpace,
    ProbMeasure,
    ProductSpace,
    RealLine,
    SignedMeasure,
    hahn_decompose,
)
from .sets import BorelSet, IntervalSet, PointSet, intersect_all, set_to_json


@dataclass(frozen=True)
class StochasticKernel:
    """A map from finitely many parameter points to probability measures.

    ``conventional`` lists parameters whose image was set by a convention
    rather than computed (e.g. disintegration on null atoms).
    """

    target: Any
    params: tuple
    table: Mapping
    conventional: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        missing = [s for s in self.params if s not in self.table]
        if missing:
            raise ValueError(f"no image measure for parameters {missing[:3]!r}")
        for s in self.params:
            m = self.table[s]
            if not isinstance(m, ProbMeasure):
                raise TypeError(f"image at {s!r} is not a ProbMeasure")
            if m.space != self.target:
                raise ValueError(f"image at {s!r} lives on {m.space!r}, not {self.target!r}")

    def __call__(self, s) -> ProbMeasure:
        return self.table[s]


@dataclass(frozen=True)
class JointKernel:
    """A stochastic kernel on a product S1 x S2 given finitely many parameters."""

    space1: Any
    space2: Any
    params: tuple
    table: Mapping

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        product = ProductSpace(self.space1, self.space2)
        for s in self.params:
            m = self.table[s]
            if m.space != product:
                raise ValueError(f"image at {s!r} is not on {product!r}")

    @property
    def product(self) -> ProductSpace:
        return ProductSpace(self.space1, self.space2)

    def __call__(self, s) -> ProbMeasure:
        return self.table[s]

    def mass(self, s, B: BorelSet | None = None, C: BorelSet | None = None) -> float:
        """P(B x C | s); ``None`` stands for the whole factor."""
        return rectangle_mass(self.table[s], B, C)

    def second_points(self) -> tuple:
        if isinstance(self.space2, MetricSpace):
            return self.space2.points
        seen = {}
        for s in self.params:
            for (_, s2), _w in self.table[s].atoms:
                seen.setdefault(s2, None)
        return tuple(seen)


def rectangle_mass(mu: SignedMeasure, B=None, C=None) -> float:
    return math.fsum(
        w for (s1, s2), w in mu.atoms if (B is None or s1 in B) and (C is None or s2 in C)
    )


def _first_marginal(mu: ProbMeasure, space1) -> ProbMeasure:
    acc: dict = {}
    for (s1, _), w in mu.atoms:
        acc[s1] = acc.get(s1, 0.0) + w
    return ProbMeasure(space1, list(acc.items()))


def marginal(J: JointKernel) -> StochasticKernel:
    """P'(C|s) = P(S1 x C | s)."""
    table = {}
    for s in J.params:
        acc: dict = {}
        for (_, s2), w in J(s).atoms:
            acc[s2] = acc.get(s2, 0.0) + w
        table[s] = ProbMeasure(J.space2, list(acc.items()))
    return StochasticKernel(J.space2, J.params, table)


def first_marginal(J: JointKernel) -> StochasticKernel:
    return StochasticKernel(J.space1, J.params, {s: _first_marginal(J(s), J.space1) for s in J.params})


def disintegrate(J: JointKernel) -> StochasticKernel:
    """Conditional kernel H on S1 given (s2, s) with P(B x C|s) = sum_{s2 in C} H(B|s2,s) P'({s2}|s).

    Where ``P'({s2}|s) = 0`` the S1-marginal of ``P(.|s)`` is used and the
    parameter ``(s2, s)`` is recorded in ``conventional``.
    """
    Pm = marginal(J)
    table, null = {}, set()
    for s in J.params:
        mu = J(s)
        prior = _first_marginal(mu, J.space1)
        for s2 in J.second_points():
            mass = Pm(s).weight(s2)
            if mass > 0:
                table[(s2, s)] = ProbMeasure(
                    J.space1, [(s1, w / mass) for (s1, t2), w in mu.atoms if t2 == s2]
                )
            else:
                table[(s2, s)] = prior
                null.add((s2, s))
    params = tuple(table)
    return StochasticKernel(J.space1, params, table, frozenset(null))


def compose(H: StochasticKernel, Pm: StochasticKernel, space1, space2) -> JointKernel:
    """Rebuild the joint kernel from a conditional kernel and a marginal."""
    table = {}
    for s in Pm.params:
        atoms: dict = {}
        for s2, m2 in Pm(s).atoms:
            if m2 <= 0:
                continue
            for s1, h in H((s2, s)).atoms:
                atoms[(s1, s2)] = atoms.get((s1, s2), 0.0) + h * m2
        table[s] = ProbMeasure(ProductSpace(space1, space2), list(atoms.items()))
    return JointKernel(space1, space2, Pm.params, table)


# equicontinuity

@dataclass
class EquicontinuityReport:
    family: str
    deviations: list
    worst: dict | None
    verdict: str
    threshold: float

    @property
    def equicontinuous(self) -> bool:
        return self.verdict == "equicontinuous"

    def to_json(self) -> dict:
        def conv(d):
            return {k: (set_to_json(v) if k in ("C", "B") and v is not None else v) for k, v in d.items()}

        return {
            "family": self.family,
            "verdict": self.verdict,
            "threshold": self.threshold,
            "deviations": [conv(d) for d in self.deviations],
            "worst": conv(self.worst) if self.worst else None,
        }


def sup_signed(d: SignedMeasure):
    """sup_C |d(C)| over all subsets of a finite support, with a maximizing set."""
    E, pos, neg = hahn_decompose(d)
    p, n = pos.total(), neg.total()
    if p >= n:
        return p, PointSet(pos.points)
    return n, PointSet(neg.points)


def _tail_slice(items: list) -> list:
    width = max(1, math.ceil(0.25 * len(items)))
    return items[-width:]


def _judge(family, rows, tol) -> EquicontinuityReport:
    if not rows:
        raise ValueError("need at least one parameter pair")
    worst = max(rows, key=lambda r: r["deviation"])
    tail = _tail_slice(rows)
    ok = max(r["deviation"] for r in tail) <= tol
    return EquicontinuityReport(
        family=family,
        deviations=rows,
        worst=dict(worst),
        verdict="equicontinuous" if ok else "not equicontinuous",
        threshold=tol,
    )


def equicontinuity_diagnostic(
    J: JointKernel,
    B: BorelSet | None,
    pairs: Sequence[tuple[Any, Any]],
    *,
    tol: float = DEFAULT_TOL,
) -> EquicontinuityReport:
    """Exact ``sup_C |P(B x C|s_n) - P(B x C|s)|`` along a convergent parameter sequence.

    ``pairs`` lists ``(s_n, s)`` in convergence order. The supremum over
    subsets C of the finite S2 is attained at a Hahn set. The verdict judges
    the last quarter of the pairs against ``tol``.
    """
    pts = J.second_points()
    rows = []
    for s_n, s in pairs:
        d = SignedMeasure(
            J.space2,
            [(s2, J.mass(s_n, B, PointSet([s2])) - J.mass(s, B, PointSet([s2]))) for s2 in pts],
        )
        dev, C = sup_signed(d)
        rows.append({"s_n": s_n, "s": s, "deviation": dev, "C": C, "B": B})
    return _judge(f"P_B, B={B!r}", rows, tol)


# continuity diagnostics

def _path_sequence(K, path) -> MeasureSequence:
    seq, limit = path
    seq = list(seq)
    for s in seq + [limit]:
        if s not in K.table:
            raise ValueError(f"path point {s!r} is outside the parameter set")
    return MeasureSequence(lambda n: K(seq[n - 1]), K(limit), len(seq))


def _all_subsets(space) -> list[PointSet]:
    pts = space.points
    if len(pts) > 12:
        raise CapExceeded("composite_sets", get_cap("composite_sets"), 2 ** len(pts))
    return [PointSet(c) for r in range(1, len(pts) + 1) for c in itertools.combinations(pts, r)]


def kernel_continuity_diagnostic(
    K: StochasticKernel,
    mode: str,
    paths: Sequence[tuple[Sequence, Any]],
    *,
    opens: Sequence[BorelSet] = (),
    closeds: Sequence[BorelSet] = (),
    sets: Sequence[BorelSet] = (),
    tol: float = DEFAULT_TOL,
) -> ConvergenceReport:
    """Run the mode's sequence check on ``K(s_n)`` versus ``K(s)`` for each path.

    A path is a pair ``(sequence, limit)``. On a finite target space with no
    sets supplied every subset is tested (finite metric spaces are discrete).
    """
    if mode not in ("weak", "setwise", "tv"):
        raise ValueError(f"unknown mode {mode!r}")
    if not paths:
        raise ValueError("need at least one path")
    if mode != "tv" and not (opens or closeds or sets):
        if isinstance(K.target, MetricSpace):
            sets = _all_subsets(K.target)
        else:
            raise ValueError("sets are required on a non-finite target space")
    report = ConvergenceReport(mode=f"kernel-{mode}")
    for i, path in enumerate(paths):
        seq = _path_sequence(K, path)
        if mode == "tv":
            sub = tv_check(seq, tol=tol)
        elif mode == "weak":
            o = list(opens) + (list(sets) if not opens and not closeds else [])
            sub = portmanteau_weak_check(seq, o, list(closeds), tol=tol)
        else:
            sub = setwise_check(seq, list(sets) + list(opens) + list(closeds), tol=tol)
        for e in sub.entries:
            e = dict(e)
            e["label"] = f"path{i}: {e['label']}"
            report.entries.append(e)
    return _finish(report)


def _intersections(base: BaseFamily, arity: int) -> list[tuple[str, BorelSet]]:
    out, seen = [], set()
    for r in range(1, min(arity, len(base)) + 1):
        for combo in itertools.combinations(range(len(base)), r):
            S = intersect_all([base.members[i] for i in combo])
            if S in seen:
                continue
            seen.add(S)
            out.append((" ∩ ".join(base.labels[i] for i in combo), S))
    return out


def product_base_weak_diagnostic(
    J: JointKernel,
    base1: BaseFamily,
    base2: BaseFamily,
    paths: Sequence[tuple[Sequence, Any]],
    *,
    arity: int = 2,
    tol: float = DEFAULT_TOL,
) -> ConvergenceReport:
    """Continuity of s -> P(O1 x O2 | s) for finite intersections of base members.

    A consistent verdict is the hypothesis under which the kernel is weakly
    continuous along the supplied paths.
    """
    I1 = _intersections(base1, arity)
    I2 = _intersections(base2, arity)
    cap = get_cap("composite_sets")
    if len(I1) * len(I2) > cap:
        raise CapExceeded("composite_sets", cap, len(I1) * len(I2))
    report = ConvergenceReport(mode="product-base")
    for i, (seq, limit) in enumerate(paths):
        seq = list(seq)
        for s in seq + [limit]:
            if s not in J.table:
                raise ValueError(f"path point {s!r} is outside the parameter set")
        idx = list(range(1, len(seq) + 1))
        tail = _tail_slice(idx)
        for l1, O1 in I1:
            for l2, O2 in I2:
                values = {n: J.mass(seq[n - 1], O1, O2) for n in idx}
                lim = J.mass(limit, O1, O2)
                tv = [values[n] for n in tail]
                margin = max(lim - min(tv), max(tv) - lim)
                report.entries.append(
                    {
                        "label": f"path{i}: ({l1}) x ({l2})",
                        "set": None,
                        "rectangle": [set_to_json(O1), set_to_json(O2)],
                        "kind": "rectangle",
                        "limit_value": lim,
                        "values": values,
                        "liminf": min(tv),
                        "limsup": max(tv),
                        "tail": [tail[0], tail[-1]],
                        "margin": margin,
                        "ok": margin <= tol,
                    }
                )
    report.extra["rectangles_checked"] = len(I1) * len(I2)
    out = _finish(report)
    if out.witness is not None:
        out.witness["rectangle"] = out.entry(out.witness["label"])["rectangle"]
    return out


# the non-setwise example kernel

def example_kernel(n_max: int = 200) -> JointKernel:
    """P(B x C | s) = I{sqrt(2) + s in B} I{1 in C} on R x {1}, s in {1/n} ∪ {0}."""
    S2 = MetricSpace((1,))
    params = tuple(1.0 / n for n in range(1, n_max + 1)) + (0.0,)
    prod = ProductSpace(REAL_LINE, S2)
    table = {s: ProbMeasure(prod, [((SQRT2 + s, 1), 1.0)]) for s in params}
    return JointKernel(REAL_LINE, S2, params, table)


def example_kernel_path(n_max: int = 200) -> tuple[list, float]:
    return [1.0 / n for n in range(1, n_max + 1)], 0.0


# JSON

def kernel_from_json(obj: dict) -> StochasticKernel | JointKernel:
    """Parse ``{"params": [...], "target_space": ..., "table": {...} | [...]}``.

    ``table`` maps ``str(param)`` to an atom list ``[[point, weight], ...]`` or
    is a list aligned with ``params``. A ``{"product": [S1, S2]}`` target
    yields a :class:`JointKernel`.
    """
    from .measures import space_from_json

    for key in ("params", "target_space", "table"):
        if key not in obj:
            raise ValueError(f"kernel is missing field '{key}'")
    params = [tuple(p) if isinstance(p, list) else p for p in obj["params"]]
    target = space_from_json(obj["target_space"])
    raw = obj["table"]
    if isinstance(raw, list):
        if len(raw) != len(params):
            raise ValueError("table list must align with params")
        rows = dict(zip(params, raw))
    else:
        rows = {}
        for p in params:
            key = str(list(p) if isinstance(p, tuple) else p)
            if key not in raw:
                raise ValueError(f"table has no entry for parameter {key}")
            rows[p] = raw[key]
    table = {
        p: ProbMeasure(target, [(tuple(a) if isinstance(a, list) else a, w) for a, w in rows[p]])
        for p in params
    }
    if isinstance(target, ProductSpace):
        return JointKernel(target.first, target.second, tuple(params), table)
    return StochasticKernel(target, tuple(params), table)
