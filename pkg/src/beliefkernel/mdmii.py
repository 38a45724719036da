"""Decision models with an observed and a hidden state coordinate.

The state is a pair ``(y, w)``; ``y`` is observed and ``w`` is not. Such a
model becomes a POMDP on ``X = Y x W`` whose observation is the projection
onto ``Y``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

from .config import DEFAULT_TOL
from .kernels import EquicontinuityReport, sup_signed
from .measures import MetricSpace, SignedMeasure
from .pomdp import (
    Belief,
    PomdpModel,
    _combine,
    _hashable,
    bayes_posterior,
    finite_intersections,
)

__all__ = [
    "MdmiiModel",
    "FactoredBelief",
    "to_pomdp",
    "mdmii_filter_invariant_check",
    "pstar_equicontinuity_diagnostic",
]


class MdmiiModel:
    """Observed states ``Y``, hidden states ``W``, actions ``A``.

    ``available`` is a boolean mask of shape (Y, A). ``P[a, y, w, y', w']`` is
    the transition law and ``cost[y, w, a]`` the cost on the graph
    ``G = {(y, w, a) : a in A(y)}``; entries off ``G`` are ignored and stored
    as NaN.
    """

    def __init__(self, observed, hidden, actions, available, P, cost, alpha, assumption="D"):
        self.observed = tuple(_hashable(v) for v in observed)
        self.hidden = tuple(_hashable(v) for v in hidden)
        self.actions = tuple(_hashable(v) for v in actions)
        ny, nw, na = len(self.observed), len(self.hidden), len(self.actions)
        if not (ny and nw and na):
            raise ValueError("observed, hidden and action sets must be nonempty")
        mask = np.array(available, dtype=bool)
        if mask.shape != (ny, na):
            raise ValueError(f"available mask must have shape {(ny, na)}")
        if not np.all(mask.any(axis=1)):
            bad = [self.observed[i] for i in np.flatnonzero(~mask.any(axis=1))]
            raise ValueError(f"A(y) is empty for y in {bad}")
        mask.setflags(write=False)
        self.available = mask
        p = np.array(P, dtype=float)
        if p.shape != (na, ny, nw, ny, nw):
            raise ValueError(f"P must have shape {(na, ny, nw, ny, nw)}, got {p.shape}")
        if np.any(~np.isfinite(p)) or np.any(p < 0):
            raise ValueError("P entries must be finite and nonnegative")
        sums = p.sum(axis=(3, 4))
        if np.any(np.abs(sums - 1.0) > 1e-9):
            raise ValueError("P rows must sum to 1")
        p = p / sums[..., None, None]
        p.setflags(write=False)
        self.P = p
        c = np.full((ny, nw, na), np.nan)
        raw = np.array(cost, dtype=object)
        if raw.shape != (ny, nw, na):
            raise ValueError(f"cost must have shape {(ny, nw, na)}")
        for yi in range(ny):
            for ai in range(na):
                if not mask[yi, ai]:
                    continue
                for wi in range(nw):
                    v = raw[yi, wi, ai]
                    if v is None or isinstance(v, bool) or not isinstance(v, (int, float, np.number)):
                        raise ValueError(f"cost missing on G at {(self.observed[yi], self.hidden[wi], self.actions[ai])}")
                    if not math.isfinite(float(v)):
                        raise ValueError("costs on G must be finite")
                    c[yi, wi, ai] = float(v)
        c.setflags(write=False)
        self.cost = c
        self.alpha = float(alpha)
        self.assumption = assumption

    def available_actions(self, y) -> list:
        yi = self.observed.index(_hashable(y))
        return [a for a, ok in zip(self.actions, self.available[yi]) if ok]

    @property
    def states(self) -> list[tuple]:
        return [(y, w) for y in self.observed for w in self.hidden]

    def to_json(self) -> dict:
        return {
            "observed_states": list(self.observed),
            "hidden_states": list(self.hidden),
            "actions": list(self.actions),
            "available": {str(y): self.available_actions(y) for y in self.observed},
            "P": self.P.tolist(),
            "cost": [[[None if math.isnan(v) else v for v in row] for row in plane] for plane in self.cost.tolist()],
            "alpha": self.alpha,
            "assumption": self.assumption,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MdmiiModel":
        for key in ("observed_states", "hidden_states", "actions", "available", "P", "cost", "alpha"):
            if key not in obj:
                raise ValueError(f"MDMII model is missing field '{key}'")
        observed = [_hashable(v) for v in obj["observed_states"]]
        actions = [_hashable(v) for v in obj["actions"]]
        avail = obj["available"]
        mask = np.zeros((len(observed), len(actions)), dtype=bool)
        for yi, y in enumerate(observed):
            acts = avail.get(str(y), avail.get(y)) if isinstance(avail, dict) else avail[yi]
            if acts is None:
                raise ValueError(f"available has no entry for observed state {y!r}")
            for a in acts:
                a = _hashable(a)
                if a not in actions:
                    raise ValueError(f"available lists unknown action {a!r}")
                mask[yi, actions.index(a)] = True
        return cls(
            observed,
            obj["hidden_states"],
            actions,
            mask,
            obj["P"],
            obj["cost"],
            obj["alpha"],
            obj.get("assumption", "D"),
        )


def to_pomdp(m: MdmiiModel) -> PomdpModel:
    """POMDP on X = Y x W with projection observations and +inf cost off G."""
    ny, nw, na = len(m.observed), len(m.hidden), len(m.actions)
    nx = ny * nw
    P = m.P.reshape(na, nx, nx)
    proj = np.zeros((nx, ny))
    for yi in range(ny):
        proj[yi * nw : (yi + 1) * nw, yi] = 1.0
    Q = np.broadcast_to(proj, (na, nx, ny))
    cost = np.where(np.isnan(m.cost), math.inf, m.cost).reshape(nx, na)
    return PomdpModel(m.states, m.observed, m.actions, P, Q, cost, m.alpha, m.assumption, proj)


@dataclass(frozen=True)
class FactoredBelief:
    """Observed coordinate plus the conditional law of the hidden one."""

    y: Any
    w_probs: tuple

    @classmethod
    def from_belief(cls, m: MdmiiModel, z: Belief, tol: float = 1e-12) -> "FactoredBelief":
        grid = np.asarray(z.probs).reshape(len(m.observed), len(m.hidden))
        mass = grid.sum(axis=1)
        hits = np.flatnonzero(mass > tol)
        if hits.size != 1:
            raise ValueError("belief is not concentrated on a single observed state")
        yi = int(hits[0])
        w = grid[yi] / mass[yi]
        return cls(m.observed[yi], tuple(float(v) for v in w))

    def to_belief(self, m: MdmiiModel) -> Belief:
        grid = np.zeros((len(m.observed), len(m.hidden)))
        grid[m.observed.index(self.y)] = self.w_probs
        return Belief(grid.ravel())


def _factored_step(m: MdmiiModel, fb: FactoredBelief, ai: int, y_next) -> FactoredBelief | None:
    yi = m.observed.index(fb.y)
    yj = m.observed.index(y_next)
    w_next = np.asarray(fb.w_probs) @ m.P[ai, yi, :, yj, :]
    s = w_next.sum()
    if s <= 0:
        return None
    return FactoredBelief(y_next, tuple(float(v) for v in w_next / s))


def mdmii_filter_invariant_check(m: MdmiiModel, z0, trace: Iterable[tuple[Any, Any]], tol: float = 1e-12) -> dict:
    """Run the reduced filter along ``trace = [(a_1, y_1), ...]`` and check support stays on {y_t} x W.

    The factored update on the hidden coordinate is recomputed alongside and
    must agree with the X-belief.
    """
    pm = to_pomdp(m)
    z = z0.to_belief(m) if isinstance(z0, FactoredBelief) else (z0 if isinstance(z0, Belief) else Belief(z0))
    if len(z) != len(pm.states):
        raise ValueError("initial belief has the wrong dimension")
    grid = np.asarray(z.probs).reshape(len(m.observed), len(m.hidden))
    y_support = [m.observed[i] for i in np.flatnonzero(grid.sum(axis=1) > 0)]
    fb = FactoredBelief.from_belief(m, z) if len(y_support) == 1 else None
    steps, ok = [], True
    for t, (a, y) in enumerate(trace):
        a, y = _hashable(a), _hashable(y)
        for yc in y_support:
            if a not in m.available_actions(yc):
                raise ValueError(f"step {t}: action {a!r} not in A({yc!r})")
        ai = m.actions.index(a)
        z = bayes_posterior(pm, z, a, y)
        grid = np.asarray(z.probs).reshape(len(m.observed), len(m.hidden))
        off = float(grid.sum() - grid[m.observed.index(y)].sum())
        support_ok = off <= tol
        factored_ok = None
        if fb is not None and not z.null_observation:
            nxt = _factored_step(m, fb, ai, y)
            factored_ok = nxt is not None and bool(
                np.max(np.abs(np.asarray(nxt.w_probs) - grid[m.observed.index(y)])) <= 1e-9
            )
            fb = nxt
        elif z.null_observation:
            fb = None
        step_ok = (support_ok or z.null_observation) and factored_ok is not False
        ok = ok and step_ok
        steps.append(
            {
                "t": t + 1,
                "action": a,
                "observation": y,
                "off_support_mass": off,
                "support_ok": support_ok,
                "factored_ok": factored_ok,
                "null_observation": z.null_observation,
                "w_marginal": grid[m.observed.index(y)].tolist(),
            }
        )
        y_support = [y] if not z.null_observation else [m.observed[i] for i in np.flatnonzero(grid.sum(axis=1) > 0)]
    return {"ok": ok, "steps": steps, "final_belief": z.probs.tolist()}


def pstar_equicontinuity_diagnostic(
    m: MdmiiModel,
    base: Sequence[Iterable],
    paths: Sequence[tuple[Sequence[tuple[Any, Any]], tuple[Any, Any]]],
    *,
    arity: int = 2,
    tol: float = DEFAULT_TOL,
) -> EquicontinuityReport:
    """Exact ``sup_C |P(C x O|x_n,a_n) - P(C x O|x,a)|`` over finite intersections O of base sets on W.

    A path is ``([((y_1, w_1), a_1), ...], ((y, w), a))``.
    """
    widx = {w: i for i, w in enumerate(m.hidden)}
    base_idx = [[widx[_hashable(w)] for w in B] for B in base]
    if frozenset(range(len(m.hidden))) not in {frozenset(b) for b in base_idx}:
        raise ValueError("base on W must contain W itself")
    inters = finite_intersections(base_idx, arity)
    Y = MetricSpace(m.observed)

    def row(x, a):
        y, w = _hashable(x)
        return m.P[m.actions.index(_hashable(a)), m.observed.index(y), widx[w]]

    groups = []
    for pi, (seq, (x, a)) in enumerate(paths):
        lim = row(x, a)
        for _, O in inters:
            o = sorted(O)
            rows = []
            for n, (xn, an) in enumerate(seq, start=1):
                diff = row(xn, an)[:, o].sum(axis=1) - lim[:, o].sum(axis=1)
                dev, C = sup_signed(SignedMeasure(Y, list(zip(m.observed, diff.tolist()))))
                rows.append({"path": pi, "n": n, "O": [m.hidden[i] for i in o], "deviation": dev, "C": C})
            groups.append(rows)
    return _combine("P*_O", groups, tol)
