"""Finite POMDPs and their belief-state reduction.

The model stores the transition law as ``P[a, x, x']``, the observation
kernel as ``Q[a, x', y]`` (observation after moving to ``x'``), the initial
observation kernel as ``Q0[x, y]`` and costs as ``cost[x, a]``, where
``+inf`` marks forbidden state-action pairs.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .config import DEFAULT_TOL, CapExceeded, get_cap
from .measures import MetricSpace, SignedMeasure
from .kernels import EquicontinuityReport, sup_signed

__all__ = [
    "PomdpModel",
    "Belief",
    "BeliefTransition",
    "ValueTable",
    "expected_cost",
    "joint_next",
    "obs_marginal",
    "bayes_posterior",
    "initial_belief",
    "belief_kernel",
    "value_iterate",
    "solve_finite_horizon",
    "solve_discounted",
    "kinf_compact_diagnostic",
    "r_family_equicontinuity_diagnostic",
]

INF = math.inf
TIE_TOL = 1e-9
KEY_DECIMALS = 12
STOCHASTIC_TOL = 1e-9


def _hashable(label):
    return tuple(_hashable(v) for v in label) if isinstance(label, list) else label


def _stochastic(arr, name: str, shape: tuple) -> np.ndarray:
    a = np.array(arr, dtype=float)
    if a.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {a.shape}")
    if np.any(~np.isfinite(a)) or np.any(a < 0):
        raise ValueError(f"{name} entries must be finite and nonnegative")
    sums = a.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > STOCHASTIC_TOL):
        raise ValueError(f"{name} rows must sum to 1")
    a = a / sums[..., None]
    a.setflags(write=False)
    return a


class PomdpModel:
    """A POMDP on finite state, observation and action sets.

    Parameters
    ----------
    states, observations, actions : sequence
        Labels; their order fixes array axes.
    P : array-like, shape (A, X, X)
        ``P[a, x, x']`` transition probabilities.
    Q : array-like, shape (A, X, Y)
        ``Q[a, x', y]`` observation probabilities.
    cost : array-like, shape (X, A)
        One-step costs; ``inf`` allowed.
    alpha : float
        Discount factor.
    assumption : {"D", "P"}
        ``"D"``: costs bounded below and ``0 < alpha < 1``.
        ``"P"``: nonnegative costs and ``alpha == 1``.
    Q0 : array-like, shape (X, Y), optional
        Initial observation kernel; defaults to ``Q`` of the first action.
    """

    def __init__(self, states, observations, actions, P, Q, cost, alpha, assumption="D", Q0=None):
        self.states = tuple(_hashable(v) for v in states)
        self.observations = tuple(_hashable(v) for v in observations)
        self.actions = tuple(_hashable(v) for v in actions)
        for name, labels in (("states", self.states), ("observations", self.observations), ("actions", self.actions)):
            if not labels:
                raise ValueError(f"{name} must be nonempty")
            if len(set(labels)) != len(labels):
                raise ValueError(f"{name} labels must be unique")
        nx, ny, na = len(self.states), len(self.observations), len(self.actions)
        self.P = _stochastic(P, "P", (na, nx, nx))
        self.Q = _stochastic(Q, "Q", (na, nx, ny))
        self.Q0 = _stochastic(self.Q[0] if Q0 is None else Q0, "Q0", (nx, ny))
        c = np.array(cost, dtype=float)
        if c.shape != (nx, na):
            raise ValueError(f"cost must have shape {(nx, na)}, got {c.shape}")
        if np.any(np.isnan(c)) or np.any(c == -INF):
            raise ValueError("cost entries must be real or +inf")
        if not np.all(np.isfinite(c).any(axis=1)):
            raise ValueError("every state needs at least one finite-cost action")
        c.setflags(write=False)
        self.cost = c
        self.alpha = float(alpha)
        if assumption == "D":
            if not 0.0 < self.alpha < 1.0:
                raise ValueError("assumption D needs 0 < alpha < 1")
        elif assumption == "P":
            if self.alpha != 1.0:
                raise ValueError("assumption P needs alpha == 1")
            if np.any(c < 0):
                raise ValueError("assumption P needs nonnegative costs")
        else:
            raise ValueError("assumption must be 'D' or 'P'")
        self.assumption = assumption
        self._aidx = {a: i for i, a in enumerate(self.actions)}
        self._yidx = {y: i for i, y in enumerate(self.observations)}

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_observations(self) -> int:
        return len(self.observations)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    def action_index(self, a) -> int:
        try:
            return self._aidx[a]
        except KeyError:
            raise KeyError(f"unknown action {a!r}") from None

    def observation_index(self, y) -> int:
        try:
            return self._yidx[y]
        except KeyError:
            raise KeyError(f"unknown observation {y!r}") from None

    def state_space(self) -> MetricSpace:
        return MetricSpace(self.states)

    def observation_space(self) -> MetricSpace:
        return MetricSpace(self.observations)

    def relabeled(self, perm: Sequence[int]) -> "PomdpModel":
        """Model with states reordered so that new state i is old state perm[i]."""
        p = np.asarray(perm)
        return PomdpModel(
            [self.states[i] for i in p],
            self.observations,
            self.actions,
            self.P[:, p][:, :, p],
            self.Q[:, p],
            self.cost[p],
            self.alpha,
            self.assumption,
            self.Q0[p],
        )

    # JSON

    def to_json(self) -> dict:
        return {
            "states": list(self.states),
            "observations": list(self.observations),
            "actions": list(self.actions),
            "P": self.P.tolist(),
            "Q": self.Q.tolist(),
            "Q0": self.Q0.tolist(),
            "cost": [["inf" if math.isinf(v) else v for v in row] for row in self.cost.tolist()],
            "alpha": self.alpha,
            "assumption": self.assumption,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PomdpModel":
        required = ("states", "observations", "actions", "P", "Q", "cost", "alpha")
        for key in required:
            if key not in obj:
                raise ValueError(f"model is missing field '{key}'")
        cost = [[_ext_real(v, f"cost[{i}][{j}]") for j, v in enumerate(row)] for i, row in enumerate(obj["cost"])]
        return cls(
            obj["states"],
            obj["observations"],
            obj["actions"],
            obj["P"],
            obj["Q"],
            cost,
            obj["alpha"],
            obj.get("assumption", "D"),
            obj.get("Q0"),
        )


def _ext_real(v, where: str) -> float:
    if v == "inf":
        return INF
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return float(v)
    raise ValueError(f"{where}: expected a number or \"inf\", got {v!r}")


class Belief:
    """A point of the probability simplex over the states.

    ``key`` rounds entries to 12 decimals and is used for memoization and
    for merging posteriors.
    """

    __slots__ = ("probs", "key", "null_observation")

    def __init__(self, probs, *, null_observation: bool = False):
        p = np.array(probs, dtype=float).ravel()
        if p.size == 0 or np.any(~np.isfinite(p)):
            raise ValueError("belief entries must be finite")
        if np.any(p < -1e-12):
            raise ValueError("belief entries must be nonnegative")
        p = np.clip(p, 0.0, None)
        s = p.sum()
        if abs(s - 1.0) > 1e-9:
            raise ValueError(f"belief sums to {s!r}, not 1")
        p = p / s
        p.setflags(write=False)
        self.probs = p
        self.key = tuple(round(float(v), KEY_DECIMALS) + 0.0 for v in p)
        self.null_observation = null_observation

    @classmethod
    def point(cls, n: int, i: int) -> "Belief":
        p = np.zeros(n)
        p[i] = 1.0
        return cls(p)

    @classmethod
    def uniform(cls, n: int) -> "Belief":
        return cls(np.full(n, 1.0 / n))

    def __len__(self) -> int:
        return self.probs.size

    def __eq__(self, other) -> bool:
        return isinstance(other, Belief) and self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)

    def __repr__(self) -> str:
        return f"Belief({np.round(self.probs, 6).tolist()})"


def _as_belief(model: PomdpModel, z) -> Belief:
    b = z if isinstance(z, Belief) else Belief(z)
    if len(b) != model.n_states:
        raise ValueError(f"belief has {len(b)} entries, model has {model.n_states} states")
    return b


@dataclass(frozen=True)
class BeliefTransition:
    """Finitely supported law q(.|z,a) of the next belief.

    Each entry is ``(observations, probability, next_belief)``; observations
    whose posteriors share a key are merged into one entry.
    """

    entries: tuple

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def weights(self) -> tuple:
        return tuple(w for _, w, _ in self.entries)

    @property
    def support(self) -> tuple:
        return tuple(b for _, _, b in self.entries)

    def expectation(self, g: Callable[[Belief], float]) -> float:
        return _weighted_sum((w, g(b)) for _, w, b in self.entries)


def _weighted_sum(pairs: Iterable[tuple[float, float]]) -> float:
    terms = []
    for w, v in pairs:
        if w <= 0:
            continue
        if math.isinf(v):
            return INF
        terms.append(w * v)
    return math.fsum(terms)


# one-step quantities

def expected_cost(model: PomdpModel, z, a) -> float:
    """Belief-averaged cost; +inf when z charges a state where the cost is +inf."""
    z = _as_belief(model, z)
    return _expected_cost(model, z.probs, model.action_index(a))


def _expected_cost(model: PomdpModel, p: np.ndarray, ai: int) -> float:
    c = model.cost[:, ai]
    mask = p > 0
    if np.any(np.isinf(c[mask])):
        return INF
    return math.fsum((p[mask] * c[mask]).tolist())


def _joint(model: PomdpModel, p: np.ndarray, ai: int) -> np.ndarray:
    predicted = p @ model.P[ai]
    return predicted[:, None] * model.Q[ai]


def joint_next(model: PomdpModel, z, a) -> np.ndarray:
    """R[x', y] = sum_x z(x) P(x'|x,a) Q(y|a,x'), the joint law of next state and observation."""
    z = _as_belief(model, z)
    return _joint(model, z.probs, model.action_index(a))


def obs_marginal(model: PomdpModel, z, a) -> np.ndarray:
    return joint_next(model, z, a).sum(axis=0)


def _posterior(model: PomdpModel, p: np.ndarray, ai: int, yi: int, R=None) -> Belief:
    if R is None:
        R = _joint(model, p, ai)
    col = R[:, yi]
    mass = col.sum()
    if mass > 0:
        return Belief(col / mass)
    return Belief(p @ model.P[ai], null_observation=True)


def bayes_posterior(model: PomdpModel, z, a, y) -> Belief:
    """Posterior over the next state after action ``a`` and observation ``y``.

    For an observation of zero probability the predicted law is returned
    with ``null_observation`` set.
    """
    z = _as_belief(model, z)
    return _posterior(model, z.probs, model.action_index(a), model.observation_index(y))


def initial_belief(model: PomdpModel, prior, y0) -> Belief:
    """Condition a prior on the initial observation through ``Q0``."""
    p = np.asarray(_as_belief(model, prior).probs)
    col = p * model.Q0[:, model.observation_index(y0)]
    mass = col.sum()
    if mass > 0:
        return Belief(col / mass)
    return Belief(p, null_observation=True)


def _transition(model: PomdpModel, p: np.ndarray, ai: int) -> BeliefTransition:
    R = _joint(model, p, ai)
    probs = R.sum(axis=0)
    merged: dict = {}
    for yi in range(model.n_observations):
        w = float(probs[yi])
        if w <= 0:
            continue
        b = _posterior(model, p, ai, yi, R)
        if b.key in merged:
            obs, w0, b0 = merged[b.key]
            merged[b.key] = (obs + (model.observations[yi],), w0 + w, b0)
        else:
            merged[b.key] = ((model.observations[yi],), w, b)
    return BeliefTransition(tuple(merged.values()))


def belief_kernel(model: PomdpModel, z, a) -> BeliefTransition:
    """The law q(.|z,a) of the posterior, as a finitely supported measure on beliefs."""
    z = _as_belief(model, z)
    return _transition(model, z.probs, model.action_index(a))


# dynamic programming

def _argmin(qvals: Sequence[float]) -> tuple[float, tuple[int, ...]]:
    finite = [q for q in qvals if not math.isinf(q)]
    if not finite:
        return INF, tuple(range(len(qvals)))
    best = min(finite)
    return best, tuple(i for i, q in enumerate(qvals) if q <= best + TIE_TOL)


def value_iterate(model: PomdpModel, v_prev: Callable[[Belief], float], z) -> tuple[float, list]:
    """One Bellman step at ``z``: returns the value and the minimizing action labels."""
    z = _as_belief(model, z)
    qvals = []
    for ai in range(model.n_actions):
        c = _expected_cost(model, z.probs, ai)
        if math.isinf(c):
            qvals.append(INF)
            continue
        future = _transition(model, z.probs, ai).expectation(v_prev)
        qvals.append(INF if math.isinf(future) else c + model.alpha * future)
    value, idx = _argmin(qvals)
    return value, [model.actions[i] for i in idx]


class ValueTable:
    """Memoized finite-horizon values v_t(z) keyed on (t, belief key).

    Every computed entry counts as one belief-tree node against the
    ``belief_nodes`` cap.
    """

    def __init__(self, model: PomdpModel, cap: int | None = None):
        self.model = model
        self.cap = get_cap("belief_nodes") if cap is None else cap
        self._memo: dict = {}
        self._beliefs: dict = {}
        self._transitions: dict = {}

    def __len__(self) -> int:
        return len(self._memo)

    def belief(self, key) -> Belief:
        return self._beliefs[key]

    def entries(self):
        """Iterate over ``(t, belief, value, action_indices)``."""
        for (t, key), (v, acts) in self._memo.items():
            yield t, self._beliefs[key], v, acts

    def transition(self, z: Belief, ai: int) -> BeliefTransition:
        k = (z.key, ai)
        tr = self._transitions.get(k)
        if tr is None:
            tr = self._transitions.setdefault(k, _transition(self.model, z.probs, ai))
        return tr

    def lookup(self, z: Belief, t: int) -> tuple[float, tuple[int, ...]]:
        hit = self._memo.get((t, z.key))
        if hit is not None:
            return hit
        if t == 0:
            result = (0.0, tuple(range(self.model.n_actions)))
        else:
            result = self._compute(z, t)
        if len(self._memo) >= self.cap:
            raise CapExceeded("belief_nodes", self.cap)
        self._beliefs.setdefault(z.key, z)
        # first writer wins; a recomputation can only reproduce the same entry
        return self._memo.setdefault((t, z.key), result)

    def evaluate(self, z: Belief, T: int) -> tuple[float, tuple[int, ...]]:
        """Fill the memo for v_T(z) level by level, without deep recursion."""
        hit = self._memo.get((T, z.key))
        if hit is not None:
            return hit
        levels = [{z.key: z}]
        pending = 1
        for k in range(T - 1):
            nxt: dict = {}
            for b in levels[-1].values():
                if (T - k, b.key) in self._memo:
                    continue
                for ai in range(self.model.n_actions):
                    if math.isinf(_expected_cost(self.model, b.probs, ai)):
                        continue
                    for _, _, child in self.transition(b, ai):
                        if child.key not in nxt:
                            nxt[child.key] = child
                            pending += 1
                            if len(self._memo) + pending > self.cap:
                                raise CapExceeded("belief_nodes", self.cap)
            levels.append(nxt)
        for k in reversed(range(len(levels))):
            for b in levels[k].values():
                self.lookup(b, T - k)
        return self._memo[(T, z.key)]

    def value(self, z, t: int) -> float:
        z = _as_belief(self.model, z)
        return self.evaluate(z, t)[0]

    def actions(self, z, t: int) -> list:
        """A_{t-1}(z): minimizers in the Bellman step producing v_t(z)."""
        z = _as_belief(self.model, z)
        return [self.model.actions[i] for i in self.evaluate(z, t)[1]]

    def _compute(self, z: Belief, t: int):
        m = self.model
        qvals = []
        for ai in range(m.n_actions):
            c = _expected_cost(m, z.probs, ai)
            if math.isinf(c):
                qvals.append(INF)
                continue
            future = _weighted_sum((w, self.lookup(b, t - 1)[0]) for _, w, b in self.transition(z, ai))
            qvals.append(INF if math.isinf(future) else c + m.alpha * future)
        return _argmin(qvals)


@dataclass
class FiniteHorizonSolution:
    horizon: int
    values: list  # v_0(z0), ..., v_T(z0)
    policy: dict  # (t, belief key) -> action label
    table: ValueTable = field(repr=False)
    beliefs: dict = field(default_factory=dict, repr=False)  # belief key -> Belief

    @property
    def value(self) -> float:
        return self.values[-1]

    def to_json(self) -> dict:
        return {
            "horizon": self.horizon,
            "value": self.value,
            "values": list(self.values),
            "policy": [
                {"t": t, "belief": list(self.beliefs[k].probs.tolist()), "action": a}
                for (t, k), a in self.policy.items()
            ],
            "nodes": len(self.table),
        }


def solve_finite_horizon(model: PomdpModel, z0, T: int, *, table: ValueTable | None = None) -> FiniteHorizonSolution:
    """Exact T-horizon values at ``z0`` and a Markov policy on the reachable belief tree.

    At time ``t`` the policy picks the first action of ``A_{T-1-t}(z)``; the
    tree follows the policy's own actions.
    """
    if T < 0:
        raise ValueError("horizon must be nonnegative")
    z0 = _as_belief(model, z0)
    table = table or ValueTable(model)
    values = [table.value(z0, t) for t in range(T + 1)]
    policy, beliefs = {}, {z0.key: z0}
    frontier = [z0]
    for t in range(T):
        nxt = {}
        for z in frontier:
            _, acts = table.evaluate(z, T - t)
            ai = acts[0]
            policy[(t, z.key)] = model.actions[ai]
            if t + 1 < T:
                for _, w, b in table.transition(z, ai):
                    nxt.setdefault(b.key, b)
        beliefs.update(nxt)
        frontier = list(nxt.values())
    return FiniteHorizonSolution(T, values, policy, table, beliefs)


@dataclass
class DiscountedSolution:
    value: float
    action: Any
    error_bound: float | None
    horizon: int
    two_sided: bool
    residual: float | None = None
    notes: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "action": self.action,
            "error_bound": self.error_bound,
            "horizon": self.horizon,
            "two_sided": self.two_sided,
            "residual": self.residual,
            "notes": list(self.notes),
        }


def solve_discounted(
    model: PomdpModel,
    z0,
    epsilon: float,
    *,
    max_horizon: int = 100_000,
    check_residual: bool = True,
) -> DiscountedSolution:
    """Infinite-horizon value at ``z0`` by value iteration from v_0 = 0.

    Under assumption D the horizon is the smallest T with
    ``alpha^T * max|c| / (1 - alpha) <= epsilon``, which bounds
    ``|v_alpha(z0) - v_T(z0)|``. Under assumption P the iterates increase to
    the optimal value and only a lower bound is returned; iteration stops once
    consecutive values differ by at most ``epsilon``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    z0 = _as_belief(model, z0)
    table = ValueTable(model)
    notes = []
    if model.assumption == "D":
        finite = model.cost[np.isfinite(model.cost)]
        scale = float(np.max(np.abs(finite))) if finite.size else 0.0
        a = model.alpha
        if scale == 0.0:
            T = 1
        else:
            T = max(1, math.ceil(math.log(epsilon * (1 - a) / scale) / math.log(a)))
            while a**T * scale / (1 - a) > epsilon:
                T += 1
        if T > max_horizon:
            raise CapExceeded("max_horizon", max_horizon, T)
        value = table.value(z0, T)
        bound = a**T * scale / (1 - a)
        if not np.all(np.isfinite(model.cost)):
            notes.append("infinite costs present; the bound assumes a finite-cost continuation exists")
        residual = abs(table.value(z0, T + 1) - value) if check_residual and math.isfinite(value) else None
        action = model.actions[table.evaluate(z0, T)[1][0]]
        return DiscountedSolution(value, action, bound, T, True, residual, notes)
    prev = table.value(z0, 0)
    T = 0
    while T < max_horizon:
        T += 1
        value = table.value(z0, T)
        if math.isfinite(value) and value - prev <= epsilon:
            break
        prev = value
    else:
        notes.append(f"stopped at max_horizon={max_horizon}")
    notes.append("assumption P: monotone lower approximation, no two-sided accuracy claimed")
    action = model.actions[table.evaluate(z0, T)[1][0]]
    return DiscountedSolution(value, action, None, T, False, None, notes)


# diagnostics

def kinf_compact_diagnostic(cost, lambdas: Sequence[float], x_grid=None, a_grid=None) -> dict:
    """Desk-scale check of K-inf-compactness of ``c`` on gridded X x A.

    For finite spaces (a :class:`PomdpModel`, or a table with no grids) every
    level set is finite, hence compact, and the check passes. For grids the
    level set ``{c <= lambda}`` must not reach the edge of the action grid;
    such contact is the finite image of a bounded-cost action sequence without
    a limit point. Grid results are not conclusive for the continuum.
    """
    if isinstance(cost, PomdpModel):
        table = cost.cost
        x_grid = a_grid = None
    else:
        table = np.asarray(cost, dtype=float)
    finite = x_grid is None and a_grid is None
    if (x_grid is None) != (a_grid is None):
        raise ValueError("gridded check needs both x_grid and a_grid (neighbor structure)")
    rows = []
    if finite:
        for lam in lambdas:
            size = int(np.sum(table <= lam))
            rows.append({"lambda": float(lam), "verdict": "pass", "size": size, "witness": None})
        return {
            "finite": True,
            "conclusive": True,
            "verdict": "pass",
            "levels": rows,
            "note": "finite sets are compact",
        }
    xg = np.asarray(x_grid, dtype=float)
    ag = np.asarray(a_grid, dtype=float)
    if table.shape != (xg.size, ag.size):
        raise ValueError(f"cost table must have shape {(xg.size, ag.size)}")
    if np.any(np.diff(xg) <= 0) or np.any(np.diff(ag) <= 0):
        raise ValueError("grids must be strictly increasing")
    verdict = "pass"
    for lam in lambdas:
        L = table <= lam
        witness = None
        edge = np.zeros_like(L)
        edge[:, 0] = edge[:, -1] = True
        hits = np.argwhere(L & edge)
        state_edge = bool(np.any(L[0, :]) or np.any(L[-1, :]))
        if hits.size:
            i, j = hits[0]
            witness = {"x": float(xg[i]), "a": float(ag[j]), "cost": float(table[i, j])}
            verdict = "fail"
        rows.append(
            {
                "lambda": float(lam),
                "verdict": "fail" if witness else "pass",
                "size": int(L.sum()),
                "witness": witness,
                "state_edge_contact": state_edge,
            }
        )
    return {
        "finite": False,
        "conclusive": False,
        "verdict": verdict,
        "levels": rows,
        "note": "grid diagnostic; not conclusive for the continuum",
    }


def _combine(family: str, groups: list[list[dict]], tol: float) -> EquicontinuityReport:
    rows = [r for g in groups for r in g]
    if not rows:
        raise ValueError("nothing to check")
    ok = True
    for g in groups:
        width = max(1, math.ceil(0.25 * len(g)))
        if max(r["deviation"] for r in g[-width:]) > tol:
            ok = False
    worst = max(rows, key=lambda r: r["deviation"])
    return EquicontinuityReport(
        family=family,
        deviations=rows,
        worst=dict(worst),
        verdict="equicontinuous" if ok else "not equicontinuous",
        threshold=tol,
    )


def finite_intersections(base: Sequence, arity: int) -> list[tuple[tuple[int, ...], frozenset]]:
    cap = get_cap("composite_sets")
    count = sum(math.comb(len(base), r) for r in range(1, min(arity, len(base)) + 1))
    if count > cap:
        raise CapExceeded("composite_sets", cap, count)
    out, seen = [], set()
    for r in range(1, min(arity, len(base)) + 1):
        for combo in itertools.combinations(range(len(base)), r):
            S = frozenset.intersection(*(frozenset(base[i]) for i in combo))
            if S not in seen:
                seen.add(S)
                out.append((combo, S))
    return out


def r_family_equicontinuity_diagnostic(
    model: PomdpModel,
    base: Sequence[Iterable],
    paths: Sequence[tuple[Sequence[tuple[Any, Any]], tuple[Any, Any]]],
    *,
    arity: int = 2,
    tol: float = DEFAULT_TOL,
) -> EquicontinuityReport:
    """Exact ``sup_C |R(O x C|z_n,a_n) - R(O x C|z,a)|`` for finite intersections O of base sets.

    ``base`` lists subsets of state labels. A path is
    ``([(z_1, a_1), (z_2, a_2), ...], (z, a))``. The supremum over subsets C
    of the observations is attained at a Hahn set.
    """
    sidx = {s: i for i, s in enumerate(model.states)}
    base_idx = [[sidx[s] for s in B] for B in base]
    inters = finite_intersections(base_idx, arity)
    Y = model.observation_space()
    groups = []
    for pi, (seq, (z, a)) in enumerate(paths):
        R_lim = joint_next(model, z, a)
        for combo, O in inters:
            rows = []
            o = sorted(O)
            for n, (zn, an) in enumerate(seq, start=1):
                diff = joint_next(model, zn, an)[o].sum(axis=0) - R_lim[o].sum(axis=0)
                dev, C = sup_signed(SignedMeasure(Y, list(zip(model.observations, diff.tolist()))))
                rows.append(
                    {
                        "path": pi,
                        "n": n,
                        "O": [model.states[i] for i in o],
                        "deviation": dev,
                        "C": C,
                        "action": an,
                    }
                )
            groups.append(rows)
    return _combine("R_O", groups, tol)
