"""Finite-support measures, Hahn decomposition and total-variation distances."""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from .sets import BorelSet, Interval, IntervalSet, PointSet

__all__ = [
    "SpaceMismatch",
    "MetricSpace",
    "RealLine",
    "REAL_LINE",
    "ProductSpace",
    "SignedMeasure",
    "ProbMeasure",
    "PiecewiseFunction",
    "DistributionFunction",
    "dirac",
    "measure_of_set",
    "hahn_decompose",
    "tv_distance",
    "cdf_of_measure",
    "total_variation_of_function",
    "hahn_test_function",
    "tv_distance_bounded_functions",
]

NORMALIZATION_TOL = 1e-12
RENORMALIZE_TOL = 1e-9


class SpaceMismatch(ValueError):
    pass


# spaces

@dataclass(frozen=True)
class MetricSpace:
    """A finite metric space given by labels and a distance matrix.

    When ``metric`` is omitted the discrete metric is used.
    """

    points: tuple
    metric: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        pts = tuple(self.points)
        object.__setattr__(self, "points", pts)
        if len(set(pts)) != len(pts):
            raise ValueError("metric space labels must be unique")
        if self.metric is None:
            return
        d = np.asarray(self.metric, dtype=float)
        n = len(pts)
        if d.shape != (n, n):
            raise ValueError(f"metric must be {n}x{n}, got {d.shape}")
        if np.any(d < 0) or np.any(np.diag(d) != 0) or not np.array_equal(d, d.T):
            raise ValueError("metric must be symmetric, nonnegative, with zero diagonal")
        # d[i,k] <= d[i,j] + d[j,k] for all i, j, k
        if np.any(d[:, None, :] > d[:, :, None] + d[None, :, :] + 1e-12):
            raise ValueError("metric violates the triangle inequality")
        object.__setattr__(self, "metric", tuple(map(tuple, d.tolist())))

    def __contains__(self, x) -> bool:
        return x in self.points

    def distance(self, a, b) -> float:
        if self.metric is None:
            return 0.0 if a == b else 1.0
        i, j = self.points.index(a), self.points.index(b)
        return self.metric[i][j]

    def __len__(self) -> int:
        return len(self.points)


class RealLine:
    """The real line with the Euclidean metric."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __contains__(self, x) -> bool:
        return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)

    def distance(self, a, b) -> float:
        return abs(float(a) - float(b))

    def __repr__(self) -> str:
        return "RealLine()"

    def __reduce__(self):
        return (RealLine, ())


REAL_LINE = RealLine()


@dataclass(frozen=True)
class ProductSpace:
    """Product of two spaces; points are pairs."""

    first: Any
    second: Any

    def __contains__(self, x) -> bool:
        return isinstance(x, tuple) and len(x) == 2 and x[0] in self.first and x[1] in self.second


# measures

class SignedMeasure:
    """A finite signed measure: distinct atoms with real weights.

    Zero-weight atoms are kept; they matter for the Hahn tie-break.
    """

    __slots__ = ("space", "_points", "_weights", "_index")

    def __init__(self, space, atoms: Iterable[tuple[Any, float]] | Mapping[Any, float]):
        if isinstance(atoms, Mapping):
            atoms = atoms.items()
        points, weights = [], []
        for p, w in atoms:
            if isinstance(p, list):
                p = tuple(p)
            if p not in space:
                raise ValueError(f"atom {p!r} is not a point of {space!r}")
            points.append(p)
            weights.append(float(w))
        if len(set(points)) != len(points):
            raise ValueError("atom points must be distinct")
        if any(not math.isfinite(w) for w in weights):
            raise ValueError("atom weights must be finite")
        self.space = space
        self._points = tuple(points)
        self._weights = tuple(weights)
        self._index = {p: i for i, p in enumerate(points)}

    @property
    def points(self) -> tuple:
        return self._points

    @property
    def weights(self) -> tuple:
        return self._weights

    @property
    def atoms(self) -> tuple:
        return tuple(zip(self._points, self._weights))

    def weight(self, point) -> float:
        i = self._index.get(point)
        return 0.0 if i is None else self._weights[i]

    def total(self) -> float:
        return math.fsum(self._weights)

    def __call__(self, B: BorelSet) -> float:
        return measure_of_set(self, B)

    def _check_space(self, other):
        if self.space != other.space:
            raise SpaceMismatch(f"{self.space!r} vs {other.space!r}")

    def __sub__(self, other: "SignedMeasure") -> "SignedMeasure":
        self._check_space(other)
        pts = list(self._points) + [p for p in other._points if p not in self._index]
        return SignedMeasure(self.space, [(p, self.weight(p) - other.weight(p)) for p in pts])

    def __add__(self, other: "SignedMeasure") -> "SignedMeasure":
        self._check_space(other)
        pts = list(self._points) + [p for p in other._points if p not in self._index]
        return SignedMeasure(self.space, [(p, self.weight(p) + other.weight(p)) for p in pts])

    def scaled(self, c: float) -> "SignedMeasure":
        return SignedMeasure(self.space, [(p, c * w) for p, w in self.atoms])

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SignedMeasure)
            and self.space == other.space
            and dict(self.atoms) == dict(other.atoms)
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"{type(self).__name__}({dict(self.atoms)!r})"


class ProbMeasure(SignedMeasure):
    """A finitely supported probability measure.

    Weights must be nonnegative. A total within 1e-9 of one is renormalized;
    anything further off is rejected.
    """

    __slots__ = ()

    def __init__(self, space, atoms):
        super().__init__(space, atoms)
        if any(w < 0 for w in self._weights):
            raise ValueError("probability weights must be nonnegative")
        total = math.fsum(self._weights)
        if abs(total - 1.0) > RENORMALIZE_TOL:
            raise ValueError(f"probability weights sum to {total!r}, not 1")
        if abs(total - 1.0) > 0.0:
            self._weights = tuple(w / total for w in self._weights)

    def support(self) -> tuple:
        return tuple(p for p, w in self.atoms if w > 0)


def dirac(space, point) -> ProbMeasure:
    return ProbMeasure(space, [(point, 1.0)])


def _check_set_space(space, B):
    if isinstance(space, (RealLine, ProductSpace)) and isinstance(B, IntervalSet):
        if isinstance(space, ProductSpace):
            raise SpaceMismatch("interval sets do not apply to a product space")
        return
    if isinstance(B, PointSet):
        if isinstance(space, RealLine):
            if not all(p in space for p in B.points):
                raise SpaceMismatch("point set is not a subset of the real line")
        return
    if isinstance(B, IntervalSet) and isinstance(space, MetricSpace):
        # interval membership is evaluated on numeric labels
        if all(isinstance(p, (int, float)) for p in space.points):
            return
    raise SpaceMismatch(f"set {B!r} does not live on {space!r}")


def measure_of_set(m, B: BorelSet) -> float:
    """Mass that ``m`` assigns to ``B``.

    ``m`` may be a finite (signed) measure or a distribution function on the
    real line, in which case ``B`` must be an :class:`IntervalSet`.
    """
    if isinstance(m, SignedMeasure):
        _check_set_space(m.space, B)
        return math.fsum(w for p, w in m.atoms if p in B)
    if hasattr(m, "left_limit"):
        if not isinstance(B, IntervalSet):
            raise SpaceMismatch("distribution functions measure interval sets only")
        return math.fsum(_interval_mass(m, iv) for iv in B.intervals)
    raise TypeError(f"cannot measure sets with {type(m).__name__}")


def _interval_mass(F, iv: Interval) -> float:
    upper = F(iv.hi) if iv.hi_closed else F.left_limit(iv.hi)
    lower = F.left_limit(iv.lo) if iv.lo_closed else F(iv.lo)
    return upper - lower


def hahn_decompose(d: SignedMeasure) -> tuple[BorelSet, SignedMeasure, SignedMeasure]:
    """Split ``d`` into ``(E, pos, neg)`` with ``d = pos - neg``.

    ``E`` collects the atoms of nonnegative weight (zero-weight atoms go to
    ``E``), ``pos(B) = d(E ∩ B)`` and ``neg(B) = -d(E^c ∩ B)``.
    """
    E_pts = [p for p, w in d.atoms if w >= 0]
    pos = SignedMeasure(d.space, [(p, w) for p, w in d.atoms if w >= 0])
    neg = SignedMeasure(d.space, [(p, -w) for p, w in d.atoms if w < 0])
    if isinstance(d.space, RealLine):
        E = IntervalSet.points(E_pts)
    else:
        E = PointSet(E_pts)
    return E, pos, neg


def tv_distance(P: SignedMeasure, Q: SignedMeasure) -> float:
    """Total-variation distance, normalized so that disjoint Diracs are at distance 2."""
    if P.space != Q.space:
        raise SpaceMismatch(f"{P.space!r} vs {Q.space!r}")
    return math.fsum(abs(w) for w in (P - Q).weights)


# distribution functions

def _finite_real(x) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError("breakpoints must be finite reals")
    return x


class PiecewiseFunction:
    """A right-continuous piecewise-linear-or-constant function on the real line.

    The function is described on a strictly increasing list of breakpoints
    ``x_0 < ... < x_m`` by

    * ``values[i] = f(x_i)``,
    * ``left_limits[i] = f(x_i-)`` (so jumps are ``values[i] - left_limits[i]``),
    * ``kinds[i]`` in ``{"linear", "constant"}`` for the open segment
      ``(x_i, x_{i+1})``; a linear segment runs from ``values[i]`` to
      ``left_limits[i+1]``.

    Left of ``x_0`` the function equals ``left_limits[0]``; right of ``x_m``
    it equals ``values[-1]``.
    """

    __slots__ = ("breakpoints", "values", "left_limits", "kinds")

    def __init__(self, breakpoints, values, kinds=None, left_limits=None, left_tail: float = 0.0):
        xs = tuple(_finite_real(x) for x in breakpoints)
        if not xs:
            raise ValueError("at least one breakpoint is required")
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        vs = tuple(float(v) for v in values)
        if len(vs) != len(xs):
            raise ValueError("need one value per breakpoint")
        if kinds is None:
            kinds = ("linear",) * (len(xs) - 1)
        kinds = tuple(kinds)
        if len(kinds) != len(xs) - 1 or any(k not in ("linear", "constant") for k in kinds):
            raise ValueError("need one kind ('linear' or 'constant') per segment")
        if left_limits is None:
            lls = [float(left_tail)]
            for i, k in enumerate(kinds):
                lls.append(vs[i + 1] if k == "linear" else vs[i])
        else:
            lls = [float(v) for v in left_limits]
            if len(lls) != len(xs):
                raise ValueError("need one left limit per breakpoint")
            for i, k in enumerate(kinds):
                if k == "constant" and lls[i + 1] != vs[i]:
                    raise ValueError(f"constant segment {i} has mismatched left limit")
        self.breakpoints = xs
        self.values = vs
        self.left_limits = tuple(lls)
        self.kinds = kinds

    def _segment_value(self, i: int, x: float) -> float:
        # value at x strictly inside (x_i, x_{i+1})
        if self.kinds[i] == "constant":
            return self.values[i]
        x0, x1 = self.breakpoints[i], self.breakpoints[i + 1]
        y0, y1 = self.values[i], self.left_limits[i + 1]
        t = (x - x0) / (x1 - x0)
        return y0 + t * (y1 - y0)

    def __call__(self, x: float) -> float:
        xs = self.breakpoints
        if x == math.inf:
            return self.values[-1]
        if x == -math.inf or x < xs[0]:
            return self.left_limits[0]
        i = bisect.bisect_right(xs, x) - 1
        if xs[i] == x or i == len(xs) - 1:
            return self.values[i]
        return self._segment_value(i, x)

    def left_limit(self, x: float) -> float:
        xs = self.breakpoints
        if x == -math.inf or x <= xs[0]:
            return self.left_limits[0]
        if x == math.inf or x > xs[-1]:
            return self.values[-1]
        i = bisect.bisect_left(xs, x)
        if xs[i] == x:
            return self.left_limits[i]
        return self._segment_value(i - 1, x)

    def jump(self, x: float) -> float:
        return self(x) - self.left_limit(x)

    def jump_points(self) -> tuple:
        return tuple(x for x, v, l in zip(self.breakpoints, self.values, self.left_limits) if v != l)

    @property
    def left_tail(self) -> float:
        return self.left_limits[0]

    @property
    def right_tail(self) -> float:
        return self.values[-1]

    def _combine(self, other: "PiecewiseFunction", op) -> "PiecewiseFunction":
        xs = sorted(set(self.breakpoints) | set(other.breakpoints))
        vals = [op(self(x), other(x)) for x in xs]
        lls = [op(self.left_limit(x), other.left_limit(x)) for x in xs]
        kinds = []
        for a, b in zip(xs, xs[1:]):
            mid = 0.5 * (a + b)
            linear = self._kind_at(mid) == "linear" or other._kind_at(mid) == "linear"
            kinds.append("linear" if linear else "constant")
        # a linear+linear segment can be flat; keep it linear, variation is unchanged
        return PiecewiseFunction(xs, vals, kinds, lls)

    def _kind_at(self, x: float) -> str:
        xs = self.breakpoints
        if x < xs[0] or x > xs[-1]:
            return "constant"
        return self.kinds[bisect.bisect_right(xs, x) - 1]

    def __sub__(self, other):
        return self._combine(other, lambda a, b: a - b)

    def __add__(self, other):
        return self._combine(other, lambda a, b: a + b)

    def to_json(self) -> dict:
        return {
            "breakpoints": list(self.breakpoints),
            "values": list(self.values),
            "left_limits": list(self.left_limits),
            "kinds": list(self.kinds),
        }

    @classmethod
    def from_json(cls, obj: dict):
        return cls(
            obj["breakpoints"],
            obj["values"],
            obj.get("kinds"),
            obj.get("left_limits"),
            obj.get("left_tail", 0.0),
        )

    def __repr__(self) -> str:
        return f"{type(self).__name__}({len(self.breakpoints)} breakpoints)"


class DistributionFunction(PiecewiseFunction):
    """A CDF: nondecreasing, values in [0, 1], tails 0 and 1."""

    __slots__ = ()

    def __init__(self, breakpoints, values, kinds=None, left_limits=None, left_tail: float = 0.0):
        super().__init__(breakpoints, values, kinds, left_limits, left_tail)
        seq = []
        for v, l in zip(self.values, self.left_limits):
            seq.extend((l, v))
        if any(b < a - 1e-15 for a, b in zip(seq, seq[1:])):
            raise ValueError("distribution function must be nondecreasing")
        if abs(self.left_limits[0]) > 1e-15 or abs(self.values[-1] - 1.0) > 1e-12:
            raise ValueError("distribution function tails must be 0 and 1")
        if min(seq) < -1e-15 or max(seq) > 1 + 1e-12:
            raise ValueError("distribution function values must lie in [0, 1]")


def _as_real(p) -> float:
    return float(p)


def cdf_of_measure(P: ProbMeasure) -> DistributionFunction:
    """Right-continuous step CDF of a finite measure on the real line."""
    if not isinstance(P.space, RealLine):
        raise SpaceMismatch("cdf_of_measure needs a measure on the real line")
    mass: dict[float, float] = {}
    for p, w in P.atoms:
        mass[_as_real(p)] = w
    xs = sorted(mass)
    cum = np.cumsum([mass[x] for x in xs]).tolist()
    cum[-1] = 1.0
    lls = [0.0] + cum[:-1]
    return DistributionFunction(xs, cum, ["constant"] * (len(xs) - 1), lls)


def total_variation_of_function(f: PiecewiseFunction) -> float:
    """Total variation over the real line of a piecewise function.

    Sums the jump magnitudes and the absolute increments of the linear
    segments; constant segments contribute nothing.
    """
    if not isinstance(f, PiecewiseFunction):
        raise TypeError("expected a PiecewiseFunction")
    parts = [abs(v - l) for v, l in zip(f.values, f.left_limits)]
    for i, kind in enumerate(f.kinds):
        if kind == "linear":
            parts.append(abs(f.left_limits[i + 1] - f.values[i]))
    return math.fsum(parts)


def hahn_test_function(P: SignedMeasure, Q: SignedMeasure) -> dict:
    """Per-atom values of I{E} - I{E^c} for the Hahn set E of ``P - Q``."""
    E, _, _ = hahn_decompose(P - Q)
    return {p: (1.0 if p in E else -1.0) for p in (P - Q).points}


def _values_on(f, points) -> list[float]:
    if callable(f) and not isinstance(f, Mapping):
        vals = [float(f(p)) for p in points]
    else:
        vals = [float(f.get(p, 0.0)) for p in points]
    if any(not -1.0 <= v <= 1.0 for v in vals):
        raise ValueError("test function values must lie in [-1, 1]")
    return vals


def tv_distance_bounded_functions(
    P: SignedMeasure,
    Q: SignedMeasure,
    f_grid: Sequence[Mapping | Callable],
) -> float:
    """Largest ``|∫f dP - ∫f dQ|`` over a finite family of [-1, 1]-valued functions.

    Each function is either a callable on points or a mapping from points to
    values (missing points read as 0). The result never exceeds
    :func:`tv_distance`; it attains it when the family contains
    :func:`hahn_test_function`.
    """
    d = P - Q
    best = 0.0
    for f in f_grid:
        vals = _values_on(f, d.points)
        best = max(best, abs(math.fsum(v * w for v, w in zip(vals, d.weights))))
    return best


# JSON

def space_to_json(space):
    if isinstance(space, RealLine):
        return "real"
    if isinstance(space, ProductSpace):
        return {"product": [space_to_json(space.first), space_to_json(space.second)]}
    out = {"points": [list(p) if isinstance(p, tuple) else p for p in space.points]}
    if space.metric is not None:
        out["metric"] = [list(r) for r in space.metric]
    return out


def space_from_json(obj):
    if obj == "real":
        return REAL_LINE
    if isinstance(obj, dict) and "product" in obj:
        a, b = obj["product"]
        return ProductSpace(space_from_json(a), space_from_json(b))
    if isinstance(obj, dict) and "points" in obj:
        pts = tuple(tuple(p) if isinstance(p, list) else p for p in obj["points"])
        return MetricSpace(pts, obj.get("metric"))
    if isinstance(obj, list):
        return MetricSpace(tuple(tuple(p) if isinstance(p, list) else p for p in obj))
    raise ValueError(f"unrecognized space {obj!r}")


def measure_to_json(m: SignedMeasure) -> dict:
    return {
        "space": space_to_json(m.space),
        "atoms": [[list(p) if isinstance(p, tuple) else p, w] for p, w in m.atoms],
    }


def measure_from_json(obj: dict, signed: bool = False) -> SignedMeasure:
    for key in ("space", "atoms"):
        if key not in obj:
            raise ValueError(f"measure is missing field '{key}'")
    space = space_from_json(obj["space"])
    atoms = []
    for i, item in enumerate(obj["atoms"]):
        if not isinstance(item, (list, tuple)) or len(item) != 2:
            raise ValueError(f"atoms[{i}] must be a [point, weight] pair")
        atoms.append((item[0], item[1]))
    cls = SignedMeasure if signed else ProbMeasure
    return cls(space, atoms)
