import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from beliefkernel.config import CapExceeded
from beliefkernel.convergence import (
    SQRT2,
    BaseFamily,
    CantorDistribution,
    MeasureSequence,
    base_criterion_setwise,
    base_criterion_weak,
    cantor_cover,
    cantor_cover_intervals,
    cantor_function,
    cantor_measure_sequence,
    cantor_sequence,
    cdf_weak_check,
    inclusion_exclusion_transfer,
    point_mass_limit,
    point_mass_measure_sequence,
    point_mass_sequence,
    portmanteau_weak_check,
    rational_interval_base,
    setwise_check,
    tv_check,
)
from beliefkernel.measures import (
    REAL_LINE,
    DistributionFunction,
    MetricSpace,
    ProbMeasure,
    cdf_of_measure,
    dirac,
    total_variation_of_function,
)
from beliefkernel.sets import IntervalSet, PointSet

RATIONAL_ENDS = [Fraction(1), Fraction(4, 3), Fraction(7, 5), Fraction(3, 2), Fraction(5, 3), Fraction(2)]


def constant_sequence(P, n_max=20):
    return MeasureSequence(lambda n: P, P, n_max)


def F_exact(n: int, x: Fraction) -> Fraction:
    """The recursion for the Cantor iterates, evaluated in exact arithmetic."""
    if x <= 0:
        return Fraction(0)
    if x >= 1:
        return Fraction(1)
    if n == 0:
        return x
    if x < Fraction(1, 3):
        return F_exact(n - 1, 3 * x) / 2
    if x <= Fraction(2, 3):
        return Fraction(1, 2)
    return Fraction(1, 2) + F_exact(n - 1, 3 * x - 2) / 2


def cover_intervals_exact(k: int):
    out = [(Fraction(0), Fraction(1))]
    for _ in range(k):
        nxt = []
        for a, b in out:
            w = (b - a) / 3
            nxt += [(a, a + w), (b - w, b)]
        out = nxt
    return out


class TestPortmanteau:
    def test_example2_open_interval(self):
        r = portmanteau_weak_check(point_mass_measure_sequence(100), [IntervalSet.open(1, 2)])
        assert r.consistent
        # sqrt(2) + 1/n lies in (1, 2) from n = 3 on
        assert {v for n, v in r.entries[0]["values"].items() if n >= 3} == {1.0}

    def test_example2_closed_point(self):
        r = portmanteau_weak_check(point_mass_measure_sequence(100), closeds=[IntervalSet.points([SQRT2])])
        assert r.consistent
        e = r.entries[0]
        assert e["limsup"] == 0 and e["limit_value"] == 1

    def test_constant_sequence(self):
        P = ProbMeasure(REAL_LINE, {0.0: 0.5, 1.0: 0.5})
        r = portmanteau_weak_check(constant_sequence(P), [IntervalSet.open(-1, 0.5)], [IntervalSet.closed(0, 0)])
        assert r.consistent

    def test_empty_lists(self):
        with pytest.raises(ValueError):
            portmanteau_weak_check(point_mass_measure_sequence(10))

    def test_report_has_disclaimer(self):
        r = portmanteau_weak_check(point_mass_measure_sequence(10), [IntervalSet.open(1, 2)])
        assert "not prove" in r.to_json()["disclaimer"]


class TestCdfWeak:
    def test_cantor_bound(self):
        grid = np.arange(3**8 + 1) / 3**8
        r = cdf_weak_check(cantor_measure_sequence(8), grid, bound=lambda n: 2.0 ** (1 - n) / 6)
        assert r.consistent
        for n, dev in r.entries[0]["values"].items():
            assert dev <= 2.0 ** (1 - n) / 6 + 1e-12

    def test_point_mass_continuity_probe(self):
        seq = MeasureSequence(lambda n: cdf_of_measure(point_mass_sequence(n)), cdf_of_measure(point_mass_limit()), 100)
        r = cdf_weak_check(seq, [2.0])
        assert r.consistent
        assert r.entries[0]["values"][100] == 0

    def test_jump_probe_excluded(self):
        seq = MeasureSequence(lambda n: cdf_of_measure(point_mass_sequence(n)), cdf_of_measure(point_mass_limit()), 50)
        r = cdf_weak_check(seq, [SQRT2, 2.0])
        assert r.extra["excluded_probes"] == [SQRT2]
        assert r.notes

    def test_rejects_nonfinite_probe(self):
        with pytest.raises(ValueError):
            cdf_weak_check(cantor_measure_sequence(3), [math.inf])


class TestSetwise:
    def test_example2_point(self):
        r = setwise_check(point_mass_measure_sequence(100), [IntervalSet.points([SQRT2])])
        assert r.verdict == "violated"
        w = r.witness
        assert w["margin"] == 1.0 and w["limit_value"] == 1.0 and w["tail_limsup"] == 0.0
        assert w["index_range"] == [76, 100]

    def test_constant(self):
        P = dirac(REAL_LINE, 0.0)
        assert setwise_check(constant_sequence(P), [IntervalSet.points([0.0]), IntervalSet.open(1, 2)]).consistent

    def test_cantor_cover_values(self):
        seq = cantor_measure_sequence(10)
        ks = range(1, 13)
        r = setwise_check(seq, [cantor_cover(k) for k in ks], labels=[f"c{k}" for k in ks])
        assert r.verdict == "violated"
        for k in ks:
            e = r.entry(f"c{k}")
            assert e["limit_value"] == pytest.approx(1.0, abs=1e-12)
            for n in range(1, min(k, 10) + 1):
                assert e["values"][n] == pytest.approx((2 / 3) ** (k - n), abs=1e-12)

    def test_cantor_cover_against_exact_recursion(self):
        for n in (1, 2, 4):
            F = cantor_sequence(n)
            for k in range(n, 7):
                ivs = cover_intervals_exact(k)
                exact = sum(F_exact(n, b) - F_exact(n, a) for a, b in ivs)
                assert exact == Fraction(2, 3) ** (k - n)
                assert sum(F(float(b)) - F(float(a)) for a, b in ivs) == pytest.approx(float(exact), abs=1e-12)

    def test_cover_shape(self):
        assert len(cantor_cover_intervals(5)) == 32
        assert cantor_cover(3).is_closed()
        with pytest.raises(ValueError):
            cantor_cover(13)


class TestBaseWeak:
    def test_example2(self):
        r = base_criterion_weak(point_mass_measure_sequence(200), rational_interval_base(RATIONAL_ENDS), 2)
        assert r.consistent

    def test_constant(self):
        P = ProbMeasure(REAL_LINE, {1.2: 0.5, 1.9: 0.5})
        assert base_criterion_weak(constant_sequence(P), rational_interval_base(RATIONAL_ENDS), 2).consistent

    def test_wrong_limit(self):
        seq = MeasureSequence(lambda n: dirac(REAL_LINE, 1.0 / n), dirac(REAL_LINE, 1.0), 50)
        base = BaseFamily((IntervalSet.open(0.5, 1.5),), ("(0.5, 1.5)",))
        r = base_criterion_weak(seq, base, 1)
        assert r.verdict == "violated"
        assert r.witness["label"] == "(0.5, 1.5)"

    def test_union_cap(self, monkeypatch):
        monkeypatch.setenv("BELIEFKERNEL_CAPS", "composite_sets=10")
        with pytest.raises(CapExceeded, match="composite_sets cap of 10"):
            base_criterion_weak(point_mass_measure_sequence(10), rational_interval_base(RATIONAL_ENDS), 2)

    def test_base_members_must_be_open(self):
        with pytest.raises(ValueError):
            BaseFamily((IntervalSet.closed(0, 1),))

    def test_closed_under_intersection_flag(self):
        assert rational_interval_base(RATIONAL_ENDS).closed_under_intersection
        assert not BaseFamily((IntervalSet.open(0, 2), IntervalSet.open(1, 3))).closed_under_intersection
        assert BaseFamily((IntervalSet.empty(), IntervalSet.real_line())).closed_under_intersection


class TestBaseSetwise:
    def test_example2_point(self):
        pt = IntervalSet.points([SQRT2])
        base = rational_interval_base(RATIONAL_ENDS[:3])
        r = base_criterion_setwise(point_mass_measure_sequence(100), base, [(pt, [pt])])
        assert r.verdict == "violated"
        assert r.witness["kind"] in ("cover-union", "closed-liminf")
        assert r.witness["tail_liminf"] == 0.0

    def test_constant(self):
        P = dirac(REAL_LINE, 0.0)
        C = IntervalSet.closed(-1, 1)
        r = base_criterion_setwise(constant_sequence(P), rational_interval_base(RATIONAL_ENDS[:2]), [(C, [C])])
        assert r.consistent

    def test_cantor_set_covers(self):
        seq = cantor_measure_sequence(4)
        base = rational_interval_base([Fraction(0), Fraction(1)])
        margins = []
        for k in (2, 6, 8):
            C = cantor_cover(k)
            r = base_criterion_setwise(seq, base, [(C, cantor_cover_intervals(k))])
            margins.append(r.entry("closed0")["margin"])
        assert margins[0] <= 1e-9 < margins[1] < margins[2]

    def test_cover_outside_set(self):
        C = IntervalSet.closed(0, 1)
        with pytest.raises(ValueError, match="not inside"):
            base_criterion_setwise(point_mass_measure_sequence(5), rational_interval_base(RATIONAL_ENDS[:2]), [(C, [IntervalSet.closed(0, 2)])])


class TestTvCheck:
    def test_point_mass_fails_tv(self):
        r = tv_check(point_mass_measure_sequence(50))
        assert r.verdict == "violated" and r.witness["margin"] == 2.0

    def test_mixture_converges(self):
        S = MetricSpace(("a", "b"))
        seq = MeasureSequence(lambda n: ProbMeasure(S, {"a": 0.5 + 2**-n, "b": 0.5 - 2**-n}), ProbMeasure(S, {"a": 0.5, "b": 0.5}), 40)
        assert tv_check(seq).consistent


class TestInclusionExclusion:
    def test_two_sets(self):
        S = MetricSpace(tuple(range(4)))
        P = ProbMeasure(S, {0: 0.1, 1: 0.2, 2: 0.3, 3: 0.4})
        assert inclusion_exclusion_transfer([P], [PointSet([0, 1]), PointSet([1, 2])])

    def test_three_random_sets_exhaustive(self):
        rng = np.random.default_rng(3)
        S = MetricSpace(tuple(range(6)))
        sets = [PointSet(np.flatnonzero(rng.random(6) < 0.5).tolist()) for _ in range(3)]
        measures = [ProbMeasure(S, zip(range(6), rng.dirichlet(np.ones(6)))) for _ in range(4)]
        assert inclusion_exclusion_transfer(measures, sets)
        # oracle: union value from the lattice of intersections, by explicit subsets
        for mu in measures:
            for r in range(1, 4):
                for fam in itertools.combinations(sets, r):
                    direct = mu(PointSet(set().union(*(s.points for s in fam))))
                    lattice = 0.0
                    for q in range(1, r + 1):
                        for sub in itertools.combinations(fam, q):
                            lattice += (-1) ** (q + 1) * mu(PointSet(frozenset.intersection(*(s.points for s in sub))))
                    assert direct == pytest.approx(lattice, abs=1e-12)

    def test_disjoint(self):
        S = MetricSpace(tuple(range(3)))
        P = ProbMeasure(S, {0: 0.2, 1: 0.3, 2: 0.5})
        sets = [PointSet([i]) for i in range(3)]
        assert inclusion_exclusion_transfer([P, dirac(S, 0)], sets)

    def test_too_many_sets(self):
        with pytest.raises(ValueError):
            inclusion_exclusion_transfer([dirac(REAL_LINE, 0.0)], [IntervalSet.empty()] * 11)


@given(st.integers(1, 8), st.integers(1, 5), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_inclusion_exclusion_always_holds(n_atoms, n_sets, n_measures, seed):
    rng = np.random.default_rng(seed)
    S = MetricSpace(tuple(range(n_atoms)))
    sets = [PointSet(np.flatnonzero(rng.random(n_atoms) < 0.5).tolist()) for _ in range(n_sets)]
    measures = [ProbMeasure(S, zip(range(n_atoms), rng.dirichlet(np.ones(n_atoms)))) for _ in range(n_measures)]
    assert inclusion_exclusion_transfer(measures, sets)


class TestCantorIterates:
    def test_plateau(self):
        F1 = cantor_sequence(1)
        assert F1(0.5) == 0.5
        assert F1(1 / 3) == 0.5
        assert abs(F1(1 / 3) - cantor_sequence(0)(1 / 3)) == pytest.approx(1 / 6)

    def test_boundary(self):
        for n in range(12):
            F = cantor_sequence(n)
            assert F(0.0) == 0.0 and F(1.0) == 1.0

    def test_negative_index(self):
        with pytest.raises(ValueError):
            cantor_sequence(-1)

    def test_first_variation(self):
        # F1 - F0 rises to 1/6, falls by 1/3, rises by 1/6
        V = total_variation_of_function(cantor_sequence(1) - cantor_sequence(0))
        assert V == pytest.approx(2 / 3, abs=1e-15)

    def test_max_first_gap(self):
        grid = np.arange(3**6 + 1) / 3**6
        d = np.abs(cantor_sequence(1).evaluate(grid) - grid)
        assert d.max() == pytest.approx(1 / 6, abs=1e-15)
        assert grid[np.argmax(d)] == pytest.approx(1 / 3)

    def test_matches_exact_recursion(self):
        for n in range(5):
            F = cantor_sequence(n)
            for j in range(0, 82):
                x = Fraction(j, 81)
                assert F(float(x)) == pytest.approx(float(F_exact(n, x)), abs=1e-15)

    def test_limit_function(self):
        assert cantor_function(1 / 3) == 0.5
        assert cantor_function(0.25) == pytest.approx(1 / 3)
        assert CantorDistribution().jump(0.5) == 0

    def test_contraction_and_monotonicity(self):
        grid = np.arange(3**9 + 1) / 3**9
        prev_gap = None
        for n in range(1, 10):
            a, b = cantor_sequence(n - 1).evaluate(grid), cantor_sequence(n).evaluate(grid)
            gap = np.abs(b - a).max()
            if prev_gap is not None:
                assert gap <= 0.5 * prev_gap + 1e-15
            prev_gap = gap
            assert np.all(np.diff(b) >= 0)

    def test_is_distribution_function(self):
        assert isinstance(cantor_sequence(3), DistributionFunction)
        assert cantor_sequence(3).jump_points() == ()


class TestPointMass:
    def test_first_term(self):
        P1 = point_mass_sequence(1)
        assert P1.atoms[0][0] == pytest.approx(2.41421356, abs=1e-8)
        assert P1.atoms[0][1] == 1.0

    def test_limit(self):
        assert point_mass_limit().atoms == ((SQRT2, 1.0),)

    def test_no_mass_on_limit_point(self):
        for n in range(1, 200):
            assert point_mass_sequence(n)(IntervalSet.points([SQRT2])) == 0
