import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from beliefkernel.mdmii import (
    FactoredBelief,
    MdmiiModel,
    mdmii_filter_invariant_check,
    pstar_equicontinuity_diagnostic,
    to_pomdp,
)
from beliefkernel.pomdp import Belief, kinf_compact_diagnostic, solve_finite_horizon
from models import random_mdmii, sample_trace
from oracles import path_posterior

SQRT2 = math.sqrt(2)


def tiny():
    return MdmiiModel(["y"], ["w"], ["a"], [[True]], [[[[[1.0]]]]], [[[2.0]]], 0.5)


def two_by_two(P=None):
    # a1 is unavailable in y1
    if P is None:
        P = np.full((2, 2, 2, 2, 2), 0.25)
    cost = [[[1.0, 0.5], [1.0, 0.5]], [[1.0, None], [2.0, None]]]
    return MdmiiModel(["y0", "y1"], ["w0", "w1"], ["a0", "a1"], [[1, 1], [1, 0]], P, cost, 0.9)


class TestModel:
    def test_empty_action_set(self):
        with pytest.raises(ValueError, match="empty"):
            MdmiiModel(["y"], ["w"], ["a"], [[False]], [[[[[1.0]]]]], [[[None]]], 0.5)

    def test_cost_required_on_graph(self):
        with pytest.raises(ValueError, match="missing on G"):
            MdmiiModel(["y"], ["w"], ["a"], [[True]], [[[[[1.0]]]]], [[[None]]], 0.5)

    def test_off_graph_stored_as_nan(self):
        m = two_by_two()
        assert np.isnan(m.cost[1, 0, 1]) and not np.isinf(m.cost).any()
        assert m.available_actions("y1") == ["a0"]

    def test_json_round_trip(self):
        m = two_by_two()
        obj = json.loads(json.dumps(m.to_json()))
        assert obj["available"] == {"y0": ["a0", "a1"], "y1": ["a0"]}
        m2 = MdmiiModel.from_json(obj)
        assert np.array_equal(m2.available, m.available)
        assert np.array_equal(m2.P, m.P)

    def test_json_unknown_action(self):
        obj = two_by_two().to_json()
        obj["available"]["y1"] = ["a9"]
        with pytest.raises(ValueError, match="a9"):
            MdmiiModel.from_json(obj)


class TestToPomdp:
    def test_trivial(self):
        pm = to_pomdp(tiny())
        assert pm.states == (("y", "w"),)
        assert pm.Q[0].tolist() == [[1.0]]

    def test_projection(self):
        m = random_mdmii(np.random.default_rng(1), 3, 2, 2)
        pm = to_pomdp(m)
        for xi, (y, w) in enumerate(pm.states):
            yi = m.observed.index(y)
            for ai in range(len(pm.actions)):
                assert pm.Q[ai, xi, yi] == 1.0
            assert pm.Q0[xi, yi] == 1.0

    def test_extended_cost_and_tags(self):
        pm = to_pomdp(two_by_two())
        assert pm.cost[pm.states.index(("y1", "w0")), 1] == math.inf
        assert pm.alpha == 0.9 and pm.assumption == "D"

    def test_level_sets_unchanged(self):
        m = two_by_two()
        pm = to_pomdp(m)
        for lam in (0.5, 1.0, 2.0, 10.0):
            on_graph = {
                (y, w, a)
                for yi, y in enumerate(m.observed)
                for wi, w in enumerate(m.hidden)
                for ai, a in enumerate(m.actions)
                if m.available[yi, ai] and m.cost[yi, wi, ai] <= lam
            }
            extended = {
                (*x, a) for xi, x in enumerate(pm.states) for ai, a in enumerate(pm.actions) if pm.cost[xi, ai] <= lam
            }
            assert on_graph == extended
        assert kinf_compact_diagnostic(pm, [0.5, 1.0, 2.0])["verdict"] == "pass"


class TestFilter:
    def test_one_step_support(self):
        m = random_mdmii(np.random.default_rng(2), 3, 3, 2)
        y0, w, trace = sample_trace(np.random.default_rng(3), m, 1)
        r = mdmii_filter_invariant_check(m, FactoredBelief(y0, tuple(w)), trace)
        assert r["ok"] and r["steps"][0]["off_support_mass"] == 0.0

    def test_deterministic_point_mass(self):
        P = np.zeros((2, 2, 2, 2, 2))
        for a in range(2):
            for y in range(2):
                for w in range(2):
                    P[a, y, w, 1 - y, (w + a) % 2] = 1.0
        m = two_by_two(P)
        r = mdmii_filter_invariant_check(m, FactoredBelief("y0", (1.0, 0.0)), [("a1", "y1"), ("a0", "y0")])
        assert r["ok"]
        assert r["final_belief"] == [0.0, 1.0, 0.0, 0.0]

    def test_matches_path_enumeration(self):
        rng = np.random.default_rng(4)
        m = random_mdmii(rng, 2, 2, 2)
        y0, w, trace = sample_trace(rng, m, 3)
        fb = FactoredBelief(y0, tuple(w))
        r = mdmii_filter_invariant_check(m, fb, trace)
        ref = path_posterior(m.P, fb.to_belief(m).probs.reshape(2, 2), trace, list(m.actions), list(m.observed))
        assert r["ok"]
        assert np.allclose(r["final_belief"], ref.ravel(), atol=1e-12, rtol=0)

    def test_unavailable_action(self):
        with pytest.raises(ValueError, match="not in A"):
            mdmii_filter_invariant_check(two_by_two(), FactoredBelief("y1", (0.5, 0.5)), [("a1", "y0")])

    def test_factored_belief_requires_single_slice(self):
        with pytest.raises(ValueError):
            FactoredBelief.from_belief(two_by_two(), Belief([0.25] * 4))


class TestPstar:
    def grid_model(self, n=12):
        # W holds 1/k, 0 and the shifted points sqrt2 + 1/k, sqrt2; w -> sqrt2 + w deterministically on Y = {y}
        s = [1 / k for k in range(1, n + 1)] + [0.0]
        W = s + [SQRT2 + v for v in s]
        P = np.zeros((1, 1, len(W), 1, len(W)))
        for i, v in enumerate(s):
            P[0, 0, i, 0, len(s) + i] = 1.0
        for i in range(len(s), len(W)):
            P[0, 0, i, 0, i] = 1.0
        cost = [[[0.0] for _ in W]]
        m = MdmiiModel(["y"], W, ["a"], [[True]], P, cost, 0.5)
        path = ([(("y", 1 / k), "a") for k in range(1, n + 1)], (("y", 0.0), "a"))
        return m, W, path

    def test_constant(self):
        m = random_mdmii(np.random.default_rng(5), 2, 2, 1)
        m = MdmiiModel(m.observed, m.hidden, m.actions, m.available, np.broadcast_to(m.P[:, :1, :1], m.P.shape), [[[1.0]] * 2] * 2, 0.5)
        paths = [([(("y0", "w0"), "a0"), (("y1", "w1"), "a0")], (("y0", "w1"), "a0"))]
        r = pstar_equicontinuity_diagnostic(m, [["w0", "w1"], ["w0"]], paths)
        assert r.equicontinuous and r.worst["deviation"] == 0

    def test_tv_continuous(self):
        m = random_mdmii(np.random.default_rng(6), 2, 2, 1, sparsity=0)
        x = ("y0", "w0")
        paths = [([(x, "a0")] * 10, (x, "a0"))]
        assert pstar_equicontinuity_diagnostic(m, [["w0", "w1"], ["w1"]], paths).equicontinuous

    def test_base_passes_nonbase_fails(self):
        m, W, path = self.grid_model()
        assert pstar_equicontinuity_diagnostic(m, [W], [path]).equicontinuous
        r = pstar_equicontinuity_diagnostic(m, [W, [w for w in W if w != SQRT2]], [path])
        assert not r.equicontinuous
        assert r.worst["deviation"] == 1.0

    def test_base_needs_w(self):
        m, W, path = self.grid_model(3)
        with pytest.raises(ValueError, match="W itself"):
            pstar_equicontinuity_diagnostic(m, [W[:-1]], [path])


def _policy_violations(m, sol):
    bad = []
    for (t, key), a in sol.policy.items():
        fb = FactoredBelief.from_belief(m, sol.beliefs[key])
        if a not in m.available_actions(fb.y):
            bad.append((t, fb.y, a))
    return bad


mdmii_args = st.tuples(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3), st.integers(0, 2**32 - 1))


@given(mdmii_args)
def test_filter_invariant_random(args):
    ny, nw, na, seed = args
    rng = np.random.default_rng(seed)
    m = random_mdmii(rng, ny, nw, na)
    y0, w, trace = sample_trace(rng, m, int(rng.integers(1, 5)))
    assert mdmii_filter_invariant_check(m, FactoredBelief(y0, tuple(w)), trace)["ok"]


@given(mdmii_args)
def test_policy_avoids_unavailable(args):
    ny, nw, na, seed = args
    rng = np.random.default_rng(seed)
    m = random_mdmii(rng, ny, nw, na)
    y = m.observed[int(rng.integers(ny))]
    sol = solve_finite_horizon(to_pomdp(m), FactoredBelief(y, tuple(rng.dirichlet(np.ones(nw)))).to_belief(m), 3)
    assert all(math.isfinite(v) for v in sol.values)
    assert _policy_violations(m, sol) == []


@given(mdmii_args)
def test_projection_sufficiency(args):
    # relabeling W permutes the hidden coordinate only; values at matching factored beliefs agree
    ny, nw, na, seed = args
    rng = np.random.default_rng(seed)
    m = random_mdmii(rng, ny, nw, na)
    perm = rng.permutation(nw)
    P2 = m.P[:, :, perm][:, :, :, :, perm]
    cost = np.where(np.isnan(m.cost), None, m.cost.astype(object))[:, perm].tolist()
    m2 = MdmiiModel(m.observed, [m.hidden[i] for i in perm], m.actions, m.available, P2, cost, m.alpha)
    y = m.observed[-1]
    w = rng.dirichlet(np.ones(nw))
    v1 = solve_finite_horizon(to_pomdp(m), FactoredBelief(y, tuple(w)).to_belief(m), 2).values
    v2 = solve_finite_horizon(to_pomdp(m2), FactoredBelief(y, tuple(w[perm])).to_belief(m2), 2).values
    assert np.allclose(v1, v2, atol=1e-10, rtol=0)
