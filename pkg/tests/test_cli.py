import io
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from beliefkernel.cli import dumps, run
from beliefkernel.mdmii import MdmiiModel
from models import random_mdmii

FIXTURES = Path(__file__).parent / "fixtures"
TIGER = str(FIXTURES / "tiger.json")


def call(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run([str(a) for a in argv], out, err)
    return code, out.getvalue(), err.getvalue()


def ok(*argv):
    code, out, err = call(*argv)
    assert code == 0, err
    return json.loads(out)


@pytest.fixture
def write(tmp_path):
    def _write(name, obj):
        p = tmp_path / name
        p.write_text(json.dumps(obj))
        return str(p)

    return _write


def test_dumps_format():
    s = dumps({"b": 1 / 3, "a": float("inf"), "c": [2.0]})
    assert s.index('"a"') < s.index('"b"')
    assert '"inf"' in s and "0.333333333333" in s and "0.3333333333333" not in s


class TestDistance:
    def test_identical(self, write):
        p = write("p.json", {"space": [0, 1, 2], "atoms": [[0, 0.2], [1, 0.5], [2, 0.3]]})
        r = ok("distance", "--p", p, "--q", p)
        assert r["distance"] == 0

    def test_value(self, write):
        p = write("p.json", {"space": [0, 1], "atoms": [[0, 1.0]]})
        q = write("q.json", {"space": [0, 1], "atoms": [[0, 0.25], [1, 0.75]]})
        r = ok("distance", "--p", p, "--q", q)
        assert r["distance"] == 1.5 and r["hahn_set"] == {"points": [0]}

    def test_schema_error_names_field(self, write):
        p = write("p.json", {"atoms": []})
        code, _, err = call("distance", "--p", p, "--q", p)
        assert code == 1 and "'space'" in err and p in err

    def test_missing_file(self):
        code, _, err = call("distance", "--p", "nope.json", "--q", "nope.json")
        assert code == 1 and "not found" in err

    def test_usage_error(self):
        code, _, _ = call("distance", "--p")
        assert code == 2


class TestConverge:
    def test_cantor_cdf(self, write):
        spec = write("s.json", {"sequence": "cantor", "mode": "cdf", "N_max": 6, "grid": 3**6 + 1})
        assert ok("converge-diagnose", "--spec", spec)["verdict"] == "consistent"

    def test_point_mass_setwise(self, write):
        spec = write("s.json", {"sequence": "point-mass", "sets": [{"points": [2**0.5]}], "mode": "setwise", "N_max": 50})
        r = ok("converge-diagnose", "--spec", spec)
        assert r["verdict"] == "violated" and r["witness"] is not None

    def test_terms_file(self, write):
        terms = [{"space": "real", "atoms": [[1 / k, 1.0]]} for k in range(1, 21)]
        spec = write("s.json", {"sequence": {"terms": terms, "limit": {"space": "real", "atoms": [[0, 1.0]]}}, "mode": "tv"})
        assert ok("converge-diagnose", "--spec", spec)["verdict"] == "violated"

    def test_mode_needs_sets(self, write):
        spec = write("s.json", {"sequence": "cantor", "mode": "setwise"})
        assert call("converge-diagnose", "--spec", spec)[0] == 1

    def test_bad_sequence(self, write):
        spec = write("s.json", {"sequence": "nope"})
        code, _, err = call("converge-diagnose", "--spec", spec)
        assert code == 1 and "'sequence'" in err


class TestKernel:
    def test_default_example(self):
        r = ok("kernel-diagnose", "--n-max", 50)
        assert r["verdict"] == "not equicontinuous"

    def test_product_base(self):
        assert ok("kernel-diagnose", "--mode", "product-base", "--n-max", 50)["verdict"] == "consistent"


class TestFilterSolve:
    def test_filter_posterior(self, write):
        z = write("z.json", {"probs": [0.5, 0.5]})
        r = ok("filter", "--model", TIGER, "--belief", z, "--action", "listen", "--obs", "hear-left")
        assert r["posterior"] == pytest.approx([0.85, 0.15])
        assert r["null_observation"] is False

    def test_filter_kernel(self):
        r = ok("filter", "--model", TIGER, "--action", "listen")
        assert sum(e["weight"] for e in r["belief_kernel"]) == pytest.approx(1.0)

    def test_unknown_action(self):
        code, _, err = call("filter", "--model", TIGER, "--action", "dance")
        assert code == 1 and "dance" in err

    def test_tiger_horizon_three(self):
        frozen = json.loads((FIXTURES / "tiger_oracle.json").read_text())
        r = ok("solve", "--model", TIGER, "--horizon", 3)
        assert r["value"] == pytest.approx(frozen["values"]["3"], abs=1e-9)

    def test_epsilon(self):
        r = ok("solve", "--model", TIGER, "--epsilon", 0.5)
        assert r["two_sided"] and r["error_bound"] <= 0.5

    def test_horizon_or_epsilon_required(self):
        assert call("solve", "--model", TIGER)[0] == 2
        assert call("solve", "--model", TIGER, "--horizon", 1, "--epsilon", 1)[0] == 2

    def test_cap_message(self, monkeypatch):
        monkeypatch.setenv("BELIEFKERNEL_CAPS", "belief_nodes=10")
        code, _, err = call("solve", "--model", TIGER, "--horizon", 5)
        assert code == 1 and "belief_nodes" in err and "10" in err and "BELIEFKERNEL_CAPS" in err

    def test_bad_belief(self, write):
        z = write("z.json", {"probs": [1.0]})
        code, _, err = call("solve", "--model", TIGER, "--belief", z, "--horizon", 1)
        assert code == 1 and "2 states" in err


class TestDiagnose:
    def test_kinf_model(self):
        assert ok("diagnose", "--check", "kinf", "--model", TIGER)["verdict"] == "pass"

    def test_kinf_grid(self, write):
        g = list(np.linspace(-2, 2, 9))
        grid = write("g.json", {"cost": np.outer(g, g).tolist(), "x_grid": g, "a_grid": g})
        assert ok("diagnose", "--check", "kinf", "--grid", grid, "--lambdas", "0")["verdict"] == "fail"

    def test_requi(self):
        assert ok("diagnose", "--check", "requi", "--model", TIGER)["verdict"] == "equicontinuous"

    def test_requi_needs_model(self, write):
        grid = write("g.json", {"cost": [[0]]})
        assert call("diagnose", "--check", "requi", "--grid", grid)[0] == 2


class TestMdmii:
    def model_file(self, write):
        return write("m.json", random_mdmii(np.random.default_rng(0), 2, 2, 2).to_json())

    def test_convert(self, write):
        r = ok("mdmii-convert", "--model", self.model_file(write))
        assert len(r["states"]) == 4
        assert "inf" in json.dumps(r["cost"]) or all(v != "inf" for row in r["cost"] for v in row)

    def test_check(self, write):
        r = ok("mdmii-check", "--model", self.model_file(write), "--traces", 5, "--horizon", 2)
        assert r["filter_ok"] and r["unavailable_actions"] == [] and r["traces"] == 5

    def test_check_bad_trace(self, write):
        cost = [[[1.0, 0.5], [1.0, 0.5]], [[1.0, None], [2.0, None]]]
        m = MdmiiModel(["y0", "y1"], ["w0", "w1"], ["a0", "a1"], [[1, 1], [1, 0]], np.full((2,) * 5, 0.25), cost, 0.9)
        mf = write("m2.json", m.to_json())
        tr = write("t.json", {"y0": "y1", "steps": [["a1", "y0"]]})
        code, _, err = call("mdmii-check", "--model", mf, "--trace", tr)
        assert code == 1 and "not in A" in err


class TestDemo:
    def test_cantor(self):
        r = ok("demo", "cantor", "--n", 8)
        assert r["sup_gap"] <= 2**-7 / 6 + 1e-12
        assert r["weak_verdict"] == "consistent" and r["setwise_verdict"] == "violated"
        assert r["setwise_witness"]["label"].startswith("cover")

    def test_point_mass(self):
        r = ok("demo", "point-mass", "--n-max", 60)
        assert r["weak_verdict"] == "consistent" and r["setwise_verdict"] == "violated"
        assert r["setwise_witness"]["label"] == "{sqrt2}"

    def test_nonsetwise_kernel(self):
        r = ok("demo", "nonsetwise-kernel", "--n-max", 40)
        assert r["equicontinuity_verdict"] == "not equicontinuous" and r["product_base_verdict"] == "consistent"
        assert r["conditional_atoms"]["0.5"] == pytest.approx(2**0.5 + 0.5)

    def test_cantor_range(self):
        assert call("demo", "cantor", "--n", 11)[0] == 1

    def test_unknown_demo(self):
        assert call("demo", "bogus")[0] == 2


def test_human_format():
    code, out, _ = call("--format", "human", "solve", "--model", TIGER, "--horizon", 1)
    assert code == 0 and out.startswith(("action", "horizon", "beliefs", "policy", "value", "values"))
    assert "value: " in out


def test_module_entry_point_is_deterministic():
    cmd = [sys.executable, "-m", "beliefkernel", "solve", "--model", TIGER, "--horizon", "2"]
    a = subprocess.run(cmd, capture_output=True, check=True).stdout
    b = subprocess.run(cmd, capture_output=True, check=True).stdout
    assert a == b and json.loads(a)["horizon"] == 2
