"""Command-line entry point.

JSON output is the contract: keys are sorted and floats carry 12
significant digits, so repeated runs on the same inputs are byte-identical.
``--format human`` renders the same document as indented ``key: value``
lines.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from fractions import Fraction
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import convergence as cv
from . import kernels as kn
from . import mdmii as md
from . import pomdp as pm
from .config import CapExceeded
from .measures import (
    REAL_LINE,
    cdf_of_measure,
    hahn_decompose,
    measure_from_json,
    tv_distance,
)
from .sets import IntervalSet, PointSet, set_from_json, set_to_json


class DomainError(Exception):
    """Valid usage, but the request cannot be carried out."""


# output

def _plain(obj: Any) -> Any:
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return float(format(x, ".12g")) + 0.0
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, Fraction):
        return _plain(float(obj))
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (PointSet, IntervalSet)):
        return _plain(set_to_json(obj))
    if isinstance(obj, pm.Belief):
        return _plain(obj.probs.tolist())
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if hasattr(obj, "to_json"):
        return _plain(obj.to_json())
    if isinstance(obj, (list, tuple, set, frozenset)):
        return [_plain(v) for v in obj]
    return str(obj)


def dumps(obj: Any) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2, ensure_ascii=False)


def _human(obj: Any, indent: int = 0) -> list[str]:
    pad = "  " * indent
    lines = []
    if isinstance(obj, dict):
        for k in sorted(obj):
            v = obj[k]
            if isinstance(v, (dict, list)) and v:
                lines.append(f"{pad}{k}:")
                lines.extend(_human(v, indent + 1))
            else:
                lines.append(f"{pad}{k}: {json.dumps(v, ensure_ascii=False)}")
    elif isinstance(obj, list):
        if all(not isinstance(v, (dict, list)) for v in obj):
            lines.append(pad + ", ".join(json.dumps(v, ensure_ascii=False) for v in obj))
        else:
            for i, v in enumerate(obj):
                lines.append(f"{pad}- [{i}]")
                lines.extend(_human(v, indent + 1))
    else:
        lines.append(pad + json.dumps(obj, ensure_ascii=False))
    return lines


def emit(obj: Any, fmt: str, out=None) -> None:
    out = out or sys.stdout
    if fmt == "human":
        out.write("\n".join(_human(_plain(obj))) + "\n")
    else:
        out.write(dumps(obj) + "\n")


# input

def _load(path: str | None, what: str) -> Any:
    if path is None:
        raise DomainError(f"missing {what} file")
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise DomainError(f"{what} file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise DomainError(f"{path}: invalid JSON ({e.msg} at line {e.lineno})") from None


def _parse(fn, obj, path: str, what: str):
    try:
        return fn(obj)
    except (ValueError, KeyError, TypeError) as e:
        raise DomainError(f"{path}: invalid {what}: {e}") from None


def _load_belief(path: str | None, model: pm.PomdpModel) -> pm.Belief:
    if path is None:
        return pm.Belief.uniform(model.n_states)
    obj = _load(path, "belief")
    probs = obj.get("probs") if isinstance(obj, dict) else obj
    if probs is None:
        raise DomainError(f"{path}: belief needs field 'probs'")
    b = _parse(pm.Belief, probs, path, "belief")
    if len(b) != model.n_states:
        raise DomainError(f"{path}: belief has {len(b)} entries, model has {model.n_states} states")
    return b


def _label(labels: Sequence, raw: str, what: str):
    for v in labels:
        if str(v) == raw or json.dumps(v) == raw:
            return v
    raise DomainError(f"unknown {what} {raw!r}; expected one of {[str(v) for v in labels]}")


# subcommands

def cmd_distance(args) -> dict:
    P = _parse(measure_from_json, _load(args.p, "measure"), args.p, "measure")
    Q = _parse(measure_from_json, _load(args.q, "measure"), args.q, "measure")
    if P.space != Q.space:
        raise DomainError("measures live on different spaces")
    E, _, _ = hahn_decompose(P - Q)
    d = tv_distance(P, Q)
    return {"distance": d, "sup_set_gap": d / 2, "hahn_set": E}


def _sequence_from_spec(spec: dict, where: str, n_max: int | None):
    seq = spec.get("sequence")
    if seq == "cantor":
        return cv.cantor_measure_sequence(n_max or 10)
    if seq == "point-mass":
        return cv.point_mass_measure_sequence(n_max or 400)
    if isinstance(seq, dict) and "file" in seq:
        seq = _load(str(Path(where).parent / seq["file"]), "sequence")
    if isinstance(seq, dict) and "terms" in seq and "limit" in seq:
        terms = [_parse(measure_from_json, t, where, "sequence term") for t in seq["terms"]]
        limit = _parse(measure_from_json, seq["limit"], where, "sequence limit")
        n = min(n_max or len(terms), len(terms))
        return cv.MeasureSequence(lambda k: terms[k - 1], limit, n, name="file")
    raise DomainError(f"{where}: field 'sequence' must be 'cantor', 'point-mass', {{file}} or {{terms, limit}}")


def cmd_converge(args) -> Any:
    spec = _load(args.spec, "diagnosis spec")
    if not isinstance(spec, dict):
        raise DomainError(f"{args.spec}: spec must be an object")
    n_max = args.n_max or spec.get("N_max")
    tol = args.tolerance if args.tolerance is not None else spec.get("tolerance", 1e-9)
    seq = _sequence_from_spec(spec, args.spec, n_max)
    mode = args.mode or spec.get("mode", "weak")
    sets = [_parse(set_from_json, s, args.spec, "set") for s in spec.get("sets", [])]
    if mode == "tv":
        return cv.tv_check(seq, tol=tol)
    if mode == "cdf":
        probes = spec.get("probes")
        if probes is None:
            probes = np.linspace(spec.get("lo", 0.0), spec.get("hi", 1.0), spec.get("grid", 3**10 + 1))
        if not hasattr(seq.limit, "left_limit"):
            seq = cv.MeasureSequence(lambda k, s=seq: cdf_of_measure(s.term(k)), cdf_of_measure(seq.limit), seq.n_max, seq.n_min)
        return cv.cdf_weak_check(seq, probes, tol=tol)
    if mode == "base-weak":
        ends = [Fraction(e) for e in spec.get("endpoints", ["1", "4/3", "7/5", "3/2", "5/3", "2"])]
        return cv.base_criterion_weak(seq, cv.rational_interval_base(ends), spec.get("union_arity", 3), tol=tol)
    if not sets:
        raise DomainError(f"{args.spec}: mode {mode!r} needs a nonempty 'sets' list")
    if mode == "weak":
        opens = [s for s in sets if isinstance(s, IntervalSet) and s.is_open()]
        closeds = [s for s in sets if s not in opens]
        return cv.portmanteau_weak_check(seq, opens, closeds, tol=tol)
    if mode == "setwise":
        return cv.setwise_check(seq, sets, tol=tol)
    raise DomainError(f"unknown mode {mode!r}")


def _kernel_inputs(args):
    if args.kernel:
        K = _parse(kn.kernel_from_json, _load(args.kernel, "kernel"), args.kernel, "kernel")
    else:
        K = kn.example_kernel(args.n_max or 200)
    if args.path:
        obj = _load(args.path, "path")
        try:
            seq = [tuple(p) if isinstance(p, list) else p for p in obj["sequence"]]
            lim = tuple(obj["limit"]) if isinstance(obj["limit"], list) else obj["limit"]
        except (KeyError, TypeError):
            raise DomainError(f"{args.path}: path needs fields 'sequence' and 'limit'") from None
    elif not args.kernel:
        seq, lim = kn.example_kernel_path(args.n_max or 200)
    else:
        params = list(K.params)
        seq, lim = params[:-1], params[-1]
    return K, seq, lim


def cmd_kernel(args) -> Any:
    K, seq, lim = _kernel_inputs(args)
    B = _parse(set_from_json, _load(args.set, "set"), args.set, "set") if args.set else None
    if B is None and not args.kernel and args.mode == "equicontinuity":
        B = IntervalSet.real_line().difference(IntervalSet.points([cv.SQRT2]))
    if args.mode == "equicontinuity":
        if not isinstance(K, kn.JointKernel):
            raise DomainError("equicontinuity needs a kernel on a product space")
        return kn.equicontinuity_diagnostic(K, B, [(s, lim) for s in seq], tol=args.tolerance)
    if args.mode == "product-base":
        if not isinstance(K, kn.JointKernel):
            raise DomainError("product-base needs a kernel on a product space")
        base1 = cv.rational_interval_base([Fraction(e) for e in ("1", "4/3", "7/5", "3/2", "5/3", "2")])
        pts = K.second_points()
        base2 = cv.BaseFamily((PointSet(pts),), ("S2",))
        return kn.product_base_weak_diagnostic(K, base1, base2, [(seq, lim)], tol=args.tolerance)
    target = kn.first_marginal(K) if isinstance(K, kn.JointKernel) else K
    sets = [B] if B is not None else []
    if not sets and target.target is REAL_LINE:
        sets = [IntervalSet.points([lm[0] for lm in target(lim).atoms])]
    return kn.kernel_continuity_diagnostic(target, args.mode, [(seq, lim)], sets=sets, tol=args.tolerance)


def _load_model(path: str) -> pm.PomdpModel:
    return _parse(pm.PomdpModel.from_json, _load(path, "model"), path, "model")


def cmd_filter(args) -> dict:
    model = _load_model(args.model)
    z = _load_belief(args.belief, model)
    a = _label(model.actions, args.action, "action")
    out = {
        "belief": z,
        "action": a,
        "expected_cost": pm.expected_cost(model, z, a),
        "observation_marginal": dict(zip(map(str, model.observations), pm.obs_marginal(model, z, a))),
    }
    if args.obs is not None:
        y = _label(model.observations, args.obs, "observation")
        post = pm.bayes_posterior(model, z, a, y)
        out.update(observation=y, posterior=post, null_observation=post.null_observation)
    else:
        out["belief_kernel"] = [
            {"observations": list(obs), "weight": w, "belief": b} for obs, w, b in pm.belief_kernel(model, z, a)
        ]
    return out


def cmd_solve(args) -> Any:
    model = _load_model(args.model)
    z = _load_belief(args.belief, model)
    if args.horizon is not None:
        return pm.solve_finite_horizon(model, z, args.horizon)
    return pm.solve_discounted(model, z, args.epsilon)


def _default_paths(model: pm.PomdpModel, z: pm.Belief, n: int = 40):
    u = np.full(model.n_states, 1.0 / model.n_states)
    paths = []
    for a in model.actions:
        seq = [(pm.Belief((1 - 1 / k) * z.probs + (1 / k) * u), a) for k in range(1, n + 1)]
        paths.append((seq, (z, a)))
    return paths


def cmd_diagnose(args) -> Any:
    if args.check == "kinf":
        lambdas = [float(v) for v in args.lambdas.split(",")] if args.lambdas else [0.0, 1.0, 10.0]
        if args.model:
            return pm.kinf_compact_diagnostic(_load_model(args.model), lambdas)
        obj = _load(args.grid, "cost grid")
        try:
            return pm.kinf_compact_diagnostic(obj["cost"], lambdas, obj.get("x_grid"), obj.get("a_grid"))
        except (KeyError, TypeError) as e:
            raise DomainError(f"{args.grid}: invalid cost grid: {e}") from None
    model = _load_model(args.model)
    z = _load_belief(args.belief, model)
    base = [list(model.states)] + [[s] for s in model.states]
    return pm.r_family_equicontinuity_diagnostic(model, base, _default_paths(model, z), tol=args.tolerance)


def _load_mdmii(path: str) -> md.MdmiiModel:
    return _parse(md.MdmiiModel.from_json, _load(path, "MDMII model"), path, "MDMII model")


def cmd_mdmii_convert(args) -> dict:
    return md.to_pomdp(_load_mdmii(args.model)).to_json()


def cmd_mdmii_check(args) -> dict:
    m = _load_mdmii(args.model)
    rng = np.random.default_rng(args.seed)
    reports = []
    pmodel = md.to_pomdp(m)
    if args.trace:
        obj = _load(args.trace, "trace")
        y0 = obj.get("y0", m.observed[0]) if isinstance(obj, dict) else m.observed[0]
        steps = obj["steps"] if isinstance(obj, dict) else obj
        fb = md.FactoredBelief(y0, tuple(np.full(len(m.hidden), 1.0 / len(m.hidden))))
        try:
            reports.append(md.mdmii_filter_invariant_check(m, fb, [tuple(s) for s in steps]))
        except ValueError as e:
            raise DomainError(f"{args.trace}: {e}") from None
    else:
        for _ in range(args.traces):
            reports.append(md.mdmii_filter_invariant_check(m, *_random_trace(m, pmodel, rng, args.length)))
    viol = []
    if args.horizon:
        for yi, y in enumerate(m.observed):
            fb = md.FactoredBelief(y, tuple(np.full(len(m.hidden), 1.0 / len(m.hidden))))
            sol = pm.solve_finite_horizon(pmodel, fb.to_belief(m), args.horizon)
            for (t, key), a in sol.policy.items():
                f = md.FactoredBelief.from_belief(m, sol.beliefs[key])
                if a not in m.available_actions(f.y):
                    viol.append({"t": t, "y": f.y, "action": a})
    return {
        "filter_ok": all(r["ok"] for r in reports),
        "traces": len(reports),
        "reports": reports if args.trace else [{"ok": r["ok"], "steps": len(r["steps"])} for r in reports],
        "policy_checked": bool(args.horizon),
        "unavailable_actions": viol,
    }


def _random_trace(m: md.MdmiiModel, pmodel: pm.PomdpModel, rng, length: int):
    """Sample a path of the hidden chain and the actions along it."""
    ny, nw = len(m.observed), len(m.hidden)
    yi = int(rng.integers(ny))
    fb = md.FactoredBelief(m.observed[yi], tuple(rng.dirichlet(np.ones(nw))))
    wi = int(rng.choice(nw, p=np.asarray(fb.w_probs)))
    trace = []
    for _ in range(length):
        acts = np.flatnonzero(m.available[yi])
        ai = int(rng.choice(acts))
        row = m.P[ai, yi, wi].ravel()
        k = int(rng.choice(row.size, p=row / row.sum()))
        yi, wi = divmod(k, nw)
        trace.append((m.actions[ai], m.observed[yi]))
    return fb, trace


def cmd_demo(args) -> dict:
    if args.name == "cantor":
        return demo_cantor(args.n)
    if args.name == "point-mass":
        return demo_point_mass(args.n_max or 400)
    return demo_nonsetwise_kernel(args.n_max or 200)


def _compact(w: dict | None) -> dict | None:
    if w is None:
        return None
    return {k: w[k] for k in ("label", "kind", "limit_value", "liminf", "limsup", "margin") if k in w}


def demo_cantor(n: int) -> dict:
    if not 1 <= n <= 10:
        raise DomainError("demo cantor needs 1 <= n <= 10")
    seq = cv.cantor_measure_sequence(n)
    grid = np.arange(3**10 + 1) / 3**10
    weak = cv.cdf_weak_check(seq, grid, bound=lambda k: 2.0 ** (1 - k) / 6)
    gaps = weak.entries[0]["values"]
    covers = list(range(1, cv.MAX_CANTOR_LEVEL + 1))
    setwise = cv.setwise_check(seq, [cv.cantor_cover(k) for k in covers], labels=[f"cover{k}" for k in covers])
    return {
        "n": n,
        "sup_gap": gaps[n],
        "bound": 2.0 ** (1 - n) / 6,
        "weak_verdict": weak.verdict,
        "setwise_verdict": setwise.verdict,
        "setwise_witness": _compact(setwise.witness),
        "cover_masses": {f"cover{k}": setwise.entry(f"cover{k}")["values"][n] for k in covers},
    }


def demo_point_mass(n_max: int) -> dict:
    seq = cv.point_mass_measure_sequence(n_max)
    base = cv.rational_interval_base([Fraction(e) for e in ("1", "4/3", "7/5", "3/2", "5/3", "2")])
    weak = cv.base_criterion_weak(seq, base, 3)
    setwise = cv.setwise_check(seq, [IntervalSet.points([cv.SQRT2])], labels=["{sqrt2}"])
    return {
        "n_max": n_max,
        "weak_verdict": weak.verdict,
        "unions_checked": weak.extra["unions_checked"],
        "setwise_verdict": setwise.verdict,
        "setwise_witness": setwise.witness,
    }


def demo_nonsetwise_kernel(n_max: int) -> dict:
    J = kn.example_kernel(n_max)
    seq, lim = kn.example_kernel_path(n_max)
    H = kn.disintegrate(J)
    B = IntervalSet.real_line().difference(IntervalSet.points([cv.SQRT2]))
    eq = kn.equicontinuity_diagnostic(J, B, [(s, lim) for s in seq])
    base1 = cv.rational_interval_base([Fraction(e) for e in ("1", "4/3", "7/5", "3/2", "5/3", "2")])
    base2 = cv.BaseFamily((PointSet((1,)),), ("S2",))
    rect = kn.product_base_weak_diagnostic(J, base1, base2, [(seq, lim)])
    probes = [0.0, 0.5, 1.0]
    return {
        "conditional_atoms": {str(s): H((1, s)).atoms[0][0] for s in probes},
        "equicontinuity_verdict": eq.verdict,
        "equicontinuity_witness": eq.worst,
        "product_base_verdict": rect.verdict,
    }


# parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="beliefkernel", description=__doc__.splitlines()[0])
    p.add_argument("--format", choices=("json", "human"), default="json")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("distance", help="total-variation distance of two measures")
    s.add_argument("--p", required=True)
    s.add_argument("--q", required=True)
    s.set_defaults(func=cmd_distance)

    s = sub.add_parser("converge-diagnose", help="convergence checks on a measure sequence")
    s.add_argument("--spec", required=True)
    s.add_argument("--mode", choices=("weak", "setwise", "tv", "cdf", "base-weak"))
    s.add_argument("--n-max", type=int)
    s.add_argument("--tolerance", type=float)
    s.set_defaults(func=cmd_converge)

    s = sub.add_parser("kernel-diagnose", help="continuity diagnostics for a stochastic kernel")
    s.add_argument("--kernel", help="kernel JSON; defaults to the built-in non-setwise example")
    s.add_argument("--path", help="JSON {sequence, limit} of parameters")
    s.add_argument("--set", help="set JSON for B")
    s.add_argument(
        "--mode",
        choices=("weak", "setwise", "tv", "equicontinuity", "product-base"),
        default="equicontinuity",
    )
    s.add_argument("--n-max", type=int)
    s.add_argument("--tolerance", type=float, default=1e-9)
    s.set_defaults(func=cmd_kernel)

    s = sub.add_parser("filter", help="Bayes filter step")
    s.add_argument("--model", required=True)
    s.add_argument("--belief")
    s.add_argument("--action", required=True)
    s.add_argument("--obs")
    s.set_defaults(func=cmd_filter)

    s = sub.add_parser("solve", help="value iteration on the belief MDP")
    s.add_argument("--model", required=True)
    s.add_argument("--belief")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--horizon", type=int)
    g.add_argument("--epsilon", type=float)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("diagnose", help="model diagnostics")
    s.add_argument("--check", choices=("kinf", "requi"), required=True)
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--model")
    src.add_argument("--grid", help="JSON {cost, x_grid, a_grid} (kinf only)")
    s.add_argument("--belief")
    s.add_argument("--lambdas", help="comma-separated levels")
    s.add_argument("--tolerance", type=float, default=1e-9)
    s.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("mdmii-convert", help="reduce an MDMII model to a POMDP")
    s.add_argument("--model", required=True)
    s.set_defaults(func=cmd_mdmii_convert)

    s = sub.add_parser("mdmii-check", help="filter invariant and policy checks")
    s.add_argument("--model", required=True)
    s.add_argument("--trace", help="JSON {y0, steps: [[action, observation], ...]}")
    s.add_argument("--traces", type=int, default=20)
    s.add_argument("--length", type=int, default=3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--horizon", type=int, default=0)
    s.set_defaults(func=cmd_mdmii_check)

    s = sub.add_parser("demo", help="worked examples")
    s.add_argument("name", choices=("cantor", "point-mass", "nonsetwise-kernel"))
    s.add_argument("--n", type=int, default=8)
    s.add_argument("--n-max", type=int)
    s.set_defaults(func=cmd_demo)
    return p


def run(argv: Sequence[str] | None = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.command == "diagnose" and args.check == "requi" and not args.model:
        err.write("error: --check requi needs --model\n")
        return 2
    try:
        result = args.func(args)
    except CapExceeded as e:
        err.write(f"error: {e}; raise it with BELIEFKERNEL_CAPS={e.name}=<n>\n")
        return 1
    except DomainError as e:
        err.write(f"error: {e}\n")
        return 1
    except (ValueError, KeyError) as e:
        err.write(f"error: {e}\n")
        return 1
    emit(result, args.format, out)
    return 0


def main() -> None:
    sys.exit(run())
