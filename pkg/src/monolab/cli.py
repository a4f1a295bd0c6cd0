"""Command-line front end.

Usage::

    monolab check-monotone --problem graph.json
    monolab fitzpatrick    --problem psd.json --format text
    monolab ekeland        --problem quad.json --eps 0.01
    monolab resolve        --problem soft.json --lambda 2
    monolab maximality-test --problem abs.json
    monolab minty          --problem graph.json
    monolab rockafellar    --problem psd.json
    monolab selftest

Exit codes: 0 all checks passed, 1 a check failed, 2 unreadable input or
bad usage, 3 schema violation, 4 budget exhausted or divergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import platform
import sys
from datetime import datetime, timezone

import numpy as np
import scipy

from . import __version__
from .acceptance import run_all
from .config import TOL, scale
from .convex import SamplePlan, build_psi
from .ekeland import evp_solve, evp_verify, stationarity_decompose
from .errors import (
    BudgetError,
    DecompositionError,
    DivergenceError,
    InputError,
    UnsupportedRepresentationError,
)
from .fitz import (
    FiniteGraph,
    PsdLinear,
    SubdiffOf,
    check_monotone,
    extension_scan,
    fitzpatrick_build,
    fitzpatrick_subdiff,
    fitzpatrick_theorem_check,
    monotone_gap,
)
from .problem import SOLVER_DEFAULTS, ParseError, ProblemFile, SchemaError, load_problem
from .resolvent import maximality_extension_test, minty_probe, rockafellar_solve, solve_regularized
from .space import SpaceSpec

EXIT_PASS, EXIT_FAIL, EXIT_PARSE, EXIT_SCHEMA, EXIT_BUDGET = 0, 1, 2, 3, 4

COMMANDS = (
    "check-monotone", "fitzpatrick", "ekeland", "resolve",
    "maximality-test", "minty", "rockafellar", "selftest",
)


def jsonable(obj):
    """Plain JSON types; non-finite floats become the strings 'inf'/'-inf'/'nan'."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def _need(prob: ProblemFile, attr: str, cmd: str):
    v = getattr(prob, attr)
    if v is None or (isinstance(v, list) and not v):
        raise SchemaError(attr, f"required by '{cmd}'")
    return v


def _targets(prob: ProblemFile, cmd: str):
    if prob.targets:
        return prob.targets
    if prob.zs is not None:
        return [prob.zs]
    raise SchemaError("targets", f"'{cmd}' needs 'targets' or 'zs'")


# ---------------------------------------------------------------------------
# command handlers: (problem, solver) -> (results, passed)
# ---------------------------------------------------------------------------


def cmd_check_monotone(prob, s):
    op = _need(prob, "operator", "check-monotone")
    plan = SamplePlan(seed=s["seed"], count=s["sample_count"])
    graph = op.graph if isinstance(op, FiniteGraph) else op.sample_graph(plan)
    chk = check_monotone(graph)
    out = {"operator": op.variant, "n_pairs_in_graph": len(graph), "check": chk.as_dict()}
    if chk.pair is not None:
        i, j = chk.pair
        out["violation"] = {
            "pair_a": [graph.U[i], graph.Us[i]],
            "pair_b": [graph.U[j], graph.Us[j]],
        }
    out["gaps"] = [
        monotone_gap(op, x, xs, plan).as_dict() | {"x": x, "xs": xs} for x, xs in prob.points
    ]
    return out, chk.monotone


def cmd_fitzpatrick(prob, s):
    op = _need(prob, "operator", "fitzpatrick")
    plan = SamplePlan(seed=s["seed"], count=s["sample_count"])
    h = fitzpatrick_build(op, plan)
    rows, passed = [], True
    for x, xs in prob.points:
        H = h.value(x, xs)
        row = {"x": x, "xs": xs, "H": H, "pairing": float(x @ xs), "excess": H - float(x @ xs)}
        try:
            row["subdiff"] = fitzpatrick_subdiff(h, x, xs).describe()
        except UnsupportedRepresentationError as exc:
            row["subdiff"] = {"unsupported": str(exc)}
        if isinstance(op, FiniteGraph):
            gap = monotone_gap(op, x, xs).value
            err = abs(H - (x @ xs - gap))
            row["monotone_gap"] = gap
            row["identity_ok"] = bool(err <= TOL.floor * scale(H, x @ xs))
            passed = passed and row["identity_ok"]
        rows.append(row)
    out = {"representation": h.describe(), "points": rows}
    if isinstance(op, FiniteGraph):
        # H equals the pairing on every pair of a monotone graph
        g = op.graph
        pr = np.einsum("ij,ij->i", g.U, g.Us)
        err = np.abs(h.values(g.U, g.Us) - pr) / (1.0 + np.abs(pr))
        k = int(np.argmax(err))
        ok = bool(err[k] <= TOL.floor)
        out["on_graph"] = {"max_rel_error": float(err[k]), "worst_pair": k, "ok": ok}
        passed = passed and ok
    if prob.points and not isinstance(op, FiniteGraph):
        rep = fitzpatrick_theorem_check(op, prob.points, plan)
        out["theorem"] = rep.as_dict()
        passed = passed and rep.passed
    if isinstance(op, FiniteGraph) and s["grid"] is not None:
        g = s["grid"]
        cands = extension_scan(op.graph, g["lower"], g["upper"], g["resolution"])
        out["extension_scan"] = {
            "n_candidates": len(cands),
            "maximal_evidence": not cands,
            "candidates": [c.as_dict() for c in cands],
        }
    return out, passed


def cmd_ekeland(prob, s):
    f = _need(prob, "function", "ekeland")
    eps, lam = s["eps"], s["lambda"]
    kw = dict(budget=s["budget"], seed=s["seed"], sample_count=s["sample_count"])
    out = {"eps": eps}
    if prob.z is not None or prob.zs is not None:
        z = prob.z if prob.z is not None else np.zeros(f.space.dim)
        zs = prob.zs if prob.zs is not None else np.zeros(f.space.dim)
        target = build_psi(f, z, zs, lam)
        out["objective"] = "psi"
    else:
        target = f
        out["objective"] = "function"
    cert = evp_solve(target, eps, **kw)
    ver = evp_verify(cert, target)
    out["certificate"] = cert.as_dict()
    out["verify"] = ver.as_dict()
    passed = ver.passed
    if out["objective"] == "psi":
        try:
            dec = stationarity_decompose(f, z, zs, lam, cert)
            out["decomposition"] = dec.as_dict() | {"ok": True}
        except DecompositionError as exc:
            out["decomposition"] = exc.decomposition.as_dict() | {"ok": False, "error": str(exc)}
            passed = False
    return out, passed


def cmd_resolve(prob, s):
    f = _need(prob, "function", "resolve")
    z = prob.z if prob.z is not None else np.zeros(f.space.dim)
    sols = [solve_regularized(f, s["lambda"], z, t, s["tol"]) for t in _targets(prob, "resolve")]
    return {"solutions": [x.as_dict() for x in sols]}, all(x.certified for x in sols)


def cmd_maximality_test(prob, s):
    f = _need(prob, "function", "maximality-test")
    z = _need(prob, "z", "maximality-test")
    zs = _need(prob, "zs", "maximality-test")
    r = maximality_extension_test(
        f, s["lambda"], z, zs, s["eps_schedule"], tol=s["tol"] or TOL.iterative,
        seed=s["seed"], sample_count=s["sample_count"], budget=s["budget"],
    )
    return r.as_dict(), (not r.related) or r.bounds_ok


def cmd_minty(prob, s):
    op = prob.operator
    if op is None and prob.function is not None:
        op = SubdiffOf(prob.function)
    if op is None:
        raise SchemaError("operator", "required by 'minty' (or give 'function')")
    rep = minty_probe(op, s["lambda"], _targets(prob, "minty"), s["tol"])
    return rep.as_dict(), rep.passed


def cmd_rockafellar(prob, s):
    op = _need(prob, "operator", "rockafellar")
    if not isinstance(op, (PsdLinear, FiniteGraph)):
        raise SchemaError("operator.kind", "'rockafellar' needs psd_matrix or finite_graph")
    if not prob.space.is_hilbert:
        raise SchemaError("space.p", "'rockafellar' needs p = 2")
    sols = [rockafellar_solve(op, s["lambda"], t, s["tol"]) for t in _targets(prob, "rockafellar")]
    return {"solutions": [x.as_dict() for x in sols]}, all(x.certified for x in sols)


def cmd_selftest(prob, s):
    crits = run_all(seed=s["seed"])
    for c in crits:
        print(c.line(), file=sys.stderr)
    return {"criteria": [c.as_dict() for c in crits]}, all(c.passed for c in crits)


HANDLERS = {
    "check-monotone": cmd_check_monotone,
    "fitzpatrick": cmd_fitzpatrick,
    "ekeland": cmd_ekeland,
    "resolve": cmd_resolve,
    "maximality-test": cmd_maximality_test,
    "minty": cmd_minty,
    "rockafellar": cmd_rockafellar,
    "selftest": cmd_selftest,
}


# ---------------------------------------------------------------------------
# report assembly
# ---------------------------------------------------------------------------


def provenance(seed) -> dict:
    return {
        "seed": seed,
        "versions": {
            "monolab": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "tolerances": dataclasses.asdict(TOL),
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def render_text(report: dict) -> str:
    """Two-column table: dotted key path, value."""
    lines = []

    def walk(prefix, v):
        if isinstance(v, dict):
            for k, w in v.items():
                walk(f"{prefix}.{k}" if prefix else k, w)
        elif isinstance(v, list) and v and any(isinstance(w, (dict, list)) for w in v):
            for i, w in enumerate(v):
                walk(f"{prefix}[{i}]", w)
        else:
            lines.append((prefix, json.dumps(v)))

    walk("", report)
    width = max((len(k) for k, _ in lines), default=0)
    return "\n".join(f"{k:<{width}}  {v}" for k, v in lines) + "\n"


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="monolab",
        description="Monotone operators, Fitzpatrick functions and certified resolvents.",
    )
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--problem", help="JSON problem file (not needed for selftest)")
    ap.add_argument("--out", help="write the report here instead of stdout")
    ap.add_argument("--seed", type=int, help="64-bit seed for every sample plan")
    ap.add_argument("--eps", type=float)
    ap.add_argument("--lambda", dest="lam", type=float)
    ap.add_argument("--tol", type=float)
    ap.add_argument("--budget", type=int, help="max inner solves for Ekeland restarts")
    ap.add_argument("--format", choices=("json", "text"), default="json")
    return ap


def _apply_flags(solver: dict, args) -> dict:
    s = dict(solver)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise SchemaError("--seed", "must be in [0, 2^64)")
        s["seed"] = args.seed
    for flag, key in (("eps", "eps"), ("lam", "lambda"), ("tol", "tol")):
        v = getattr(args, flag)
        if v is not None:
            if not (v > 0 and math.isfinite(v)):
                raise SchemaError(f"--{key}", "must be a positive finite number")
            s[key] = v
    if args.budget is not None:
        if args.budget < 1:
            raise SchemaError("--budget", "must be >= 1")
        s["budget"] = args.budget
    return s


def run(argv=None) -> tuple[dict, int]:
    """Parse ``argv``, run the command; returns (report, exit code)."""
    return execute(build_parser().parse_args(argv))


def execute(args) -> tuple[dict, int]:
    flags = {k: v for k, v in vars(args).items() if v is not None and k not in ("command", "out", "format", "problem")}
    report = {"command": args.command, "passed": False, "exit_code": EXIT_FAIL,
              "inputs": {"problem": args.problem, "flags": flags}}
    seed = None
    try:
        if args.command == "selftest" and args.problem is None:
            prob = ProblemFile(space=SpaceSpec(1, 2.0), solver=dict(SOLVER_DEFAULTS))
        else:
            if args.problem is None:
                raise ParseError(f"'{args.command}' needs --problem")
            prob = load_problem(args.problem)
            report["inputs"]["problem_echo"] = prob.raw
        solver = _apply_flags(prob.solver, args)
        seed = solver["seed"]
        report["inputs"]["solver"] = solver
        results, passed = HANDLERS[args.command](prob, solver)
        report["results"] = results
        report["passed"] = bool(passed)
        code = EXIT_PASS if passed else EXIT_FAIL
    except ParseError as exc:
        report["error"] = {"type": "parse", "message": str(exc)}
        code = EXIT_PARSE
    except (SchemaError, InputError, UnsupportedRepresentationError) as exc:
        report["error"] = {"type": "schema", "message": str(exc)}
        code = EXIT_SCHEMA
    except (BudgetError, DivergenceError) as exc:
        report["error"] = {
            "type": "budget" if isinstance(exc, BudgetError) else "divergence",
            "message": str(exc),
            "best": exc.best,
            "value": exc.value,
        }
        code = EXIT_BUDGET
    report["exit_code"] = code
    report["provenance"] = provenance(seed)
    return jsonable(report), code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    report, code = execute(args)
    text = render_text(report) if args.format == "text" else json.dumps(report, indent=2) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if "error" in report:
        print(f"monolab: {report['error']['type']} error: {report['error']['message']}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
