"""JSON problem files: parsing and schema validation.

A problem file is a JSON object::

    {
      "space":    {"dim": 2, "p": 2},
      "function": {"kind": "abs_sum", "weights": [1, 2]},
      "operator": {"kind": "finite_graph", "pairs": [[[0, 0], [0, 0]]]},
      "points":   [[x, x*], ...],
      "targets":  [x*, ...],
      "z": [...], "zs": [...],
      "solver":   {"eps": 0.1, "lambda": 1, "tol": 1e-8, "seed": 0,
                   "budget": 20, "eps_schedule": [0.1, 0.01],
                   "grid": {"lower": [...], "upper": [...], "resolution": 5}}
    }

Every section except ``space`` is optional; each command says what it needs.
Errors name the offending field by its JSON path.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .convex import (
    AbsSum,
    Affine,
    ConvexFunction,
    IndicatorBall,
    IndicatorBox,
    MaxAffine,
    PNormSquaredHalf,
    Quadratic,
    Scaled,
    Sum,
    build_integral_functional,
)
from .errors import InputError, MonolabError
from .fitz import FiniteGraph, OperatorGraph, OperatorRepr, PsdLinear, SubdiffOf
from .space import SpaceSpec


class ParseError(MonolabError):
    """File missing or not valid JSON (exit code 2)."""


class SchemaError(InputError):
    """Structurally valid JSON that violates the problem schema (exit code 3)."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


SOLVER_DEFAULTS = {
    "eps": 0.1,
    "lambda": 1.0,
    "tol": None,
    "seed": 0,
    "budget": 20,
    "eps_schedule": [0.1, 0.01, 0.001],
    "sample_count": 1000,
    "grid": None,
}


@dataclass
class ProblemFile:
    space: SpaceSpec
    function: ConvexFunction | None = None
    operator: OperatorRepr | None = None
    points: list = field(default_factory=list)
    targets: list = field(default_factory=list)
    z: np.ndarray | None = None
    zs: np.ndarray | None = None
    solver: dict = field(default_factory=lambda: dict(SOLVER_DEFAULTS))
    raw: dict = field(default_factory=dict)
    base_dir: Path = Path(".")


def _num(v, path, positive=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError(path, f"expected a number, got {type(v).__name__}")
    v = float(v)
    if not math.isfinite(v):
        raise SchemaError(path, "must be finite")
    if positive and v <= 0:
        raise SchemaError(path, "must be > 0")
    return v


def _vec(v, dim, path, allow_null=False):
    if not isinstance(v, list):
        raise SchemaError(path, "expected an array")
    if len(v) != dim:
        raise SchemaError(path, f"has {len(v)} entries, expected {dim} (space.dim)")
    out = []
    for i, e in enumerate(v):
        if allow_null and e is None:
            out.append(math.nan)
        else:
            out.append(_num(e, f"{path}[{i}]"))
    return np.array(out)


def _mat(v, rows, cols, path):
    if not isinstance(v, list) or (rows is not None and len(v) != rows):
        raise SchemaError(path, f"expected an array of {rows} rows")
    return np.array([_vec(r, cols, f"{path}[{i}]") for i, r in enumerate(v)])


def _get(d, key, path):
    if key not in d:
        raise SchemaError(f"{path}.{key}", "required field is missing")
    return d[key]


def parse_space(d, path="space") -> SpaceSpec:
    if not isinstance(d, dict):
        raise SchemaError(path, "expected an object")
    dim = _get(d, "dim", path)
    if isinstance(dim, bool) or not isinstance(dim, int) or dim < 1:
        raise SchemaError(f"{path}.dim", "must be a positive integer")
    p = _num(_get(d, "p", path), f"{path}.p")
    if not 1 < p < math.inf:
        raise SchemaError(f"{path}.p", f"must lie in the open interval (1, inf), got {p}")
    return SpaceSpec(dim, p)


def parse_function(d, space: SpaceSpec, path="function") -> ConvexFunction:
    """Build a catalog function from its descriptor (nestable)."""
    if not isinstance(d, dict):
        raise SchemaError(path, "expected an object")
    kind = _get(d, "kind", path)
    n = space.dim
    try:
        if kind == "quadratic":
            M = _mat(d["matrix"], n, n, f"{path}.matrix") if "matrix" in d else None
            b = _vec(d["shift"], n, f"{path}.shift") if "shift" in d else None
            return Quadratic(space, M, b)
        if kind == "pnorm_squared_half":
            c = _vec(d["center"], n, f"{path}.center") if "center" in d else None
            return PNormSquaredHalf(space, c)
        if kind == "abs_sum":
            w = _vec(d["weights"], n, f"{path}.weights") if "weights" in d else None
            return AbsSum(space, w)
        if kind == "max_affine":
            A = _mat(_get(d, "slopes", path), None, n, f"{path}.slopes")
            b = d.get("intercepts")
            b = None if b is None else _vec(b, len(A), f"{path}.intercepts")
            return MaxAffine(space, A, b)
        if kind == "indicator_box":
            lo = d.get("lower")
            hi = d.get("upper")
            lo = None if lo is None else np.nan_to_num(_vec(lo, n, f"{path}.lower", True), nan=-math.inf)
            hi = None if hi is None else np.nan_to_num(_vec(hi, n, f"{path}.upper", True), nan=math.inf)
            return IndicatorBox(space, lo, hi)
        if kind == "indicator_ball":
            return IndicatorBall(space, _num(d.get("radius", 1.0), f"{path}.radius", positive=True))
        if kind == "affine":
            a = _vec(d["slope"], n, f"{path}.slope") if "slope" in d else None
            return Affine(space, a, _num(d.get("intercept", 0.0), f"{path}.intercept"))
        if kind == "scaled":
            c = _num(_get(d, "factor", path), f"{path}.factor", positive=True)
            return Scaled(c, parse_function(_get(d, "function", path), space, f"{path}.function"))
        if kind == "sum":
            terms = _get(d, "terms", path)
            if not isinstance(terms, list) or not terms:
                raise SchemaError(f"{path}.terms", "expected a nonempty array")
            return Sum([parse_function(t, space, f"{path}.terms[{i}]") for i, t in enumerate(terms)])
        if kind == "integral":
            N = _get(d, "N", path)
            if isinstance(N, bool) or not isinstance(N, int) or N < 2:
                raise SchemaError(f"{path}.N", "must be an integer >= 2")
            T = _num(d.get("T", 1.0), f"{path}.T", positive=True)
            inner_space = parse_space(d["space"], f"{path}.space") if "space" in d else space
            inner = parse_function(_get(d, "function", path), inner_space, f"{path}.function")
            return build_integral_functional(inner, N, T)
    except SchemaError:
        raise
    except KeyError as exc:
        raise SchemaError(f"{path}.{exc.args[0]}", "required field is missing") from None
    except InputError as exc:
        raise SchemaError(path, str(exc)) from None
    raise SchemaError(f"{path}.kind", f"unknown function kind {kind!r}")


def parse_operator(d, space: SpaceSpec, base_dir: Path, path="operator") -> OperatorRepr:
    if not isinstance(d, dict):
        raise SchemaError(path, "expected an object")
    kind = _get(d, "kind", path)
    n = space.dim
    try:
        if kind == "finite_graph":
            if "csv" in d:
                csv_path = Path(d["csv"])
                if not csv_path.is_absolute():
                    csv_path = base_dir / csv_path
                if not csv_path.exists():
                    raise SchemaError(f"{path}.csv", f"file not found: {csv_path}")
                return FiniteGraph(OperatorGraph.from_csv(csv_path, space))
            pairs = _get(d, "pairs", path)
            if not isinstance(pairs, list) or not pairs:
                raise SchemaError(f"{path}.pairs", "expected a nonempty array of [u, u*] pairs")
            U, Us = [], []
            for i, pr in enumerate(pairs):
                if not isinstance(pr, list) or len(pr) != 2:
                    raise SchemaError(f"{path}.pairs[{i}]", "expected [u, u*]")
                U.append(_vec(pr[0], n, f"{path}.pairs[{i}][0]"))
                Us.append(_vec(pr[1], n, f"{path}.pairs[{i}][1]"))
            return FiniteGraph(OperatorGraph(np.array(U), np.array(Us), space))
        if kind == "psd_matrix":
            M = _mat(_get(d, "matrix", path), n, n, f"{path}.matrix")
            c = _vec(d["offset"], n, f"{path}.offset") if "offset" in d else None
            return PsdLinear(space, M, c)
        if kind == "subdiff_of":
            return SubdiffOf(parse_function(_get(d, "function", path), space, f"{path}.function"))
    except SchemaError:
        raise
    except InputError as exc:
        raise SchemaError(path, str(exc)) from None
    raise SchemaError(f"{path}.kind", f"unknown operator kind {kind!r}")


def parse_solver(d, path="solver") -> dict:
    out = dict(SOLVER_DEFAULTS)
    if d is None:
        return out
    if not isinstance(d, dict):
        raise SchemaError(path, "expected an object")
    for key in d:
        if key not in SOLVER_DEFAULTS:
            raise SchemaError(f"{path}.{key}", "unknown solver field")
    if "eps" in d:
        out["eps"] = _num(d["eps"], f"{path}.eps", positive=True)
    if "lambda" in d:
        out["lambda"] = _num(d["lambda"], f"{path}.lambda", positive=True)
    if d.get("tol") is not None:
        out["tol"] = _num(d["tol"], f"{path}.tol", positive=True)
    for key in ("seed", "budget", "sample_count"):
        if key in d:
            v = d[key]
            if isinstance(v, bool) or not isinstance(v, int) or v < 0 or v >= 2**64:
                raise SchemaError(f"{path}.{key}", "must be an integer in [0, 2^64)")
            out[key] = v
    if "eps_schedule" in d:
        sched = d["eps_schedule"]
        if not isinstance(sched, list) or not sched:
            raise SchemaError(f"{path}.eps_schedule", "expected a nonempty array")
        out["eps_schedule"] = [
            _num(e, f"{path}.eps_schedule[{i}]", positive=True) for i, e in enumerate(sched)
        ]
    if d.get("grid") is not None:
        g = d["grid"]
        if not isinstance(g, dict):
            raise SchemaError(f"{path}.grid", "expected an object")
        res = _get(g, "resolution", f"{path}.grid")
        if isinstance(res, bool) or not isinstance(res, int) or res < 2:
            raise SchemaError(f"{path}.grid.resolution", "must be an integer >= 2")
        out["grid"] = {
            "lower": _get(g, "lower", f"{path}.grid"),
            "upper": _get(g, "upper", f"{path}.grid"),
            "resolution": res,
        }
    return out


def problem_from_dict(raw: dict, base_dir: Path = Path(".")) -> ProblemFile:
    if not isinstance(raw, dict):
        raise SchemaError("$", "top level must be an object")
    space = parse_space(_get(raw, "space", "$"), "space")
    n = space.dim
    prob = ProblemFile(space=space, raw=raw, base_dir=base_dir)
    if raw.get("function") is not None:
        prob.function = parse_function(raw["function"], space)
    if raw.get("operator") is not None:
        prob.operator = parse_operator(raw["operator"], space, base_dir)
    for i, pr in enumerate(raw.get("points") or []):
        if not isinstance(pr, list) or len(pr) != 2:
            raise SchemaError(f"points[{i}]", "expected [x, x*]")
        prob.points.append((_vec(pr[0], n, f"points[{i}][0]"), _vec(pr[1], n, f"points[{i}][1]")))
    prob.targets = [_vec(t, n, f"targets[{i}]") for i, t in enumerate(raw.get("targets") or [])]
    if raw.get("z") is not None:
        prob.z = _vec(raw["z"], n, "z")
    if raw.get("zs") is not None:
        prob.zs = _vec(raw["zs"], n, "zs")
    prob.solver = parse_solver(raw.get("solver"))
    if prob.solver["grid"] is not None:
        g = prob.solver["grid"]
        g["lower"] = _vec(g["lower"], 2 * n, "solver.grid.lower")
        g["upper"] = _vec(g["upper"], 2 * n, "solver.grid.upper")
        if np.any(g["lower"] > g["upper"]):
            raise SchemaError("solver.grid", "lower must not exceed upper")
    unknown = set(raw) - {"space", "function", "operator", "points", "targets", "z", "zs", "solver"}
    if unknown:
        raise SchemaError(sorted(unknown)[0], "unknown top-level field")
    return prob


def load_problem(path) -> ProblemFile:
    """Read and validate a problem file.

    Raises
    ------
    ParseError
        Missing file or invalid JSON.
    SchemaError
        Valid JSON violating the schema; the message names the field.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror or exc}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return problem_from_dict(raw, path.parent)
