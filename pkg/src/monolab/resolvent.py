"""Resolvent solvers, the maximality test and surjectivity probes.

Two routes produce x with z* in J(x) + lam A(x):

direct
    A = df: minimize Psi(x) = 1/2 ||x - z||^2 + lam f(x) - lam <x, z*>,
    whose optimality condition is lam z* in J(x - z) + lam df(x).
product-space
    Hilbert case, A monotone: form the shifted operator A~ = lam A - z*,
    build its Fitzpatrick function H and minimize
    G(x, x*) = 1/2 ||x||^2 + 1/2 ||x*||^2 + H(x, x*).  At the minimizer
    x* = -x and (x, -x) lies in the graph of A~, i.e. z* = x + lam A(x).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import TOL, scale
from .convex import ConvexFunction, SamplePlan, build_psi
from .ekeland import solve_and_decompose
from .errors import DecompositionError, InputError, UnsupportedRepresentationError
from .fitz import (
    ClosedQuadraticFitz,
    FiniteGraph,
    MaxAffineFitz,
    OperatorGraph,
    OperatorRepr,
    PsdLinear,
    SubdiffOf,
    monotone_gap,
    product_space,
    split_point,
)
from .solvers import minimize
from .space import DualPoint, Point, SpaceSpec
from .subdiff import MembershipOnly


def _coords(v) -> np.ndarray:
    if isinstance(v, (Point, DualPoint)):
        return v.coords
    return np.asarray(v, dtype=float)


def independent_residual(p: float, lhs, x, z, xs_sel, lam: float) -> float:
    """||lhs - J(x - z) - lam xs_sel||_q recomputed without the space helpers."""
    q = p / (p - 1.0)
    v = np.asarray(x, float) - np.asarray(z, float)
    nv = np.linalg.norm(v, ord=p) if v.size > 1 else abs(float(v[0]))
    if nv == 0.0:
        jv = np.zeros_like(v)
    else:
        jv = nv ** (2.0 - p) * np.abs(v) ** (p - 1.0) * np.sign(v)
    r = np.asarray(lhs, float) - jv - lam * np.asarray(xs_sel, float)
    return float(np.sum(np.abs(r) ** q) ** (1.0 / q)) if r.size > 1 else abs(float(r[0]))


@dataclass
class ResolventSolution:
    x: Point
    xs_sel: DualPoint
    residual: float
    lam: float
    target: DualPoint
    route: str  # direct | product-space | graph-search
    tol: float
    residual_check: float = math.nan
    details: dict = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        return bool(self.residual <= self.tol)

    @property
    def residual_agree(self) -> bool:
        return abs(self.residual - self.residual_check) <= TOL.floor * scale(self.residual)

    def as_dict(self):
        return {
            "x": self.x.coords.tolist(),
            "xs_sel": self.xs_sel.coords.tolist(),
            "residual": self.residual,
            "residual_check": self.residual_check,
            "residual_agree": self.residual_agree,
            "certified": self.certified,
            "tol": self.tol,
            "lambda": self.lam,
            "target": self.target.coords.tolist(),
            "route": self.route,
            "details": self.details,
        }


def _finish(space, x, z, xs_sel, lhs, lam, target, route, tol, details):
    """Residual from the space helpers plus the independent recomputation."""
    r = space.dual_norm(lhs - space.J(x - z) - lam * xs_sel)
    sol = ResolventSolution(
        Point(x, space), DualPoint(xs_sel, space), float(r), float(lam),
        DualPoint(target, space), route, float(tol), details=details,
    )
    sol.residual_check = independent_residual(space.p, lhs, x, z, xs_sel, lam)
    return sol


def solve_regularized(
    f: ConvexFunction, lam: float, z, zs, tol: float | None = None,
    method: str = "auto", max_iter: int = 20000,
) -> ResolventSolution:
    """Solve lam z* in J(x - z) + lam df(x) by minimizing Psi.

    The residual uses the element of df(x) closest to the ideal selection
    (lam z* - J(x - z)) / lam.  ``tol`` defaults to 1e-8 when Psi has a
    closed-form argmin and 1e-6 otherwise; an inexact solve is returned
    with ``certified == False`` rather than raised.
    """
    space = f.space
    z = space.check(_coords(z), "z")
    zs = space.check(_coords(zs), "z*")
    psi = build_psi(f, z, zs, lam)
    res = minimize(psi, method=method, max_iter=max_iter)
    if tol is None:
        tol = TOL.closed_form if res.method == "closed-form" else TOL.iterative
    x = res.x
    ys = space.J(x - z)
    sd = f.subdiff_at(x)
    details = {"inner_method": res.method, "psi_value": res.value, "iterations": res.iterations}
    if sd.empty or isinstance(sd, MembershipOnly):
        xs = np.full(space.dim, np.nan)
        details["note"] = "no finite subdifferential at x; residual unavailable"
        sol = ResolventSolution(
            Point(x, space), DualPoint(np.zeros(space.dim), space), math.inf, float(lam),
            DualPoint(zs, space), "direct", float(tol), math.inf, details,
        )
        return sol
    xs = sd.nearest((lam * zs - ys) / lam, space.q)
    return _finish(space, x, z, xs, lam * zs, lam, zs, "direct", tol, details)


@dataclass
class MaximalityTestResult:
    related: bool
    gap: float
    eps_schedule: list
    distances: list  # per eps: (||x_eps - z||_p, ||x*_eps - z*||_q)
    bounds_ok: bool
    lam: float
    us_norms: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def conclusion(self) -> str:
        if not self.related:
            return "not-related"
        return "in-graph" if self.bounds_ok else "bounds-failed"

    def as_dict(self):
        return {
            "related": self.related,
            "gap": self.gap,
            "eps_schedule": list(self.eps_schedule),
            "distances": [list(d) for d in self.distances],
            "bounds": [[e, 2 * e / self.lam] for e in self.eps_schedule],
            "bounds_ok": self.bounds_ok,
            "conclusion": self.conclusion,
            "us_norms": self.us_norms,
            "notes": self.notes,
        }


def maximality_extension_test(
    f: ConvexFunction, lam: float, z, zs, eps_schedule=(1e-1, 1e-2, 1e-3),
    tol: float = TOL.iterative, seed: int = 0, sample_count: int = 1000, **solve_kw,
) -> MaximalityTestResult:
    """Check that a point monotonically related to df is pulled into its graph.

    For each eps, an eps-minimizer x_eps of Psi and its decomposition
    lam z* - lam x*_eps = J(x_eps - z) + eps u*_eps give a graph point
    (x_eps, x*_eps) of df; the bounds ||x_eps - z|| <= eps and
    ||x*_eps - z*|| <= 2 eps / lam are checked within ``tol``.
    """
    eps_schedule = [float(e) for e in eps_schedule]
    if not eps_schedule or any(e <= 0 for e in eps_schedule):
        raise InputError("eps_schedule must be positive")
    if any(b >= a for a, b in zip(eps_schedule, eps_schedule[1:])):
        raise InputError("eps_schedule must be strictly decreasing")
    if lam <= 0:
        raise InputError(f"lambda must be positive, got {lam!r}")
    space = f.space
    z = space.check(_coords(z), "z")
    zs = space.check(_coords(zs), "z*")
    plan = SamplePlan(seed=seed, count=sample_count)
    gap = monotone_gap(SubdiffOf(f), z, zs, plan)
    related = gap.value >= -TOL.monotone * scale(z, zs)
    dists, norms, notes = [], [], []
    ok = True
    for eps in eps_schedule:
        try:
            _, _, dec = solve_and_decompose(
                f, z, zs, lam, eps, seed=seed, sample_count=sample_count, **solve_kw
            )
        except DecompositionError as exc:
            dec = exc.decomposition
            notes.append(f"eps={eps:g}: {exc}")
            ok = False
        dx = space.primal_norm(dec.x_eps.coords - z)
        dxs = space.dual_norm(dec.xs_eps.coords - zs)
        dists.append((float(dx), float(dxs)))
        norms.append(dec.us_norm)
        ok = ok and dx <= eps + tol and dxs <= 2 * eps / lam + tol
    return MaximalityTestResult(
        bool(related), gap.value, eps_schedule, dists, bool(ok), float(lam), norms, notes
    )


@dataclass
class MintyReport:
    operator: str
    lam: float
    tol: float
    solutions: list

    @property
    def residuals(self):
        return [s.residual for s in self.solutions]

    @property
    def max_residual(self) -> float:
        return max(self.residuals) if self.solutions else 0.0

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tol

    @property
    def evidence(self) -> str:
        return "surjective" if self.passed else "non-surjective"

    def as_dict(self):
        return {
            "operator": self.operator,
            "lambda": self.lam,
            "tol": self.tol,
            "max_residual": self.max_residual,
            "passed": self.passed,
            "evidence": self.evidence,
            "solutions": [s.as_dict() for s in self.solutions],
        }


def _graph_search(graph: OperatorGraph, lam, target, tol, note=None):
    """Best pair (u, u*) for target in J(u) + lam u*."""
    space = graph.space
    R = [space.dual_norm(target - space.J(u) - lam * us) for u, us in zip(graph.U, graph.Us)]
    k = int(np.argmin(R))
    details = {"pair_index": k}
    if note:
        details["note"] = note
    return _finish(space, graph.U[k], np.zeros(space.dim), graph.Us[k], target, lam,
                   target, "graph-search", tol, details)


def minty_probe(a: OperatorRepr, lam: float, targets, tol: float | None = None) -> MintyReport:
    """Try to solve t in J(x) + lam A(x) for each target t."""
    if lam <= 0:
        raise InputError(f"lambda must be positive, got {lam!r}")
    space = a.space
    sols = []
    for t in targets:
        t = space.check(_coords(t), "target")
        if isinstance(a, FiniteGraph):
            sols.append(_graph_search(a.graph, lam, t, TOL.closed_form if tol is None else tol))
        elif isinstance(a, PsdLinear) and space.is_hilbert:
            x = np.linalg.solve(np.eye(space.dim) + lam * a.M, t - lam * a.c)
            sols.append(_finish(space, x, np.zeros(space.dim), a.apply(x), t, lam, t,
                                "direct", TOL.closed_form if tol is None else tol,
                                {"inner_method": "linear-solve"}))
        else:
            f = a.function if isinstance(a, SubdiffOf) else a.as_function()
            sols.append(solve_regularized(f, lam, np.zeros(space.dim), t / lam, tol))
    tol_used = max((s.tol for s in sols), default=TOL.closed_form if tol is None else tol)
    return MintyReport(a.variant, float(lam), float(tol_used), sols)


def shifted_operator(a: OperatorRepr, lam: float, zs) -> OperatorRepr:
    """A~ = lam A - z*: graph (u, lam u* - z*)."""
    zs = a.space.check(_coords(zs), "z*")
    if isinstance(a, PsdLinear):
        return PsdLinear(a.space, lam * a.M, lam * a.c - zs)
    if isinstance(a, FiniteGraph):
        g = a.graph
        return FiniteGraph(OperatorGraph(g.U, lam * g.Us - zs, g.space))
    raise UnsupportedRepresentationError(f"{a.variant}: shift needs psd_matrix or finite_graph")


def rockafellar_solve(
    a: OperatorRepr, lam: float, zs, tol: float | None = None, method: str = "auto",
) -> ResolventSolution:
    """Solve z* in J(x) + lam A(x) through the Fitzpatrick function of A~.

    Requires p = 2.  PsdLinear needs lam M positive definite so that H has
    its closed quadratic form.  For a finite graph the product minimizer
    need not lie on the graph; the returned solution is then the best graph
    pair, and ``details['product_gap']`` (= min G, zero for maximal A~)
    records how far the graph is from admitting an exact solution.
    """
    space: SpaceSpec = a.space
    if not space.is_hilbert:
        raise InputError("the product-space route needs p = 2")
    if lam <= 0:
        raise InputError(f"lambda must be positive, got {lam!r}")
    zs = space.check(_coords(zs), "z*")
    d = space.dim
    at = shifted_operator(a, lam, zs)
    if isinstance(at, PsdLinear):
        if np.linalg.eigvalsh(at.M).min() <= TOL.floor * scale(at.M):
            raise UnsupportedRepresentationError(
                "singular matrix: the Fitzpatrick function is not finite everywhere"
            )
        h = ClosedQuadraticFitz(space, at.M, at.c)
    else:
        h = MaxAffineFitz(at.graph)
    H = h.as_function()
    G = build_psi(H, np.zeros(2 * d), np.zeros(2 * d), 1.0)
    assert G.space == product_space(space)
    res = minimize(G, method=method)
    x, xs_t = split_point(res.x, d)
    details = {
        "inner_method": res.method,
        "product_point": res.x.tolist(),
        "product_gap": float(res.value),
        "duality_defect": float(np.linalg.norm(x + xs_t)),
    }
    if tol is None:
        tol = TOL.closed_form if res.method == "closed-form" else TOL.iterative
    if isinstance(a, PsdLinear):
        xs_sel = a.apply(x)
        direct = np.linalg.solve(np.eye(d) + lam * a.M, zs - lam * a.c)
        details["cross_check"] = float(np.linalg.norm(x - direct))
        return _finish(space, x, np.zeros(d), xs_sel, zs, lam, zs, "product-space", tol, details)
    sol = _graph_search(a.graph, lam, zs, tol)
    sol.route = "product-space"
    sol.details.update(details)
    return sol


__all__ = [
    "MaximalityTestResult",
    "MintyReport",
    "ResolventSolution",
    "independent_residual",
    "maximality_extension_test",
    "minty_probe",
    "rockafellar_solve",
    "shifted_operator",
    "solve_regularized",
]
