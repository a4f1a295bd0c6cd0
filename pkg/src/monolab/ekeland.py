"""Certified eps-minimizers and the stationarity decomposition.

An :class:`EkelandCertificate` for a bounded-below convex ``f`` records a
point ``x_eps`` with

    f(x_eps) <= inf f + eps^2                        (near-optimality)
    f(x_eps) <= f(x) + eps ||x - x_eps||   for all x  (perturbed minimality)

The second line is checked two ways.  For convex ``f`` it is equivalent to
``dist_q(0, df(x_eps)) <= eps``, which is decided exactly whenever the
subdifferential has finite structure.  It is also checked on a seeded
sample plan; a sampled violation restarts the inner solve from the
offending point, which is the descent chain behind Ekeland's principle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import TOL, scale
from .convex import ConvexFunction, SamplePlan, build_psi
from .errors import BudgetError, DecompositionError, InputError
from .solvers import minimize
from .space import DualPoint, Point
from .subdiff import MembershipOnly


@dataclass
class PerturbedCheck:
    plan: SamplePlan
    max_violation: float
    witness: np.ndarray | None
    stationarity: float | None  # dist_q(0, df(x_eps)), None if unavailable
    n_points: int

    @property
    def passed(self) -> bool:
        return self.max_violation <= TOL.ekeland_sample

    def as_dict(self):
        return {
            "plan": self.plan.as_dict(),
            "max_violation": self.max_violation,
            "witness": None if self.witness is None else self.witness.tolist(),
            "stationarity": self.stationarity,
            "n_points": self.n_points,
        }


@dataclass
class EkelandCertificate:
    x_eps: Point
    eps: float
    objective_value: float
    inf_reference: float
    inf_provenance: str  # closed-form | declared | best-found
    gap_1a: float
    perturbed_check: PerturbedCheck
    method: str = ""
    restarts: int = 0

    @property
    def gap_ok(self) -> bool:
        sc = scale(self.objective_value, self.inf_reference)
        return self.gap_1a <= self.eps**2 + TOL.ekeland_gap * sc

    def as_dict(self):
        return {
            "x_eps": self.x_eps.coords.tolist(),
            "eps": self.eps,
            "objective_value": self.objective_value,
            "inf_reference": self.inf_reference,
            "inf_provenance": self.inf_provenance,
            "gap_1a": self.gap_1a,
            "gap_ok": self.gap_ok,
            "perturbed_check": self.perturbed_check.as_dict(),
            "method": self.method,
            "restarts": self.restarts,
        }


def _perturbed_scan(f, x, eps, points):
    """Worst scaled value of f(x) - f(y) - eps ||y - x|| over ``points``."""
    fx = f.value(x)
    worst, witness = -math.inf, None
    for y in points:
        fy = f.value(y)
        if fy == math.inf:
            continue
        dist = f.space.primal_norm(y - x)
        v = (fx - fy - eps * dist) / scale(fx, fy, eps * dist)
        if v > worst:
            worst, witness = v, y
    return worst, witness


def _stationarity(f, x):
    s = f.subdiff_at(x)
    if s.empty or isinstance(s, MembershipOnly):
        return None, None
    g = s.nearest(np.zeros(f.space.dim), f.space.q)
    return f.space.dual_norm(g), g


def _descent_witness(f, x, g, eps):
    """A point violating the eps-perturbed inequality along -J^-1(g)."""
    fx = f.value(x)
    d = -f.space.J_inv(g)
    nd = f.space.primal_norm(d)
    if nd == 0:
        return None
    d = d / nd
    t = 1.0 + f.space.primal_norm(x)
    for _ in range(80):
        y = x + t * d
        if f.value(y) < fx - eps * t:
            return y
        t *= 0.5
    return None


def _snap(f, x, eps, ref):
    """``x`` or a nearby kink/face point that is eps-stationary within the gap.

    Iterative solvers stop next to kinks, where the single gradient is not
    small; the critical-point candidates put coordinates exactly on them.
    """
    def ok(y):
        fy = f.value(y)
        if not math.isfinite(fy):
            return False, None
        if ref is not None and fy - ref > eps**2 + TOL.ekeland_gap * scale(fy, ref):
            return False, None
        st, g = _stationarity(f, y)
        return st is None or st <= eps * (1 + TOL.floor), g

    for y in [x] + list(f.critical_points(x)):
        y = np.asarray(y, dtype=float)
        good, g = ok(y)
        if good:
            return y
        if g is None:
            continue
        # short steps along the min-norm subgradient, keeping kink coordinates
        d = f.space.J_inv(g)
        for t in (1.0, 0.5, 0.25, 0.125):
            good, _ = ok(y - t * d)
            if good:
                return y - t * d
    return None


def _probe(f, x):
    pts = [f.witness]
    xm = f.minimizer()
    if xm is not None:
        pts.append(np.asarray(xm, dtype=float))
    pts.extend(f.critical_points(x))
    return pts


def evp_solve(
    f: ConvexFunction,
    eps: float,
    start=None,
    budget: int = 20,
    seed: int = 0,
    sample_count: int = 1000,
    method: str = "auto",
    lower_bound: float | None = None,
    inf_reference: float | None = None,
    max_iter: int = 20000,
) -> EkelandCertificate:
    """Produce a certified eps-minimizer of ``f``.

    ``budget`` caps the number of inner solves (restarts).  With
    ``method="subgradient"`` the inner solve stops as soon as the gap to a
    closed-form infimum is below ``eps**2`` and the point is eps-stationary,
    so ``x_eps`` is a genuine approximate minimizer rather than the argmin.

    Raises
    ------
    DivergenceError
        The objective fell below the declared bound or without bound.
    BudgetError
        ``budget`` inner solves did not produce a certificate.
    """
    if not (eps > 0 and math.isfinite(eps)):
        raise InputError(f"eps must be positive, got {eps!r}")
    space = f.space
    x0 = f.witness.copy() if start is None else space.check(
        start.coords if isinstance(start, Point) else start, "start"
    )
    if lower_bound is None:
        lb = f.lower_bound()
        lower_bound = lb if math.isfinite(lb) else None

    if inf_reference is not None:
        provenance = "declared"
    elif f.infimum() is not None:
        inf_reference, provenance = f.infimum(), "closed-form"
    else:
        provenance = "best-found"

    snapped = {}
    use_stop = method == "subgradient" and inf_reference is not None

    def good_enough(x, fx):
        if inf_reference is None:
            return False
        y = _snap(f, x, eps, inf_reference)
        if y is None:
            return False
        snapped["x"] = y
        return True

    plan = SamplePlan(seed=seed, count=sample_count)
    best_val = math.inf
    best_x = x0
    for restart in range(budget):
        snapped.clear()
        res = minimize(
            f, x0, method=method, max_iter=max_iter, lower_bound=lower_bound,
            f_star=inf_reference, stop=good_enough if use_stop else None,
        )
        x, fx = res.x, res.value
        if "x" in snapped:
            x = snapped.pop("x")
            fx = f.value(x)
        if fx < best_val:
            best_val, best_x = fx, x
        ref = inf_reference
        if provenance == "best-found":
            ref = best_val
        gap = fx - ref
        sc = scale(fx, ref)
        if gap > eps**2 + TOL.ekeland_gap * sc:
            x0 = best_x
            continue
        st, g = _stationarity(f, x)
        if st is not None and st > eps * (1 + TOL.floor):
            y = _snap(f, x, eps, ref)
            if y is None:
                w = _descent_witness(f, x, g, eps)
                x0 = w if w is not None else best_x
                continue
            x, fx = y, f.value(y)
            gap = fx - ref
            st, g = _stationarity(f, x)
        pts = np.vstack([plan.points(x)] + [np.atleast_2d(p) for p in _probe(f, x)])
        worst, witness = _perturbed_scan(f, x, eps, pts)
        check = PerturbedCheck(plan, float(worst), witness, st, len(pts))
        if not check.passed:
            x0 = witness
            continue
        return EkelandCertificate(
            Point(x, space), float(eps), float(fx), float(ref), provenance,
            float(gap), check, res.method, restart,
        )
    raise BudgetError(
        f"no certificate after {budget} inner solves", best=best_x, value=best_val
    )


@dataclass
class VerifyReport:
    passed: bool
    gap_1a: float
    gap_ok: bool
    max_violation: float
    witness: np.ndarray | None
    n_points: int
    stationarity: float | None = None

    def as_dict(self):
        return {
            "passed": self.passed,
            "gap_1a": self.gap_1a,
            "gap_ok": self.gap_ok,
            "max_violation": self.max_violation,
            "witness": None if self.witness is None else self.witness.tolist(),
            "n_points": self.n_points,
            "stationarity": self.stationarity,
        }


def evp_verify(cert: EkelandCertificate, f: ConvexFunction, extra_points=()) -> VerifyReport:
    """Re-evaluate both inequalities from scratch; failures are report content."""
    x = cert.x_eps.coords
    fx = f.value(x)
    gap = fx - cert.inf_reference
    gap_ok = gap <= cert.eps**2 + TOL.ekeland_gap * scale(fx, cert.inf_reference)
    pts = [cert.perturbed_check.plan.points(x)] + [np.atleast_2d(p) for p in _probe(f, x)]
    extra = [np.asarray(p.coords if isinstance(p, Point) else p, float) for p in extra_points]
    if extra:
        pts.append(np.vstack(extra))
    pts = np.vstack(pts)
    worst, witness = _perturbed_scan(f, x, cert.eps, pts)
    st = _stationarity(f, x)[0] if math.isfinite(fx) else None
    ok = bool(gap_ok and worst <= TOL.ekeland_sample)
    return VerifyReport(ok, float(gap), bool(gap_ok), float(worst), witness, len(pts), st)


@dataclass
class StationarityDecomposition:
    """lam z* - lam x*_eps = y*_eps + eps u*_eps with ||u*_eps||_q <= 1."""

    x_eps: Point
    xs_eps: DualPoint
    ys_eps: DualPoint
    us_eps: DualPoint
    residual: float
    eps: float
    lam: float
    us_norm: float = field(default=0.0)

    def as_dict(self):
        return {
            "x_eps": self.x_eps.coords.tolist(),
            "xs_eps": self.xs_eps.coords.tolist(),
            "ys_eps": self.ys_eps.coords.tolist(),
            "us_eps": self.us_eps.coords.tolist(),
            "us_norm": self.us_norm,
            "residual": self.residual,
        }


def stationarity_decompose(
    f: ConvexFunction, z, zs, lam: float, cert: EkelandCertificate
) -> StationarityDecomposition:
    """Split the eps-stationarity of Psi at ``cert.x_eps`` into its three parts.

    ``x*`` is the element of df(x_eps) closest (in l_q) to
    ``(lam z* - J(x_eps - z)) / lam``; ``u*`` takes up the remainder.

    Raises
    ------
    DecompositionError
        ``||u*||_q > 1``: the certificate was not accurate enough.
    """
    space = f.space
    z = np.asarray(z.coords if isinstance(z, Point) else z, float)
    zs = np.asarray(zs.coords if isinstance(zs, DualPoint) else zs, float)
    x = cert.x_eps.coords
    eps = cert.eps
    ys = space.J(x - z)
    sd = f.subdiff_at(x)
    if sd.empty:
        raise DecompositionError("x_eps lies outside the domain of f")
    if isinstance(sd, MembershipOnly):
        raise DecompositionError("subdifferential has no finite structure")
    xs = sd.nearest((lam * zs - ys) / lam, space.q)
    us = (lam * zs - lam * xs - ys) / eps
    un = space.dual_norm(us)
    resid = space.dual_norm(lam * zs - lam * xs - ys - eps * us)
    dec = StationarityDecomposition(
        Point(x, space), DualPoint(xs, space), DualPoint(ys, space),
        DualPoint(us, space), float(resid), eps, lam, float(un),
    )
    if un > 1.0 + TOL.unit_ball:
        clipped = DualPoint(us / un, space)
        dec.us_eps = clipped
        raise DecompositionError(
            f"||u*||_q = {un:.6g} exceeds 1; shrink the inner tolerance", dec
        )
    return dec


def solve_and_decompose(f, z, zs, lam, eps, **kw):
    """evp_solve on Psi = build_psi(f, z, zs, lam) followed by the decomposition."""
    psi = build_psi(f, z, zs, lam)
    cert = evp_solve(psi, eps, **kw)
    return psi, cert, stationarity_decompose(f, z, zs, lam, cert)


__all__ = [
    "EkelandCertificate",
    "PerturbedCheck",
    "StationarityDecomposition",
    "VerifyReport",
    "evp_solve",
    "evp_verify",
    "stationarity_decompose",
    "solve_and_decompose",
]
