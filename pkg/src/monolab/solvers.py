"""Inner minimizers shared by the Ekeland and resolvent solvers.

Three routes, tried in this order by ``method="auto"``:

closed-form
    the catalog's own argmin (prox step for Psi in Hilbert space).
lifted
    functions that split into smooth + weighted |x_i| + box are rewritten
    with x = y - m, y, m >= 0 on the kink coordinates and handed to
    L-BFGS-B, which lands exactly on the bounds at kinks.
subgradient
    x <- x - step * J^-1(g) with Polyak steps when the infimum is known and
    c / sqrt(k) otherwise; box constraints are handled by clipping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize as _scipy_minimize
from scipy.optimize import root

from .config import scale
from .convex import ConvexFunction
from .errors import BudgetError, DivergenceError, InputError
from .subdiff import MembershipOnly

DIVERGENCE_LEVEL = 1e12


@dataclass
class InnerResult:
    x: np.ndarray
    value: float
    method: str
    iterations: int
    converged: bool


def _check_divergence(f, x, value, lower_bound):
    if lower_bound is not None and math.isfinite(lower_bound):
        if value < lower_bound - 1e-9 * scale(lower_bound, value):
            raise DivergenceError(
                f"objective {value:.6g} fell below the declared bound {lower_bound:.6g}",
                best=x, value=value,
            )
    if not np.all(np.isfinite(x)) or value < -DIVERGENCE_LEVEL * scale(f.witness):
        raise DivergenceError(
            "objective decreases without bound", best=x, value=value
        )


def _lifted(f: ConvexFunction, start, max_iter):
    comp = f.composite()
    d = f.space.dim
    K = np.flatnonzero(comp.abs_weights > 0)
    wK = comp.abs_weights[K]
    lo, hi = comp.lower, comp.upper

    def unpack(zv):
        x = zv[:d].copy()
        x[K] -= zv[d:]
        return x

    def fun(zv):
        x = unpack(zv)
        val = sum(v(x) for v, _ in comp.smooth) + wK @ (zv[d:][:] + zv[K])
        g = sum((gr(x) for _, gr in comp.smooth), np.zeros(d))
        grad = np.empty_like(zv)
        grad[:d] = g
        grad[K] += wK
        grad[d:] = -g[K] + wK
        return val, grad

    ylo, yhi = lo.copy(), hi.copy()
    ylo[K] = np.maximum(lo[K], 0.0)
    yhi[K] = np.maximum(hi[K], 0.0)
    mlo = np.maximum(-hi[K], 0.0)
    mhi = np.maximum(-lo[K], 0.0)
    blo = np.concatenate([ylo, mlo])
    bhi = np.concatenate([yhi, mhi])
    bounds = [
        (None if not math.isfinite(a) else a, None if not math.isfinite(b) else b)
        for a, b in zip(blo, bhi)
    ]

    x0 = np.asarray(start, dtype=float)
    y0 = x0.copy()
    y0[K] = np.maximum(x0[K], 0.0)
    z0 = np.clip(np.concatenate([y0, np.maximum(-x0[K], 0.0)]), blo, bhi)

    iters, best = 0, None
    for _ in range(8):
        res = _scipy_minimize(
            fun, z0, jac=True, method="L-BFGS-B", bounds=bounds,
            options={"maxiter": max_iter, "maxcor": 30, "ftol": 0.0,
                     "gtol": 1e-15, "maxls": 60},
        )
        iters += res.nit
        z1 = res.x
        if best is not None and np.array_equal(z1, z0):
            break
        if not np.all(np.isfinite(z1)) or res.fun < -DIVERGENCE_LEVEL:
            z0 = z1
            break
        best = z1
        z0 = z1
    x = unpack(z0)
    return _polish(comp, x), iters


def _stationarity(comp, x, q):
    """l_q distance from -grad(smooth) to w * d|x| + N_box at x."""
    g = sum((gr(x) for _, gr in comp.smooth), np.zeros(x.size))
    w = comp.abs_weights
    lo = np.where(x == 0, -w, w * np.sign(x))
    hi = np.where(x == 0, w, w * np.sign(x))
    lo = np.where(x == comp.lower, -np.inf, lo)
    hi = np.where(x == comp.upper, np.inf, hi)
    r = -g - np.clip(-g, lo, hi)
    return float(np.sum(np.abs(r) ** q) ** (1.0 / q))


def _polish(comp, x, q=2.0):
    """Newton on the free coordinates with kinks and active bounds frozen."""
    w = comp.abs_weights
    fixed = ((w > 0) & (x == 0)) | (x == comp.lower) | (x == comp.upper)
    free = np.flatnonzero(~fixed)
    if free.size == 0 or not comp.smooth:
        return x
    sgn = np.sign(x[free]) * w[free]

    def F(xf):
        y = x.copy()
        y[free] = xf
        g = sum((gr(y) for _, gr in comp.smooth), np.zeros(x.size))
        return g[free] + sgn

    sol = root(F, x[free], method="hybr", options={"xtol": 1e-15})
    y = x.copy()
    y[free] = sol.x
    same_face = (
        np.all(np.sign(y[free]) == np.sign(x[free]))
        and np.all(y >= comp.lower) and np.all(y <= comp.upper)
    )
    if same_face and _stationarity(comp, y, q) < _stationarity(comp, x, q):
        return y
    return x


def _subgradient(f, start, max_iter, f_star=None, stop=None, c=1.0):
    space = f.space
    comp = f.composite()
    lo = comp.lower if comp is not None else None
    hi = comp.upper if comp is not None else None
    x = np.asarray(start, dtype=float).copy()
    if lo is not None:
        x = np.clip(x, lo, hi)
    fx = f.value(x)
    if not math.isfinite(fx):
        x = f.witness.copy()
        fx = f.value(x)
    best, fbest = x.copy(), fx
    k = 0
    for k in range(1, max_iter + 1):
        if stop is not None and stop(best, fbest):
            return best, fbest, k - 1, True
        s = f.subdiff_at(x)
        if s.empty or isinstance(s, MembershipOnly):
            break
        g = s.nearest(np.zeros(space.dim), space.q)
        gn = space.dual_norm(g)
        if gn == 0.0:
            return x, fx, k, True
        direction = space.J_inv(g)  # ||direction||_p = ||g||_q
        if f_star is not None and math.isfinite(f_star):
            step = max(fx - f_star, 0.0) / gn**2
            if step == 0.0:
                return x, fx, k, True
        else:
            step = c / (math.sqrt(k) * gn)
        x = x - step * direction
        if lo is not None:
            x = np.clip(x, lo, hi)
        fx = f.value(x)
        if fx < fbest:
            best, fbest = x.copy(), fx
        if fbest < -DIVERGENCE_LEVEL * scale(f.witness):
            break
    done = stop(best, fbest) if stop is not None else False
    return best, fbest, k, done


def _ray_probe(f, x):
    """Follow -J^-1(g) with doubling steps; returns the point where f drops
    below the divergence level, or None.  A function bounded below cannot
    do this along any ray."""
    s = f.subdiff_at(x)
    if s.empty or isinstance(s, MembershipOnly):
        return None
    d = -f.space.J_inv(s.nearest(np.zeros(f.space.dim), f.space.q))
    if not np.any(d):
        return None
    level = -DIVERGENCE_LEVEL * scale(f.witness, f.value(x))
    t = 1.0
    for _ in range(200):
        y = x + t * d
        fy = f.value(y)
        if not math.isfinite(fy):
            return None
        if fy < level:
            return y
        t *= 2.0
    return None


def minimize(
    f: ConvexFunction,
    start=None,
    method: str = "auto",
    max_iter: int = 20000,
    lower_bound: float | None = None,
    f_star: float | None = None,
    stop=None,
) -> InnerResult:
    """Minimize a catalog function; raises DivergenceError if unbounded."""
    start = f.witness if start is None else np.asarray(start, dtype=float)
    if method not in ("auto", "closed-form", "lifted", "subgradient"):
        raise InputError(f"unknown inner method {method!r}")

    if method in ("auto", "closed-form"):
        xm = f.minimizer()
        if xm is not None:
            v = f.value(xm)
            _check_divergence(f, xm, v, lower_bound)
            return InnerResult(np.asarray(xm, float), v, "closed-form", 1, True)
        if method == "closed-form":
            raise InputError(f"{f.kind}: no closed-form minimizer")

    if method in ("auto", "lifted") and f.composite() is not None:
        x, it = _lifted(f, start, max_iter)
        v = f.value(x)
        _check_divergence(f, x, v, lower_bound)
        return InnerResult(x, v, "lifted", it, True)
    if method == "lifted":
        raise InputError(f"{f.kind}: no smooth + |.| + box split available")

    x, v, it, ok = _subgradient(f, start, max_iter, f_star=f_star, stop=stop)
    _check_divergence(f, x, v, lower_bound)
    if not ok and not math.isfinite(f.lower_bound()):
        y = _ray_probe(f, x)
        if y is not None:
            raise DivergenceError("objective decreases without bound", best=y, value=f.value(y))
    if stop is not None and not ok:
        raise BudgetError(
            f"subgradient method exhausted {max_iter} iterations", best=x, value=v
        )
    return InnerResult(x, v, "subgradient", it, ok)
