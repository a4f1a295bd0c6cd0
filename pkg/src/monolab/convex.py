"""Catalog of proper convex l.s.c. functions on an l_p space.

Values live in ``]-inf, +inf]``: evaluation returns a Python float and uses
``math.inf`` outside the effective domain, never ``-inf``.  Each kind knows
its subdifferential (as a :mod:`monolab.subdiff` set), and where one exists in
closed form, its Fenchel conjugate, Euclidean prox and minimizer.  Those
extras drive exact membership tests and the closed-form inner solves.

The regularized functional

    Psi(x) = 1/2 ||x - z||^2 + lam * f(x) - lam * <x, z*>

is built by :func:`build_psi`; the trapezoid discretization of a path-space
integral by :func:`build_integral_functional`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .config import TOL, scale
from .errors import InputError
from .space import DualPoint, Point, SpaceSpec, _lp_norm
from .subdiff import (
    Box,
    Empty,
    MembershipOnly,
    Polytope,
    Singleton,
    SubdiffRepr,
    cartesian,
    simplex_qp,
    minkowski_sum,
)

INF = math.inf


@dataclass
class Composite:
    """Split of a function into smooth part, weighted |x_i| terms and box.

    Used to lift a problem into a bound-constrained smooth one.
    """

    dim: int
    smooth: list = field(default_factory=list)  # (value(x), grad(x)) pairs
    abs_weights: np.ndarray = None
    lower: np.ndarray = None
    upper: np.ndarray = None

    def __post_init__(self):
        if self.abs_weights is None:
            self.abs_weights = np.zeros(self.dim)
        if self.lower is None:
            self.lower = np.full(self.dim, -INF)
        if self.upper is None:
            self.upper = np.full(self.dim, INF)

    def merged(self, other: "Composite") -> "Composite":
        return Composite(
            self.dim,
            self.smooth + other.smooth,
            self.abs_weights + other.abs_weights,
            np.maximum(self.lower, other.lower),
            np.minimum(self.upper, other.upper),
        )

    def scaled(self, c: float) -> "Composite":
        smooth = [
            (lambda x, v=v: c * v(x), lambda x, g=g: c * g(x)) for v, g in self.smooth
        ]
        return Composite(self.dim, smooth, c * self.abs_weights, self.lower, self.upper)


class ConvexFunction:
    """Base class.  Subclasses fill in the catalog formulas."""

    kind = "abstract"
    exactness = "exact"
    finite_everywhere = False

    def __init__(self, space: SpaceSpec):
        self.space = space

    def _finish(self):
        w = self.witness
        if not math.isfinite(self.value(w)):
            raise InputError(f"{self.kind}: function is not proper (no finite witness)")

    # --- overridden by kinds -------------------------------------------------

    def value(self, x) -> float:
        raise NotImplementedError

    def subdiff_at(self, x) -> SubdiffRepr:
        raise NotImplementedError

    @property
    def witness(self) -> np.ndarray:
        return np.zeros(self.space.dim)

    def conjugate(self, s, tol=0.0):
        """Fenchel conjugate at ``s``, or None when no closed form is known."""
        return None

    def prox(self, v, t):
        """Euclidean prox of ``t * f`` at ``v``, or None."""
        return None

    def minimizer(self):
        """Closed-form argmin, or None."""
        return None

    def lower_bound(self) -> float:
        return -INF

    def composite(self):
        return None

    def critical_points(self, x) -> list:
        return []

    def descriptor(self) -> dict:
        return {"kind": self.kind}

    # --- shared --------------------------------------------------------------

    def infimum(self):
        xm = self.minimizer()
        return None if xm is None else self.value(xm)

    def __call__(self, x) -> float:
        return self.value(_coords(x, self.space))

    def __add__(self, other):
        return combine_sum(self, other)

    def __repr__(self):
        return f"<{type(self).__name__} {self.descriptor()}>"


def _coords(x, space: SpaceSpec) -> np.ndarray:
    if isinstance(x, (Point, DualPoint)):
        if x.space.dim != space.dim:
            raise InputError(f"dimension mismatch: {x.space.dim} vs {space.dim}")
        return x.coords
    return space.check(x)


# ---------------------------------------------------------------------------
# catalog kinds
# ---------------------------------------------------------------------------


def _psd_matrix(M, dim) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape != (dim, dim):
        raise InputError(f"matrix has shape {M.shape}, expected ({dim}, {dim})")
    sc = scale(M)
    if np.max(np.abs(M - M.T), initial=0.0) > TOL.floor * sc:
        raise InputError("matrix is not symmetric")
    M = 0.5 * (M + M.T)
    if np.linalg.eigvalsh(M).min() < -TOL.monotone * sc:
        raise InputError("matrix is not positive semidefinite")
    return M


class Quadratic(ConvexFunction):
    """1/2 (x - b)^T M (x - b) with M symmetric PSD."""

    kind = "quadratic"
    finite_everywhere = True

    def __init__(self, space, matrix=None, shift=None):
        super().__init__(space)
        d = space.dim
        self.M = np.eye(d) if matrix is None else _psd_matrix(matrix, d)
        self.b = np.zeros(d) if shift is None else space.check(shift, "shift")
        self._finish()

    def value(self, x):
        r = x - self.b
        return float(0.5 * r @ self.M @ r)

    def grad(self, x):
        return self.M @ (x - self.b)

    def subdiff_at(self, x):
        return Singleton(self.grad(x))

    def conjugate(self, s, tol=0.0):
        Mp = np.linalg.pinv(self.M)
        y = Mp @ s
        if _lp_norm(self.M @ y - s, 2) > max(tol, TOL.floor) * scale(s):
            return INF
        return float(s @ self.b + 0.5 * s @ y)

    def prox(self, v, t):
        d = self.space.dim
        return np.linalg.solve(np.eye(d) + t * self.M, v + t * self.M @ self.b)

    def minimizer(self):
        return self.b.copy()

    def lower_bound(self):
        return 0.0

    def composite(self):
        return Composite(self.space.dim, [(self.value, self.grad)])

    def descriptor(self):
        return {"kind": self.kind, "matrix": self.M.tolist(), "shift": self.b.tolist()}


class PNormSquaredHalf(ConvexFunction):
    """1/2 ||x - c||_p^2; its gradient is the duality map."""

    kind = "pnorm_squared_half"
    finite_everywhere = True

    def __init__(self, space, center=None):
        super().__init__(space)
        self.c = np.zeros(space.dim) if center is None else space.check(center, "center")
        self._finish()

    def value(self, x):
        return 0.5 * self.space.primal_norm(x - self.c) ** 2

    def grad(self, x):
        return self.space.J(x - self.c)

    def subdiff_at(self, x):
        return Singleton(self.grad(x))

    def conjugate(self, s, tol=0.0):
        return 0.5 * self.space.dual_norm(s) ** 2 + float(s @ self.c)

    def prox(self, v, t):
        if not self.space.is_hilbert:
            return None
        return (v + t * self.c) / (1.0 + t)

    def minimizer(self):
        return self.c.copy()

    def lower_bound(self):
        return 0.0

    def composite(self):
        return Composite(self.space.dim, [(self.value, self.grad)])

    def descriptor(self):
        return {"kind": self.kind, "center": self.c.tolist()}


class AbsSum(ConvexFunction):
    """sum_i w_i |x_i| with w_i > 0."""

    kind = "abs_sum"
    finite_everywhere = True

    def __init__(self, space, weights=None):
        super().__init__(space)
        d = space.dim
        if weights is None:
            self.w = np.ones(d)
        else:
            w = np.broadcast_to(np.asarray(weights, dtype=float), (d,)).copy()
            if np.any(w <= 0) or not np.all(np.isfinite(w)):
                raise InputError("abs_sum weights must be positive and finite")
            self.w = w
        self._finish()

    def value(self, x):
        return float(self.w @ np.abs(x))

    def subdiff_at(self, x):
        s = np.sign(x) * self.w
        kink = x == 0
        if not kink.any():
            return Singleton(s)
        lo = np.where(kink, -self.w, s)
        hi = np.where(kink, self.w, s)
        return Box(lo, hi)

    def conjugate(self, s, tol=0.0):
        if np.any(np.abs(s) > self.w + tol * scale(s, self.w)):
            return INF
        return 0.0

    def prox(self, v, t):
        return np.sign(v) * np.maximum(np.abs(v) - t * self.w, 0.0)

    def minimizer(self):
        return np.zeros(self.space.dim)

    def lower_bound(self):
        return 0.0

    def composite(self):
        return Composite(self.space.dim, abs_weights=self.w.copy())

    def critical_points(self, x):
        # zero the k smallest coordinates, k = 1..d, then each one alone
        out = []
        y = np.asarray(x, dtype=float).copy()
        for i in np.argsort(np.abs(y), kind="stable"):
            y[i] = 0.0
            out.append(y.copy())
        for i in np.flatnonzero(x):
            y = x.copy()
            y[i] = 0.0
            out.append(y)
        return out

    def descriptor(self):
        return {"kind": self.kind, "weights": self.w.tolist()}


class MaxAffine(ConvexFunction):
    """max_i <a_i, x> + b_i; polyhedral, finite everywhere."""

    kind = "max_affine"
    finite_everywhere = True

    def __init__(self, space, slopes, intercepts=None):
        super().__init__(space)
        A = np.atleast_2d(np.asarray(slopes, dtype=float))
        if A.shape[1] != space.dim or A.shape[0] == 0:
            raise InputError(f"slopes must have shape (k, {space.dim}), got {A.shape}")
        b = np.zeros(A.shape[0]) if intercepts is None else np.asarray(intercepts, dtype=float).reshape(-1)
        if b.shape[0] != A.shape[0]:
            raise InputError("one intercept per slope is required")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise InputError("max_affine pieces must be finite")
        self.A, self.b = A, b
        self._finish()

    def pieces(self, x):
        return self.A @ x + self.b

    def value(self, x):
        return float(self.pieces(x).max())

    def active(self, x, tau=None):
        v = self.pieces(x)
        m = v.max()
        tau = TOL.tie * scale(v) if tau is None else tau
        return np.flatnonzero(v >= m - tau)

    def subdiff_at(self, x):
        idx = self.active(x)
        if len(idx) == 1:
            return Singleton(self.A[idx[0]])
        return Polytope(self.A[idx])

    def conjugate(self, s, tol=0.0):
        hull = Polytope(self.A)
        if hull.distance(s) > max(tol, TOL.membership) * scale(s, self.A):
            return INF
        s = hull.nearest(s)
        k = self.A.shape[0]
        res = linprog(
            -self.b,
            A_eq=np.vstack([self.A.T, np.ones((1, k))]),
            b_eq=np.append(s, 1.0),
            bounds=[(0, None)] * k,
            method="highs",
        )
        if res.status != 0:
            return INF
        return float(res.fun)

    def prox(self, v, t):
        if not self.space.is_hilbert:
            return None
        # dual QP over the simplex: x = v - t A^T theta
        Q = t * self.A @ self.A.T
        c = self.A @ v + self.b
        theta = simplex_qp(Q, c)
        return v - t * self.A.T @ theta

    def lower_bound(self):
        k = self.A.shape[0]
        res = linprog(
            -self.b,
            A_eq=np.vstack([self.A.T, np.ones((1, k))]),
            b_eq=np.append(np.zeros(self.space.dim), 1.0),
            bounds=[(0, None)] * k,
            method="highs",
        )
        return -INF if res.status != 0 else float(-res.fun)

    def descriptor(self):
        return {"kind": self.kind, "slopes": self.A.tolist(), "intercepts": self.b.tolist()}


def _bounds(space, values, default, name):
    if values is None:
        return np.full(space.dim, default)
    a = np.broadcast_to(np.asarray(values, dtype=float), (space.dim,)).copy()
    if np.any(np.isnan(a)):
        raise InputError(f"{name} bounds contain NaN")
    return a


class IndicatorBox(ConvexFunction):
    """0 on {lower <= x <= upper}, +inf elsewhere.  Bounds may be infinite."""

    kind = "indicator_box"

    def __init__(self, space, lower=None, upper=None, cone_radius=TOL.cone_radius):
        super().__init__(space)
        self.lower = _bounds(space, lower, -INF, "lower")
        self.upper = _bounds(space, upper, INF, "upper")
        if np.any(self.lower > self.upper) or np.any(self.lower == INF) or np.any(self.upper == -INF):
            raise InputError("indicator_box needs lower <= upper with a nonempty box")
        self.cone_radius = float(cone_radius)
        self._finish()

    def value(self, x):
        return 0.0 if np.all((x >= self.lower) & (x <= self.upper)) else INF

    @property
    def witness(self):
        return np.clip(np.zeros(self.space.dim), self.lower, self.upper)

    def subdiff_at(self, x):
        if not math.isfinite(self.value(x)):
            return Empty(self.space.dim)
        R = self.cone_radius
        at_lo = x == self.lower
        at_hi = x == self.upper
        if not (at_lo.any() or at_hi.any()):
            return Singleton(np.zeros_like(x))
        lo = np.where(at_lo, -R, 0.0)
        hi = np.where(at_hi, R, 0.0)
        return Box(lo, hi, truncated=True)

    def conjugate(self, s, tol=0.0):
        t = tol * scale(s)
        total = 0.0
        for si, li, ui in zip(s, self.lower, self.upper):
            if si > t:
                if ui == INF:
                    return INF
                total += si * ui
            elif si < -t:
                if li == -INF:
                    return INF
                total += si * li
        return float(total)

    def prox(self, v, t):
        return np.clip(v, self.lower, self.upper)

    def minimizer(self):
        return self.witness

    def lower_bound(self):
        return 0.0

    def composite(self):
        return Composite(self.space.dim, lower=self.lower.copy(), upper=self.upper.copy())

    def critical_points(self, x):
        out = [self.witness]
        for bound in (self.lower, self.upper):
            y = np.where(np.isfinite(bound), bound, x)
            out.append(y)
        # move the k coordinates nearest to a bound onto it, k = 1..d
        x = np.clip(np.asarray(x, dtype=float), self.lower, self.upper)
        near = np.where(x - self.lower <= self.upper - x, self.lower, self.upper)
        dist = np.abs(x - near)
        y = x.copy()
        for i in np.argsort(dist, kind="stable"):
            if not math.isfinite(near[i]):
                break
            y[i] = near[i]
            out.append(y.copy())
        return out

    def descriptor(self):
        enc = lambda a: [None if not math.isfinite(v) else float(v) for v in a]
        return {"kind": self.kind, "lower": enc(self.lower), "upper": enc(self.upper)}


class IndicatorBall(ConvexFunction):
    """0 on the primal-norm ball {||x||_p <= r}, +inf elsewhere."""

    kind = "indicator_ball"

    def __init__(self, space, radius=1.0, cone_radius=TOL.cone_radius):
        super().__init__(space)
        if not (radius > 0 and math.isfinite(radius)):
            raise InputError("indicator_ball radius must be positive and finite")
        self.radius = float(radius)
        self.cone_radius = float(cone_radius)
        self._finish()

    def _slack(self):
        return self.radius * TOL.floor * 10

    def value(self, x):
        return 0.0 if self.space.primal_norm(x) <= self.radius + self._slack() else INF

    def subdiff_at(self, x):
        n = self.space.primal_norm(x)
        if n > self.radius + self._slack():
            return Empty(self.space.dim)
        if n < self.radius - self._slack():
            return Singleton(np.zeros_like(x))
        j = self.space.J(x)
        ray = self.cone_radius * j / self.space.dual_norm(j)
        return Polytope(np.vstack([np.zeros_like(x), ray]), truncated=True)

    def conjugate(self, s, tol=0.0):
        return self.radius * self.space.dual_norm(s)

    def prox(self, v, t):
        if not self.space.is_hilbert:
            return None
        n = self.space.primal_norm(v)
        return v if n <= self.radius else v * (self.radius / n)

    def minimizer(self):
        return np.zeros(self.space.dim)

    def lower_bound(self):
        return 0.0

    def critical_points(self, x):
        n = self.space.primal_norm(x)
        return [np.zeros_like(x)] + ([x * (self.radius / n)] if n > 0 else [])

    def descriptor(self):
        return {"kind": self.kind, "radius": self.radius}


class Affine(ConvexFunction):
    """<a, x> + c."""

    kind = "affine"
    finite_everywhere = True

    def __init__(self, space, slope=None, intercept=0.0):
        super().__init__(space)
        self.a = np.zeros(space.dim) if slope is None else space.check(slope, "slope")
        self.c = float(intercept)
        self._finish()

    def value(self, x):
        return float(self.a @ x + self.c)

    def grad(self, x):
        return self.a.copy()

    def subdiff_at(self, x):
        return Singleton(self.a.copy())

    def conjugate(self, s, tol=0.0):
        if _lp_norm(s - self.a, 2) > max(tol, TOL.floor) * scale(s, self.a):
            return INF
        return -self.c

    def prox(self, v, t):
        return v - t * self.a

    def minimizer(self):
        return np.zeros(self.space.dim) if not np.any(self.a) else None

    def lower_bound(self):
        return self.c if not np.any(self.a) else -INF

    def composite(self):
        return Composite(self.space.dim, [(self.value, self.grad)])

    def descriptor(self):
        return {"kind": self.kind, "slope": self.a.tolist(), "intercept": self.c}


class Scaled(ConvexFunction):
    """factor * inner, factor > 0."""

    kind = "scaled"

    def __init__(self, factor, inner: ConvexFunction):
        super().__init__(inner.space)
        if not (factor > 0 and math.isfinite(factor)):
            raise InputError(f"scale factor must be positive, got {factor!r}")
        self.factor = float(factor)
        self.inner = inner
        self.finite_everywhere = inner.finite_everywhere
        self.exactness = inner.exactness

    @property
    def witness(self):
        return self.inner.witness

    def value(self, x):
        v = self.inner.value(x)
        return v if v == INF else self.factor * v

    def subdiff_at(self, x):
        s = self.inner.subdiff_at(x)
        if isinstance(s, MembershipOnly):
            return MembershipOnly(self, x, s.reason)
        return s.scaled(self.factor)

    def conjugate(self, s, tol=0.0):
        c = self.inner.conjugate(np.asarray(s) / self.factor, tol)
        return None if c is None else self.factor * c

    def prox(self, v, t):
        return self.inner.prox(v, t * self.factor)

    def minimizer(self):
        return self.inner.minimizer()

    def lower_bound(self):
        return self.factor * self.inner.lower_bound()

    def composite(self):
        c = self.inner.composite()
        return None if c is None else c.scaled(self.factor)

    def critical_points(self, x):
        return self.inner.critical_points(x)

    def descriptor(self):
        return {"kind": self.kind, "factor": self.factor, "function": self.inner.descriptor()}


class Sum(ConvexFunction):
    """Pointwise sum; subdifferential is the Minkowski sum of the parts.

    The sum rule is exact when all but one part are finite everywhere
    (hence continuous); otherwise the Minkowski sum is only a subset of the
    true subdifferential and ``sum_rule_exact`` is False.
    """

    kind = "sum"

    def __init__(self, terms):
        terms = list(terms)
        if not terms:
            raise InputError("sum needs at least one term")
        space = terms[0].space
        if any(t.space != space for t in terms):
            raise InputError("sum terms live in different spaces")
        super().__init__(space)
        self.terms = terms
        self.finite_everywhere = all(t.finite_everywhere for t in terms)
        self.sum_rule_exact = sum(not t.finite_everywhere for t in terms) <= 1
        self.exactness = (
            "exact" if all(t.exactness == "exact" for t in terms) else "membership-only"
        )
        self._witness = self._find_witness()

    def _find_witness(self):
        cands = [t.witness for t in self.terms] + [np.zeros(self.space.dim)]
        for t in self.terms:
            # push each candidate through the projections we know
            for c in list(cands):
                p = t.prox(c, 1.0) if t.kind in ("indicator_box", "indicator_ball") else None
                if p is not None:
                    cands.append(p)
        for c in cands:
            if math.isfinite(self.value(c)):
                return c
        raise InputError("sum: could not find a point where every term is finite")

    @property
    def witness(self):
        return self._witness

    def value(self, x):
        total = 0.0
        for t in self.terms:
            v = t.value(x)
            if v == INF:
                return INF
            total += v
        return total

    def subdiff_at(self, x):
        acc = None
        for t in self.terms:
            s = t.subdiff_at(x)
            acc = s if acc is None else minkowski_sum(acc, s)
        if isinstance(acc, MembershipOnly):
            return MembershipOnly(self, x, acc.reason or "membership-only part")
        return acc

    def _split_affine(self):
        affine = [t for t in self.terms if isinstance(t, Affine)]
        rest = [t for t in self.terms if not isinstance(t, Affine)]
        a = sum((t.a for t in affine), np.zeros(self.space.dim))
        c = sum(t.c for t in affine)
        return a, c, rest

    def conjugate(self, s, tol=0.0):
        a, c, rest = self._split_affine()
        if len(rest) == 1:
            g = rest[0].conjugate(np.asarray(s) - a, tol)
            return None if g is None else g - c
        return None

    def prox(self, v, t):
        a, _, rest = self._split_affine()
        v = v - t * a
        if len(rest) == 0:
            return v
        if len(rest) == 1:
            return rest[0].prox(v, t)
        kinds = sorted(r.kind for r in rest)
        if kinds == ["abs_sum", "indicator_box"]:
            # 1-d separable: prox of w|.| + box is clip(soft-threshold)
            box = next(r for r in rest if r.kind == "indicator_box")
            l1 = next(r for r in rest if r.kind == "abs_sum")
            return np.clip(l1.prox(v, t), box.lower, box.upper)
        return None

    def minimizer(self):
        a, _, rest = self._split_affine()
        if len(rest) == 1 and not np.any(a):
            return rest[0].minimizer()
        return None

    def lower_bound(self):
        return float(sum(t.lower_bound() for t in self.terms))

    def composite(self):
        parts = [t.composite() for t in self.terms]
        if any(p is None for p in parts):
            return None
        acc = parts[0]
        for p in parts[1:]:
            acc = acc.merged(p)
        return acc

    def critical_points(self, x):
        return [c for t in self.terms for c in t.critical_points(x)]

    def descriptor(self):
        return {"kind": self.kind, "terms": [t.descriptor() for t in self.terms]}


class DiscretizedIntegral(ConvexFunction):
    """Trapezoid rule for the path-space integral of a nodewise integrand.

    The variable is the flattened array of ``N`` node values in R^d on the
    uniform grid ``t_k = k T / (N - 1)``.  The value is +inf as soon as one
    node is outside the integrand's domain.
    """

    kind = "integral"

    def __init__(self, inner: ConvexFunction, N: int, T: float):
        if int(N) != N or N < 2:
            raise InputError(f"grid size N must be an integer >= 2, got {N!r}")
        if not (T > 0 and math.isfinite(T)):
            raise InputError(f"horizon T must be positive, got {T!r}")
        self.inner = inner
        self.N, self.T = int(N), float(T)
        super().__init__(SpaceSpec(self.N * inner.space.dim, inner.space.p))
        h = self.T / (self.N - 1)
        self.weights = np.full(self.N, h)
        self.weights[[0, -1]] = 0.5 * h
        self.finite_everywhere = inner.finite_everywhere
        self.exactness = inner.exactness

    @property
    def times(self):
        return np.linspace(0.0, self.T, self.N)

    def nodes(self, x):
        return np.asarray(x, dtype=float).reshape(self.N, self.inner.space.dim)

    @property
    def witness(self):
        return np.tile(self.inner.witness, self.N)

    def value(self, x):
        total = 0.0
        for w, xk in zip(self.weights, self.nodes(x)):
            v = self.inner.value(xk)
            if v == INF:
                return INF
            total += w * v
        return float(total)

    def subdiff_at(self, x):
        blocks = [
            self.inner.subdiff_at(xk).scaled(w) for w, xk in zip(self.weights, self.nodes(x))
        ]
        s = cartesian(blocks)
        if isinstance(s, MembershipOnly):
            return MembershipOnly(self, x, s.reason)
        return s

    def conjugate(self, s, tol=0.0):
        total = 0.0
        for w, sk in zip(self.weights, self.nodes(s)):
            c = self.inner.conjugate(sk / w, tol)
            if c is None:
                return None
            if c == INF:
                return INF
            total += w * c
        return float(total)

    def prox(self, v, t):
        out = []
        for w, vk in zip(self.weights, self.nodes(v)):
            p = self.inner.prox(vk, t * w)
            if p is None:
                return None
            out.append(p)
        return np.concatenate(out)

    def minimizer(self):
        m = self.inner.minimizer()
        return None if m is None else np.tile(m, self.N)

    def lower_bound(self):
        lb = self.inner.lower_bound()
        return lb * self.T if math.isfinite(lb) else -INF

    def composite(self):
        c = self.inner.composite()
        if c is None:
            return None
        d, N, W = self.inner.space.dim, self.N, self.weights

        def val(x):
            X = x.reshape(N, d)
            return float(sum(w * sum(v(xk) for v, _ in c.smooth) for w, xk in zip(W, X)))

        def grad(x):
            X = x.reshape(N, d)
            return np.concatenate(
                [w * sum((g(xk) for _, g in c.smooth), np.zeros(d)) for w, xk in zip(W, X)]
            )

        return Composite(
            N * d,
            [(val, grad)] if c.smooth else [],
            np.concatenate([w * c.abs_weights for w in W]),
            np.tile(c.lower, N),
            np.tile(c.upper, N),
        )

    def descriptor(self):
        return {"kind": self.kind, "N": self.N, "T": self.T, "function": self.inner.descriptor()}


class Regularized(Sum):
    """Psi(x) = 1/2 ||x - z||^2 + lam f(x) - lam <x, z*>, proper and coercive."""

    kind = "psi"

    def __init__(self, base: ConvexFunction, z, zs, lam: float):
        space = base.space
        self.base = base
        self.z = space.check(z, "z")
        self.zs = space.check(zs, "z*")
        self.lam = float(lam)
        self.coercive = True
        super().__init__(
            [
                PNormSquaredHalf(space, self.z),
                Scaled(self.lam, base),
                Affine(space, -self.lam * self.zs, 0.0),
            ]
        )

    def minimizer(self):
        # 1/2||x-z||^2 + lam f - lam<x,z*> has argmin prox_{lam f}(z + lam z*)
        if not self.space.is_hilbert:
            return None
        return self.base.prox(self.z + self.lam * self.zs, self.lam)

    def prox(self, v, t):
        return None

    def _affine_minorant(self):
        x0 = self.base.witness
        s = self.base.subdiff_at(x0)
        g0 = np.zeros(self.space.dim) if s.empty or isinstance(s, MembershipOnly) else s.nearest(self.zs)
        return x0, g0

    def lower_bound(self):
        xm = self.minimizer()
        if xm is not None:
            return self.value(xm)
        x0, g0 = self._affine_minorant()
        lam, z, zs = self.lam, self.z, self.zs
        c = lam * (self.base.value(x0) + (z - x0) @ g0 - z @ zs)
        return float(c - 0.5 * lam**2 * self.space.dual_norm(zs - g0) ** 2)

    def sublevel_radius(self, level: float) -> float:
        """Bound on ||x - z|| over {Psi <= level}, from an affine minorant of f."""
        x0, g0 = self._affine_minorant()
        lam, z, zs = self.lam, self.z, self.zs
        c = lam * (self.base.value(x0) + (z - x0) @ g0 - z @ zs)
        a = lam * self.space.dual_norm(zs - g0)
        # 1/2 r^2 - a r + c <= level
        return float(a + math.sqrt(a * a + 2.0 * max(level - c, 0.0)))

    def descriptor(self):
        return {
            "kind": self.kind,
            "function": self.base.descriptor(),
            "z": self.z.tolist(),
            "zs": self.zs.tolist(),
            "lambda": self.lam,
        }


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def eval(f: ConvexFunction, x) -> float:  # noqa: A001 - catalog verb
    """Extended-real value of ``f`` at ``x`` (``math.inf`` off the domain)."""
    return f(x)


def subdiff(f: ConvexFunction, x) -> SubdiffRepr:
    """Subdifferential set at ``x``; ``Empty`` outside the domain."""
    xa = _coords(x, f.space)
    if not math.isfinite(f.value(xa)):
        return Empty(f.space.dim)
    return f.subdiff_at(xa)


@dataclass(frozen=True)
class SamplePlan:
    """Seeded witness sample: ``count`` points in a ball of ``radius``.

    Half the points are uniform in the ball, half at log-uniform distances
    in [1e-6, 1] * radius so that local violations are found too.
    ``radius=None`` means ``10 * (1 + ||x||)`` around the tested point.
    """

    seed: int = 0
    count: int = 1000
    radius: float | None = None

    def resolve_radius(self, x) -> float:
        if self.radius is not None:
            return float(self.radius)
        return 10.0 * (1.0 + float(np.linalg.norm(x)))

    def points(self, center) -> np.ndarray:
        center = np.asarray(center, dtype=float)
        d = center.size
        rng = np.random.default_rng(self.seed)
        r = self.resolve_radius(center)
        n1 = self.count // 2
        n2 = self.count - n1
        dirs = rng.standard_normal((self.count, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        radii = np.concatenate(
            [r * rng.random(n1) ** (1.0 / d), r * 10.0 ** rng.uniform(-6, 0, n2)]
        )
        return center + dirs * radii[:, None]

    def as_dict(self):
        return {"seed": self.seed, "count": self.count, "radius": self.radius}


@dataclass
class MembershipResult:
    holds: bool
    witness: np.ndarray | None
    violation: float
    exact: bool
    plan: SamplePlan
    conjugate_gap: float | None = None

    def as_dict(self):
        return {
            "holds": self.holds,
            "witness": None if self.witness is None else self.witness.tolist(),
            "violation": self.violation,
            "exact": self.exact,
            "conjugate_gap": self.conjugate_gap,
            "plan": self.plan.as_dict(),
        }


def _probe_points(f: ConvexFunction, x, xs, plan: SamplePlan):
    d = x.size
    pts = []
    steps = (1.0, 0.1, 10.0, 1e-3, 100.0)
    coords = range(min(d, 64))
    for t in steps:
        for i in coords:
            for sgn in (1.0, -1.0):
                y = x.copy()
                y[i] += sgn * t
                pts.append(y)
    n = f.space.dual_norm(xs)
    if n > 0:
        u = f.space.J_inv(xs) / n
        for t in steps:
            pts.append(x + t * u)
            pts.append(x - t * u)
    pts.extend(f.critical_points(x))
    pts.append(f.witness)
    return np.array(pts)


def subdiff_membership_arrays(f, x, xs, plan: SamplePlan | None = None, tol=TOL.membership):
    plan = plan or SamplePlan()
    x = np.asarray(x, dtype=float)
    xs = np.asarray(xs, dtype=float)
    fx = f.value(x)
    if not math.isfinite(fx):
        raise InputError("membership test needs x in the domain of f")
    pts = np.vstack([_probe_points(f, x, xs, plan), plan.points(x)])
    worst, witness, first = -INF, None, None
    for y in pts:
        fy = f.value(y)
        if fy == INF:
            continue
        lin = float((y - x) @ xs)
        v = lin + fx - fy
        sc = scale(fx, fy, lin)
        if v > tol * sc and first is None:
            first = y
        if v / sc > worst:
            worst, witness = v / sc, y
    exact = f.exactness == "exact"
    conj = f.conjugate(xs, tol) if exact else None
    if conj is not None:
        gap = INF if conj == INF else fx + conj - float(x @ xs)
        holds = gap <= tol * scale(fx, conj if conj != INF else 0.0, float(x @ xs))
        return MembershipResult(
            holds, None if holds else (first if first is not None else witness),
            float(worst), True, plan, float(gap),
        )
    return MembershipResult(first is None, first, float(worst), False, plan)


def subdiff_membership(f: ConvexFunction, x, xs, plan: SamplePlan | None = None) -> MembershipResult:
    """Definitional test of <y - x, x*> + f(x) <= f(y).

    Kinds with a closed-form conjugate decide exactly through the
    Fenchel-Young gap ``f(x) + f*(x*) - <x, x*>``; the sample plan then only
    supplies a refuting witness.  Other kinds are decided on the sample.
    """
    return subdiff_membership_arrays(
        f, _coords(x, f.space), _coords(xs, f.space), plan
    )


def combine_sum(f: ConvexFunction, g: ConvexFunction) -> Sum:
    terms = []
    for h in (f, g):
        terms.extend(h.terms if type(h) is Sum else [h])
    return Sum(terms)


def build_psi(f: ConvexFunction, z, zs, lam: float) -> Regularized:
    if not (lam > 0 and math.isfinite(lam)):
        raise InputError(f"lambda must be positive, got {lam!r}")
    return Regularized(f, _coords(z, f.space), _coords(zs, f.space), lam)


def build_integral_functional(phi: ConvexFunction, N: int, T: float) -> DiscretizedIntegral:
    return DiscretizedIntegral(phi, N, T)


def spot_check_convexity(f: ConvexFunction, seed=0, count=100, radius=None) -> float:
    """Largest scaled violation of the convexity inequality on random pairs.

    Returns a value <= tolerance for a convex function.
    """
    rng = np.random.default_rng(seed)
    c = f.witness
    r = radius or 10.0 * (1.0 + np.linalg.norm(c))
    worst = -INF
    for _ in range(count):
        x = c + r * rng.uniform(-1, 1, c.size)
        y = c + r * rng.uniform(-1, 1, c.size)
        fx, fy = f.value(x), f.value(y)
        if not (math.isfinite(fx) and math.isfinite(fy)):
            continue
        for t in (0.25, 0.5, 0.75):
            fm = f.value(t * x + (1 - t) * y)
            worst = max(worst, (fm - t * fx - (1 - t) * fy) / scale(fx, fy, fm))
    return worst
