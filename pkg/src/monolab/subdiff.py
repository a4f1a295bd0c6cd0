"""Finite representations of subdifferential sets.

Every variant answers the same questions: is it empty, which element is
nearest to a given dual vector (in the l_q norm), does it contain a vector,
and which finitely many elements span it.  Normal cones are unbounded; they
are cut at a declared radius and carry ``truncated=True``.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import minimize

from .config import TOL, scale
from .space import _lp_norm

MAX_GENERATORS = 4096


class SubdiffRepr:
    truncated = False
    variant = "abstract"

    @property
    def empty(self) -> bool:
        return False

    def nearest(self, v, q=2.0) -> np.ndarray:
        raise NotImplementedError

    def distance(self, v, q=2.0) -> float:
        v = np.asarray(v, dtype=float)
        return _lp_norm(v - self.nearest(v, q), q)

    def contains(self, v, tol=TOL.membership) -> bool:
        v = np.asarray(v, dtype=float)
        return self.distance(v) <= tol * scale(v)

    def select(self) -> np.ndarray:
        """A representative element."""
        raise NotImplementedError

    def generators(self) -> np.ndarray:
        raise NotImplementedError

    def shifted(self, v) -> "SubdiffRepr":
        raise NotImplementedError

    def scaled(self, c: float) -> "SubdiffRepr":
        raise NotImplementedError

    def describe(self) -> dict:
        return {"variant": self.variant, "truncated": self.truncated}


class Empty(SubdiffRepr):
    variant = "empty"

    def __init__(self, dim: int):
        self.dim = dim

    @property
    def empty(self):
        return True

    def nearest(self, v, q=2.0):
        raise ValueError("empty subdifferential has no elements")

    def distance(self, v, q=2.0):
        return np.inf

    def contains(self, v, tol=TOL.membership):
        return False

    def select(self):
        raise ValueError("empty subdifferential has no elements")

    def generators(self):
        return np.zeros((0, self.dim))

    def shifted(self, v):
        return self

    def scaled(self, c):
        return self


class Singleton(SubdiffRepr):
    variant = "singleton"

    def __init__(self, point):
        self.point = np.asarray(point, dtype=float).copy()

    def nearest(self, v, q=2.0):
        return self.point.copy()

    def select(self):
        return self.point.copy()

    def generators(self):
        return self.point[None, :].copy()

    def shifted(self, v):
        return Singleton(self.point + v)

    def scaled(self, c):
        return Singleton(c * self.point)

    def describe(self):
        return {"variant": self.variant, "point": self.point.tolist()}


def simplex_qp(Q: np.ndarray, c: np.ndarray, max_iter: int = 1000) -> np.ndarray:
    """Minimize 1/2 t^T Q t - c^T t over the probability simplex (Q PSD).

    Primal active-set method; returns the weights ``t``.
    """
    n = c.size
    sc = 1.0 + np.abs(Q).max() + np.abs(c).max()
    # ridge keeps every reduced KKT system nonsingular on degenerate supports
    Q = Q + 1e-13 * sc * np.eye(n)
    S = [int(np.argmax(c - 0.5 * np.diag(Q)))]
    t = np.zeros(n)
    t[S[0]] = 1.0
    for _ in range(max_iter):
        k = len(S)
        A = np.zeros((k + 1, k + 1))
        A[:k, :k] = Q[np.ix_(S, S)]
        A[:k, k] = 1.0
        A[k, :k] = 1.0
        rhs = np.append(c[S], 1.0)
        v = np.linalg.solve(A, rhs)[:k]
        if np.any(v < -1e-14):
            tS = t[S]
            mask = v < tS
            ratios = np.where(mask & (v < 0), tS / np.where(mask, tS - v, 1.0), np.inf)
            theta = min(1.0, float(ratios.min()))
            new = tS + theta * (v - tS)
            new[new < 1e-15] = 0.0
            t[:] = 0.0
            t[S] = new
            S = [i for i in S if t[i] > 0]
            t /= t.sum()
            continue
        v = np.clip(v, 0.0, None)
        t[:] = 0.0
        t[S] = v / v.sum()
        g = Q @ t - c
        level = float(np.mean(g[S]))
        out = [i for i in range(n) if i not in S]
        if not out:
            break
        j = min(out, key=lambda i: g[i])
        if g[j] >= level - 1e-13 * sc:
            break
        S.append(j)
    return t


def _refine_face(G, v, w):
    """Exact projection onto the affine hull of the support of ``w``.

    The ridge in :func:`simplex_qp` costs accuracy when generators are far
    apart (truncated cones); an unconstrained least-squares solve on the
    active face restores it whenever the weights stay feasible.
    """
    S = np.flatnonzero(w > 0)
    if S.size < 2:
        return w
    base = G[S[0]]
    D = (G[S[1:]] - base).T
    s, *_ = np.linalg.lstsq(D, v - base, rcond=None)
    t = np.concatenate([[1.0 - s.sum()], s])
    if np.any(t < -1e-12):
        return w
    t = np.clip(t, 0.0, None)
    t /= t.sum()
    out = np.zeros_like(w)
    out[S] = t
    if _lp_norm(out @ G - v, 2) <= _lp_norm(w @ G - v, 2):
        return out
    return w


class Polytope(SubdiffRepr):
    """Convex hull of finitely many dual vectors."""

    variant = "polytope"

    def __init__(self, generators, truncated: bool = False):
        G = np.atleast_2d(np.asarray(generators, dtype=float))
        if G.shape[0] == 0:
            raise ValueError("polytope needs at least one generator")
        self._G = np.unique(G, axis=0)
        self.truncated = truncated

    def generators(self):
        return self._G.copy()

    def nearest(self, v, q=2.0):
        v = np.asarray(v, dtype=float)
        G = self.generators()
        P = G - v
        w = _refine_face(G, v, simplex_qp(P @ P.T, np.zeros(len(G))))
        best = w @ G
        if q != 2.0 and G.shape[0] > 1:
            # l_q projection; start from the Euclidean one and keep the better
            def obj(t):
                return _lp_norm(t @ G - v, q)

            res = minimize(
                obj,
                w,
                method="SLSQP",
                bounds=[(0.0, 1.0)] * len(w),
                constraints=[{"type": "eq", "fun": lambda t: t.sum() - 1.0}],
                options={"ftol": 1e-15, "maxiter": 500},
            )
            t = np.clip(res.x, 0.0, None)
            t /= t.sum()
            if obj(t) < obj(w):
                best = t @ G
        return best

    def select(self):
        return self._G.mean(axis=0)

    def shifted(self, v):
        return Polytope(self._G + v, self.truncated)

    def scaled(self, c):
        return Polytope(c * self._G, self.truncated)

    def describe(self):
        return {
            "variant": self.variant,
            "truncated": self.truncated,
            "generators": self._G.tolist(),
        }


class Box(Polytope):
    """Coordinate box [lower, upper]; a polytope with implicit vertices."""

    variant = "polytope"

    def __init__(self, lower, upper, truncated: bool = False):
        self.lower = np.asarray(lower, dtype=float).copy()
        self.upper = np.asarray(upper, dtype=float).copy()
        if np.any(self.lower > self.upper):
            raise ValueError("box with lower > upper")
        self.truncated = truncated

    @property
    def free(self) -> np.ndarray:
        return self.lower < self.upper

    def generators(self):
        idx = np.flatnonzero(self.free)
        if 2 ** len(idx) > MAX_GENERATORS:
            raise ValueError(f"box has 2^{len(idx)} vertices; too many to list")
        out = []
        for signs in itertools.product((0, 1), repeat=len(idx)):
            v = self.lower.copy()
            for i, s in zip(idx, signs):
                if s:
                    v[i] = self.upper[i]
            out.append(v)
        return np.array(out)

    def nearest(self, v, q=2.0):
        # coordinatewise clipping is the l_q projection for every q
        return np.clip(np.asarray(v, dtype=float), self.lower, self.upper)

    def select(self):
        return 0.5 * (self.lower + self.upper)

    def shifted(self, v):
        return Box(self.lower + v, self.upper + v, self.truncated)

    def scaled(self, c):
        return Box(c * self.lower, c * self.upper, self.truncated)

    def describe(self):
        return {
            "variant": self.variant,
            "truncated": self.truncated,
            "box": {"lower": self.lower.tolist(), "upper": self.upper.tolist()},
        }


class MembershipOnly(SubdiffRepr):
    """No finite structure; callers must use a definitional membership test."""

    variant = "membership-only"

    def __init__(self, function, x, reason: str = ""):
        self.function = function
        self.x = np.asarray(x, dtype=float)
        self.reason = reason

    def nearest(self, v, q=2.0):
        raise NotImplementedError("membership-only subdifferential")

    def distance(self, v, q=2.0):
        raise NotImplementedError("membership-only subdifferential")

    def contains(self, v, tol=TOL.membership):
        from .convex import subdiff_membership_arrays

        return subdiff_membership_arrays(self.function, self.x, v).holds

    def select(self):
        raise NotImplementedError("membership-only subdifferential")

    def generators(self):
        raise NotImplementedError("membership-only subdifferential")

    def shifted(self, v):
        return self

    def scaled(self, c):
        return self

    def describe(self):
        return {"variant": self.variant, "reason": self.reason}


def _as_box(s: SubdiffRepr):
    if isinstance(s, Box):
        return s
    if isinstance(s, Singleton):
        return Box(s.point, s.point)
    return None


def minkowski_sum(a: SubdiffRepr, b: SubdiffRepr) -> SubdiffRepr:
    if a.empty or b.empty:
        return a if a.empty else b
    if isinstance(a, MembershipOnly) or isinstance(b, MembershipOnly):
        return a if isinstance(a, MembershipOnly) else b
    if isinstance(a, Singleton):
        return b.shifted(a.point)
    if isinstance(b, Singleton):
        return a.shifted(b.point)
    trunc = a.truncated or b.truncated
    ba, bb = _as_box(a), _as_box(b)
    if ba is not None and bb is not None:
        return Box(ba.lower + bb.lower, ba.upper + bb.upper, trunc)
    try:
        Ga, Gb = a.generators(), b.generators()
    except ValueError:
        return MembershipOnly(None, None, "Minkowski sum too large")
    if Ga.shape[0] * Gb.shape[0] > MAX_GENERATORS:
        return MembershipOnly(None, None, "Minkowski sum too large")
    G = (Ga[:, None, :] + Gb[None, :, :]).reshape(-1, Ga.shape[1])
    return Polytope(G, trunc)


def cartesian(blocks: list[SubdiffRepr]) -> SubdiffRepr:
    """Product set of per-block subdifferentials (concatenated coordinates)."""
    if any(b.empty for b in blocks):
        return Empty(sum(_block_dim(b) for b in blocks))
    if any(isinstance(b, MembershipOnly) for b in blocks):
        return MembershipOnly(None, None, "block without finite structure")
    if all(isinstance(b, Singleton) for b in blocks):
        return Singleton(np.concatenate([b.point for b in blocks]))
    boxes = [_as_box(b) for b in blocks]
    trunc = any(b.truncated for b in blocks)
    if all(b is not None for b in boxes):
        return Box(
            np.concatenate([b.lower for b in boxes]),
            np.concatenate([b.upper for b in boxes]),
            trunc,
        )
    gens = [b.generators() for b in blocks]
    total = int(np.prod([g.shape[0] for g in gens]))
    if total > MAX_GENERATORS:
        return MembershipOnly(None, None, "product of polytopes too large")
    rows = [np.concatenate(c) for c in itertools.product(*gens)]
    return Polytope(np.array(rows), trunc)


def _block_dim(b: SubdiffRepr) -> int:
    if isinstance(b, Empty):
        return b.dim
    if isinstance(b, Singleton):
        return b.point.size
    if isinstance(b, Box):
        return b.lower.size
    return b.generators().shape[1]
