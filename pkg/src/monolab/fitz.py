"""Monotone operators and their Fitzpatrick functions.

The Fitzpatrick function of a monotone operator A is

    H(x, x*) = <x, x*> - inf_{(u,u*) in A} <x - u, x* - u*>
             = sup_{(u,u*) in A} <u, x*> + <x, u*> - <u, u*>.

Product-space convention: a point of X x X* is stored flat as
``concat(x, x*)``.  A subgradient of H is a pair (a*, a) in X* x X acting
through ``<z, a*> + <a, z*>``; stored flat it is ``concat(a*, a)``, so the
swap is only a naming convention and plain dot products stay correct.
:func:`split_swapped` / :func:`join_swapped` are the one place where that
convention is translated.
"""

from __future__ import annotations

import csv
import itertools
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import TOL, scale
from .convex import Affine, ConvexFunction, MaxAffine, Quadratic, SamplePlan, Sum
from .errors import InputError, UnsupportedRepresentationError
from .space import DualPoint, Point, SpaceSpec
from .subdiff import MembershipOnly, Polytope, Singleton, SubdiffRepr

MAX_SCAN_POINTS = 2_000_000


# ---------------------------------------------------------------------------
# product-space adapter
# ---------------------------------------------------------------------------


def product_space(space: SpaceSpec) -> SpaceSpec:
    """Flat R^(2d) carrying (x, x*).  Euclidean, so only valid when p = 2."""
    return SpaceSpec(2 * space.dim, 2.0)


def join_point(x, xs) -> np.ndarray:
    return np.concatenate([np.asarray(x, float), np.asarray(xs, float)])


def split_point(w, d: int):
    w = np.asarray(w, float)
    return w[:d], w[d:]


def join_swapped(a_dual, a_primal) -> np.ndarray:
    """Flat coordinates of the subgradient (a*, a) in the swapped pairing."""
    return np.concatenate([np.asarray(a_dual, float), np.asarray(a_primal, float)])


def split_swapped(g, d: int):
    """Inverse of :func:`join_swapped`: returns (a*, a)."""
    g = np.asarray(g, float)
    return g[:d], g[d:]


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------


@dataclass
class OperatorGraph:
    """Finite set of pairs (u_i, u*_i), stored as two (n, d) arrays."""

    U: np.ndarray
    Us: np.ndarray
    space: SpaceSpec

    def __post_init__(self):
        self.U = np.atleast_2d(np.asarray(self.U, float))
        self.Us = np.atleast_2d(np.asarray(self.Us, float))
        d = self.space.dim
        if self.U.size == 0:
            raise InputError("operator graph must be nonempty")
        if self.U.shape != self.Us.shape or self.U.shape[1] != d:
            raise InputError(
                f"graph arrays have shapes {self.U.shape} and {self.Us.shape}, "
                f"expected (n, {d}) each"
            )
        if not (np.all(np.isfinite(self.U)) and np.all(np.isfinite(self.Us))):
            raise InputError("graph entries must be finite")

    @classmethod
    def from_pairs(cls, pairs, space: SpaceSpec) -> "OperatorGraph":
        U, Us = [], []
        for u, us in pairs:
            U.append(np.asarray(u.coords if isinstance(u, Point) else u, float).reshape(-1))
            Us.append(np.asarray(us.coords if isinstance(us, DualPoint) else us, float).reshape(-1))
        if not U:
            raise InputError("operator graph must be nonempty")
        return cls(np.array(U), np.array(Us), space)

    def __len__(self):
        return self.U.shape[0]

    @property
    def pairs(self):
        return [
            (Point(u, self.space), DualPoint(us, self.space)) for u, us in zip(self.U, self.Us)
        ]

    def to_csv(self, path) -> None:
        d = self.space.dim
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"u{i}" for i in range(d)] + [f"us{i}" for i in range(d)])
            for u, us in zip(self.U, self.Us):
                w.writerow([repr(float(v)) for v in np.concatenate([u, us])])

    @classmethod
    def from_csv(cls, path, space: SpaceSpec) -> "OperatorGraph":
        """One row per pair: d coordinates of u then d of u*; header optional."""
        d = space.dim
        rows = []
        with open(path, newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                row = [c.strip() for c in row if c.strip() != ""]
                if not row:
                    continue
                try:
                    vals = [float(c) for c in row]
                except ValueError:
                    if lineno == 1:
                        continue  # header
                    raise InputError(f"{path}:{lineno}: non-numeric entry")
                if len(vals) != 2 * d:
                    raise InputError(
                        f"{path}:{lineno}: row has {len(vals)} columns, "
                        f"expected {2 * d} (2 x dim) for a dim-{d} space"
                    )
                rows.append(vals)
        if not rows:
            raise InputError(f"{path}: no pairs")
        A = np.array(rows)
        return cls(A[:, :d], A[:, d:], space)


class OperatorRepr:
    variant = "abstract"
    maximal_flag = "unknown"

    def __init__(self, space: SpaceSpec):
        self.space = space

    def sample_graph(self, plan: SamplePlan, center=None) -> OperatorGraph:
        raise NotImplementedError

    def descriptor(self) -> dict:
        return {"kind": self.variant}


class FiniteGraph(OperatorRepr):
    variant = "finite_graph"

    def __init__(self, graph: OperatorGraph):
        super().__init__(graph.space)
        self.graph = graph

    def sample_graph(self, plan=None, center=None):
        return self.graph

    def descriptor(self):
        return {
            "kind": self.variant,
            "pairs": [[u.tolist(), us.tolist()] for u, us in zip(self.graph.U, self.graph.Us)],
        }


class PsdLinear(OperatorRepr):
    """A(x) = M x + c, M symmetric PSD; maximal monotone."""

    variant = "psd_matrix"
    maximal_flag = "asserted-maximal"

    def __init__(self, space: SpaceSpec, matrix, offset=None):
        super().__init__(space)
        M = np.atleast_2d(np.asarray(matrix, float))
        d = space.dim
        if M.shape != (d, d):
            raise InputError(f"matrix has shape {M.shape}, expected ({d}, {d})")
        sc = scale(M)
        if np.abs(M - M.T).max(initial=0.0) > TOL.floor * sc:
            raise InputError("matrix is not symmetric")
        M = 0.5 * (M + M.T)
        if np.linalg.eigvalsh(M).min() < -TOL.monotone * sc:
            raise InputError("matrix is not positive semidefinite")
        self.M = M
        self.c = np.zeros(d) if offset is None else space.check(offset, "offset")

    def apply(self, x):
        return self.M @ np.asarray(x, float) + self.c

    def sample_graph(self, plan: SamplePlan, center=None):
        center = np.zeros(self.space.dim) if center is None else np.asarray(center, float)
        U = plan.points(center)
        return OperatorGraph(U, U @ self.M + self.c, self.space)

    def as_function(self) -> ConvexFunction:
        """A = grad of 1/2 x^T M x + <c, x>."""
        q = Quadratic(self.space, self.M)
        if np.any(self.c):
            return Sum([q, Affine(self.space, self.c)])
        return q

    def descriptor(self):
        return {"kind": self.variant, "matrix": self.M.tolist(), "offset": self.c.tolist()}


class SubdiffOf(OperatorRepr):
    variant = "subdiff_of"
    maximal_flag = "asserted-maximal"

    def __init__(self, function: ConvexFunction):
        super().__init__(function.space)
        self.function = function

    def sample_graph(self, plan: SamplePlan, center=None):
        f = self.function
        center = f.witness if center is None else np.asarray(center, float)
        pts = [center, f.witness]
        for c in f.critical_points(center):
            pts.append(c)
        pts.extend(plan.points(center))
        U, Us = [], []
        for u in pts:
            if not math.isfinite(f.value(u)):
                continue
            s = f.subdiff_at(u)
            if s.empty or isinstance(s, MembershipOnly):
                continue
            try:
                gens = s.generators()
            except ValueError:
                gens = np.atleast_2d(s.select())
            for g in gens:
                U.append(u)
                Us.append(g)
        return OperatorGraph(np.array(U), np.array(Us), self.space)

    def descriptor(self):
        return {"kind": self.variant, "function": self.function.descriptor()}


# ---------------------------------------------------------------------------
# monotonicity
# ---------------------------------------------------------------------------


@dataclass
class MonotoneCheck:
    monotone: bool
    pair: tuple[int, int] | None  # worst violating pair
    value: float  # <u_i - u_j, u*_i - u*_j> at that pair (min over all pairs)
    n_pairs: int

    def as_dict(self):
        return {
            "monotone": self.monotone,
            "pair": None if self.pair is None else list(self.pair),
            "value": self.value,
            "n_pairs": self.n_pairs,
        }


def check_monotone(g: OperatorGraph) -> MonotoneCheck:
    """Exhaustive pairwise test of <u_i - u_j, u*_i - u*_j> >= 0."""
    P = g.U @ g.Us.T
    dg = np.diag(P)
    V = dg[:, None] + dg[None, :] - P - P.T
    ad = np.abs(dg)
    S = 1.0 + np.maximum(np.maximum(ad[:, None], ad[None, :]), np.maximum(np.abs(P), np.abs(P.T)))
    n = len(g)
    iu = np.triu_indices(n, k=1)
    if iu[0].size == 0:
        return MonotoneCheck(True, None, 0.0, 0)
    rel = V[iu] / S[iu]
    k = int(np.argmin(rel))
    i, j = int(iu[0][k]), int(iu[1][k])
    ok = bool(rel[k] >= -TOL.pairwise)
    return MonotoneCheck(ok, None if ok else (i, j), float(V[i, j]), int(iu[0].size))


@dataclass
class GapResult:
    value: float
    exact: bool  # False: inf over a sampled subgraph, an upper estimate
    witness: tuple | None
    n_pairs: int

    def as_dict(self):
        return {
            "value": self.value,
            "exact": self.exact,
            "one_sided": not self.exact,
            "witness": None if self.witness is None else [np.asarray(w).tolist() for w in self.witness],
            "n_pairs": self.n_pairs,
        }


def _gap_over(graph: OperatorGraph, z, zs):
    vals = np.einsum("ij,ij->i", z - graph.U, zs - graph.Us)
    k = int(np.argmin(vals))
    return float(vals[k]), (graph.U[k], graph.Us[k])


def monotone_gap(a: OperatorRepr, z, zs, plan: SamplePlan | None = None) -> GapResult:
    """inf over the graph of <z - u, z* - u*>.

    Exact for finite graphs; for the other variants the infimum runs over a
    seeded sampled subgraph and is flagged one-sided (it can only
    overestimate the true infimum).
    """
    z = np.asarray(z.coords if isinstance(z, Point) else z, float)
    zs = np.asarray(zs.coords if isinstance(zs, DualPoint) else zs, float)
    if isinstance(a, FiniteGraph):
        v, w = _gap_over(a.graph, z, zs)
        return GapResult(v, True, w, len(a.graph))
    graph = a.sample_graph(plan or SamplePlan(), center=z)
    v, w = _gap_over(graph, z, zs)
    return GapResult(v, False, w, len(graph))


# ---------------------------------------------------------------------------
# Fitzpatrick representations
# ---------------------------------------------------------------------------


class FitzpatrickRepr:
    variant = "abstract"
    one_sided = False

    def __init__(self, space: SpaceSpec):
        self.space = space

    def value(self, x, xs) -> float:
        raise NotImplementedError

    def subdiff_at(self, x, xs) -> SubdiffRepr:
        raise UnsupportedRepresentationError(f"{self.variant}: no subdifferential")

    def as_function(self) -> ConvexFunction:
        """H as a catalog function on the flat product space R^(2d)."""
        raise UnsupportedRepresentationError(f"{self.variant}: not a catalog function")

    def describe(self):
        return {"variant": self.variant, "one_sided": self.one_sided}


class MaxAffineFitz(FitzpatrickRepr):
    """Exact H of a finite graph: max of the affine pieces indexed by pairs."""

    variant = "max_affine"

    def __init__(self, graph: OperatorGraph):
        super().__init__(graph.space)
        self.U, self.Us = graph.U, graph.Us
        self.c = np.einsum("ij,ij->i", self.U, self.Us)

    def pieces(self, x, xs):
        return self.U @ xs + self.Us @ x - self.c

    def value(self, x, xs):
        return float(self.pieces(np.asarray(x, float), np.asarray(xs, float)).max())

    def values(self, X, XS):
        """Vectorized H over rows of X, XS."""
        return (XS @ self.U.T + X @ self.Us.T - self.c).max(axis=1)

    def subdiff_at(self, x, xs):
        v = self.pieces(np.asarray(x, float), np.asarray(xs, float))
        tau = TOL.tie * scale(v)
        idx = np.flatnonzero(v >= v.max() - tau)
        gens = np.hstack([self.Us[idx], self.U[idx]])  # (u*, u) swapped
        return Singleton(gens[0]) if len(idx) == 1 else Polytope(gens)

    def as_function(self):
        S = product_space(self.space) if self.space.is_hilbert else SpaceSpec(2 * self.space.dim, self.space.p)
        return MaxAffine(S, np.hstack([self.Us, self.U]), -self.c)


class GridSupFitz(MaxAffineFitz):
    """Sup over a sampled subgraph: a lower bound for the true H."""

    variant = "grid_sup"
    one_sided = True

    def subdiff_at(self, x, xs):
        raise UnsupportedRepresentationError("grid_sup: subdifferential unsupported")

    def as_function(self):
        raise UnsupportedRepresentationError("grid_sup: one-sided approximation only")


class ClosedQuadraticFitz(FitzpatrickRepr):
    """H for A(x) = M x + c with M positive definite:

        H(x, x*) = 1/4 v^T M^-1 v + <x, c>,   v = x* + M x - c.
    """

    variant = "closed_quadratic"

    def __init__(self, space: SpaceSpec, M, c=None):
        super().__init__(space)
        self.M = np.asarray(M, float)
        self.c = np.zeros(space.dim) if c is None else np.asarray(c, float)
        self.Minv = np.linalg.inv(self.M)

    def _v(self, x, xs):
        return np.asarray(xs, float) + self.M @ np.asarray(x, float) - self.c

    def value(self, x, xs):
        v = self._v(x, xs)
        return float(0.25 * v @ self.Minv @ v + np.asarray(x, float) @ self.c)

    def gradient(self, x, xs):
        """(dH/dx, dH/dx*) = (1/2 v + c, 1/2 M^-1 v), returned as (a*, a)."""
        v = self._v(x, xs)
        return 0.5 * v + self.c, 0.5 * self.Minv @ v

    def subdiff_at(self, x, xs):
        a_dual, a_primal = self.gradient(x, xs)
        return Singleton(join_swapped(a_dual, a_primal))

    def as_function(self):
        d = self.space.dim
        S = product_space(self.space) if self.space.is_hilbert else SpaceSpec(2 * d, self.space.p)
        B = np.hstack([self.M, np.eye(d)])  # v = B w - c
        Q = 0.5 * B.T @ self.Minv @ B
        Q = 0.5 * (Q + Q.T)
        slope = -0.5 * B.T @ self.Minv @ self.c + np.concatenate([self.c, np.zeros(d)])
        icpt = 0.25 * self.c @ self.Minv @ self.c
        return Sum([Quadratic(S, Q), Affine(S, slope, icpt)])

    def describe(self):
        return {"variant": self.variant, "one_sided": False, "matrix": self.M.tolist(), "offset": self.c.tolist()}


def fitzpatrick_build(a: OperatorRepr, plan: SamplePlan | None = None) -> FitzpatrickRepr:
    """Exact for finite graphs and positive definite linear operators.

    A singular PSD matrix, or a subdifferential operator, gets the one-sided
    grid-sup approximation over ``plan`` (default: 1000 seeded points).
    """
    if isinstance(a, FiniteGraph):
        return MaxAffineFitz(a.graph)
    if isinstance(a, PsdLinear):
        lam_min = np.linalg.eigvalsh(a.M).min()
        if lam_min > TOL.floor * scale(a.M):
            return ClosedQuadraticFitz(a.space, a.M, a.c)
        warnings.warn("singular PSD matrix: falling back to one-sided grid sup", stacklevel=2)
    graph = a.sample_graph(plan or SamplePlan())
    return GridSupFitz(graph)


def fitzpatrick_eval(h: FitzpatrickRepr, x, xs) -> float:
    x = np.asarray(x.coords if isinstance(x, Point) else x, float)
    xs = np.asarray(xs.coords if isinstance(xs, DualPoint) else xs, float)
    return h.value(x, xs)


def fitzpatrick_subdiff(h: FitzpatrickRepr, x, xs) -> SubdiffRepr:
    """Subdifferential of H in flat swapped coordinates concat(a*, a)."""
    x = np.asarray(x.coords if isinstance(x, Point) else x, float)
    xs = np.asarray(xs.coords if isinstance(xs, DualPoint) else xs, float)
    return h.subdiff_at(x, xs)


# ---------------------------------------------------------------------------
# theorem check
# ---------------------------------------------------------------------------


@dataclass
class PointVerdict:
    x: np.ndarray
    xs: np.ndarray
    H: float
    pairing: float
    a: bool | None
    b: bool | None
    c: bool | None
    d: bool | None
    certified_outside: bool = False
    witness: tuple | None = None

    @property
    def agree(self) -> bool:
        vals = [v for v in (self.a, self.b, self.c, self.d) if v is not None]
        return len(set(vals)) <= 1

    def as_dict(self):
        return {
            "x": self.x.tolist(),
            "xs": self.xs.tolist(),
            "H": self.H,
            "pairing": self.pairing,
            "excess": self.H - self.pairing,
            "a": self.a,
            "b": self.b,
            "c": self.c,
            "d": self.d,
            "agree": self.agree,
            "certified_outside": self.certified_outside,
        }


@dataclass
class TheoremReport:
    representation: str
    one_sided: bool
    definitional_only: bool
    rows: list = field(default_factory=list)

    @property
    def min_excess(self) -> float:
        return min((r.H - r.pairing) for r in self.rows) if self.rows else math.nan

    @property
    def disagreements(self) -> list[int]:
        return [i for i, r in enumerate(self.rows) if not r.agree]

    @property
    def passed(self) -> bool:
        lower_ok = all(
            r.H - r.pairing >= -TOL.fitzpatrick * scale(r.H, r.pairing) for r in self.rows
        ) or self.definitional_only or self.one_sided
        return lower_ok and not self.disagreements

    def as_dict(self):
        return {
            "representation": self.representation,
            "one_sided": self.one_sided,
            "definitional_only": self.definitional_only,
            "min_excess": self.min_excess,
            "disagreements": self.disagreements,
            "passed": self.passed,
            "rows": [r.as_dict() for r in self.rows],
        }


def _quadratic_condition_c(h: ClosedQuadraticFitz, x, xs, tol):
    # gradient map (u,u*) -> (1/2 v + c, 1/2 M^-1 v) with v = u* + M u - c;
    # solvable for target (x*, x) iff both slots give the same v
    v1 = 2.0 * (xs - h.c)
    v2 = 2.0 * h.M @ x
    if np.abs(v1 - v2).max() > tol * scale(v1, v2):
        return False, None
    u = x.copy()
    us = v1 - h.M @ u + h.c
    return bool((u - x) @ (us - xs) >= -tol * scale(us, xs)), (u, us)


def fitzpatrick_theorem_check(a: OperatorRepr, points, plan: SamplePlan | None = None) -> TheoremReport:
    """Evaluate conditions (a)-(d) of the Fitzpatrick characterization per point.

    (a) (x, x*) in A; (b) H = <x, x*>; (c) some (u, u*) has
    (x*, x) in dH(u, u*) with <u - x, u* - x*> >= 0; (d) (x*, x) in dH(x, x*).
    """
    h = fitzpatrick_build(a, plan)
    tol = TOL.fitzpatrick
    finite = isinstance(a, FiniteGraph)
    report = TheoremReport(h.variant, h.one_sided, finite)
    for x, xs in points:
        x = np.asarray(x.coords if isinstance(x, Point) else x, float)
        xs = np.asarray(xs.coords if isinstance(xs, DualPoint) else xs, float)
        H = h.value(x, xs)
        pr = float(x @ xs)
        sc = scale(H, pr)
        if h.one_sided:
            report.rows.append(
                PointVerdict(x, xs, H, pr, None, None, None, None,
                             certified_outside=H > pr + tol * sc)
            )
            continue
        b = abs(H - pr) <= tol * sc
        target = join_swapped(xs, x)
        d = h.subdiff_at(x, xs).contains(target, tol)
        if isinstance(a, PsdLinear):
            a_ok = bool(np.abs(xs - a.apply(x)).max() <= tol * scale(xs, a.apply(x)))
            c, wit = _quadratic_condition_c(h, x, xs, tol)
        else:
            g = a.graph
            hit = np.all(np.isclose(g.U, x, rtol=0, atol=tol * scale(x)), axis=1) & np.all(
                np.isclose(g.Us, xs, rtol=0, atol=tol * scale(xs)), axis=1
            )
            a_ok = bool(hit.any())
            c, wit = False, None
            cands = [(x, xs)] + list(zip(g.U, g.Us))
            for u, us in cands:
                if h.subdiff_at(u, us).contains(target, tol) and (u - x) @ (us - xs) >= -tol * scale(u, us, x, xs):
                    c, wit = True, (u, us)
                    break
        report.rows.append(PointVerdict(x, xs, H, pr, a_ok, bool(b), bool(c), bool(d), False, wit))
    return report


# ---------------------------------------------------------------------------
# extension scan
# ---------------------------------------------------------------------------


@dataclass
class ExtensionCandidate:
    x: np.ndarray
    xs: np.ndarray
    gap: float

    def as_dict(self):
        return {"x": self.x.tolist(), "xs": self.xs.tolist(), "gap": self.gap}


def extension_scan(g: OperatorGraph, lower, upper, resolution: int, tol: float = TOL.tie):
    """Grid points of a box in X x X* that are monotonically related to ``g``.

    ``lower``/``upper`` bound the flat product coordinates (x then x*).  A
    returned point has gap = <x, x*> - H(x, x*) > tol, i.e. it could be added
    to the graph without breaking monotonicity, so ``g`` is not maximal.
    """
    if len(g) == 0:
        raise InputError("empty graph")
    d = g.space.dim
    lower = np.broadcast_to(np.asarray(lower, float), (2 * d,))
    upper = np.broadcast_to(np.asarray(upper, float), (2 * d,))
    if resolution < 2:
        raise InputError("resolution must be >= 2")
    total = resolution ** (2 * d)
    if total > MAX_SCAN_POINTS:
        raise InputError(f"scan would visit {total} points; lower the resolution")
    axes = [np.linspace(lo, hi, resolution) for lo, hi in zip(lower, upper)]
    W = np.array(list(itertools.product(*axes)))
    X, XS = W[:, :d], W[:, d:]
    h = MaxAffineFitz(g)
    out = []
    for start in range(0, len(W), 65536):
        sl = slice(start, start + 65536)
        Hv = h.values(X[sl], XS[sl])
        pr = np.einsum("ij,ij->i", X[sl], XS[sl])
        gap = pr - Hv
        sc = 1.0 + np.maximum(np.abs(pr), np.abs(Hv))
        for k in np.flatnonzero(gap > tol * sc):
            i = start + k
            out.append(ExtensionCandidate(X[i].copy(), XS[i].copy(), float(gap[k])))
    return out
