"""Finite-dimensional l_p spaces, their duals and the product X x X*.

A :class:`SpaceSpec` fixes the dimension ``d`` and exponent ``p``; the dual
space carries the conjugate exponent ``q = p / (p - 1)``.  Primal and dual
vectors are both stored as plain coordinate arrays, wrapped in
:class:`Point` / :class:`DualPoint` so the side is never ambiguous at public
boundaries.  The array-level methods on :class:`SpaceSpec` are what the
solvers call in their inner loops.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import TOL
from .errors import InputError, UnsupportedNormError


def _lp_norm(v: np.ndarray, p: float) -> float:
    a = np.abs(v)
    m = a.max(initial=0.0)
    if m == 0.0 or not np.isfinite(m):
        return float(m)
    return float(m * np.sum((a / m) ** p) ** (1.0 / p))


def _lp_duality(v: np.ndarray, p: float) -> np.ndarray:
    # J is 1-homogeneous, so evaluate on the unit sphere and rescale; this
    # avoids overflow in ||v||^(2-p) for large p.
    s = _lp_norm(v, p)
    if s < TOL.zero_norm:
        return np.zeros_like(v, dtype=float)
    y = v / s
    return s * np.sign(y) * np.abs(y) ** (p - 1.0)


@dataclass(frozen=True)
class SpaceSpec:
    """R^dim with the l_p norm; the dual carries the l_q norm."""

    dim: int
    p: float = 2.0
    q: float = field(init=False)

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise InputError(f"dim must be a positive integer, got {self.dim!r}")
        p = float(self.p)
        if not (1.0 < p < np.inf):
            raise UnsupportedNormError(
                f"p must lie in the open interval (1, inf), got {self.p!r}; "
                "the duality map is set-valued at p in {1, inf}"
            )
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", p / (p - 1.0))

    @property
    def is_hilbert(self) -> bool:
        return self.p == 2.0

    # array-level primitives -------------------------------------------------

    def check(self, v, name="vector") -> np.ndarray:
        a = np.asarray(v, dtype=float)
        if a.ndim == 0:
            a = a.reshape(1)
        if a.shape != (self.dim,):
            raise InputError(
                f"{name} has shape {a.shape}, expected ({self.dim},)"
            )
        if not np.all(np.isfinite(a)):
            raise InputError(f"{name} has non-finite entries")
        return a

    def primal_norm(self, x) -> float:
        return _lp_norm(np.asarray(x, dtype=float), self.p)

    def dual_norm(self, xs) -> float:
        return _lp_norm(np.asarray(xs, dtype=float), self.q)

    def J(self, x) -> np.ndarray:
        """Duality map X -> X*: gradient of 1/2 ||.||_p^2."""
        return _lp_duality(np.asarray(x, dtype=float), self.p)

    def J_inv(self, xs) -> np.ndarray:
        """Inverse duality map X* -> X, i.e. the l_q duality map."""
        return _lp_duality(np.asarray(xs, dtype=float), self.q)

    # typed constructors -----------------------------------------------------

    def point(self, coords) -> "Point":
        return Point(coords, self)

    def dual_point(self, coords) -> "DualPoint":
        return DualPoint(coords, self)

    def zeros(self) -> "Point":
        return Point(np.zeros(self.dim), self)


class _Vector:
    __slots__ = ("coords", "space")
    side = "primal"

    def __init__(self, coords, space: SpaceSpec):
        a = space.check(coords, type(self).__name__).copy()
        a.setflags(write=False)
        object.__setattr__(self, "coords", a)
        object.__setattr__(self, "space", space)

    def __setattr__(self, name, value):
        raise AttributeError(f"{type(self).__name__} is immutable")

    def __array__(self, dtype=None, copy=None):
        return self.coords if dtype is None else self.coords.astype(dtype)

    def __len__(self):
        return self.space.dim

    def __eq__(self, other):
        return (
            type(self) is type(other)
            and self.space == other.space
            and np.array_equal(self.coords, other.coords)
        )

    def __hash__(self):
        return hash((type(self).__name__, self.space, self.coords.tobytes()))

    def __neg__(self):
        return type(self)(-self.coords, self.space)

    def __repr__(self):
        return f"{type(self).__name__}({self.coords.tolist()}, p={self.space.p:g})"


class Point(_Vector):
    """Element of X."""

    side = "primal"


class DualPoint(_Vector):
    """Element of X*."""

    side = "dual"


@dataclass(frozen=True)
class ProductPoint:
    """Element (x, x*) of X x X*."""

    primal: Point
    dual: DualPoint

    def __post_init__(self):
        if self.primal.space != self.dual.space:
            raise InputError("product components live in different spaces")

    @property
    def space(self) -> SpaceSpec:
        return self.primal.space

    def flat(self) -> np.ndarray:
        return np.concatenate([self.primal.coords, self.dual.coords])


def _same_space(a: _Vector, b: _Vector) -> SpaceSpec:
    if a.space != b.space:
        raise InputError(f"space mismatch: {a.space} vs {b.space}")
    return a.space


def pairing(x: Point, xs: DualPoint) -> float:
    """<x, x*> = sum_i x_i xs_i.  Argument order is not enforced."""
    _same_space(x, xs)
    return float(np.dot(x.coords, xs.coords))


def norm(v: Point | DualPoint, side: str | None = None) -> float:
    """l_p norm on the primal side, l_q norm on the dual side.

    ``side`` defaults to the side of ``v``; passing it explicitly lets a raw
    coordinate vector be measured with either norm.
    """
    side = side or v.side
    if side == "primal":
        return v.space.primal_norm(v.coords)
    if side == "dual":
        return v.space.dual_norm(v.coords)
    raise InputError(f"side must be 'primal' or 'dual', got {side!r}")


def product_norm(w: ProductPoint) -> float:
    return float(np.hypot(norm(w.primal), norm(w.dual)))


def duality_map(x: Point) -> DualPoint:
    """J(x)_i = ||x||_p^(2-p) |x_i|^(p-1) sign(x_i), with J(0) = 0."""
    return DualPoint(x.space.J(x.coords), x.space)


def duality_map_inverse(xs: DualPoint) -> Point:
    """The unique x with J(x) = xs."""
    return Point(xs.space.J_inv(xs.coords), xs.space)


def product_duality_map(w: ProductPoint) -> tuple[DualPoint, Point]:
    """(J(x), J^-1(x*)), paired against X x X* by <z, a*> + <a, z*>."""
    return duality_map(w.primal), duality_map_inverse(w.dual)
