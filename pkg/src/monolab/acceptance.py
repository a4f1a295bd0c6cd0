"""Acceptance criteria, shared by ``monolab selftest`` and the test suite.

Each ``criterion_*`` function runs one criterion with independent oracles
(finite differences, brute-force loops, linear solves, soft-thresholding)
and returns a :class:`Criterion` with the worst measured quantity.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .convex import (
    AbsSum,
    Affine,
    IndicatorBall,
    IndicatorBox,
    MaxAffine,
    PNormSquaredHalf,
    Quadratic,
    Scaled,
    Sum,
    build_integral_functional,
    build_psi,
)
from .ekeland import evp_solve, stationarity_decompose
from .fitz import (
    FiniteGraph,
    OperatorGraph,
    PsdLinear,
    extension_scan,
    fitzpatrick_build,
    fitzpatrick_subdiff,
    join_swapped,
    monotone_gap,
)
from .resolvent import maximality_extension_test, minty_probe, rockafellar_solve, solve_regularized
from .space import SpaceSpec, duality_map


@dataclass
class Criterion:
    number: int
    name: str
    passed: bool
    measured: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        parts = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items())
        return f"{status} [{self.number}] {self.name}: {parts} ({self.seconds:.2f}s)"

    def as_dict(self):
        return {
            "number": self.number,
            "name": self.name,
            "passed": self.passed,
            "measured": self.measured,
            "seconds": self.seconds,
        }


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.3g}"
    return str(v)


def _norm_p(v, p):
    return float(np.sum(np.abs(v) ** p) ** (1.0 / p))


# ---------------------------------------------------------------------------


def criterion_duality(seed: int = 0, count: int = 1000) -> Criterion:
    rng = np.random.default_rng(seed)
    worst_pair = worst_norm = worst_fd = 0.0
    for d in (1, 2, 5, 20):
        for p in (1.5, 2.0, 3.0, 4.0):
            S = SpaceSpec(d, p)
            X = rng.standard_normal((count, d)) * 10.0 ** rng.uniform(-3, 3, (count, 1))
            for x in X:
                jx = duality_map(S.point(x)).coords
                nx = _norm_p(x, p)
                worst_pair = max(worst_pair, abs(x @ jx - nx**2) / (1 + nx**2))
                worst_norm = max(worst_norm, abs(_norm_p(jx, S.q) - nx) / (1 + nx))
                # central differences of 1/2 ||.||_p^2
                # small step: for p < 2 the second derivative blows up near
                # zero coordinates, which a coarse step would smear out
                h = 1e-7 * nx if nx > 0 else 1e-7
                E = np.eye(d) * h
                fd = np.array(
                    [(_norm_p(x + e, p) ** 2 - _norm_p(x - e, p) ** 2) / (4 * h) for e in E]
                )
                worst_fd = max(worst_fd, float(np.abs(fd - jx).max()) / (1 + nx))
    ok = worst_pair <= 1e-9 and worst_norm <= 1e-9 and worst_fd <= 1e-6
    return Criterion(1, "duality map identity", ok,
                     {"pairing": worst_pair, "dual_norm": worst_norm, "finite_diff": worst_fd})


def catalog(d: int = 3, p: float = 2.0, seed: int = 0):
    """One instance of every catalog kind, for property checks."""
    rng = np.random.default_rng(seed)
    S = SpaceSpec(d, p)
    B = rng.standard_normal((d, d))
    box = IndicatorBox(S, -np.ones(d), 2 * np.ones(d))
    return {
        "quadratic": Quadratic(S, B @ B.T, rng.standard_normal(d)),
        "pnorm_squared_half": PNormSquaredHalf(S, rng.standard_normal(d)),
        "abs_sum": AbsSum(S, rng.uniform(0.5, 2, d)),
        "max_affine": MaxAffine(S, rng.standard_normal((5, d)), rng.standard_normal(5)),
        "indicator_box": box,
        "indicator_ball": IndicatorBall(S, 1.5),
        "affine": Affine(S, rng.standard_normal(d), 0.3),
        "scaled": Scaled(2.5, AbsSum(S)),
        "sum": Sum([AbsSum(S), box, Affine(S, rng.standard_normal(d))]),
        "integral": build_integral_functional(AbsSum(SpaceSpec(1, p)), d, 1.0),
    }


def _domain_sample(f, rng, n):
    """Random points in Dom f; about a third are pushed onto its boundary."""
    d = f.space.dim
    X = rng.standard_normal((n, d)) * 2.0
    X[rng.random((n, d)) < 0.2] = 0.0  # kinks of |.|
    out = []
    for x in X:
        if not math.isfinite(f.value(x)):
            for t in ([f] if not hasattr(f, "terms") else f.terms):
                if t.kind in ("indicator_box", "indicator_ball"):
                    x = t.prox(x, 1.0) if t.prox(x, 1.0) is not None else x
        if not math.isfinite(f.value(x)) and f.kind == "indicator_ball":
            x = x / f.space.primal_norm(x) * f.radius
        if math.isfinite(f.value(x)):
            out.append(x)
    return out


def criterion_monotonicity(seed: int = 0, count: int = 1000) -> Criterion:
    rng = np.random.default_rng(seed)
    worst, worst_kind = math.inf, None
    for p in (2.0, 3.0):
        for kind, f in catalog(3, p, seed).items():
            pts = _domain_sample(f, rng, 2 * count)
            sub = []
            for x in pts:
                s = f.subdiff_at(x)
                G = s.generators()
                sub.append((x, G[rng.integers(len(G))]))
            for k in range(count):
                (x, a), (y, b) = sub[k % len(sub)], sub[(k * 7 + 1) % len(sub)]
                v = (x - y) @ (a - b)
                rel = v / (1 + max(abs(x @ a), abs(y @ b), abs(x @ b), abs(y @ a)))
                if rel < worst:
                    worst, worst_kind = rel, kind
    return Criterion(2, "subdifferential monotonicity", worst >= -1e-10,
                     {"min_scaled_pairing": worst, "at": worst_kind})


def _psi_cases(seed):
    rng = np.random.default_rng(seed)
    S = SpaceSpec(3, 2.0)
    B = rng.standard_normal((3, 3))
    box = IndicatorBox(S, -np.ones(3), np.ones(3))
    fs = {
        "quadratic": Quadratic(S, B @ B.T),
        "abs_sum": AbsSum(S),
        "box+affine": Sum([box, Affine(S, rng.standard_normal(3))]),
    }
    for name, f in fs.items():
        for _ in range(2):
            yield name, f, rng.standard_normal(3), 2 * rng.standard_normal(3), float(rng.choice([0.5, 1, 2]))


def criterion_ekeland(seed: int = 0) -> Criterion:
    worst_gap = worst_viol = worst_res = worst_u = -math.inf
    failures = 0
    for name, f, z, zs, lam in _psi_cases(seed):
        psi = build_psi(f, z, zs, lam)
        inf = psi.value(psi.minimizer())  # closed-form infimum
        for eps in (0.1, 0.01):
            for method, start in (("auto", None), ("subgradient", z + 1.0)):
                try:
                    cert = evp_solve(psi, eps, start=start, method=method, seed=seed,
                                     sample_count=1000)
                    dec = stationarity_decompose(f, z, zs, lam, cert)
                except Exception:
                    failures += 1
                    continue
                worst_gap = max(worst_gap, psi.value(cert.x_eps.coords) - inf - eps**2)
                worst_viol = max(worst_viol, cert.perturbed_check.max_violation)
                worst_res = max(worst_res, dec.residual)
                worst_u = max(worst_u, dec.us_norm)
    ok = (failures == 0 and worst_gap <= 1e-9 and worst_viol <= 1e-9
          and worst_res <= 1e-8 and worst_u <= 1 + 1e-12)
    return Criterion(3, "ekeland certificates", ok, {
        "gap_minus_eps2": worst_gap, "max_violation": worst_viol,
        "decomp_residual": worst_res, "max_us_norm": worst_u, "failures": failures,
    })


def criterion_distance_bounds(seed: int = 0) -> Criterion:
    S = SpaceSpec(1, 2.0)
    cases = [
        (PNormSquaredHalf(S), 1.0, 1.0),
        (PNormSquaredHalf(S), -0.4, -0.4),
        (AbsSum(S), 0.0, 0.3),
        (AbsSum(S), 1.5, 1.0),
    ]
    worst_x = worst_xs = -math.inf
    ok = True
    cells = 0
    for f, z, zs in cases:
        for lam in (0.5, 1.0, 2.0):
            for method, start in (("auto", None), ("subgradient", [z + 3.0])):
                r = maximality_extension_test(
                    f, lam, [z], [zs], (1e-1, 1e-2, 1e-3), seed=seed,
                    method=method, start=start,
                )
                ok = ok and r.related and r.bounds_ok
                for eps, (dx, dxs) in zip(r.eps_schedule, r.distances):
                    cells += 1
                    worst_x = max(worst_x, dx - eps)
                    worst_xs = max(worst_xs, dxs - 2 * eps / lam)
    ok = ok and worst_x <= 1e-6 and worst_xs <= 1e-6
    return Criterion(4, "eps-minimizer distance bounds", ok,
                     {"max_dx_minus_eps": worst_x, "max_dxs_minus_bound": worst_xs, "cells": cells})


def criterion_surjectivity(seed: int = 0, count: int = 100) -> Criterion:
    rng = np.random.default_rng(seed)
    d = 3
    B = rng.standard_normal((d, d))
    M = B @ B.T
    worst_res, worst_lin, worst_soft = 0.0, 0.0, 0.0
    for p in (1.5, 2.0, 3.0, 4.0):
        S = SpaceSpec(d, p)
        for phi in ("quadratic", "abs"):
            f = Quadratic(S, M) if phi == "quadratic" else AbsSum(S)
            for lam in (0.5, 1.0, 2.0):
                for _ in range(count):
                    zs = 3.0 * rng.standard_normal(d)
                    sol = solve_regularized(f, lam, np.zeros(d), zs)
                    worst_res = max(worst_res, sol.residual)
                    if p != 2.0:
                        continue
                    x = sol.x.coords
                    if phi == "quadratic":
                        ref = np.linalg.solve(np.eye(d) + lam * M, lam * zs)
                        worst_lin = max(worst_lin, np.linalg.norm(x - ref) / max(np.linalg.norm(ref), 1e-300))
                    else:
                        w = lam * zs
                        ref = np.sign(w) * np.maximum(np.abs(w) - lam, 0.0)
                        worst_soft = max(worst_soft, float(np.abs(x - ref).max()))
    ok = worst_res <= 1e-6 and worst_lin <= 1e-8 and worst_soft <= 1e-10
    return Criterion(5, "regularized surjectivity", ok,
                     {"max_residual": worst_res, "linear_rel_err": worst_lin, "soft_threshold_err": worst_soft})


def criterion_fitzpatrick(seed: int = 0) -> Criterion:
    rng = np.random.default_rng(seed)
    m = {}
    # (i) finite graph: brute force and the gap identity
    brute = ident = onG = 0.0
    for d in (1, 2, 4):
        S = SpaceSpec(d, 2.0)
        B = rng.standard_normal((d, d))
        U = rng.standard_normal((12, d))
        g = OperatorGraph(U, U @ (B @ B.T) + rng.standard_normal(d), S)  # monotone
        h = fitzpatrick_build(FiniteGraph(g))
        for _ in range(200):
            x, xs = 3 * rng.standard_normal(d), 3 * rng.standard_normal(d)
            H = h.value(x, xs)
            best = -math.inf
            for u, us in zip(g.U, g.Us):
                val = 0.0
                for i in range(d):
                    val += u[i] * xs[i] + x[i] * us[i] - u[i] * us[i]
                best = max(best, val)
            sc = 1 + abs(H) + abs(best)
            brute = max(brute, abs(H - best) / sc)
            gap = monotone_gap(FiniteGraph(g), x, xs).value
            ident = max(ident, abs(H - (x @ xs - gap)) / (1 + abs(H) + abs(x @ xs)))
        # (ii) on-graph equality
        for u, us in zip(g.U, g.Us):
            onG = max(onG, abs(h.value(u, us) - u @ us) / (1 + abs(u @ us)))
    m.update(brute_force=brute, gap_identity=ident, on_graph=onG)
    # (iii) lower bound, (iv) identity operator, (v) gradient on the graph
    low, ident_op, grad = math.inf, 0.0, 0.0
    for d in (1, 2, 5):
        S = SpaceSpec(d, 2.0)
        B = rng.standard_normal((d, d))
        M = B @ B.T + 0.1 * np.eye(d)
        h = fitzpatrick_build(PsdLinear(S, M))
        W = 5 * rng.standard_normal((10_000 // 3 + 1, 2 * d))
        for w in W:
            x, xs = w[:d], w[d:]
            H = h.value(x, xs)
            low = min(low, (H - x @ xs) / (1 + abs(H) + abs(x @ xs)))
        hI = fitzpatrick_build(PsdLinear(S, np.eye(d)))
        for w in W[:1000]:
            x, xs = w[:d], w[d:]
            ref = 0.25 * np.sum((x + xs) ** 2)
            ident_op = max(ident_op, abs(hI.value(x, xs) - ref) / (1 + ref))
        for _ in range(100):
            x = 3 * rng.standard_normal(d)
            sd = fitzpatrick_subdiff(h, x, M @ x)
            grad = max(grad, float(np.abs(sd.select() - join_swapped(M @ x, x)).max()) / (1 + np.abs(M @ x).max() + np.abs(x).max()))
    m.update(lower_bound=low, identity_operator=ident_op, on_graph_gradient=grad)
    # the brute-force loop sums in another order, so 'exact' means rounding level
    ok = (brute <= 1e-14 and ident <= 1e-12 and onG <= 1e-12 and low >= -1e-10
          and ident_op <= 1e-10 and grad <= 1e-10)
    return Criterion(6, "fitzpatrick identities", ok, m)


def criterion_rockafellar(seed: int = 0) -> Criterion:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(20):
        d = 1 + k % 10
        S = SpaceSpec(d, 2.0)
        B = rng.standard_normal((d, d))
        M = B @ B.T
        A = PsdLinear(S, M)
        for lam in (0.5, 1.0, 2.0):
            zs = 2 * rng.standard_normal(d)
            sol = rockafellar_solve(A, lam, zs)
            ref = np.linalg.solve(np.eye(d) + lam * M, zs)
            worst = max(worst, float(np.abs(sol.x.coords - ref).max()))
    return Criterion(7, "rockafellar product route", worst <= 1e-6, {"max_abs_err": worst})


def criterion_non_maximal() -> Criterion:
    S = SpaceSpec(1, 2.0)
    g = OperatorGraph([[0.0], [1.0]], [[0.0], [1.0]], S)
    cands = extension_scan(g, [-2, -2], [2, 2], 5)
    at22 = [c.gap for c in cands if c.x[0] == 2 and c.xs[0] == 2]
    single = FiniteGraph(OperatorGraph([[0.0]], [[0.0]], S))
    r = minty_probe(single, 1.0, [[5.0]]).max_residual
    ok = bool(at22) and at22[0] >= 1 - 1e-9 and r >= 4 - 1e-9
    return Criterion(8, "non-maximality detection", ok,
                     {"gap_at_2_2": at22[0] if at22 else None, "minty_residual": r})


def criterion_trapezoid() -> Criterion:
    S = SpaceSpec(1, 2.0)
    phi = Quadratic(S, [[2.0]])  # phi(x) = x^2
    errs = []
    for N in (100, 200):
        F = build_integral_functional(phi, N, 1.0)
        errs.append(abs(F.value(F.times) - 1.0 / 3.0))
    ratio = errs[0] / errs[1]
    return Criterion(9, "trapezoid order", 3.5 <= ratio <= 4.5,
                     {"err_100": errs[0], "err_200": errs[1], "ratio": ratio})


CRITERIA = [
    criterion_duality,
    criterion_monotonicity,
    criterion_ekeland,
    criterion_distance_bounds,
    criterion_surjectivity,
    criterion_fitzpatrick,
    criterion_rockafellar,
    criterion_non_maximal,
    criterion_trapezoid,
]


def run_criterion(fn, seed: int = 0) -> Criterion:
    """Run one criterion function and record its wall time."""
    t = time.perf_counter()
    c = fn(seed) if "seed" in fn.__code__.co_varnames else fn()
    c.seconds = time.perf_counter() - t
    return c


def run_all(seed: int = 0) -> list[Criterion]:
    return [run_criterion(fn, seed) for fn in CRITERIA]
