import dataclasses
import math

import numpy as np
import pytest

from monolab.convex import (
    AbsSum,
    Affine,
    IndicatorBox,
    Quadratic,
    Sum,
    build_psi,
)
from monolab.ekeland import (
    evp_solve,
    evp_verify,
    solve_and_decompose,
    stationarity_decompose,
)
from monolab.errors import BudgetError, DecompositionError, DivergenceError, InputError
from monolab.space import Point, SpaceSpec

S1 = SpaceSpec(1, 2.0)


def test_half_square_example():
    f = Quadratic(S1)  # 1/2 x^2, infimum 0
    cert = evp_solve(f, 0.1, start=[1.0])
    x = cert.x_eps.coords[0]
    assert 0.5 * x * x <= 0.01 + 1e-9
    assert abs(x) <= math.sqrt(0.02) + 1e-9
    assert cert.inf_provenance == "closed-form"


@pytest.mark.parametrize("method", ["auto", "subgradient"])
def test_abs_example(method):
    cert = evp_solve(AbsSum(S1), 0.05, start=[1.0], method=method)
    assert cert.objective_value <= 0.0025 + 1e-9
    assert cert.perturbed_check.passed


def test_unbounded_below_diverges():
    with pytest.raises(DivergenceError):
        evp_solve(Affine(S1, [1.0], 0.0), 0.1, start=[0.0])


def test_bad_eps():
    with pytest.raises(InputError):
        evp_solve(Quadratic(S1), 0.0)


def test_budget_exhaustion_carries_best():
    # a declared infimum that cannot be reached forces every restart to fail
    with pytest.raises(BudgetError) as exc:
        evp_solve(Quadratic(S1), 0.1, start=[1.0], budget=2, inf_reference=-1.0)
    assert exc.value.best is not None


def test_verify_valid_certificate():
    f = Quadratic(SpaceSpec(3, 2.0), None, [1.0, -2.0, 0.5])
    cert = evp_solve(f, 0.1)
    extra = np.random.default_rng(0).uniform(-5, 5, size=(1000, 3))
    rep = evp_verify(cert, f, extra)
    assert rep.passed and rep.max_violation <= 1e-9
    assert rep.n_points >= 2000


def test_verify_tampered_certificate():
    f = Quadratic(S1)
    cert = evp_solve(f, 0.1, start=[1.0])
    bad = dataclasses.replace(cert, x_eps=Point(cert.x_eps.coords + 1.0, S1))
    rep = evp_verify(bad, f)
    assert not rep.passed and not rep.gap_ok
    # 1/2 x0^2 - 1/2 y^2 - 0.1 |y - x0| is largest at y = 0.1, next to 0
    assert abs(rep.witness[0]) <= 0.2


def test_constant_function():
    f = Affine(S1, [0.0], 3.0)
    for start in ([-4.0], [0.0], [7.5]):
        cert = evp_solve(f, 0.1, start=start)
        rep = evp_verify(cert, f)
        assert rep.passed and cert.gap_1a == 0.0


def test_certificate_invariants_on_psi():
    S2 = SpaceSpec(2, 3.0)
    f = Sum([IndicatorBox(S2, [-1.0, 0.0], [1.0, 2.0]), Affine(S2, [0.3, -0.2], 0.0)])
    psi = build_psi(f, [0.5, 0.5], [1.0, 1.0], 1.0)
    for eps in (0.1, 0.01):
        cert = evp_solve(psi, eps)
        assert -1e-12 <= cert.gap_1a <= eps**2 + 1e-9 * (1 + abs(cert.objective_value))
        assert cert.perturbed_check.max_violation <= 1e-9


def test_decompose_quadratic_at_minimizer():
    f = Quadratic(S1)
    _, cert, dec = solve_and_decompose(f, [0.0], [0.0], 1.0, 0.1)
    assert cert.x_eps.coords == pytest.approx([0.0], abs=1e-15)
    for v in (dec.xs_eps, dec.ys_eps, dec.us_eps):
        assert v.coords == pytest.approx([0.0], abs=1e-15)


def test_decompose_abs_projection():
    _, cert, dec = solve_and_decompose(AbsSum(S1), [0.0], [0.5], 1.0, 0.1)
    assert cert.x_eps.coords == pytest.approx([0.0], abs=1e-15)
    assert dec.ys_eps.coords == pytest.approx([0.0], abs=1e-15)
    assert dec.xs_eps.coords == pytest.approx([0.5], abs=1e-12)
    assert dec.us_eps.coords == pytest.approx([0.0], abs=1e-12)


def test_decompose_fails_for_inaccurate_point():
    f = Quadratic(S1)
    psi = build_psi(f, [0.0], [0.0], 1.0)
    cert = evp_solve(psi, 0.1)
    bad = dataclasses.replace(cert, x_eps=Point([1.0], S1))
    with pytest.raises(DecompositionError) as exc:
        stationarity_decompose(f, [0.0], [0.0], 1.0, bad)
    assert S1.dual_norm(exc.value.decomposition.us_eps.coords) == pytest.approx(1.0)


CASES = [
    (AbsSum(SpaceSpec(2, 2.0), [1.0, 0.5]), [0.3, -1.0], [2.0, 0.1], 1.0),
    (AbsSum(SpaceSpec(3, 3.0)), [1.0, 0.0, -2.0], [0.5, 1.5, 0.0], 2.0),
    (Quadratic(SpaceSpec(2, 1.5), [[2.0, 0.0], [0.0, 1.0]]), [1.0, 1.0], [0.0, 3.0], 0.5),
    (Sum([IndicatorBox(SpaceSpec(2, 4.0), [0, 0], [1, 1]), Affine(SpaceSpec(2, 4.0), [1, -1], 0)]),
     [2.0, 2.0], [0.0, 0.0], 1.0),
]


@pytest.mark.parametrize("f,z,zs,lam", CASES)
@pytest.mark.parametrize("method", ["auto", "subgradient"])
def test_decomposition_invariants_and_norm_chain(f, z, zs, lam, method):
    sp = f.space
    for eps in (0.1, 0.01):
        _, cert, dec = solve_and_decompose(f, z, zs, lam, eps, method=method)
        sc = 1 + sp.dual_norm(dec.ys_eps.coords) + lam * np.abs(zs).max()
        assert dec.residual <= 1e-8 * sc
        assert dec.us_norm <= 1 + 1e-12
        # xs_eps lies in df(x_eps), ys_eps = J(x_eps - z)
        assert f.subdiff_at(cert.x_eps.coords).contains(dec.xs_eps.coords)
        assert dec.ys_eps.coords == pytest.approx(sp.J(cert.x_eps.coords - np.asarray(z)), abs=1e-12)
        lhs = sp.dual_norm(lam * np.asarray(zs) - lam * dec.xs_eps.coords)
        assert lhs <= sp.primal_norm(cert.x_eps.coords - np.asarray(z)) + eps + 1e-8


@pytest.mark.parametrize("f,z,zs,lam", CASES)
def test_family_is_bounded(f, z, zs, lam):
    psi = build_psi(f, z, zs, lam)
    # Psi(x_eps) <= inf + eps^2 <= Psi(witness) + 1 for eps <= 1, and that
    # sublevel set has a radius computed from the coercivity data
    R = psi.sublevel_radius(psi.value(psi.witness) + 1.0)
    for eps in (1.0, 0.5, 0.1, 0.01):
        cert = evp_solve(psi, eps, method="subgradient")
        assert psi.space.primal_norm(cert.x_eps.coords - np.asarray(z)) <= R


def test_deterministic_given_seed():
    psi = build_psi(AbsSum(SpaceSpec(2, 3.0)), [0.5, -0.5], [1.0, 0.2], 1.0)
    a = evp_solve(psi, 0.05, seed=7, method="subgradient")
    b = evp_solve(psi, 0.05, seed=7, method="subgradient")
    assert np.array_equal(a.x_eps.coords, b.x_eps.coords)
    assert a.perturbed_check.max_violation == b.perturbed_check.max_violation
