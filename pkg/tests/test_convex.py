import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from monolab.acceptance import catalog
from monolab.convex import (
    AbsSum,
    Affine,
    IndicatorBall,
    IndicatorBox,
    MaxAffine,
    PNormSquaredHalf,
    Quadratic,
    SamplePlan,
    Scaled,
    Sum,
    build_integral_functional,
    build_psi,
    combine_sum,
    eval as f_eval,
    spot_check_convexity,
    subdiff,
    subdiff_membership,
)
from monolab.errors import InputError
from monolab.space import DualPoint, Point, SpaceSpec
from monolab.subdiff import Empty, Polytope, Singleton

S1 = SpaceSpec(1, 2.0)
S2 = SpaceSpec(2, 2.0)


# --- eval ------------------------------------------------------------------


def test_eval_examples():
    assert f_eval(IndicatorBox(S1, [0], [1]), Point([2], S1)) == math.inf
    assert f_eval(PNormSquaredHalf(S2), Point([3, 4], S2)) == pytest.approx(12.5)
    assert f_eval(Quadratic(S2), [3, 4]) == pytest.approx(12.5)


def test_integral_of_t_squared():
    F = build_integral_functional(Quadratic(S1, [[2.0]]), 1000, 1.0)
    assert abs(F.value(F.times) - 1 / 3) <= 1e-5


def test_integral_constant_path_exact():
    F = build_integral_functional(Quadratic(S1, [[2.0]]), 37, 1.0)
    assert F.value(np.full(37, 1.7)) == pytest.approx(1.7**2, abs=1e-14)


def test_integral_indicator_node_outside():
    F = build_integral_functional(IndicatorBox(S1, [0], [1]), 5, 1.0)
    x = np.array([0.5, 0.5, 2.0, 0.5, 0.5])
    assert F.value(x) == math.inf


def test_integral_order():
    phi = Quadratic(S1, [[2.0]])
    e = [abs(build_integral_functional(phi, N, 1.0).value(np.linspace(0, 1, N)) - 1 / 3)
         for N in (100, 200)]
    assert 3.5 <= e[0] / e[1] <= 4.5


def test_integral_bad_grid():
    with pytest.raises(InputError):
        build_integral_functional(AbsSum(S1), 1, 1.0)
    with pytest.raises(InputError):
        build_integral_functional(AbsSum(S1), 10, 0.0)


# --- subdifferentials ------------------------------------------------------


def test_abs_kink_is_interval():
    s = subdiff(AbsSum(S1), Point([0], S1))
    assert isinstance(s, Polytope)
    assert sorted(s.generators().ravel()) == [-1, 1]


def test_quadratic_gradient():
    x = np.array([0.3, -2.0])
    s = subdiff(PNormSquaredHalf(S2), x)
    assert isinstance(s, Singleton) and np.allclose(s.point, x)


def test_max_affine_tie():
    f = MaxAffine(S2, [[1, 0], [0, 1]])
    s = subdiff(f, [1, 1])
    G = sorted(map(tuple, s.generators()))
    assert G == [(0.0, 1.0), (1.0, 0.0)]
    rng = np.random.default_rng(0)
    ys = rng.uniform(-5, 5, (1000, 2))
    for t in rng.random(10):
        g = t * np.array([1, 0]) + (1 - t) * np.array([0, 1])
        assert all((y - 1) @ g + 1 <= f.value(y) + 1e-12 for y in ys)


def test_subdiff_outside_domain_is_empty():
    assert isinstance(subdiff(IndicatorBox(S1, [0], [1]), [2.0]), Empty)


def test_box_normal_cone_truncated():
    s = subdiff(IndicatorBox(S1, [0], [1]), [1.0])
    assert s.truncated
    assert s.contains([5.0]) and not s.contains([-0.5])


def test_ball_boundary_normal_cone():
    f = IndicatorBall(S2, 2.0)
    s = subdiff(f, [2.0, 0.0])
    assert s.contains([3.0, 0.0]) and not s.contains([0.0, 1.0])


# --- membership ------------------------------------------------------------


def test_membership_examples():
    f = AbsSum(S1)
    assert subdiff_membership(f, [0.0], [0.5]).holds
    r = subdiff_membership(f, [0.0], [2.0])
    assert not r.holds
    y = r.witness
    assert 2 * y[0] + 0 > f.value(y)  # witness violates the inequality
    x = np.array([0.7, -1.2])
    assert subdiff_membership(PNormSquaredHalf(S2), x, x).holds


def test_membership_refutation_matches_grid_search():
    f = AbsSum(S1)
    grid = np.arange(-3, 3 + 1e-9, 1e-3)
    assert any(2 * y > abs(y) for y in grid)
    assert not subdiff_membership(f, [0.0], [2.0]).holds


def test_membership_records_plan():
    r = subdiff_membership(AbsSum(S1), [0.0], [0.5], SamplePlan(seed=3, count=50))
    assert r.as_dict()["plan"] == {"seed": 3, "count": 50, "radius": None}


@pytest.mark.parametrize("kind", list(catalog(3, 2.0, 0)))
def test_subgradients_pass_membership(kind):
    f = catalog(3, 2.0, 0)[kind]
    rng = np.random.default_rng(1)
    for _ in range(5):
        x = rng.standard_normal(3)
        if not math.isfinite(f.value(x)):
            x = f.witness
        s = f.subdiff_at(x)
        for g in s.generators()[:4]:
            assert subdiff_membership(f, x, g, SamplePlan(count=200)).holds


# --- sums ------------------------------------------------------------------


def test_sum_halfline_plus_affine():
    f = combine_sum(IndicatorBox(S1, [0], [math.inf]), Affine(S1, [1.0]))
    s = f.subdiff_at(np.array([0.0]))
    for v in np.linspace(-5, 1, 13):
        assert s.contains([v])
        assert subdiff_membership(f, [0.0], [v], SamplePlan(count=200)).holds
    assert not s.contains([1.5])
    assert not subdiff_membership(f, [0.0], [1.5], SamplePlan(count=200)).holds


def test_sum_abs_plus_square():
    f = combine_sum(AbsSum(S1), PNormSquaredHalf(S1))
    s = f.subdiff_at(np.array([0.0]))
    for v in np.linspace(-1, 1, 9):
        assert s.contains([v])
    assert not s.contains([1.2])


def test_sum_of_quadratics_gradient():
    a, b = Quadratic(S2, [[2, 0], [0, 1]]), Quadratic(S2, [[1, 1], [1, 3]])
    x = np.array([0.5, -1.0])
    s = combine_sum(a, b).subdiff_at(x)
    assert isinstance(s, Singleton)
    assert np.allclose(s.point, a.grad(x) + b.grad(x))


def test_sum_rule_consistency():
    f = combine_sum(AbsSum(S2), IndicatorBox(S2, [-1, -1], [1, 1]))
    x = np.array([0.0, 1.0])
    for g in f.subdiff_at(x).generators():
        if np.abs(g).max() < 1e3:  # skip the truncation corners
            assert subdiff_membership(f, x, g, SamplePlan(count=300)).holds


# --- prox and conjugates against brute force -------------------------------


@pytest.mark.parametrize("v,t", [(2.0, 1.0), (0.3, 0.5), (-3.0, 2.0)])
def test_abs_prox_soft_threshold(v, t):
    x = AbsSum(S1).prox(np.array([v]), t)[0]
    ref = minimize_scalar(lambda y: 0.5 * (y - v) ** 2 + t * abs(y), bounds=(-10, 10),
                          method="bounded", options={"xatol": 1e-10}).x
    assert x == pytest.approx(np.sign(v) * max(abs(v) - t, 0.0), abs=1e-15)
    assert x == pytest.approx(ref, abs=1e-6)  # bounded Brent is the looser side


def test_max_affine_prox_optimality():
    rng = np.random.default_rng(4)
    f = MaxAffine(SpaceSpec(3, 2.0), rng.standard_normal((6, 3)), rng.standard_normal(6))
    for _ in range(10):
        v, t = rng.standard_normal(3) * 3, rng.uniform(0.1, 3)
        x = f.prox(v, t)
        # (v - x) / t must be a subgradient at x
        assert f.subdiff_at(x).distance((v - x) / t) <= 1e-9


@pytest.mark.parametrize("kind", ["quadratic", "pnorm_squared_half", "abs_sum", "indicator_box", "affine"])
def test_conjugate_against_grid_sup(kind):
    f = {
        "quadratic": Quadratic(S1, [[2.0]], [0.5]),
        "pnorm_squared_half": PNormSquaredHalf(S1, [0.3]),
        "abs_sum": AbsSum(S1, [0.5]),
        "indicator_box": IndicatorBox(S1, [-1.0], [2.0]),
        "affine": Affine(S1, [0.4], 1.0),
    }[kind]
    grid = np.linspace(-30, 30, 600001)
    for s in (-0.7, 0.0, 0.4):
        c = f.conjugate(np.array([s]))
        vals = np.array([s * y - f.value(np.array([y])) for y in grid[::50]])
        if c == math.inf:
            assert vals.max() > 5
        else:
            assert vals.max() <= c + 1e-9
            assert vals.max() >= c - 1e-2


# --- psi -------------------------------------------------------------------


def test_psi_examples():
    v = np.array([1.5, -2.0])
    psi = build_psi(Scaled(1.0, Affine(S2)), [0, 0], v, 1.0)
    assert np.allclose(psi.minimizer(), v)
    psi = build_psi(PNormSquaredHalf(S2), [0, 0], [0, 0], 3.0)
    x = np.array([1.0, 2.0])
    assert psi.value(x) == pytest.approx(2 * (x @ x))
    assert psi.infimum() == pytest.approx(0.0)
    assert build_psi(AbsSum(S1), [1.0], [2.0], 1.0).value(np.array([0.0])) == pytest.approx(0.5)


@pytest.mark.parametrize("lam", [0.0, -1.0, math.inf])
def test_psi_rejects_lambda(lam):
    with pytest.raises(InputError):
        build_psi(AbsSum(S1), [0.0], [0.0], lam)


def test_psi_coercive():
    rng = np.random.default_rng(5)
    psi = build_psi(AbsSum(SpaceSpec(3, 3.0)), rng.standard_normal(3), 5 * rng.standard_normal(3), 2.0)
    for _ in range(20):
        u = rng.standard_normal(3)
        vals = [psi.value(t * u) for t in (10, 100, 1000)]
        assert vals[0] < vals[1] < vals[2]


def test_psi_lower_bound_valid():
    rng = np.random.default_rng(6)
    psi = build_psi(AbsSum(SpaceSpec(2, 3.0)), [1.0, -1.0], [2.0, 0.5], 1.5)
    lb = psi.lower_bound()
    assert all(psi.value(y) >= lb - 1e-12 for y in rng.standard_normal((2000, 2)) * 5)


# --- construction checks ---------------------------------------------------


def test_validation_errors():
    with pytest.raises(InputError):
        Quadratic(S2, [[1, 2], [0, 1]])  # not symmetric
    with pytest.raises(InputError):
        Quadratic(S2, [[1, 0], [0, -1]])  # not PSD
    with pytest.raises(InputError):
        AbsSum(S2, [1, -1])
    with pytest.raises(InputError):
        IndicatorBox(S1, [1], [0])
    with pytest.raises(InputError):
        Sum([AbsSum(S1), AbsSum(S2)])
    with pytest.raises(InputError):
        Sum([IndicatorBox(S1, [0], [1]), IndicatorBox(S1, [2], [3])])  # empty domain


@pytest.mark.parametrize("kind", list(catalog(3, 2.0, 0)))
def test_convexity_spot_check(kind):
    assert spot_check_convexity(catalog(3, 3.0, 0)[kind]) <= 1e-9


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.05, 5))
def test_abs_subgradients_monotone(x, y, w):
    f = AbsSum(S1, [w])
    a = f.subdiff_at(np.array([x])).select()
    b = f.subdiff_at(np.array([y])).select()
    assert (x - y) * (a[0] - b[0]) >= -1e-12
