import numpy as np
import pytest

from monolab.convex import AbsSum, IndicatorBox, PNormSquaredHalf, Quadratic, Sum, Affine
from monolab.errors import InputError, UnsupportedRepresentationError
from monolab.fitz import FiniteGraph, OperatorGraph, PsdLinear, SubdiffOf
from monolab.resolvent import (
    independent_residual,
    maximality_extension_test,
    minty_probe,
    rockafellar_solve,
    shifted_operator,
    solve_regularized,
)
from monolab.space import SpaceSpec

S1 = SpaceSpec(1, 2.0)
S2 = SpaceSpec(2, 2.0)


def soft(w, t):
    return np.sign(w) * np.maximum(np.abs(w) - t, 0.0)


def random_psd(rng, d):
    B = rng.standard_normal((d, d))
    return B @ B.T + 0.1 * np.eye(d)


def assert_residual_agrees(sol):
    assert sol.residual >= 0
    assert abs(sol.residual - sol.residual_check) <= 1e-12 * (1 + sol.residual)


# --- solve_regularized -----------------------------------------------------


def test_quadratic_linear_oracle():
    sol = solve_regularized(Quadratic(S2), 1.0, [0.0, 0.0], [2.0, 0.0])
    assert sol.x.coords == pytest.approx([1.0, 0.0], abs=1e-12)
    assert sol.certified
    assert_residual_agrees(sol)


@pytest.mark.parametrize("zs,x,xs", [(2.0, 1.0, 1.0), (0.5, 0.0, 0.5)])
def test_abs_soft_threshold(zs, x, xs):
    sol = solve_regularized(AbsSum(S1), 1.0, [0.0], [zs])
    assert sol.x.coords == pytest.approx([x], abs=1e-12)
    assert sol.xs_sel.coords == pytest.approx([xs], abs=1e-12)
    assert sol.certified
    assert_residual_agrees(sol)


@pytest.mark.parametrize("p", [1.5, 3.0, 4.0])
@pytest.mark.parametrize("lam", [0.5, 2.0])
def test_non_hilbert_residuals(p, lam):
    rng = np.random.default_rng(int(10 * p))
    S = SpaceSpec(3, p)
    fs = [AbsSum(S), PNormSquaredHalf(S), Sum([IndicatorBox(S, [-1] * 3, [1] * 3), Affine(S, [1, 0, -1])])]
    for f in fs:
        for _ in range(5):
            sol = solve_regularized(f, lam, rng.standard_normal(3), 3 * rng.standard_normal(3))
            assert sol.residual <= 1e-6, f.kind
            assert_residual_agrees(sol)
            # xs_sel is an element of df(x)
            assert f.subdiff_at(sol.x.coords).contains(sol.xs_sel.coords)


def test_independent_residual_formula():
    # l_3 duality map of (1, -2): ||x||^(2-p) |x|^(p-1) sign(x)
    x = np.array([1.0, -2.0])
    n = (1 + 8) ** (1 / 3)
    J = n ** (-1) * np.array([1.0, -4.0])
    r = independent_residual(3.0, J + 2 * np.array([0.5, 0.5]), x, np.zeros(2), [0.5, 0.5], 2.0)
    assert r == pytest.approx(0.0, abs=1e-14)


def test_bad_lambda():
    with pytest.raises(InputError):
        solve_regularized(AbsSum(S1), 0.0, [0.0], [1.0])


# --- maximality test -------------------------------------------------------


def test_maximality_on_graph_quadratic():
    res = maximality_extension_test(Quadratic(S1), 1.0, [1.0], [1.0], [0.1, 0.01])
    assert res.related and res.bounds_ok and res.conclusion == "in-graph"
    for eps, (dx, dxs) in zip(res.eps_schedule, res.distances):
        assert dx <= eps + 1e-6 and dxs <= 2 * eps + 1e-6


def test_maximality_not_related():
    res = maximality_extension_test(AbsSum(S1), 1.0, [0.0], [2.0], [0.1])
    assert not res.related and res.gap < 0
    assert res.conclusion == "not-related"


def test_maximality_boundary_of_interval():
    res = maximality_extension_test(AbsSum(S1), 1.0, [0.0], [1.0], [0.1, 0.01, 0.001])
    assert res.related and res.bounds_ok


@pytest.mark.parametrize("f,z,zs", [
    (Quadratic(S1), [0.7], [0.7]),
    (AbsSum(S1), [-0.4], [-1.0]),
    (AbsSum(S2, [1.0, 2.0]), [0.0, 1.0], [0.3, 2.0]),
])
@pytest.mark.parametrize("method", ["auto", "subgradient"])
def test_convergence_rate_law(f, z, zs, method):
    sched = [1e-1, 1e-2, 1e-3]
    res = maximality_extension_test(f, 1.0, z, zs, sched, method=method)
    assert res.related
    for eps, (dx, _) in zip(sched, res.distances):
        assert dx <= eps + 1e-6


def test_schedule_validation():
    with pytest.raises(InputError):
        maximality_extension_test(Quadratic(S1), 1.0, [0.0], [0.0], [0.01, 0.1])


# --- minty probe -----------------------------------------------------------


def test_minty_abs():
    rep = minty_probe(SubdiffOf(AbsSum(S1)), 1.0, [[-2.0], [0.0], [2.0]])
    assert [s.x.coords[0] for s in rep.solutions] == pytest.approx([-1.0, 0.0, 1.0], abs=1e-12)
    assert rep.passed and rep.evidence == "surjective"


def test_minty_linear():
    rng = np.random.default_rng(1)
    M = random_psd(rng, 3)
    t = rng.standard_normal(3)
    rep = minty_probe(PsdLinear(SpaceSpec(3, 2.0), M), 1.0, [t])
    assert rep.solutions[0].x.coords == pytest.approx(np.linalg.solve(np.eye(3) + M, t), abs=1e-12)
    assert rep.max_residual <= 1e-10


def test_minty_single_pair():
    g = OperatorGraph.from_pairs([([0.0], [0.0])], S1)
    rep = minty_probe(FiniteGraph(g), 1.0, [[5.0]])
    assert rep.max_residual >= 4 - 1e-9
    assert rep.evidence == "non-surjective"


@pytest.mark.parametrize("a", [
    SubdiffOf(AbsSum(S2)),
    SubdiffOf(Sum([IndicatorBox(S2, [0, 0], [1, 1]), Quadratic(S2)])),
    PsdLinear(S2, [[2.0, 1.0], [1.0, 1.0]], [0.5, -0.5]),
], ids=["abs", "box+quadratic", "linear"])
def test_surjectivity_over_lambda(a):
    targets = np.random.default_rng(2).uniform(-5, 5, size=(100, 2))
    for lam in (0.5, 1.0, 2.0):
        rep = minty_probe(a, lam, targets)
        assert rep.max_residual <= rep.tol
        for s in rep.solutions:
            assert_residual_agrees(s)


def test_soft_threshold_oracle_random_targets():
    targets = np.random.default_rng(3).uniform(-5, 5, size=(100, 1))
    for lam in (0.5, 1.0, 2.0):
        rep = minty_probe(SubdiffOf(AbsSum(S1)), lam, targets)
        for t, s in zip(targets, rep.solutions):
            # t in x + lam d|x|  <=>  x = soft(t, lam)
            assert abs(s.x.coords[0] - soft(t[0], lam)) <= 1e-10


# --- scaling coherence and the product route -------------------------------


def test_scaling_coherence_linear():
    rng = np.random.default_rng(4)
    S = SpaceSpec(3, 2.0)
    a = PsdLinear(S, random_psd(rng, 3), rng.standard_normal(3))
    for lam in (0.5, 1.0, 2.0):
        zs = rng.standard_normal(3)
        direct = minty_probe(a, lam, [zs]).solutions[0].x.coords
        shifted = minty_probe(shifted_operator(a, lam, zs), 1.0, [np.zeros(3)]).solutions[0].x.coords
        assert np.abs(direct - shifted).max() <= 1e-8


def test_scaling_coherence_graph():
    rng = np.random.default_rng(5)
    U = rng.standard_normal((20, 2))
    a = FiniteGraph(OperatorGraph(U, 2 * U, S2))
    zs = rng.standard_normal(2)
    direct = minty_probe(a, 2.0, [zs]).solutions[0]
    shifted = minty_probe(shifted_operator(a, 2.0, zs), 1.0, [np.zeros(2)]).solutions[0]
    assert np.abs(direct.x.coords - shifted.x.coords).max() <= 1e-8
    assert direct.residual == pytest.approx(shifted.residual, abs=1e-8)


def test_rockafellar_identity():
    sol = rockafellar_solve(PsdLinear(S2, np.eye(2)), 1.0, [2.0, 0.0])
    assert sol.x.coords == pytest.approx([1.0, 0.0], abs=1e-10)
    assert sol.xs_sel.coords == pytest.approx([1.0, 0.0], abs=1e-10)
    assert sol.route == "product-space" and sol.certified
    assert_residual_agrees(sol)


def test_rockafellar_zero_target():
    rng = np.random.default_rng(6)
    sol = rockafellar_solve(PsdLinear(SpaceSpec(4, 2.0), random_psd(rng, 4)), 1.0, np.zeros(4))
    assert np.abs(sol.x.coords).max() <= 1e-10


def test_rockafellar_vs_direct():
    rng = np.random.default_rng(7)
    for _ in range(10):
        d = int(rng.integers(1, 11))
        M = random_psd(rng, d)
        zs = rng.standard_normal(d)
        for lam in (0.5, 1.0, 2.0):
            sol = rockafellar_solve(PsdLinear(SpaceSpec(d, 2.0), M), lam, zs)
            x_dir = np.linalg.solve(np.eye(d) + lam * M, zs)
            assert np.abs(sol.x.coords - x_dir).max() <= 1e-6


def test_rockafellar_finite_graph_reports_gap():
    g = OperatorGraph.from_pairs([([0.0], [0.0])], S1)
    sol = rockafellar_solve(FiniteGraph(g), 1.0, [5.0])
    assert sol.residual >= 4
    assert not sol.certified
    assert sol.details["product_gap"] < 0


def test_rockafellar_needs_hilbert_and_definite():
    with pytest.raises(InputError):
        rockafellar_solve(PsdLinear(SpaceSpec(2, 3.0), np.eye(2)), 1.0, [1.0, 0.0])
    with pytest.raises(UnsupportedRepresentationError):
        rockafellar_solve(PsdLinear(S2, [[1.0, 0.0], [0.0, 0.0]]), 1.0, [1.0, 0.0])
