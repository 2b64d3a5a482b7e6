from math import comb

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from malab import curvature as cv
from malab.errors import (
    DimensionError,
    MissingThirdDerivativeError,
    SingularHessianError,
    VanishingGradientError,
)
from malab.field import PointJet, analytic_jet
from malab.solver import analytic_ball, analytic_ellipsoid


def ball_jet(n, r, x, order=3):
    return analytic_jet(analytic_ball(np.zeros(n), r), np.asarray(x, dtype=float), order)


def test_curvature_examples():
    j = ball_jet(3, 2.0, [1.0, 0.0, 0.0])
    assert cv.mean_curvature(j) == pytest.approx(2.0)
    assert cv.gauss_curvature(j) == pytest.approx(1.0)
    assert cv.m_curvature(ball_jet(2, 1.0, [0.5, 0.0]), 1) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        cv.m_curvature(j, 3)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_sphere_m_curvatures(n):
    rng = np.random.default_rng(n)
    x = rng.normal(size=(50, n))
    x *= (0.1 + 0.8 * rng.uniform(size=(50, 1))) / np.linalg.norm(x, axis=1, keepdims=True)
    j = ball_jet(n, 1.0, x)
    rho = np.linalg.norm(x, axis=1)
    for m in range(1, n):
        assert np.allclose(cv.m_curvature(j, m), comb(n - 1, m) * rho**-m)


def test_vanishing_gradient():
    with pytest.raises(VanishingGradientError):
        cv.gauss_curvature(ball_jet(2, 1.0, [0.0, 0.0]))


def test_phi_psi_examples():
    for n, r in ((2, 1.0), (3, 2.0), (4, 0.5)):
        j = ball_jet(n, r, np.full(n, 0.1))
        assert cv.phi(j) == pytest.approx(r**2)
        assert cv.psi(j) == pytest.approx((n - 1) * r**2)
    e = analytic_jet(analytic_ellipsoid([0, 0], [2.0, 0.5], 1.0), np.array([0.3, -0.4]))
    assert cv.phi(e) == pytest.approx(1.0)
    crit = ball_jet(3, 2.0, [0.0, 0.0, 0.0])
    assert cv.phi(crit) == pytest.approx(-2 * crit.value)
    assert cv.psi(crit) == pytest.approx(-4 * crit.value)


def test_phi_singular_hessian():
    j = PointJet(np.zeros(2), 0.0, np.array([1.0, 0.0]), np.diag([1.0, 0.0]))
    with pytest.raises(SingularHessianError):
        cv.phi(j)


def random_solution_like_jet(rng, n, count=1):
    """Jets with det D^2u = 1, arbitrary gradient and symmetric third tensor."""
    A = rng.normal(size=(count, n, n))
    H = A @ np.swapaxes(A, 1, 2) + np.eye(n)
    H /= np.linalg.det(H)[:, None, None] ** (1.0 / n)
    T = rng.normal(size=(count, n, n, n))
    T = (T + T.transpose(0, 2, 1, 3) + T.transpose(0, 3, 2, 1) + T.transpose(0, 1, 3, 2)
         + T.transpose(0, 2, 3, 1) + T.transpose(0, 3, 1, 2)) / 6
    return PointJet(rng.normal(size=(count, n)), -rng.uniform(0.1, 1, count),
                    rng.normal(size=(count, n)), H, T)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 4), st.integers(0, 2**31))
def test_weighted_curvature_consistency(n, seed):
    j = random_solution_like_jet(np.random.default_rng(seed), n, 5)
    norm = np.linalg.norm(j.gradient, axis=1)
    K = cv.m_curvature(j, n - 1, 0.0)
    H = cv.m_curvature(j, 1, 0.0)
    assert np.allclose(cv.phi(j) + 2 * j.value, K * norm ** (n + 1), atol=1e-10, rtol=1e-10)
    assert np.allclose(cv.psi(j) + 2 * (n - 1) * j.value, H * norm**3, atol=1e-10, rtol=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_phi_equals_psi_in_2d(seed):
    j = random_solution_like_jet(np.random.default_rng(seed), 2, 4)
    assert np.array_equal(cv.phi(j), cv.psi(j))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 3), st.integers(0, 2**31))
def test_rotation_invariance(n, seed):
    rng = np.random.default_rng(seed)
    j = random_solution_like_jet(rng, n, 3)
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    jr = j.rotated(Q)
    for f in (cv.phi, cv.psi, lambda k: cv.gauss_curvature(k, 0.0), lambda k: cv.mean_curvature(k, 0.0)):
        assert np.allclose(f(jr), f(j), atol=1e-10, rtol=1e-10)
    assert np.allclose(np.linalg.norm(cv.phi_gradient(jr), axis=1), np.linalg.norm(cv.phi_gradient(j), axis=1))


@pytest.mark.parametrize("n", [2, 3])
def test_pfunction_gradients_match_finite_differences(polynomial, n):
    rng = np.random.default_rng(11 + n)
    p = polynomial.random(rng, n)
    x = rng.normal(size=n) * 0.2
    j = analytic_jet(p, x, order=3)
    eps = 1e-6
    for grad_fn, f in ((cv.phi_gradient, cv.phi), (cv.psi_gradient, cv.psi)):
        fd = [(f(analytic_jet(p, x + eps * e)) - f(analytic_jet(p, x - eps * e))) / (2 * eps) for e in np.eye(n)]
        assert np.allclose(grad_fn(j), fd, atol=1e-6)


def test_pfunction_gradient_needs_third():
    with pytest.raises(MissingThirdDerivativeError):
        cv.phi_gradient(ball_jet(2, 1.0, [0.3, 0.1], order=2))


def test_elliptic_residual_zero_on_constants():
    j = ball_jet(2, 1.0, [0.2, 0.3])
    assert cv.elliptic_residual(j, np.zeros((2, 2))) == 0.0
    assert cv.elliptic_residual(j, np.eye(2)) == pytest.approx(2.0)


def test_differentiated_identities(polynomial):
    first, defect = cv.differentiated_identities(ball_jet(3, 1.0, [0.2, 0.1, 0.0]))
    assert np.all(first == 0) and defect is None
    e = analytic_jet(analytic_ellipsoid([0, 0], [2.0, 0.5], 1.0), np.array([0.1, 0.2]), order=4)
    first, defect = cv.differentiated_identities(e)
    assert np.all(first == 0) and defect == 0
    with pytest.raises(MissingThirdDerivativeError):
        cv.differentiated_identities(ball_jet(2, 1.0, [0.1, 0.1], order=2))


def test_remark1_system_examples():
    det, res = cv.remark1_system(ball_jet(2, 1.0, [0.5, 0.0]))
    assert det == pytest.approx(0.0625)
    assert res == pytest.approx(0.0, abs=1e-14)
    det, res = cv.remark1_system(analytic_jet(analytic_ellipsoid([0, 0], [2.0, 0.5], 1.0), np.array([0.1, 0.2]), 3))
    assert det > 0 and res == pytest.approx(0.0, abs=1e-14)
    det, _ = cv.remark1_system(ball_jet(2, 1.0, [0.0, 0.0]))
    assert det == 0.0
    with pytest.raises(DimensionError):
        cv.remark1_system(ball_jet(3, 1.0, [0.1, 0.0, 0.0]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_remark1_determinant_closed_form(seed):
    # coefficient determinant equals (u^11 u_1^2 + u^22 u_2^2)^2 in the Hessian eigenframe
    j = random_solution_like_jet(np.random.default_rng(seed), 2)[0]
    det, _ = cv.remark1_system(j)
    lam, Q = np.linalg.eigh(j.hessian)
    g = Q.T @ j.gradient
    assert det == pytest.approx((g[0] ** 2 / lam[0] + g[1] ** 2 / lam[1]) ** 2, rel=1e-9)


def test_rigidity_residual():
    assert cv.rigidity_residual(ball_jet(2, 1.0, [0.3, 0.2])) == 0.0
    assert cv.rigidity_residual(ball_jet(3, 1.0, [0.3, 0.2, 0.1])) == 0.0
    e = analytic_jet(analytic_ellipsoid([0, 0], [2.0, 0.5], 1.0), np.array([0.1, 0.2]), 3)
    assert cv.rigidity_residual(e) == 0.0
    e3 = analytic_jet(analytic_ellipsoid([0, 0, 0], [2.0, 1.0, 0.5], 1.0), np.array([0.1, 0.2, 0.0]))
    assert cv.rigidity_residual(e3) == pytest.approx(1.0)
    with pytest.raises(MissingThirdDerivativeError):
        cv.rigidity_residual(ball_jet(2, 1.0, [0.3, 0.2], order=2))


def test_rigidity_residual_positive_on_superellipse(solve):
    levels = []
    for nodes in (65, 129):
        res = solve("superellipse", nodes)
        rows = np.nonzero(res.grid.interior_core)[0]
        from malab.solver import solution_jets

        levels.append(np.max(cv.rigidity_residual(solution_jets(res, rows, 3))))
    assert min(levels) > 1.0
    assert abs(levels[0] - levels[1]) < 0.01 * levels[1]


def test_pfunction_field_masks_and_csv(solve, tmp_path):
    res = solve("superellipse", 65)
    phi = cv.pfunction_field(res, "phi")
    assert phi.defined.all()
    K = cv.pfunction_field(res, "K_weighted", gradient_floor=0.05)
    assert (~K.defined).any() and np.all(np.isfinite(K.values[K.defined]))
    assert np.allclose(K.values[K.defined], phi.values[K.defined] + 2 * res.field.values[K.defined])
    phi.to_csv(tmp_path / "phi.csv")
    assert (tmp_path / "phi.csv").read_text().splitlines()[0] == "x1,x2,value,classification,which"
    with pytest.raises(ValueError):
        cv.evaluate(analytic_jet(analytic_ball([0, 0], 1), np.zeros(2)), "chi")
