import numpy as np
import pytest

from malab import geometry, solver
from malab.errors import ConvexityLossError, NonConvergenceError
from malab.field import make_grid
from malab.symfunc import sigma_k

from conftest import DISK, ELLIPSE, SUPER


def test_analytic_ball_examples():
    assert solver.analytic_ball([0, 0], 1.0).value(np.array([0.5, 0.0])) == pytest.approx(-0.375)
    assert solver.analytic_ball([0, 0, 0], 2.0).value(np.array([1.0, 0, 0])) == pytest.approx(-1.5)
    b = solver.analytic_ball([0.3, -0.2], 1.5)
    assert b.value(b.center) == pytest.approx(-1.125)
    assert np.allclose(b.gradient(b.center), 0)
    with pytest.raises(ValueError):
        solver.analytic_ball([0, 0], 0.0)


def test_analytic_ellipsoid_examples():
    e = solver.analytic_ellipsoid([0, 0], [2.0, 0.5], 1.0)
    assert e.value(np.array([0.1, 0.2])) == pytest.approx(-0.48)
    assert np.linalg.det(e.hessian(np.zeros(2))) == 1.0
    assert np.linalg.det(solver.analytic_ellipsoid([0, 0, 0], [2, 1, 0.5], 1.0).hessian(np.zeros(3))) == 1.0
    with pytest.raises(ValueError):
        solver.analytic_ellipsoid([0, 0], [2.0, 0.6], 1.0)
    r = solver.analytic_ellipsoid([0, 0], [1.0, 1.0], 4.0)
    assert r.value(np.array([0.3, 0.4])) == pytest.approx(solver.analytic_ball([0, 0], 2.0).value(np.array([0.3, 0.4])))


def test_analytic_for_domain():
    sol = solver.analytic_for_domain(ELLIPSE)
    assert np.allclose(sol.coefficients, [2.0, 0.5])
    assert sol.level == pytest.approx(1.0)
    assert np.max(np.abs(sol.value(geometry.boundary_samples(ELLIPSE, 100)))) < 1e-12
    assert solver.analytic_for_domain(SUPER) is None


@pytest.mark.parametrize("dom", [DISK, ELLIPSE, geometry.ellipsoid([0.2, -0.1], [0.7, 1.2])])
def test_quadratic_domains_solved_exactly(dom):
    res = solver.solve_dirichlet(dom, make_grid(dom, 65))
    assert solver.max_error(res, solver.analytic_for_domain(dom)) < 1e-10
    assert res.residual_max < 1e-8


def test_superellipse_solve_invariants(solve):
    res = solve("superellipse", 65)
    grid = res.grid
    assert res.residual_max < 1e-8
    assert res.convexity_min_eig > 0
    assert res.newton_iterations <= 25
    det = sigma_k(res.field.hessians(), 2)
    assert np.all(np.abs(det - 1) <= 10 * 1e-8)
    assert np.all(res.field.values < 0)
    # exactly one local minimum node
    V = res.field.as_array()
    pad = np.pad(V, 1, constant_values=np.inf)
    pad[np.isnan(pad)] = np.inf
    c = pad[1:-1, 1:-1]
    is_min = (c <= pad[2:, 1:-1]) & (c <= pad[:-2, 1:-1]) & (c <= pad[1:-1, 2:]) & (c <= pad[1:-1, :-2])
    assert np.count_nonzero(is_min & grid.inside) == 1
    assert np.linalg.norm(res.critical_point) < grid.h
    assert res.min_value == pytest.approx(-0.6094, abs=1e-3)


def test_ball_critical_point_within_h():
    dom = geometry.ball([0.13, -0.07], 1.0)
    res = solver.solve_dirichlet(dom, make_grid(dom, 65))
    assert np.linalg.norm(res.critical_point - [0.13, -0.07]) < res.h
    assert res.min_value == pytest.approx(-0.5, abs=1e-9)


def test_nonconvergence_carries_result():
    opts = solver.SolverOptions(max_iterations=1)
    with pytest.raises(NonConvergenceError) as info:
        solver.solve_dirichlet(SUPER, make_grid(SUPER, 33), opts)
    assert info.value.result is not None
    assert info.value.result.newton_iterations == 1


def test_snapped_cuts_lose_convexity():
    # a literal 0.1h snap imposes zero data off the boundary and breaks discrete convexity
    grid = make_grid(DISK, 65, snap_fraction=0.1)
    with pytest.raises(ConvexityLossError):
        solver.solve_dirichlet(DISK, grid)


def test_options_from_config():
    o = solver.SolverOptions.from_config({"tolerance": 1e-9, "grid_nodes_per_axis": 33})
    assert o.tolerance == 1e-9 and o.grid_nodes_per_axis == 33 and o.max_iterations == 50


def test_exact_result_summary():
    sol = solver.analytic_ball([0.0, 0.0], 1.0)
    res = solver.exact_result(sol, make_grid(DISK, 33))
    s = res.summary()
    assert s["exact_jets"] and s["min_value"] == -0.5 and s["x0"] == [0.0, 0.0]
