import csv

import numpy as np
import pytest

from malab import geometry
from malab.errors import GridTooCoarseError, SingularHessianError, StencilUnavailableError
from malab.field import (
    BOUNDARY_ADJACENT,
    EXTERIOR,
    INTERIOR,
    analytic_jet,
    field_jets,
    jet_at,
    make_grid,
    sample_field,
)
from malab.solver import analytic_ball, analytic_ellipsoid

DISK = geometry.ball([0.0, 0.0], 1.0)


def test_grid_too_coarse():
    with pytest.raises(GridTooCoarseError):
        make_grid(DISK, 8)


def test_classification_matches_contains():
    grid = make_grid(geometry.superellipse(), 33)
    axes = [grid.origin[i] + grid.h * np.arange(grid.shape[i]) for i in range(2)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    inside = geometry.contains(grid.domain, pts)
    assert np.array_equal(grid.classification != EXTERIOR, inside)
    assert set(np.unique(grid.classification)) == {EXTERIOR, BOUNDARY_ADJACENT, INTERIOR}
    # boundary-adjacent nodes are exactly those with a cut stencil arm
    assert np.array_equal(grid.node_class() == BOUNDARY_ADJACENT, grid.cut.any(axis=(1, 2)))


def test_fractions_hit_the_boundary():
    grid = make_grid(DISK, 33)
    rows, d, s = np.nonzero(grid.cut)
    sign = np.where(s == 0, 1.0, -1.0)
    pts = grid.points[rows] + (grid.h * sign * grid.fractions[rows, d, s])[:, None] * grid.directions[d]
    assert np.max(np.abs(DISK.g(pts))) < 1e-12
    assert np.all((grid.fractions > 0) & (grid.fractions <= 1))


def test_node_on_sphere_is_not_an_unknown():
    # (-1/3, 2/3, -2/3) lies on the unit sphere and on the 25-node lattice
    grid = make_grid(geometry.ball([0.0, 0.0, 0.0], 1.0), 25)
    assert grid.fractions.min() > 1e-6


@pytest.mark.parametrize("dom", [DISK, geometry.ellipsoid([0.1, 0.0], [0.8, 1.3]), geometry.superellipse()])
def test_quadratics_are_exact(dom):
    A = np.array([[2.0, 0.3], [0.3, 0.7]])
    f = lambda x: 0.5 * np.einsum("...i,ij,...j->...", x, A, x) + x @ np.array([0.2, -0.1]) + 0.4
    grid = make_grid(dom, 33)
    field = sample_field(grid, f)
    assert np.allclose(field.hessians(), A, atol=1e-9)
    assert np.allclose(field.gradients(), grid.points @ A + [0.2, -0.1], atol=1e-9)


def test_linear_field_jet():
    grid = make_grid(DISK, 33)
    field = sample_field(grid, lambda x: x[..., 0])
    node = grid.nodes[np.argmin(np.linalg.norm(grid.points, axis=1))]
    jet = jet_at(field, node)
    assert np.allclose(jet.gradient, [1.0, 0.0], atol=1e-12)
    assert np.allclose(jet.hessian, 0.0, atol=1e-9)
    with pytest.raises(SingularHessianError):
        jet.inverse_hessian


def test_half_norm_squared_jet():
    grid = make_grid(DISK, 33)
    field = sample_field(grid, lambda x: 0.5 * np.sum(x * x, axis=-1))
    jet = field_jets(field, grid.core, order=3)
    assert np.allclose(jet.hessian, np.eye(2), atol=1e-9)
    assert np.allclose(jet.third, 0.0, atol=1e-6)
    assert np.allclose(jet.hessian @ jet.inverse_hessian, np.eye(2), atol=1e-10)


def test_cubic_third_derivatives():
    # h = 0.1 on [-1.5, 1.5]^2: 31 nodes per axis
    dom = geometry.ball([0.0, 0.0], 1.5)
    grid = make_grid(dom, 31)
    assert grid.h == pytest.approx(0.1)
    field = sample_field(grid, lambda x: x[..., 0] ** 3)
    jet = field_jets(field, grid.core, order=3)
    expect = np.zeros_like(jet.third)
    # closed form: d^3/dx1^3 of x1^3 is the constant 6
    expect[:, 0, 0, 0] = 6.0
    assert np.allclose(jet.third, expect, atol=1e-9)


def test_third_needs_full_stencil():
    grid = make_grid(DISK, 33)
    field = sample_field(grid, lambda x: x[..., 0] ** 2)
    edge = grid.nodes[grid.node_class() == BOUNDARY_ADJACENT][0]
    with pytest.raises(StencilUnavailableError):
        jet_at(field, edge, order=3)


def test_third_and_fourth_are_symmetric(polynomial):
    rng = np.random.default_rng(3)
    p = polynomial.random(rng, 3)
    grid = make_grid(geometry.ball([0.0, 0.0, 0.0], 1.0), 21)
    jet = field_jets(sample_field(grid, p.value), grid.core, order=4)
    T, Q = jet.third, jet.fourth
    assert np.allclose(T, np.transpose(T, (0, 2, 1, 3)))
    assert np.allclose(T, np.transpose(T, (0, 3, 2, 1)))
    assert np.allclose(Q, np.transpose(Q, (0, 4, 2, 3, 1)))
    # exact for the quartic up to rounding
    assert np.allclose(T, p.third(jet.position), atol=1e-6)
    assert np.allclose(Q, p.fourth(jet.position), atol=1e-3)


def test_second_order_convergence_smooth_function():
    f = lambda x: np.exp(0.5 * x[..., 0]) * np.cos(0.7 * x[..., 1])

    def hess_exact(x):
        e, c, s = np.exp(0.5 * x[:, 0]), np.cos(0.7 * x[:, 1]), np.sin(0.7 * x[:, 1])
        return np.stack([np.stack([0.25 * e * c, -0.35 * e * s], -1),
                         np.stack([-0.35 * e * s, -0.49 * e * c], -1)], -2)

    errs = []
    for nodes in (33, 65, 129):
        grid = make_grid(DISK, nodes)
        field = sample_field(grid, f)
        core = grid.core[grid.inside]
        errs.append(np.max(np.abs(field.hessians()[core] - hess_exact(grid.points[core]))))
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    assert all(3.5 <= r <= 4.5 for r in ratios)


def test_analytic_jets():
    j = analytic_jet(analytic_ball([0.0, 0.0], 1.0), np.array([0.5, 0.0]), order=3)
    assert j.value == pytest.approx(-0.375)
    assert np.allclose(j.gradient, [0.5, 0.0]) and np.allclose(j.hessian, np.eye(2))
    assert np.all(j.third == 0)
    e = analytic_jet(analytic_ellipsoid([0.0, 0.0], [2.0, 0.5], 1.0), np.array([0.1, 0.2]))
    assert e.value == pytest.approx(-0.48)
    assert np.allclose(e.gradient, [0.2, 0.1]) and np.allclose(e.hessian, np.diag([2.0, 0.5]))


def test_rotated_jet(polynomial):
    rng = np.random.default_rng(7)
    p = polynomial.random(rng, 3)
    x = rng.normal(size=3) * 0.3
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    jet = analytic_jet(p, x, order=4).rotated(Q)
    # the rotated jet is the jet of v(y) = p(Q^T y) at y = Q x
    class Rotated:
        value = staticmethod(lambda y: p.value(y @ Q))
        gradient = staticmethod(lambda y: p.gradient(y @ Q) @ Q.T)
        hessian = staticmethod(lambda y: Q @ p.hessian(y @ Q) @ Q.T)
    y = Q @ x
    assert np.allclose(jet.position, y)
    assert np.allclose(jet.gradient, Rotated.gradient(y))
    assert np.allclose(jet.hessian, Rotated.hessian(y))


def test_csv_dump(tmp_path):
    grid = make_grid(DISK, 17 + 16)
    field = sample_field(grid, lambda x: np.sum(x, axis=-1))
    field.to_csv(tmp_path / "f.csv")
    with open(tmp_path / "f.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x1", "x2", "value", "classification"]
    assert len(rows) == grid.size + 1
    assert {r[3] for r in rows[1:]} == {"interior", "boundary"}


def test_interior_core_is_compact():
    for nodes in (33, 65):
        grid = make_grid(geometry.superellipse(), nodes)
        core = grid.interior_core
        assert core.any()
        assert np.all(grid.boundary_distance[core] >= grid.core_margin)
        assert not np.any(core & grid.band)
