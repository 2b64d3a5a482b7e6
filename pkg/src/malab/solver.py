"""Solutions of ``det D^2 u = 1`` in a convex domain with ``u = 0`` on the boundary.

Quadratic closed forms cover balls and ellipsoids in any dimension.  Other
domains go through a damped Newton iteration on the finite-difference system
of ``field.StencilOperators``; the Jacobian is assembled from the adjugate,
``d det(M) = tr(adj(M) dM)``.
"""
import logging
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import geometry
from .errors import ConvexityLossError, NonConvergenceError
from .field import PointJet, ScalarField, field_jets, make_grid
from .symfunc import adjugate, is_positive_definite, sigma_k

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class QuadraticSolution:
    """``u(x) = (sum_i a_i (x_i - x0_i)^2 - c) / 2`` with ``prod a_i = 1``."""

    center: np.ndarray
    coefficients: np.ndarray
    level: float

    @property
    def dimension(self):
        return len(self.center)

    def value(self, x):
        y = np.asarray(x, dtype=float) - self.center
        return 0.5 * (np.sum(self.coefficients * y * y, axis=-1) - self.level)

    def gradient(self, x):
        return self.coefficients * (np.asarray(x, dtype=float) - self.center)

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        n = self.dimension
        return np.broadcast_to(np.diag(self.coefficients), x.shape[:-1] + (n, n)).copy()

    def third(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (self.dimension,) * 3)

    def fourth(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (self.dimension,) * 4)

    def domain(self):
        """The ellipsoid ``{u < 0}``."""
        return geometry.ellipsoid(self.center, np.sqrt(self.level / self.coefficients))


def analytic_ball(center, r):
    """Solution ``(|x - x0|^2 - r^2) / 2`` on the ball of radius ``r``."""
    if r <= 0:
        raise ValueError("radius must be positive")
    c = np.asarray(center, dtype=float)
    return QuadraticSolution(c, np.ones(c.size), float(r) ** 2)


def analytic_ellipsoid(center, coefficients, level):
    c = np.asarray(center, dtype=float)
    a = np.asarray(coefficients, dtype=float)
    if a.shape != c.shape:
        raise ValueError("center and coefficients must have equal length")
    if np.any(a <= 0):
        raise ValueError("coefficients must be positive")
    if abs(np.prod(a) - 1.0) > 1e-12:
        raise ValueError(f"coefficients must multiply to 1, got {np.prod(a)!r}")
    if level <= 0:
        raise ValueError("level must be positive")
    return QuadraticSolution(c, a, float(level))


def analytic_for_domain(domain):
    """Closed-form solution when the domain is a ball or an ellipsoid, else None."""
    if domain.kind == "ball":
        return analytic_ball(domain.params["center"], domain.params["radius"])
    if domain.kind == "ellipsoid":
        s2 = np.asarray(domain.params["semi_axes"], dtype=float) ** 2
        level = float(np.prod(s2) ** (1.0 / s2.size))
        a = level / s2
        a = a / np.prod(a) ** (1.0 / a.size)  # clean rounding in the product
        return analytic_ellipsoid(domain.params["center"], a, level)
    return None


@dataclass
class SolverOptions:
    tolerance: float = 1e-8
    max_iterations: int = 50
    max_halvings: int = 20
    grid_nodes_per_axis: int = 129
    snap_fraction: float = 0.0

    @classmethod
    def from_config(cls, block):
        known = {k: block[k] for k in cls.__dataclass_fields__ if k in block}
        return cls(**known)


@dataclass(eq=False)
class SolveResult:
    field: ScalarField
    residual_max: float
    newton_iterations: int
    convexity_min_eig: float
    critical_point: np.ndarray
    min_value: float
    domain: object = None
    exact: QuadraticSolution = None
    residual_history: list = dc_field(default_factory=list)

    @property
    def grid(self):
        return self.field.grid

    @property
    def h(self):
        return self.field.grid.h

    def summary(self):
        return {
            "residual_max": float(self.residual_max),
            "iterations": int(self.newton_iterations),
            "convexity_min_eig": float(self.convexity_min_eig),
            "x0": [float(v) for v in self.critical_point],
            "min_value": float(self.min_value),
            "exact_jets": self.exact is not None,
        }


def discrete_residual(field):
    """``det D_h^2 u - 1`` at every inside node, with the Hessians used."""
    H = field.hessians()
    return sigma_k(H, field.grid.dimension) - 1.0, H


def _jacobian(ops, H):
    adj = adjugate(H)
    n = H.shape[-1]
    J = None
    for (i, j), A in ops.hessian_matrices().items():
        w = adj[:, i, j] if i == j else adj[:, i, j] + adj[:, j, i]
        term = sp.diags(w) @ A
        J = term if J is None else J + term
    return J.tocsc()


def locate_critical_point(field):
    """Minimizer of a quadratic fitted to the ``3^n`` block around the minimal node."""
    grid = field.grid
    n = grid.dimension
    m = int(np.argmin(field.values))
    centre = grid.nodes[m]
    offs = np.array(np.meshgrid(*([[-1, 0, 1]] * n), indexing="ij")).reshape(n, -1).T
    idx = centre + offs
    ok = np.all((idx >= 0) & (idx < np.array(grid.shape)), axis=1)
    idx = idx[ok]
    rows = grid.index[tuple(idx.T)]
    keep = rows >= 0
    y = (idx[keep] - centre) * grid.h
    vals = field.values[rows[keep]]
    cols = [np.ones(len(y))] + [y[:, i] for i in range(n)]
    pairs = [(i, j) for i in range(n) for j in range(i, n)]
    cols += [y[:, i] * y[:, j] for i, j in pairs]
    if len(y) < len(cols):
        return grid.points[m].copy(), float(field.values[m])
    coef, *_ = np.linalg.lstsq(np.column_stack(cols), vals, rcond=None)
    b = coef[1 : n + 1]
    Q = np.zeros((n, n))
    for (i, j), c in zip(pairs, coef[n + 1 :]):
        if i == j:
            Q[i, i] = 2 * c
        else:
            Q[i, j] = Q[j, i] = c
    try:
        step = np.linalg.solve(Q, -b)
    except np.linalg.LinAlgError:
        return grid.points[m].copy(), float(field.values[m])
    if np.any(np.abs(step) > grid.h):
        return grid.points[m].copy(), float(field.values[m])
    value = coef[0] + b @ step + 0.5 * step @ Q @ step
    return grid.points[m] + step, float(value)


def initial_guess(grid):
    """``(|x - centroid|^2 - R^2) / 2`` with R the circumscribed radius about the centroid."""
    centroid = grid.points.mean(axis=0)
    bpts = geometry.boundary_samples(grid.domain)
    R = float(np.max(np.linalg.norm(bpts - centroid, axis=1)))
    return 0.5 * (np.sum((grid.points - centroid) ** 2, axis=1) - R**2)


def poisson_guess(grid):
    """Discrete solution of ``Laplacian w = n`` with zero boundary data, rescaled so det ~ 1 on average."""
    ops = grid.operators
    n = grid.dimension
    L = sum(ops.hessian_matrices()[i, i] for i in range(n)).tocsc()
    w = spla.spsolve(L, np.full(grid.size, float(n)))
    det = sigma_k(ops.hessian(w), n)
    scale = np.mean(det[det > 0]) ** (-1.0 / n) if np.any(det > 0) else 1.0
    return scale * w


def _finish(field, H, F, iterations, domain, history, exact=None):
    eig = np.linalg.eigvalsh(H)
    x0, umin = locate_critical_point(field)
    return SolveResult(
        field=field,
        residual_max=float(np.max(np.abs(F))),
        newton_iterations=iterations,
        convexity_min_eig=float(eig[:, 0].min()),
        critical_point=x0,
        min_value=umin,
        domain=domain,
        exact=exact,
        residual_history=history,
    )


def solve_dirichlet(domain, grid=None, options=None):
    """Damped Newton solve of the discrete Dirichlet problem.

    Raises ``ConvexityLossError`` when no damped step keeps every discrete
    Hessian positive definite, and ``NonConvergenceError`` (carrying the last
    iterate) when the tolerance is not met.
    """
    options = options or SolverOptions()
    if grid is None:
        grid = make_grid(domain, options.grid_nodes_per_axis, snap_fraction=options.snap_fraction)
    ops = grid.operators

    def evaluate(v):
        H = ops.hessian(v)
        return H, sigma_k(H, grid.dimension) - 1.0

    u = initial_guess(grid)
    H, F = evaluate(u)
    if not np.all(is_positive_definite(H)):
        # the paraboloid guess ignores the cut-point data; restart from a
        # boundary-consistent guess
        u = poisson_guess(grid)
        H, F = evaluate(u)
    if not np.all(is_positive_definite(H)):
        raise ConvexityLossError("initial guess is not discretely convex")
    norm = np.linalg.norm(F)
    history = [float(np.max(np.abs(F)))]
    it = 0
    while history[-1] >= options.tolerance:
        if it >= options.max_iterations:
            res = _finish(ScalarField.dirichlet(grid, u), H, F, it, domain, history)
            raise NonConvergenceError(
                f"no convergence after {it} Newton steps (residual {history[-1]:.3e})", res
            )
        it += 1
        delta = spla.spsolve(_jacobian(ops, H), -F)
        alpha = 1.0
        saw_convex = False
        for _ in range(options.max_halvings + 1):
            v = u + alpha * delta
            Hv, Fv = evaluate(v)
            convex = bool(np.all(is_positive_definite(Hv)))
            saw_convex |= convex
            nv = np.linalg.norm(Fv)
            if convex and nv < norm:
                break
            alpha *= 0.5
        else:
            res = _finish(ScalarField.dirichlet(grid, u), H, F, it, domain, history)
            if not saw_convex:
                raise ConvexityLossError("no damped Newton step preserves discrete convexity")
            raise NonConvergenceError("damped Newton step failed to reduce the residual", res)
        u, H, F, norm = v, Hv, Fv, nv
        history.append(float(np.max(np.abs(F))))
        log.debug("newton %d: alpha=%g residual_max=%.3e", it, alpha, history[-1])
    return _finish(ScalarField.dirichlet(grid, u), H, F, it, domain, history)


def exact_result(solution, grid):
    """Wrap a closed-form solution as a SolveResult whose jets are exact."""
    from .field import sample_field

    field = sample_field(grid, solution.value)
    F, H = discrete_residual(field)
    res = _finish(field, H, F, 0, grid.domain, [float(np.max(np.abs(F)))], exact=solution)
    res.critical_point = solution.center.copy()
    res.min_value = -0.5 * solution.level
    return res


def solution_jets(result, nodes=None, order=2):
    """Jets of the solution at grid nodes; exact when the result wraps a closed form."""
    if result.exact is None:
        return field_jets(result.field, nodes, order)
    from .field import _select

    grid = result.grid
    rows = _select(grid, nodes)
    x = grid.points[rows]
    ex = result.exact
    return PointJet(
        x, ex.value(x), ex.gradient(x), ex.hessian(x),
        ex.third(x) if order >= 3 else None, ex.fourth(x) if order >= 4 else None,
    )


def max_error(result, solution):
    """Max-norm nodal error against a closed-form solution."""
    return float(np.max(np.abs(result.field.values - solution.value(result.grid.points))))
