"""Level-set curvature functionals and the P-functions of a convex solution.

For a jet with gradient ``Du`` and Hessian ``D^2u`` the m-th curvature of the
level set through the point is

    sum_{k,l} d sigma_{m+1}(D^2u) / d u_kl  u_k u_l  |Du|^(-m-2),

so ``m = 1`` gives the summed (not averaged) mean curvature H and
``m = n - 1`` the Gauss curvature K.  The two P-functions are

    phi = sum adj(D^2u)_kl u_k u_l - 2 u,
    psi = sum b_kl u_k u_l - 2 (n - 1) u,   b = tr(D^2u) I - D^2u.

Every function here accepts a single jet or a stacked one.
"""
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionError,
    MissingThirdDerivativeError,
    SingularHessianError,
    StencilUnavailableError,
    VanishingGradientError,
)
from .field import _central_hessian_array, write_field_csv
from .geometry import level_set_curvatures
from .symfunc import adjugate, sigma_k_gradient, sigma_k_gradient_derivative

GRADIENT_FLOOR = 1e-6


def _contract(G, v):
    return np.einsum("...kl,...k,...l->...", G, v, v)


def _gradient_norm(jet, floor):
    norm = np.linalg.norm(jet.gradient, axis=-1)
    if np.any(norm < floor):
        raise VanishingGradientError(f"|Du| = {float(np.min(norm)):.3e} below the floor {floor:.1e}")
    return norm


def m_curvature(jet, m, gradient_floor=GRADIENT_FLOOR):
    """m-th curvature of the level set through the jet's point (m = 1 .. n-1)."""
    n = jet.dimension
    if not 1 <= m <= n - 1:
        raise ValueError(f"m must lie in 1..{n - 1}")
    norm = _gradient_norm(jet, gradient_floor)
    return _contract(sigma_k_gradient(jet.hessian, m + 1), jet.gradient) / norm ** (m + 2)


def gauss_curvature(jet, gradient_floor=GRADIENT_FLOOR):
    return m_curvature(jet, jet.dimension - 1, gradient_floor)


def mean_curvature(jet, gradient_floor=GRADIENT_FLOOR):
    """Sum of the principal curvatures of the level set."""
    return m_curvature(jet, 1, gradient_floor)


def level_set_principal_curvatures(jet, gradient_floor=GRADIENT_FLOOR):
    """Principal curvatures of the level set, ascending, oriented by -Du."""
    _gradient_norm(jet, gradient_floor)
    return level_set_curvatures(jet.gradient, jet.hessian, atol=0.0)


def _check_invertible(H):
    eig = np.abs(np.linalg.eigvalsh(H))
    if np.any(eig[..., 0] < 1e-10):
        raise SingularHessianError("Hessian is (numerically) singular")


def phi(jet):
    """``sum adj(D^2u)_kl u_k u_l - 2u``; equals ``K |Du|^(n+1) - 2u`` when det D^2u = 1."""
    _check_invertible(jet.hessian)
    return _contract(adjugate(jet.hessian), jet.gradient) - 2.0 * jet.value


def psi(jet):
    """``sum b_kl u_k u_l - 2(n-1)u``; equals ``H |Du|^3 - 2(n-1)u`` when det D^2u = 1."""
    n = jet.dimension
    return _contract(sigma_k_gradient(jet.hessian, 2), jet.gradient) - 2.0 * (n - 1) * jet.value


def _require_third(jet):
    if jet.third is None:
        raise MissingThirdDerivativeError("jet carries no third derivatives")


def _pfunction_gradient(jet, k, weight):
    _require_third(jet)
    H, Du, T = jet.hessian, jet.gradient, jet.third
    n = jet.dimension
    G = sigma_k_gradient(H, k)
    out = np.empty(np.shape(Du))
    for i in range(n):
        dG = sigma_k_gradient_derivative(H, T[..., :, :, i], k)
        out[..., i] = (
            _contract(dG, Du)
            + 2.0 * np.einsum("...kl,...k,...l->...", G, H[..., :, i], Du)
            - weight * Du[..., i]
        )
    return out


def phi_gradient(jet):
    """Exact gradient of phi from a third-order jet."""
    return _pfunction_gradient(jet, jet.dimension, 2.0)


def psi_gradient(jet):
    return _pfunction_gradient(jet, 2, 2.0 * (jet.dimension - 1))


def elliptic_residual(u_jet, w_hessian):
    """Linearized operator ``sum u^ij w_ij`` applied to a Hessian ``w_hessian``."""
    return np.einsum("...ij,...ij->...", u_jet.inverse_hessian, np.asarray(w_hessian, dtype=float))


def differentiated_identities(u_jet):
    """Residuals of the once- and twice-differentiated equation.

    Returns ``(first_order, second_order_defect)``: ``first_order[k] =
    sum u^ij u_ijk`` and, when the jet has fourth derivatives, the gap
    between ``sum u^ij u_ijkl u_k u_l`` and ``sum u^ip u^jq u_ijk u_pql u_k u_l``
    (otherwise ``None``).
    """
    _require_third(u_jet)
    inv = u_jet.inverse_hessian
    first = np.einsum("...ij,...ijk->...k", inv, u_jet.third)
    defect = None
    if u_jet.fourth is not None:
        Du = u_jet.gradient
        lhs = np.einsum("...ij,...ijkl,...k,...l->...", inv, u_jet.fourth, Du, Du)
        TD = np.einsum("...ijk,...k->...ij", u_jet.third, Du)
        rhs = np.einsum("...ip,...jq,...ij,...pq->...", inv, inv, TD, TD)
        defect = np.abs(lhs - rhs)
    return first, defect


def eigenframe(jet):
    """The jet rotated so its Hessian is diagonal (ascending eigenvalues)."""
    if np.ndim(jet.value):
        raise ValueError("eigenframe expects a single jet")
    _, Q = np.linalg.eigh(jet.hessian)
    return jet.rotated(Q.T)


def remark1_system(jet):
    """Coefficient determinant and residual of the 2D third-derivative system.

    The four rows are written in the Hessian eigenframe, unknowns ordered
    ``(u_111, u_112, u_122, u_222)``.  Rows 1-2 are the differentiated
    equation and must vanish; rows 3-4 are compared with ``-D phi``.
    """
    if jet.dimension != 2:
        raise DimensionError("the third-derivative system is two-dimensional")
    _require_third(jet)
    if np.ndim(jet.value):
        out = [remark1_system(jet[k]) for k in range(len(jet))]
        return np.array([o[0] for o in out]), np.array([o[1] for o in out])
    J = eigenframe(jet)
    a, b = 1.0 / np.diag(J.hessian)
    u1, u2 = J.gradient
    T = J.third
    x = np.array([T[0, 0, 0], T[0, 0, 1], T[0, 1, 1], T[1, 1, 1]])
    A = np.array(
        [
            [a, 0.0, b, 0.0],
            [0.0, a, 0.0, b],
            [(a * u1) ** 2, 2 * u1 * u2, (b * u2) ** 2, 0.0],
            [0.0, (a * u1) ** 2, 2 * u1 * u2, (b * u2) ** 2],
        ]
    )
    rhs = np.concatenate([[0.0, 0.0], -phi_gradient(J)])
    return float(np.linalg.det(A)), float(np.linalg.norm(A @ x - rhs))


def rigidity_residual(jet):
    """Zero exactly on the rigid solutions (ellipse for n = 2, ball for n >= 3).

    n = 2: largest of ``|u_111 u_2 - u_112 u_1|``, ``|u_122 u_2 - u_222 u_1|``,
    ``|u_112 u_2 - u_122 u_1|`` in the Hessian eigenframe.  n >= 3: the
    largest deviation of a Hessian eigenvalue from 1.
    """
    n = jet.dimension
    if n >= 3:
        lam = np.linalg.eigvalsh(jet.hessian)
        return np.max(np.abs(lam - 1.0), axis=-1)[()]
    _require_third(jet)
    if np.ndim(jet.value):
        return np.array([rigidity_residual(jet[k]) for k in range(len(jet))])
    J = eigenframe(jet)
    u1, u2 = J.gradient
    T = J.third
    r = [
        T[0, 0, 0] * u2 - T[0, 0, 1] * u1,
        T[0, 1, 1] * u2 - T[1, 1, 1] * u1,
        T[0, 0, 1] * u2 - T[0, 1, 1] * u1,
    ]
    return float(np.max(np.abs(r)))


PFUNCTIONS = ("phi", "psi", "K_weighted", "H_weighted")


@dataclass(eq=False)
class PFunctionField:
    """A P-function or weighted curvature sampled at the inside nodes of a solve.

    ``values`` is NaN off ``defined`` (the weighted curvatures are masked
    where ``|Du|`` is below the gradient floor).
    """

    which: str
    values: np.ndarray
    defined: np.ndarray
    result: object

    @property
    def grid(self):
        return self.result.grid

    def as_array(self):
        out = np.full(self.grid.shape, np.nan)
        out[self.grid.inside] = self.values
        return out

    def hessians_on_core(self, mask=None):
        """Central-difference Hessians of the field, ``(C, n, n)``.

        ``mask`` is inside-aligned and must select stencil-core nodes; the
        default is the grid's interior core.
        """
        grid = self.grid
        if mask is None:
            mask = grid.interior_core
        rows = np.nonzero(mask)[0]
        if not np.all(grid.core[grid.inside][rows]):
            raise StencilUnavailableError("field Hessians need the full 5^n stencil")
        H = _central_hessian_array(self.as_array(), grid.h, grid.dimension)
        return H[tuple(grid.nodes[rows].T)]

    def to_csv(self, path):
        write_field_csv(path, self.grid, self.values, extra={"which": self.which})


def evaluate(jet, which, gradient_floor=GRADIENT_FLOOR):
    """P-function or weighted curvature on a (stacked) jet, NaN where masked."""
    n = jet.dimension
    if which == "phi":
        return phi(jet)
    if which == "psi":
        return psi(jet)
    norm = np.linalg.norm(jet.gradient, axis=-1)
    if which == "K_weighted":
        val = _contract(adjugate(jet.hessian), jet.gradient)
    elif which == "H_weighted":
        val = _contract(sigma_k_gradient(jet.hessian, 2), jet.gradient)
    else:
        raise ValueError(f"unknown field {which!r}; expected one of {PFUNCTIONS}")
    return np.where(norm >= gradient_floor, val, np.nan)


def default_gradient_floor(result):
    return GRADIENT_FLOOR * result.grid.domain.diameter


def pfunction_field(result, which, gradient_floor=None, jets=None):
    """Evaluate a P-function (or weighted curvature) over a solve's inside nodes."""
    from .solver import solution_jets

    if gradient_floor is None:
        gradient_floor = default_gradient_floor(result)
    if jets is None:
        jets = solution_jets(result)
    vals = evaluate(jets, which, gradient_floor)
    return PFunctionField(which, vals, np.isfinite(vals), result)
