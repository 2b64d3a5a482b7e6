"""Uniform Cartesian grids over a convex domain and finite-difference jets.

Second derivatives are built from directional second differences along the
axes and the face diagonals ``e_i +/- e_j``.  When a neighbour along a
direction falls outside the domain, the stencil is shortened to the cut
point on the boundary (Shortley-Weller), where the field's Dirichlet value
is used.  On full stencils this reduces to the usual central differences,
so mixed derivatives come out as the standard four-corner formula.
"""
import csv
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations, product

import numpy as np
import scipy.sparse as sp

from .errors import GridTooCoarseError, SingularHessianError, StencilUnavailableError
from .geometry import distance_to_boundary, ray_fractions
from .symfunc import symmetrize

EXTERIOR, BOUNDARY_ADJACENT, INTERIOR = 0, 1, 2
CLASS_NAMES = {EXTERIOR: "exterior", BOUNDARY_ADJACENT: "boundary", INTERIOR: "interior"}
MIN_INTERIOR_NODES = 16
# the interior core keeps this fraction of the longest box side away from the boundary
CORE_MARGIN_FRACTION = 0.125
BAND_WIDTH = 2.0
SINGULAR_EIG = 1e-10
ON_BOUNDARY_RTOL = 1e-9


def stencil_directions(n):
    """Axis directions followed by the face diagonals ``e_i + e_j``, ``e_i - e_j``."""
    eye = np.eye(n, dtype=int)
    dirs = [eye[i] for i in range(n)]
    for i, j in combinations(range(n), 2):
        dirs.append(eye[i] + eye[j])
        dirs.append(eye[i] - eye[j])
    return np.array(dirs)


def _shift(a, offset, fill):
    """``out[idx] = a[idx + offset]`` with ``fill`` outside the array."""
    out = np.full_like(a, fill)
    src, dst = [], []
    for o, size in zip(offset, a.shape):
        o = int(o)
        if o >= 0:
            src.append(slice(o, size))
            dst.append(slice(0, size - o))
        else:
            src.append(slice(0, size + o))
            dst.append(slice(-o, size))
    out[tuple(dst)] = a[tuple(src)]
    return out


@dataclass(eq=False)
class Grid:
    """Node lattice ``origin + h * index`` classified against a domain.

    ``fractions[m, d, s]`` is the fraction of the step ``h * direction[d]``
    (s = 0: forward, s = 1: backward) from inside node ``m`` to the next
    inside node (1.0) or to the boundary cut (< 1 or exactly 1 when the
    neighbour sits on the boundary).
    """

    domain: object
    h: float
    origin: np.ndarray
    shape: tuple
    classification: np.ndarray
    directions: np.ndarray
    fractions: np.ndarray
    cut: np.ndarray
    snap_fraction: float = 0.0

    @property
    def dimension(self):
        return len(self.shape)

    @cached_property
    def inside(self):
        return self.classification != EXTERIOR

    @cached_property
    def index(self):
        idx = np.full(self.shape, -1, dtype=int)
        idx[self.inside] = np.arange(int(self.inside.sum()))
        return idx

    @cached_property
    def nodes(self):
        """Multi-indices of inside nodes, in unknown order."""
        return np.argwhere(self.inside)

    @property
    def size(self):
        return len(self.nodes)

    @cached_property
    def points(self):
        return self.coords(self.nodes)

    def coords(self, idx):
        return self.origin + self.h * np.asarray(idx, dtype=float)

    def node_class(self):
        """Classification of inside nodes, aligned with ``nodes``."""
        return self.classification[self.inside]

    @cached_property
    def core(self):
        """Inside nodes whose whole ``5^n`` neighbourhood is inside.

        Third-order jets, and discrete Hessians of derived fields whose own
        stencils are central, are available exactly here.
        """
        mask = self.inside.copy()
        for off in product(range(-2, 3), repeat=self.dimension):
            mask &= _shift(self.inside, off, False)
        return mask

    @cached_property
    def boundary_distance(self):
        """Distance from each inside node to the boundary, aligned with ``nodes``."""
        return distance_to_boundary(self.domain, self.points)

    @property
    def core_margin(self):
        return CORE_MARGIN_FRACTION * float(np.max(self.domain.upper - self.domain.lower))

    @cached_property
    def interior_core(self):
        """Inside-aligned mask: full ``5^n`` stencil and at least ``core_margin`` from the boundary.

        The fixed physical margin keeps the set compact as ``h -> 0``; finite
        differences of the solution converge uniformly there, while the
        Shortley-Weller layer next to the boundary is only first-order rough.
        """
        return self.core[self.inside] & (self.boundary_distance >= self.core_margin)

    @cached_property
    def band(self):
        """Inside-aligned mask of nodes within ``2h`` of the boundary."""
        return self.boundary_distance <= BAND_WIDTH * self.h

    @cached_property
    def operators(self):
        return StencilOperators(self)

    def nearest_node(self, x):
        idx = np.rint((np.asarray(x, dtype=float) - self.origin) / self.h).astype(int)
        return tuple(idx)


def make_grid(domain, nodes_per_axis, snap_fraction=0.0, min_interior=MIN_INTERIOR_NODES):
    """Isotropic grid over the domain's bounding box.

    ``nodes_per_axis`` nodes span the longest side; shorter sides use the same
    spacing, centred on the box.
    """
    n = domain.dimension
    nodes_per_axis = int(nodes_per_axis)
    if nodes_per_axis < 3:
        raise GridTooCoarseError("need at least 3 nodes per axis")
    extent = domain.upper - domain.lower
    h = float(extent.max()) / (nodes_per_axis - 1)
    counts = np.maximum(np.rint(extent / h).astype(int) + 1, 3)
    mid = 0.5 * (domain.lower + domain.upper)
    origin = mid - 0.5 * (counts - 1) * h
    shape = tuple(int(c) for c in counts)

    axes = [origin[i] + h * np.arange(shape[i]) for i in range(n)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    # nodes within a rounding distance of the boundary count as boundary points
    gval = domain.g(pts)
    gnorm = np.linalg.norm(domain.grad(pts), axis=-1)
    inside = gval < -ON_BOUNDARY_RTOL * h * gnorm

    longest = int(np.argmax(extent))
    line_counts = inside.sum(axis=longest)
    if line_counts.max(initial=0) < min_interior:
        raise GridTooCoarseError(
            f"only {int(line_counts.max(initial=0))} inside nodes along the longest axis; "
            f"need {min_interior}"
        )

    directions = stencil_directions(n)
    classification = np.where(inside, INTERIOR, EXTERIOR)
    nbr_inside = np.empty((len(directions), 2) + shape, dtype=bool)
    for d, vec in enumerate(directions):
        nbr_inside[d, 0] = _shift(inside, vec, False)
        nbr_inside[d, 1] = _shift(inside, -vec, False)
    all_nbrs = np.all(nbr_inside, axis=(0, 1))
    classification[inside & ~all_nbrs] = BOUNDARY_ADJACENT

    nodes = np.argwhere(inside)
    M = len(nodes)
    node_pts = pts[inside]
    cut = np.zeros((M, len(directions), 2), dtype=bool)
    for d in range(len(directions)):
        for s in range(2):
            cut[:, d, s] = ~nbr_inside[d, s][inside]
    fractions = np.ones((M, len(directions), 2))
    rows, dd, ss = np.nonzero(cut)
    if len(rows):
        sign = np.where(ss == 0, 1.0, -1.0)
        steps = h * sign[:, None] * directions[dd]
        fractions[rows, dd, ss] = ray_fractions(domain.g, node_pts[rows], steps)
    return Grid(domain, h, origin, shape, classification, directions, fractions, cut, float(snap_fraction))


class StencilOperators:
    """Sparse linear difference operators on the inside-node unknowns.

    Each operator acts as ``A @ u + B * boundary_values`` where the boundary
    term collects the cut-point contributions.  ``boundary_values`` has the
    same ``(M, D, 2)`` layout as ``Grid.fractions``.
    """

    def __init__(self, grid):
        self.grid = grid
        n = grid.dimension
        M = grid.size
        dirs = grid.directions
        self.n = n
        self._dir_index = {tuple(v): k for k, v in enumerate(dirs)}

        idx = grid.index
        nbr = np.empty((M, len(dirs), 2), dtype=int)
        for d, vec in enumerate(dirs):
            for s, sign in enumerate((1, -1)):
                shifted = _shift(idx, sign * vec, -1)
                nbr[:, d, s] = shifted[grid.inside]
        self.neighbours = nbr

        t = grid.fractions.copy()
        if grid.snap_fraction > 0:
            t = np.where(grid.cut, np.maximum(t, grid.snap_fraction), t)
        self.effective_fractions = t
        lengths = grid.h * np.linalg.norm(dirs, axis=1)
        b = t[:, :, 0] * lengths
        a = t[:, :, 1] * lengths
        rows = np.arange(M)

        # second directional differences
        self.second = []
        self.second_bc = []
        for d in range(len(dirs)):
            ad, bd = a[:, d], b[:, d]
            c0 = -2.0 / (ad * bd)
            cp = 2.0 / (bd * (ad + bd))
            cm = 2.0 / (ad * (ad + bd))
            self.second.append(self._assemble(rows, c0, cp, cm, d))
            self.second_bc.append(self._bc(cp, cm, d))

        # first derivatives along axes (three-point, possibly non-uniform)
        self.first = []
        self.first_bc = []
        for i in range(n):
            ad, bd = a[:, i], b[:, i]
            c0 = (bd - ad) / (ad * bd)
            cp = ad / (bd * (ad + bd))
            cm = -bd / (ad * (ad + bd))
            self.first.append(self._assemble(rows, c0, cp, cm, i))
            self.first_bc.append(self._bc(cp, cm, i))

        # Hessian entries as combinations of directional second differences
        self.hess = {}
        self.hess_bc = {}
        for i in range(n):
            self.hess[i, i] = self.second[i]
            self.hess_bc[i, i] = self.second_bc[i]
        for i, j in combinations(range(n), 2):
            eye = np.eye(n, dtype=int)
            dp = self._dir_index[tuple(eye[i] + eye[j])]
            dm = self._dir_index[tuple(eye[i] - eye[j])]
            self.hess[i, j] = 0.5 * (self.second[dp] - self.second[dm])
            self.hess_bc[i, j] = (dp, dm)

    def _assemble(self, rows, c0, cp, cm, d):
        M = self.grid.size
        nbr = self.neighbours[:, d, :]
        r = [rows]
        c = [rows]
        v = [c0]
        for s, coef in ((0, cp), (1, cm)):
            ok = nbr[:, s] >= 0
            ok &= ~self.grid.cut[:, d, s]
            r.append(rows[ok])
            c.append(nbr[ok, s])
            v.append(coef[ok])
        return sp.csr_matrix(
            (np.concatenate(v), (np.concatenate(r), np.concatenate(c))), shape=(M, M)
        )

    def _bc(self, cp, cm, d):
        cut = self.grid.cut[:, d, :]
        return np.where(cut[:, 0], cp, 0.0), np.where(cut[:, 1], cm, 0.0)

    def _apply_second(self, d, u, bvals):
        cp, cm = self.second_bc[d]
        out = self.second[d] @ u
        if bvals is not None:
            out = out + cp * bvals[:, d, 0] + cm * bvals[:, d, 1]
        return out

    def hessian(self, u, bvals=None):
        """Discrete Hessians ``(M, n, n)`` at all inside nodes."""
        n = self.n
        H = np.empty((len(u), n, n))
        for i in range(n):
            H[:, i, i] = self._apply_second(i, u, bvals)
        for i, j in combinations(range(n), 2):
            dp, dm = self.hess_bc[i, j]
            hij = 0.5 * (self._apply_second(dp, u, bvals) - self._apply_second(dm, u, bvals))
            H[:, i, j] = H[:, j, i] = hij
        return H

    def gradient(self, u, bvals=None):
        G = np.empty((len(u), self.n))
        for i in range(self.n):
            G[:, i] = self.first[i] @ u
            if bvals is not None:
                cp, cm = self.first_bc[i]
                G[:, i] += cp * bvals[:, i, 0] + cm * bvals[:, i, 1]
        return G

    def hessian_matrices(self):
        """Sparse matrices of the linear part of each Hessian entry, keyed by (i, j), i <= j."""
        return self.hess


@dataclass(eq=False)
class ScalarField:
    """Values on the inside nodes of a grid plus Dirichlet data at cut points."""

    grid: Grid
    values: np.ndarray
    boundary_values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.size,):
            raise ValueError("one value per inside node expected")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    @classmethod
    def dirichlet(cls, grid, values, boundary_value=0.0):
        return cls(grid, values, np.full(grid.fractions.shape, float(boundary_value)))

    def as_array(self):
        """Full grid array with NaN at exterior nodes."""
        out = np.full(self.grid.shape, np.nan)
        out[self.grid.inside] = self.values
        return out

    def hessians(self):
        if "_hess" not in self.__dict__:
            self._hess = self.grid.operators.hessian(self.values, self.boundary_values)
        return self._hess

    def gradients(self):
        if "_grad" not in self.__dict__:
            self._grad = self.grid.operators.gradient(self.values, self.boundary_values)
        return self._grad

    def to_csv(self, path, extra=None):
        write_field_csv(path, self.grid, self.values, extra=extra)


def sample_field(grid, f):
    """Sample a vectorized function at the inside nodes and at every cut point."""
    values = f(grid.points)
    bvals = np.zeros(grid.fractions.shape)
    rows, dd, ss = np.nonzero(grid.cut)
    if len(rows):
        t = grid.fractions[rows, dd, ss]
        if grid.snap_fraction > 0:
            t = np.maximum(t, grid.snap_fraction)
        sign = np.where(ss == 0, 1.0, -1.0)
        pts = grid.points[rows] + (grid.h * sign * t)[:, None] * grid.directions[dd]
        bvals[rows, dd, ss] = f(pts)
    return ScalarField(grid, values, bvals)


def write_field_csv(path, grid, values, extra=None):
    n = grid.dimension
    header = [f"x{i + 1}" for i in range(n)] + ["value", "classification"]
    if extra:
        header += list(extra)
    classes = grid.node_class()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for m, x in enumerate(grid.points):
            row = [repr(float(v)) for v in x] + [repr(float(values[m])), CLASS_NAMES[classes[m]]]
            if extra:
                row += [str(extra[k]) for k in extra]
            w.writerow(row)


@dataclass(eq=False)
class PointJet:
    """Derivatives of a scalar at a point, or a stack of points (leading axes)."""

    position: np.ndarray
    value: np.ndarray
    gradient: np.ndarray
    hessian: np.ndarray
    third: np.ndarray = None
    fourth: np.ndarray = None

    @property
    def dimension(self):
        return self.gradient.shape[-1]

    @cached_property
    def inverse_hessian(self):
        H = self.hessian
        eig = np.linalg.eigvalsh(H)
        if np.any(eig[..., 0] < SINGULAR_EIG):
            raise SingularHessianError(
                f"Hessian smallest eigenvalue {float(np.min(eig[..., 0])):.3e} below {SINGULAR_EIG}"
            )
        return symmetrize(np.linalg.inv(H))

    def __len__(self):
        return len(self.value) if np.ndim(self.value) else 1

    def __getitem__(self, k):
        pick = lambda a: None if a is None else a[k]
        return PointJet(
            pick(self.position), pick(self.value), pick(self.gradient), pick(self.hessian),
            pick(self.third), pick(self.fourth),
        )

    def rotated(self, Q):
        """Jet of ``x -> u(Q^T x)``, i.e. the same function in rotated coordinates."""
        Q = np.asarray(Q, dtype=float)
        third = None if self.third is None else np.einsum("ia,jb,kc,...abc->...ijk", Q, Q, Q, self.third)
        fourth = None
        if self.fourth is not None:
            fourth = np.einsum("ia,jb,kc,ld,...abcd->...ijkl", Q, Q, Q, Q, self.fourth)
        return PointJet(
            self.position @ Q.T, self.value, self.gradient @ Q.T,
            Q @ self.hessian @ Q.T, third, fourth,
        )


def _central_third(V, h, n):
    """Second-order central third derivatives on the full array (NaN propagates)."""
    T = np.full(V.shape + (n, n, n), np.nan)
    eye = np.eye(n, dtype=int)
    S = lambda off: _shift(V, off, np.nan)
    for i in range(n):
        ei = eye[i]
        T[..., i, i, i] = (S(2 * ei) - 2 * S(ei) + 2 * S(-ei) - S(-2 * ei)) / (2 * h**3)
        for j in range(n):
            if j == i:
                continue
            ej = eye[j]
            dii_p = S(ei + ej) - 2 * S(ej) + S(-ei + ej)
            dii_m = S(ei - ej) - 2 * S(-ej) + S(-ei - ej)
            val = (dii_p - dii_m) / (2 * h**3)
            for perm in {(i, i, j), (i, j, i), (j, i, i)}:
                T[(...,) + perm] = val
    for i, j, k in combinations(range(n), 3):
        acc = np.zeros(V.shape)
        for s in product((1, -1), repeat=3):
            acc = acc + s[0] * s[1] * s[2] * S(s[0] * eye[i] + s[1] * eye[j] + s[2] * eye[k])
        val = acc / (8 * h**3)
        for perm in set(product((i, j, k), repeat=3)):
            if sorted(perm) == [i, j, k]:
                T[(...,) + perm] = val
    return T


def _central_hessian_array(V, h, n):
    H = np.full(V.shape + (n, n), np.nan)
    eye = np.eye(n, dtype=int)
    S = lambda off: _shift(V, off, np.nan)
    for i in range(n):
        H[..., i, i] = (S(eye[i]) - 2 * V + S(-eye[i])) / h**2
    for i, j in combinations(range(n), 2):
        val = (S(eye[i] + eye[j]) - S(eye[i] - eye[j]) - S(-eye[i] + eye[j]) + S(-eye[i] - eye[j])) / (4 * h**2)
        H[..., i, j] = H[..., j, i] = val
    return H


def _central_fourth(V, h, n):
    """u_ijkl as central second differences (in k, l) of central Hessian entries."""
    H = _central_hessian_array(V, h, n)
    F = np.full(V.shape + (n, n, n, n), np.nan)
    eye = np.eye(n, dtype=int)
    for k in range(n):
        for l in range(k, n):
            S = lambda off: _shift(H, off, np.nan)
            if k == l:
                val = (S(eye[k]) - 2 * H + S(-eye[k])) / h**2
            else:
                val = (S(eye[k] + eye[l]) - S(eye[k] - eye[l]) - S(-eye[k] + eye[l]) + S(-eye[k] - eye[l])) / (4 * h**2)
            F[..., :, :, k, l] = val
            F[..., :, :, l, k] = val
    # average over index permutations; the discrete tensor is only nearly symmetric
    perms = [p for p in product(range(4), repeat=4) if len(set(p)) == 4]
    lead = V.ndim
    acc = np.zeros_like(F)
    for p in perms:
        acc += np.transpose(F, tuple(range(lead)) + tuple(lead + q for q in p))
    return acc / len(perms)


def _select(grid, nodes):
    """Normalize ``nodes`` to inside-row indices.

    Accepts None (all), a boolean mask (grid-shaped or inside-aligned), a 1-D
    array of row indices, or a 2-D array of multi-indices.
    """
    if nodes is None:
        return np.arange(grid.size)
    nodes = np.asarray(nodes)
    if nodes.dtype == bool:
        if nodes.shape == grid.shape:
            return grid.index[nodes & grid.inside]
        return np.nonzero(nodes)[0]
    if nodes.ndim == 1:
        return nodes.astype(int)
    rows = grid.index[tuple(nodes.T)]
    if np.any(rows < 0):
        raise StencilUnavailableError("requested node lies outside the domain")
    return rows


def field_jets(field, nodes=None, order=2):
    """Jets at many nodes of a field.

    Orders 2 use the (possibly Shortley-Weller) stencil operators; order 3
    adds central third derivatives and order 4 a central fourth-derivative
    tensor, both only on core nodes.
    """
    grid = field.grid
    rows = _select(grid, nodes)
    hess = field.hessians()[rows]
    grad = field.gradients()[rows]
    third = fourth = None
    if order >= 3:
        core_rows = grid.core[grid.inside]
        if not np.all(core_rows[rows]):
            raise StencilUnavailableError("third derivatives need the full 5^n stencil inside the domain")
        V = field.as_array()
        sel = tuple(grid.nodes[rows].T)
        third = _central_third(V, grid.h, grid.dimension)[sel]
        if order >= 4:
            fourth = _central_fourth(V, grid.h, grid.dimension)[sel]
    return PointJet(grid.points[rows], field.values[rows], grad, hess, third, fourth)


def jet_at(field, node, order=2):
    """Jet at a single node given by its multi-index."""
    jet = field_jets(field, np.atleast_2d(node), order)
    return jet[0]


def analytic_jet(expression, x, order=2):
    """Exact jet of a closed-form expression (see ``solver.QuadraticSolution``)."""
    x = np.asarray(x, dtype=float)
    third = expression.third(x) if order >= 3 else None
    fourth = expression.fourth(x) if order >= 4 else None
    return PointJet(x, expression.value(x), expression.gradient(x), expression.hessian(x), third, fourth)
