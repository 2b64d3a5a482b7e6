"""Convex domains given as strict sublevel sets ``{g < 0}`` of a convex function.

Each domain carries its defining function together with the gradient and
Hessian of ``g``; boundary principal curvatures are the eigenvalues of the
Hessian of ``g`` restricted to the tangent space, divided by ``|Dg|``.
"""
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateNormalError, RegionError, UnboundedRadiusError

# boundary sampling defaults for curvature extremes
DEFAULT_SAMPLING = {2: 2048, 3: 10_000}
# fixed angular offset so refined 2D samplings stay nested and avoid the axes
ANGLE_OFFSET = np.pi / 2048
BOUNDARY_RTOL = 1e-9
NORMAL_ATOL = 1e-12
FLAT_RTOL = 1e-8


@dataclass(frozen=True, eq=False)
class ConvexDomain:
    """Bounded convex region ``{x : g(x) < 0}``.

    ``g``, ``grad`` and ``hess`` are vectorized over leading axes: they take
    points of shape ``(..., n)`` and return ``(...)``, ``(..., n)`` and
    ``(..., n, n)``.  ``center`` must lie inside the domain; every ray from it
    leaves the domain exactly once.
    """

    dimension: int
    kind: str
    g: Callable
    grad: Callable
    hess: Callable
    center: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    params: dict = field(default_factory=dict)

    @property
    def diameter(self):
        return float(np.linalg.norm(self.upper - self.lower))

    def describe(self):
        """JSON-friendly description (the run-config domain block)."""
        out = {"kind": self.kind}
        for key, val in self.params.items():
            out[key] = val.tolist() if isinstance(val, np.ndarray) else val
        return out


def _as_points(x, n):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != n:
        raise ValueError(f"expected points with last axis {n}, got shape {x.shape}")
    return x


def ellipsoid(center, semi_axes):
    """Ellipsoid ``sum ((x_i - c_i) / a_i)^2 < 1``."""
    c = np.asarray(center, dtype=float)
    a = np.asarray(semi_axes, dtype=float)
    if c.shape != a.shape or c.ndim != 1 or c.size < 2:
        raise ValueError("center and semi_axes must be 1-d with equal length >= 2")
    if np.any(a <= 0):
        raise ValueError("semi-axes must be positive")
    n = c.size
    inv2 = 1.0 / a**2

    def g(x):
        y = _as_points(x, n) - c
        return np.sum(y * y * inv2, axis=-1) - 1.0

    def grad(x):
        return 2.0 * (_as_points(x, n) - c) * inv2

    def hess(x):
        x = _as_points(x, n)
        return np.broadcast_to(np.diag(2.0 * inv2), x.shape[:-1] + (n, n)).copy()

    kind = "ball" if np.allclose(a, a[0], rtol=0, atol=0) else "ellipsoid"
    params = {"center": c.copy()}
    if kind == "ball":
        params["radius"] = float(a[0])
    else:
        params["semi_axes"] = a.copy()
    return ConvexDomain(n, kind, g, grad, hess, c.copy(), c - a, c + a, params)


def ball(center, radius):
    c = np.asarray(center, dtype=float)
    if radius <= 0:
        raise ValueError("radius must be positive")
    return ellipsoid(c, np.full(c.size, float(radius)))


def superellipse(exponent=4.0, scale=1.0, center=(0.0, 0.0)):
    """Planar superellipse ``|x/s|^p + |y/s|^p < 1`` (p >= 2)."""
    p = float(exponent)
    s = float(scale)
    if p < 2:
        raise ValueError("superellipse exponent must be >= 2")
    if s <= 0:
        raise ValueError("scale must be positive")
    c = np.asarray(center, dtype=float)
    if c.shape != (2,):
        raise ValueError("superellipse is two-dimensional")

    def g(x):
        y = np.abs(_as_points(x, 2) - c) / s
        return np.sum(y**p, axis=-1) - 1.0

    def grad(x):
        y = (_as_points(x, 2) - c) / s
        return p / s * np.sign(y) * np.abs(y) ** (p - 1)

    def hess(x):
        y = np.abs(_as_points(x, 2) - c) / s
        d = p * (p - 1) / s**2 * y ** (p - 2)
        H = np.zeros(y.shape[:-1] + (2, 2))
        H[..., 0, 0] = d[..., 0]
        H[..., 1, 1] = d[..., 1]
        return H

    params = {"exponent": p, "scale": s}
    if np.any(c != 0):
        params["center"] = c.copy()
    return ConvexDomain(2, "superellipse", g, grad, hess, c.copy(), c - s, c + s, params)


def generic(g, dimension, lower, upper, center=None, grad=None, hess=None):
    """Domain from an arbitrary vectorized convex ``g``.

    Missing derivatives fall back to central differences with steps scaled
    to the bounding box.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    n = int(dimension)
    c = 0.5 * (lower + upper) if center is None else np.asarray(center, dtype=float)
    diam = float(np.linalg.norm(upper - lower))
    eye = np.eye(n)

    if grad is None:
        eps = 1e-6 * diam

        def grad(x):
            x = _as_points(x, n)
            return np.stack(
                [(g(x + eps * eye[i]) - g(x - eps * eye[i])) / (2 * eps) for i in range(n)],
                axis=-1,
            )

    if hess is None:
        eps2 = 1e-4 * diam
        _grad = grad

        def hess(x):
            x = _as_points(x, n)
            cols = [(_grad(x + eps2 * eye[j]) - _grad(x - eps2 * eye[j])) / (2 * eps2) for j in range(n)]
            H = np.stack(cols, axis=-1)
            return 0.5 * (H + np.swapaxes(H, -1, -2))

    if g(c) >= 0:
        raise ValueError("center must lie inside the domain")
    return ConvexDomain(n, "generic", g, grad, hess, c, lower, upper, {})


def from_config(block):
    """Build a domain from the JSON run-config block."""
    kind = block.get("kind")
    if kind == "ball":
        return ball(block["center"], block["radius"])
    if kind == "ellipsoid":
        return ellipsoid(block["center"], block["semi_axes"])
    if kind == "superellipse":
        return superellipse(block.get("exponent", 4.0), block.get("scale", 1.0), block.get("center", (0.0, 0.0)))
    raise ValueError(f"unsupported domain kind in config: {kind!r}")


def contains(domain, x):
    """True iff ``g(x) < 0`` (the boundary itself is excluded)."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("point must be finite")
    out = domain.g(x) < 0
    return bool(out) if np.ndim(out) == 0 else out


def ray_fractions(g, origins, steps, iterations=80):
    """Smallest ``t`` in (0, 1] with ``g(origin + t * step) = 0``, by bisection.

    Requires ``g(origin) < 0 <= g(origin + step)``.  Vectorized over rows.
    """
    origins = np.atleast_2d(origins)
    steps = np.atleast_2d(steps)
    lo = np.zeros(len(origins))
    hi = np.ones(len(origins))
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        inside = g(origins + mid[:, None] * steps) < 0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return hi


def boundary_along_rays(domain, directions):
    """Boundary points hit by rays from ``domain.center`` along ``directions``."""
    d = np.atleast_2d(np.asarray(directions, dtype=float))
    d = d / np.linalg.norm(d, axis=1, keepdims=True)
    if domain.kind in ("ball", "ellipsoid"):
        a = domain.upper - domain.center
        t = 1.0 / np.sqrt(np.sum((d / a) ** 2, axis=1))
        return domain.center + t[:, None] * d
    if domain.kind == "superellipse":
        p, s = domain.params["exponent"], domain.params["scale"]
        t = s / np.sum(np.abs(d) ** p, axis=1) ** (1.0 / p)
        return domain.center + t[:, None] * d
    reach = 2.0 * domain.diameter
    t = ray_fractions(domain.g, np.broadcast_to(domain.center, d.shape), reach * d)
    return domain.center + (reach * t)[:, None] * d


def sample_directions(n, count):
    """Deterministic, well-spread unit vectors.

    In 2D the angles ``offset + 2 pi k / count`` are nested under doubling of
    ``count``; in 3D a Fibonacci lattice is used.
    """
    if n == 2:
        t = ANGLE_OFFSET + 2 * np.pi * np.arange(count) / count
        return np.column_stack([np.cos(t), np.sin(t)])
    if n == 3:
        k = np.arange(count) + 0.5
        z = 1 - 2 * k / count
        rho = np.sqrt(1 - z * z)
        phi = np.pi * (1 + 5**0.5) * k
        return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
    raise ValueError("boundary sampling is implemented for n = 2, 3")


def boundary_samples(domain, count=None):
    count = DEFAULT_SAMPLING[domain.dimension] if count is None else int(count)
    return boundary_along_rays(domain, sample_directions(domain.dimension, count))


def tangent_bases(normals):
    """Orthonormal tangent frames ``(..., n, n-1)`` for unit normals ``(..., n)``.

    Columns of the Householder reflection sending the normal to +/- e_n.
    """
    nu = np.asarray(normals, dtype=float)
    n = nu.shape[-1]
    e = np.zeros(n)
    e[-1] = 1.0
    flip = nu[..., -1:] > 0
    w = np.where(flip, nu + e, nu - e)
    ww = np.sum(w * w, axis=-1)[..., None, None]
    Q = np.eye(n) - 2.0 * w[..., :, None] * w[..., None, :] / np.where(ww > 0, ww, 1.0)
    return Q[..., :, : n - 1]


def level_set_curvatures(gradient, hessian, atol=NORMAL_ATOL):
    """Principal curvatures of the level set through a point, ascending.

    Orientation: the normal is ``gradient / |gradient|`` pointing to larger
    values, so sublevel sets of convex functions get nonnegative curvatures.
    """
    gradient = np.asarray(gradient, dtype=float)
    hessian = np.asarray(hessian, dtype=float)
    norm = np.linalg.norm(gradient, axis=-1)
    if np.any(norm < atol):
        raise DegenerateNormalError("gradient of the defining function vanishes")
    T = tangent_bases(gradient / norm[..., None])
    S = np.swapaxes(T, -1, -2) @ hessian @ T
    S = 0.5 * (S + np.swapaxes(S, -1, -2))
    return np.linalg.eigvalsh(S) / norm[..., None]


def boundary_principal_curvatures(domain, x, rtol=BOUNDARY_RTOL):
    """Principal curvatures of the boundary at ``x`` (``n - 1`` values, ascending)."""
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(domain.g(x)) > rtol * domain.diameter):
        raise ValueError("point is not on the boundary")
    return level_set_curvatures(domain.grad(x), domain.hess(x))


def kappa_extremes(domain, boundary_sampling=None):
    """``(min over the boundary of kappa_min, max over the boundary of kappa_max)``."""
    pts = boundary_samples(domain, boundary_sampling)
    k = level_set_curvatures(domain.grad(pts), domain.hess(pts))
    return float(k[:, 0].min()), float(k[:, -1].max())


def comparison_radii(domain, boundary_sampling=None, flat_rtol=FLAT_RTOL):
    """Radii ``(r, R) = (1 / max kappa_M, 1 / min kappa_m)`` of the comparison balls."""
    kmin, kmax = kappa_extremes(domain, boundary_sampling)
    if kmin <= flat_rtol / domain.diameter:
        raise UnboundedRadiusError(f"minimal boundary curvature {kmin:.3e} is numerically zero")
    return 1.0 / kmax, 1.0 / kmin


def boundary_curvature_summary(domain, boundary_sampling=None):
    """Extremes of kappa_m, kappa_M, the Gauss curvature and the (summed) mean curvature."""
    pts = boundary_samples(domain, boundary_sampling)
    k = level_set_curvatures(domain.grad(pts), domain.hess(pts))
    gauss = np.prod(k, axis=1)
    mean = np.sum(k, axis=1)
    return {
        "kappa_m_min": float(k[:, 0].min()),
        "kappa_M_max": float(k[:, -1].max()),
        "gauss_max": float(gauss.max()),
        "mean_max": float(mean.max()),
    }


def closest_boundary_points(domain, points, count=None):
    """Approximate closest boundary points and distances via a dense boundary sample.

    The nearest sample is refined by a few closest-point iterations on ``g = 0``.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if count is None:
        count = 16_384 if domain.dimension == 2 else 200_000
    samples = boundary_samples(domain, count)
    _, idx = cKDTree(samples).query(points)
    p = samples[idx].copy()
    for _ in range(4):
        # tangential slide toward the point, then back onto the surface
        gr = domain.grad(p)
        nu = gr / np.linalg.norm(gr, axis=1, keepdims=True)
        v = points - p
        p = p + v - np.sum(v * nu, axis=1, keepdims=True) * nu
        for _ in range(3):
            gr = domain.grad(p)
            p = p - (domain.g(p) / np.sum(gr * gr, axis=1))[:, None] * gr
    d_ref = np.linalg.norm(points - p, axis=1)
    d_kd = np.linalg.norm(points - samples[idx], axis=1)
    use_kd = d_kd < d_ref
    p[use_kd] = samples[idx][use_kd]
    return p, np.minimum(d_ref, d_kd)


def distance_to_boundary(domain, points, count=None):
    """Approximate distance from points to the boundary."""
    return closest_boundary_points(domain, points, count)[1]


def sampled_convexity(domain, per_axis=41, atol=1e-10):
    """Smallest Hessian eigenvalue of ``g`` over a lattice of points in the closure.

    A nonnegative result (up to ``atol``) certifies convexity at the samples.
    """
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in zip(domain.lower, domain.upper)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, domain.dimension)
    pts = pts[domain.g(pts) <= atol]
    return float(np.linalg.eigvalsh(domain.hess(pts)).min())


@dataclass(frozen=True)
class SublevelRegion:
    """The region ``{x in Omega : u(x) < c}`` for a threshold ``min u < c < 0``."""

    parent: ConvexDomain
    threshold: float
    min_value: float

    def __post_init__(self):
        if not self.min_value < self.threshold < 0:
            raise RegionError(
                f"threshold c={self.threshold} must lie in (min u, 0) = ({self.min_value}, 0)"
            )
