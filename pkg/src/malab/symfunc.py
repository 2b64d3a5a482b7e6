"""Elementary symmetric functions of symmetric matrices.

All functions accept a single ``(n, n)`` array or a stack ``(..., n, n)`` and
broadcast over the leading axes.  Nothing here calls an eigensolver:
``sigma_k`` comes from power sums via Newton's identities and the derivative
matrices from the Cayley-Hamilton expansion, so both are polynomial in the
entries and free of eigenvalue-ordering noise.
"""
from math import comb

import numpy as np

from .errors import NotPositiveDefiniteError

PD_PIVOT_RTOL = 1e-12


def symmetrize(W):
    W = np.asarray(W, dtype=float)
    return 0.5 * (W + np.swapaxes(W, -1, -2))


def _power_sums(W, kmax):
    """tr(W^j) for j = 1..kmax, stacked on the last axis."""
    out = []
    P = W
    for j in range(kmax):
        if j:
            P = P @ W
        out.append(np.trace(P, axis1=-2, axis2=-1))
    return np.stack(out, axis=-1)


def sigma_all(W):
    """Return ``[sigma_0, ..., sigma_n]`` on the last axis."""
    W = np.asarray(W, dtype=float)
    n = W.shape[-1]
    p = _power_sums(W, n)
    s = [np.ones(W.shape[:-2])]
    for k in range(1, n + 1):
        acc = np.zeros(W.shape[:-2])
        for i in range(1, k + 1):
            acc = acc + (-1) ** (i - 1) * s[k - i] * p[..., i - 1]
        s.append(acc / k)
    return np.stack(s, axis=-1)


def sigma_k(W, k):
    """k-th elementary symmetric function of the eigenvalues of ``W``.

    ``sigma_0 = 1``, ``sigma_n = det W`` and ``sigma_k = 0`` for ``k > n``.
    """
    W = np.asarray(W, dtype=float)
    n = W.shape[-1]
    if k < 0:
        raise ValueError(f"k must be nonnegative, got {k}")
    if k > n:
        return np.zeros(W.shape[:-2])[()]
    if n <= 3:
        # closed forms; identical to the power-sum route but cheaper
        if k == 0:
            return np.ones(W.shape[:-2])[()]
        if k == 1:
            return np.trace(W, axis1=-2, axis2=-1)[()]
        if k == n:
            return _det_small(W)[()]
        tr = np.trace(W, axis1=-2, axis2=-1)
        return (0.5 * (tr**2 - np.einsum("...ij,...ji->...", W, W)))[()]
    return sigma_all(W)[..., k][()]


def _det_small(W):
    n = W.shape[-1]
    if n == 1:
        return W[..., 0, 0]
    if n == 2:
        return W[..., 0, 0] * W[..., 1, 1] - W[..., 0, 1] * W[..., 1, 0]
    return (
        W[..., 0, 0] * (W[..., 1, 1] * W[..., 2, 2] - W[..., 1, 2] * W[..., 2, 1])
        - W[..., 0, 1] * (W[..., 1, 0] * W[..., 2, 2] - W[..., 1, 2] * W[..., 2, 0])
        + W[..., 0, 2] * (W[..., 1, 0] * W[..., 2, 1] - W[..., 1, 1] * W[..., 2, 0])
    )


def sigma_k_gradient(W, k):
    """Matrix of partial derivatives d sigma_k(W) / d w_ij.

    Uses ``sum_{j<k} (-1)^j sigma_{k-1-j}(W) W^j``.  For ``k = 1`` this is the
    identity, for ``k = 2`` it is ``tr(W) I - W``, for ``k = n`` the adjugate.
    """
    W = np.asarray(W, dtype=float)
    n = W.shape[-1]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in 1..{n}, got {k}")
    if k == n == 2:
        # same code path as the adjugate, so sigma_n-based quantities agree bitwise
        return adjugate(W)
    s = sigma_all(W) if n > 3 else None
    eye = np.broadcast_to(np.eye(n), W.shape)
    G = np.zeros_like(W)
    P = eye
    for j in range(k):
        if j:
            P = P @ W
        sig = s[..., k - 1 - j] if s is not None else sigma_k(W, k - 1 - j)
        G = G + (-1) ** j * np.asarray(sig)[..., None, None] * P
    return G


def adjugate(W):
    """Adjugate (transposed cofactor matrix); valid for singular ``W`` too."""
    W = np.asarray(W, dtype=float)
    n = W.shape[-1]
    if n == 2:
        A = np.empty_like(W)
        A[..., 0, 0] = W[..., 1, 1]
        A[..., 1, 1] = W[..., 0, 0]
        A[..., 0, 1] = -W[..., 0, 1]
        A[..., 1, 0] = -W[..., 1, 0]
        return A
    if n == 3:
        A = np.empty_like(W)
        for i in range(3):
            for j in range(3):
                r = [a for a in range(3) if a != j]
                c = [b for b in range(3) if b != i]
                minor = (
                    W[..., r[0], c[0]] * W[..., r[1], c[1]]
                    - W[..., r[0], c[1]] * W[..., r[1], c[0]]
                )
                A[..., i, j] = (-1) ** (i + j) * minor
        return A
    return sigma_k_gradient(W, n)


def cholesky_pivots(W):
    """Pivots of an unpivoted LDL^T factorization (vectorized, small n)."""
    W = np.array(W, dtype=float)
    n = W.shape[-1]
    L = np.zeros_like(W)
    d = np.zeros(W.shape[:-1])
    for j in range(n):
        dj = W[..., j, j] - np.einsum("...k,...k,...k->...", L[..., j, :j], L[..., j, :j], d[..., :j])
        d[..., j] = dj
        safe = np.where(dj != 0, dj, 1.0)
        for i in range(j + 1, n):
            lij = (
                W[..., i, j]
                - np.einsum("...k,...k,...k->...", L[..., i, :j], L[..., j, :j], d[..., :j])
            ) / safe
            L[..., i, j] = lij
    return d


def is_positive_definite(W, rtol=PD_PIVOT_RTOL):
    """Boolean (array) test: every pivot exceeds ``rtol`` times the largest diagonal entry."""
    W = np.asarray(W, dtype=float)
    d = cholesky_pivots(W)
    scale = np.max(np.abs(np.diagonal(W, axis1=-2, axis2=-1)), axis=-1)
    return np.all(d > rtol * scale[..., None], axis=-1) & (scale > 0)


def invert_spd(W):
    """Inverse of a symmetric positive definite matrix (or stack)."""
    W = symmetrize(W)
    if not np.all(is_positive_definite(W)):
        raise NotPositiveDefiniteError("matrix is not positive definite")
    return symmetrize(np.linalg.inv(W))


def newton_margin(W):
    """sigma_2(W) - C(n, 2) sigma_n(W)^(2/n); nonnegative on the positive definite cone."""
    W = symmetrize(W)
    if not np.all(is_positive_definite(W)):
        raise NotPositiveDefiniteError("Newton margin needs a positive definite matrix")
    n = W.shape[-1]
    s2 = sigma_k(W, 2)
    if n == 2:
        # sigma_2 via the trace formula, sigma_n via the determinant formula
        tr = np.trace(W, axis1=-2, axis2=-1)
        s2 = 0.5 * (tr**2 - np.einsum("...ij,...ji->...", W, W))
    return (s2 - comb(n, 2) * np.asarray(sigma_k(W, n)) ** (2.0 / n))[()]


def sigma_k_gradient_derivative(W, E, k):
    """Directional derivative of ``sigma_k_gradient(W, k)`` along the symmetric direction ``E``."""
    W = np.asarray(W, dtype=float)
    E = np.asarray(E, dtype=float)
    n = W.shape[-1]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in 1..{n}, got {k}")
    powers = [np.broadcast_to(np.eye(n), W.shape)]
    for _ in range(k - 1):
        powers.append(powers[-1] @ W)
    out = np.zeros(np.broadcast_shapes(W.shape, E.shape))
    for j in range(k):
        m = k - 1 - j
        if m >= 1:
            dsig = np.einsum("...ij,...ji->...", sigma_k_gradient(W, m), E)
            out = out + (-1) ** j * dsig[..., None, None] * powers[j]
        if j >= 1:
            sig = np.asarray(sigma_k(W, m))
            dP = sum(powers[a] @ E @ powers[j - 1 - a] for a in range(j))
            out = out + (-1) ** j * sig[..., None, None] * dP
    return out
