"""Exponential curve fits on SE(2).

First-order fits from the group structure tensor, and two second-order fits
from the non-symmetric Hessian of the smoothed score: the symmetric sum and
the group-averaged symmetric product.  All three reduce to spectral
decompositions of mu-rescaled 3x3 matrices per grid point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import gridops
from .fitting import TangentFit, sign_fix, smallest_abs_eigvec, smallest_eigvec
from .lifting import OrientationScore, gaussian_gradient, group_gaussian_smooth
from .liegroup import GroupElement, metric_matrix

__all__ = [
    "SE2TensorField",
    "structure_tensor_se2",
    "hessian_se2",
    "product_hessian_tensor_se2",
    "first_order_fit_se2",
    "second_order_fit_sum_se2",
    "second_order_fit_product_se2",
    "fit_field_se2",
    "group_average_tensor_se2",
]


@dataclass
class SE2TensorField:
    """Per-(theta, x, y) 3x3 matrices with their construction metadata."""

    values: np.ndarray          # (N, nx, ny, 3, 3)
    thetas: np.ndarray
    mu: float
    kind: str                   # structure | hessian | hessian_product
    scales: dict

    @property
    def symmetric(self) -> bool:
        return self.kind != "hessian"

    def at(self, g) -> np.ndarray:
        return self.values[grid_index(self.values.shape[:3], g)]


def grid_index(shape, g) -> tuple[int, int, int]:
    """Nearest grid node (k, ix, iy) of a group element or index triple."""
    if isinstance(g, GroupElement):
        N = shape[0]
        k = int(np.rint(g.theta / (2 * np.pi / N))) % N
        ix = int(np.rint(g.x[0]))
        iy = int(np.rint(g.x[1]))
        return k, ix, iy
    return tuple(g)


def group_average_tensor_se2(P: np.ndarray, thetas: np.ndarray,
                             rho: tuple[float, float],
                             mode: str = "reflect") -> np.ndarray:
    """Group convolution of a symmetric matrix field with G_rho.

    S(g) = sum_h G_rho(h^-1 g) Rt^T P(h) Rt with Rt = R~_{h^-1 g}; the
    conjugation depends only on the angle offset, so the average is a
    spatially smoothed, angularly reweighted sum of conjugated layers.
    Angular weights are truncated at 3 sigma and renormalized.
    """
    rho_p, rho_o = rho
    N = len(thetas)
    dth = 2 * np.pi / N
    M = P
    if rho_p > 0:
        M = gridops.spatial_gaussian(P, np.sqrt(2 * rho_p), mode=mode,
                                     spatial_axes=(1, 2))
    if rho_o <= 0:
        return M.copy()
    sig_o = np.sqrt(2 * rho_o)
    w = gridops.periodic_gaussian_kernel(N, sig_o)
    offsets = [m for m in range(N)
               if min(m, N - m) * dth <= 3 * sig_o or m == 0]
    wsum = sum(w[m] for m in offsets)
    shape = M.shape
    flat = np.ascontiguousarray(M).reshape(N, -1, 9)
    out = np.zeros_like(flat)
    for m in offsets:
        Q = np.eye(3)
        Q[:2, :2] = [[np.cos(m * dth), -np.sin(m * dth)],
                     [np.sin(m * dth), np.cos(m * dth)]]
        # Q^T M Q on flattened components: M_flat @ kron(Q, Q)
        K = (w[m] / wsum) * np.kron(Q, Q)
        out += np.roll(flat, m, axis=0) @ K
    return out.reshape(shape)


def structure_tensor_se2(score: OrientationScore, s, rho, mu: float,
                         mode: str = "reflect") -> SE2TensorField:
    """Structure tensor: group-averaged rotated gradient outer products."""
    grad = gaussian_gradient(score, s, mu, mode=mode)
    P = np.einsum("ikxy,jkxy->kxyij", grad, grad)
    S = group_average_tensor_se2(P, score.thetas, rho, mode=mode)
    return SE2TensorField(S, score.thetas, mu, "structure",
                          dict(s=tuple(s), rho=tuple(rho)))


def hessian_se2(score: OrientationScore, s, mode: str = "reflect"
                ) -> SE2TensorField:
    """Non-symmetric Hessian H_ij = A_j A_i of the smoothed score."""
    V = group_gaussian_smooth(score, s, mode=mode).real
    D = gridops.se2_derivative_stack(V, score.thetas, score.spacing, mode)
    H = np.empty(V.shape + (3, 3))
    for i in range(3):
        Dij = gridops.se2_derivative_stack(D[i], score.thetas, score.spacing,
                                           mode)
        for j in range(3):
            H[..., i, j] = Dij[j]
    return SE2TensorField(H, score.thetas, 1.0, "hessian", dict(s=tuple(s)))


def product_hessian_tensor_se2(score: OrientationScore, s, rho, mu: float,
                               mode: str = "reflect") -> SE2TensorField:
    """Group average of H^T M_{mu^-2} H (symmetric PSD by construction)."""
    H = hessian_se2(score, s, mode=mode).values
    minv2 = np.array([mu**-2, mu**-2, 1.0])
    P = np.einsum("...ai,a,...aj->...ij", H, minv2, H)
    S = group_average_tensor_se2(P, score.thetas, rho, mode=mode)
    return SE2TensorField(S, score.thetas, mu, "hessian_product",
                          dict(s=tuple(s), rho=tuple(rho)))


def _finish(c: np.ndarray, mu: float, ambiguous: bool,
            fallback: bool = False) -> TangentFit:
    return TangentFit(sign_fix(c, primary=0, tiebreak=2), mu,
                      ambiguous=ambiguous, fallback=fallback)


def first_order_fit_se2(T: SE2TensorField, g, mu: float | None = None
                        ) -> TangentFit:
    """Minimizer of the structure-tensor energy over ||c||_mu = 1."""
    mu = T.mu if mu is None else mu
    M = metric_matrix(mu, 2)
    u, amb = smallest_eigvec(M @ T.at(g) @ M)
    return _finish(np.diag(1 / np.diag(M)) @ u, mu, amb)


def second_order_fit_sum_se2(H: SE2TensorField, g, mu: float) -> TangentFit:
    """Smallest-|lambda| eigenvector of the rescaled symmetrized Hessian."""
    A = H.at(g)
    Minv = np.diag([1 / mu, 1 / mu, 1.0])
    B = 0.5 * Minv @ (A + A.T) @ Minv
    u, amb, mixed = smallest_abs_eigvec(B)
    return _finish(Minv @ u, mu, amb, fallback=mixed)


def second_order_fit_product_se2(score_or_field, s=None, rho=None,
                                 mu: float | None = None, g=None,
                                 mode: str = "reflect") -> TangentFit:
    """Smallest-eigenvalue eigenvector of the averaged product Hessian.

    Accepts either a precomputed ``hessian_product`` tensor field or the
    score plus scales (the spec's direct signature).
    """
    if isinstance(score_or_field, SE2TensorField):
        T = score_or_field
        mu = T.mu if mu is None else mu
    else:
        T = product_hessian_tensor_se2(score_or_field, s, rho, mu, mode=mode)
    Minv = np.diag([1 / mu, 1 / mu, 1.0])
    B = Minv @ T.at(g) @ Minv
    u, amb = smallest_eigvec(B)
    return _finish(Minv @ u, mu, amb)


def fit_field_se2(T: SE2TensorField, mu: float | None = None,
                  rule: str | None = None):
    """Vectorized fit over the whole grid.

    Returns (c_field, ambiguous, fallback) with c_field of shape
    (N, nx, ny, 3), ||c||_mu = 1 and the SE(2) sign convention applied.
    ``rule`` defaults to the natural rule for the field kind: smallest
    eigenvalue for PSD tensors, smallest absolute eigenvalue for the
    symmetrized Hessian.
    """
    mu = T.mu if mu is None else mu
    if rule is None:
        rule = "abs" if T.kind == "hessian" else "min"
    A = T.values
    if T.kind == "hessian":
        A = 0.5 * (A + np.swapaxes(A, -1, -2))
    scale = np.array([1 / mu, 1 / mu, 1.0])
    if T.kind == "structure":
        B = np.einsum("a,...ab,b->...ab", 1 / scale, A, 1 / scale)
    else:
        B = np.einsum("a,...ab,b->...ab", scale, A, scale)
    lam, vec = np.linalg.eigh(B)
    if rule == "min":
        pick = np.zeros(lam.shape[:-1], dtype=int)
        fallback = np.zeros(lam.shape[:-1], dtype=bool)
    else:
        pick = np.argmin(np.abs(lam), axis=-1)
        fallback = (lam[..., 0] < 0) & (lam[..., -1] > 0)
    u = np.take_along_axis(vec, pick[..., None, None], axis=-1)[..., 0]
    lam_sorted = np.sort(np.abs(lam), axis=-1) if rule == "abs" else lam
    lam_scale = np.abs(lam).max(axis=-1)
    ambiguous = (lam_sorted[..., 1] - lam_sorted[..., 0]) / (lam_scale + 1e-30) < 0.05
    c = u * scale
    nrm = np.sqrt(mu**2 * np.sum(c[..., :2] ** 2, -1) + c[..., 2] ** 2)
    c /= np.maximum(nrm, 1e-30)[..., None]
    flip = (c[..., 0] < 0) | ((np.abs(c[..., 0]) < 1e-12) & (c[..., 2] < 0))
    c = np.where(flip[..., None], -c, c)
    return c, ambiguous, fallback
