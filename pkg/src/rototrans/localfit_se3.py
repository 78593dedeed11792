"""Exponential curve fits on SE(3) and the quotient R^3 x S^2.

Structure tensors and Hessians are accumulated per icosphere vertex with the
group-convolution weights and frame conjugations of the neighboring-curve
transport; fits are constrained spectral problems (c6 = 0 always, the
stabilizer direction carries no information on lifted data).  The two-fold
algorithms produce torsion-free fits: spatial velocity at g, horizontal
angular fit at g_new, transport back.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import gridops
from .fitting import TangentFit, gap_ambiguous, smallest_abs_eigvec
from .lifting import OrientationScore, gaussian_gradient, group_gaussian_smooth
from .liegroup import (EZ, GroupElement, exp_curve, metric_matrix,
                       rotations_to_directions, se3)
from .sphere import IcoSphere

__all__ = [
    "SE3TensorStack",
    "SE3TensorField",
    "ProjectedCurveFit",
    "structure_tensor_se3",
    "hessian_se3",
    "tensor_at_rotation",
    "first_order_fit_se3",
    "second_order_fit_se3",
    "factorized_second_order",
    "twofold_first_order",
    "twofold_second_order",
    "project_fit",
    "check_zalpha_equivariance",
    "zalpha",
    "twofold_first_order_field",
]


def zalpha(alpha: float) -> np.ndarray:
    """Block rotation Z_alpha = diag(R_{ez,alpha}, R_{ez,alpha}) in SO(6)."""
    c, s = np.cos(alpha), np.sin(alpha)
    R = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])
    Z = np.zeros((6, 6))
    Z[:3, :3] = Z[3:, 3:] = R
    return Z


def _blockdiag(Q: np.ndarray) -> np.ndarray:
    Z = np.zeros(Q.shape[:-2] + (6, 6))
    Z[..., :3, :3] = Q
    Z[..., 3:, 3:] = Q
    return Z


@dataclass
class SE3TensorStack:
    """Per-orientation 6x6 tensors at one spatial location."""

    values: np.ndarray          # (V, 6, 6)
    sphere: IcoSphere
    mu: float
    kind: str                   # structure | hessian | hessian_factorized

    def at_rotation(self, R: np.ndarray) -> np.ndarray:
        return tensor_at_rotation(self.values, self.sphere, R)


@dataclass
class SE3TensorField:
    """Full-grid tensors (V, nx, ny, nz, 6, 6) plus metadata."""

    values: np.ndarray
    sphere: IcoSphere
    mu: float
    kind: str
    scales: dict

    def stack_at(self, ix: int, iy: int, iz: int) -> SE3TensorStack:
        return SE3TensorStack(
            np.ascontiguousarray(self.values[:, ix, iy, iz], dtype=float),
            self.sphere, self.mu, self.kind)


def tensor_at_rotation(values: np.ndarray, sphere: IcoSphere,
                       R: np.ndarray) -> np.ndarray:
    """Tensor at an arbitrary representative R from per-vertex tensors.

    Spherical barycentric interpolation with frame alignment: each vertex
    tensor is conjugated by blockdiag(Q, Q), Q = R_w^T R, before averaging.
    Exact at the canonical vertices and exactly stabilizer-equivariant,
    T(R h_alpha) = Z_alpha^T T(R) Z_alpha.
    """
    n = np.asarray(R, dtype=float) @ EZ
    idx, wts = sphere.barycentric(n[None, :])
    out = np.zeros((6, 6))
    for m in range(3):
        w = idx[0, m]
        Rt = _blockdiag(sphere.rotations[w].T @ R)
        out += wts[0, m] * (Rt.T @ values[w] @ Rt)
    return out


def _angular_weights(sphere: IcoSphere, rho_o: float, truncate: float = 3.0):
    """Per-vertex-pair weights w[v, v'] of the S^2 part of G_rho.

    Voronoi quadrature areas times a Gaussian in geodesic angle with the
    heat convention sigma = sqrt(2 rho_o), truncated at 3 sigma and
    normalized to sum 1 over v' for every v.
    """
    V = sphere.n_vertices
    if rho_o <= 0:
        return np.eye(V)
    sig = np.sqrt(2 * rho_o)
    dots = np.clip(sphere.vertices @ sphere.vertices.T, -1.0, 1.0)
    beta = np.arccos(dots)
    w = np.where(beta <= truncate * sig,
                 np.exp(-beta**2 / (2 * sig**2)), 0.0)
    w = w * sphere.weights[None, :]
    return w / w.sum(axis=1, keepdims=True)


def _pair_conjugations(sphere: IcoSphere) -> np.ndarray:
    """Spatial blocks Q[v', v] = R_{v'}^T R_v of the transport rotations."""
    R = sphere.rotations
    return np.einsum("pba,qbc->pqac", R, R)  # (v', v, 3, 3)


def structure_tensor_se3(score: OrientationScore, s, rho, mu: float,
                         mode: str = "reflect",
                         positions: np.ndarray | None = None):
    """Structure tensor of a lifted 3D score.

    With ``positions`` (Q, 3 integer voxel indices) only those locations are
    evaluated and a list of :class:`SE3TensorStack` is returned; otherwise
    the full (V, nx, ny, nz, 6, 6) float32 field.  Row and column 6 are
    zeroed: on lifted data the stabilizer direction spans the null space.
    """
    sphere = score.sphere
    V = sphere.n_vertices
    grad = gaussian_gradient(score, s, mu, mode=mode)   # (6, V, ...)
    rho_p, rho_o = rho
    sig_p = np.sqrt(2 * rho_p)
    wang = _angular_weights(sphere, rho_o)
    Q = _pair_conjugations(sphere)
    iu = np.triu_indices(6)
    vol_shape = score.data.shape[1:]
    if positions is None:
        out = np.zeros((V,) + vol_shape + (6, 6), dtype=np.float32)
    else:
        positions = np.asarray(positions, dtype=int)
        out = np.zeros((len(positions), V, 6, 6))
    for vp in range(V):
        g = grad[:, vp]                                  # (6, nx, ny, nz)
        O = np.empty((21,) + vol_shape)
        for m, (i, j) in enumerate(zip(*iu)):
            O[m] = g[i] * g[j]
        if sig_p > 0:
            O = gridops.spatial_gaussian(O, sig_p, mode=mode)
        M = np.empty(vol_shape + (6, 6))
        M[..., iu[0], iu[1]] = np.moveaxis(O, 0, -1)
        M[..., iu[1], iu[0]] = np.moveaxis(O, 0, -1)
        if positions is not None:
            M = M[tuple(positions.T)]                    # (Q, 6, 6)
        Mflat = M.reshape(-1, 36)
        for v in range(V):
            w = wang[v, vp]
            if w == 0:
                continue
            # Rt^T M Rt on flattened components: M_flat @ kron(Rt, Rt)
            Rt = _blockdiag(Q[vp, v])
            K = w * np.kron(Rt, Rt)
            contrib = (Mflat @ K).reshape(M.shape)
            if positions is None:
                out[v] += contrib.astype(np.float32)
            else:
                out[:, v] += contrib
    out[..., 5, :] = 0.0
    out[..., :, 5] = 0.0
    scales = dict(s=tuple(s), rho=tuple(rho))
    if positions is None:
        return SE3TensorField(out, sphere, mu, "structure", scales)
    return [SE3TensorStack(out[q], sphere, mu, "structure")
            for q in range(len(positions))]


def _sample_quotient(data, sphere, pos, dirs, mode):
    return gridops.se3_sample(data, sphere, pos, dirs, mode)


def hessian_se3(score: OrientationScore, s, mode: str = "reflect",
                positions: np.ndarray | None = None, mu: float = 1.0,
                factorized: bool = False, vertices=None):
    """Non-symmetric Hessian H_ij = A_j A_i of the smoothed lifted score.

    Nested central differences of interpolated samples at
    g exp(+-eps A_j) exp(+-eps' A_i); eps is half a grid step (spatial) or
    half an icosphere edge (angular).  The sample offset and direction are
    constant per vertex, so each of the four samples is one combination of
    orientation layers followed by one interpolating shift.  Row 6 vanishes
    identically on lifted data.  ``factorized`` mirrors the lower triangle
    onto the upper one (the symmetric Hessian of the factorized fit).
    """
    from scipy.ndimage import map_coordinates

    sphere = score.sphere
    V = sphere.n_vertices
    data = group_gaussian_smooth(score, s, mode=mode).real
    vol_shape = data.shape[1:]
    eps = [0.5 * score.spacing] * 3 + [0.5 * sphere.edge_length] * 3
    full = positions is None
    if not full:
        positions = np.asarray(positions, dtype=float)
    P = int(np.prod(vol_shape)) if full else len(positions)
    out = np.zeros((V, P, 6, 6), dtype=np.float32 if full else np.float64)
    basis = np.eye(6)
    ndmode = {"reflect": "reflect", "wrap": "grid-wrap", "nearest": "nearest"}[mode]

    def sample(offset, ndir):
        idx, wts = sphere.barycentric(ndir[None])
        layer = np.einsum("m,m...->...", wts[0], data[idx[0]])
        if full:
            return gridops._shift_layer(layer, offset / score.spacing,
                                        mode).reshape(-1)
        pts = (positions + offset / score.spacing).T
        return map_coordinates(layer, pts, order=1, mode=ndmode,
                               prefilter=False)

    for v in (range(V) if vertices is None else vertices):
        g0 = se3(np.zeros(3), sphere.rotations[v])
        for j in range(6):
            for i in range(6):
                if i == 5:
                    continue  # A_6 of a lifted scalar is identically zero
                acc = np.zeros(P)
                for tsign, usign, sgn in ((1, 1, 1), (1, -1, -1),
                                          (-1, 1, -1), (-1, -1, 1)):
                    gstep = exp_curve(g0, basis[j], tsign * eps[j])
                    gstep = exp_curve(gstep, basis[i], usign * eps[i])
                    acc += sgn * sample(gstep.x, gstep.R @ EZ)
                out[v, :, i, j] = acc / (4 * eps[i] * eps[j])
    if factorized:
        for a, b in zip(*np.tril_indices(6)):
            out[..., b, a] = out[..., a, b]
    kind = "hessian_factorized" if factorized else "hessian"
    if full:
        field = out.reshape((V,) + vol_shape + (6, 6))
        return SE3TensorField(field, sphere, mu, kind, dict(s=tuple(s)))
    return [SE3TensorStack(out[:, q], sphere, mu, kind) for q in range(P)]


def _constrained_abs_fit(B: np.ndarray, keep: list[int]):
    """Smallest-|lambda| eigenvector of B restricted to coordinates keep."""
    sub = B[np.ix_(keep, keep)]
    u, amb, mixed = smallest_abs_eigvec(sub)
    full = np.zeros(B.shape[0])
    full[keep] = u
    return full, amb, mixed


def _finish_se3(c: np.ndarray, mu: float, ambiguous: bool,
                fallback: bool = False) -> TangentFit:
    if c[2] < 0 or (abs(c[2]) < 1e-12 and c[3] < 0):
        c = -c
    return TangentFit(c, mu, ambiguous=ambiguous, fallback=fallback)


def first_order_fit_se3(stack: SE3TensorStack, R: np.ndarray,
                        mu: float | None = None) -> TangentFit:
    """Smallest-nonzero-eigenvalue fit of the structure tensor, c6 = 0."""
    mu = stack.mu if mu is None else mu
    S = stack.at_rotation(R)
    M = metric_matrix(mu, 3)
    B = M @ S @ M
    keep = [0, 1, 2, 3, 4]
    lam, vec = np.linalg.eigh(B[np.ix_(keep, keep)])
    u = np.zeros(6)
    u[keep] = vec[:, 0]
    amb = gap_ambiguous(lam)
    return _finish_se3(np.linalg.solve(M, u), mu, amb)


def second_order_fit_se3(stack: SE3TensorStack, R: np.ndarray,
                         mu: float) -> TangentFit:
    """Constrained smallest-|lambda| fit of the symmetrized sum Hessian."""
    H = stack.at_rotation(R)
    Minv = np.linalg.inv(metric_matrix(mu, 3))
    B = 0.5 * Minv @ (H + H.T) @ Minv
    u, amb, mixed = _constrained_abs_fit(B, [0, 1, 2, 3, 4])
    return _finish_se3(Minv @ u, mu, amb, fallback=mixed)


def factorized_second_order(stack: SE3TensorStack, R: np.ndarray,
                            mu: float) -> TangentFit:
    """Constrained fit of the factorized (lower-triangle) symmetric Hessian."""
    if stack.kind != "hessian_factorized":
        raise ValueError("stack must be a factorized Hessian")
    H = stack.at_rotation(R)
    Minv = np.linalg.inv(metric_matrix(mu, 3))
    B = Minv @ H @ Minv
    u, amb, mixed = _constrained_abs_fit(B, [0, 1, 2, 3, 4])
    return _finish_se3(Minv @ u, mu, amb, fallback=mixed)


@dataclass
class ProjectedCurveFit:
    """Projected exponential curve fit t -> (x(t), n(t)) on R^3 x S^2.

    Direct fits carry c6 = 0; two-fold fits instead record the horizontal
    coefficients ``horizontal_c`` (c1 = c2 = c6 = 0) they were transported
    from, which makes the projection well-defined and the torsion exactly
    zero even though the transported c may have c6 != 0.
    """

    base: GroupElement
    c: np.ndarray
    mu: float
    horizontal_c: np.ndarray | None = None

    def __post_init__(self):
        if self.horizontal_c is None:
            if abs(self.c[5]) > 1e-10:
                raise ValueError("projected curve fits require c6 = 0")
        else:
            h = self.horizontal_c
            if max(abs(h[0]), abs(h[1]), abs(h[5])) > 1e-10:
                raise ValueError("horizontal coefficients must have "
                                 "c1 = c2 = c6 = 0")

    def sample(self, ts: np.ndarray):
        xs = np.empty((len(ts), 3))
        ns = np.empty((len(ts), 3))
        for m, t in enumerate(np.asarray(ts, dtype=float)):
            g = exp_curve(self.base, self.c, t)
            xs[m] = g.x
            ns[m] = g.R @ EZ
        return xs, ns


def project_fit(g: GroupElement, c: np.ndarray, mu: float = 1.0
                ) -> ProjectedCurveFit:
    """Project an SE(3) exponential curve fit to positions and orientations."""
    return ProjectedCurveFit(g, np.asarray(c, dtype=float), mu)


def _spatial_step(stack: SE3TensorStack, R: np.ndarray, mu: float,
                  rule: str):
    """Step 1b: optimal spatial velocity, ||c1|| = 1/mu, in the frame of R."""
    T = stack.at_rotation(R)
    if rule == "structure":
        B = T[:3, :3]
        lam, vec = np.linalg.eigh(B)
        u, amb, mixed = vec[:, 0], gap_ambiguous(lam), False
    else:
        B = 0.5 * (T[:3, :3] + T[:3, :3].T)
        u, amb, mixed = smallest_abs_eigvec(B)
    if u[2] < 0 or (abs(u[2]) < 1e-12 and u[0] < 0):
        u = -u
    return u / mu, amb, mixed


def _horizontal_step(stack: SE3TensorStack, R_new: np.ndarray, mu: float,
                     rule: str):
    """Step 2a: horizontal fit (c1 = c2 = c6 = 0) at the relocated point."""
    T = stack.at_rotation(R_new)
    M = metric_matrix(mu, 3)
    if rule == "structure":
        B = (M @ T @ M)[np.ix_([2, 3, 4], [2, 3, 4])]
        lam, vec = np.linalg.eigh(B)
        u, amb, mixed = vec[:, 0], gap_ambiguous(lam), False
    else:
        Minv = np.linalg.inv(M)
        B = (0.5 * Minv @ (T + T.T) @ Minv)[np.ix_([2, 3, 4], [2, 3, 4])]
        u, amb, mixed = smallest_abs_eigvec(B)
    if u[0] < 0 or (abs(u[0]) < 1e-12 and u[1] < 0):
        u = -u
    c_new = np.zeros(6)
    c_new[2] = u[0] / mu
    c_new[3] = u[1]
    c_new[4] = u[2]
    return c_new, amb, mixed


def _twofold(stack: SE3TensorStack, R: np.ndarray, mu: float, rule: str,
             x=None):
    c1, amb1, mix1 = _spatial_step(stack, R, mu, rule)
    n_new = R @ c1
    n_new = n_new / np.linalg.norm(n_new)
    R_new = rotations_to_directions(n_new[None])[0]
    c_new, amb2, mix2 = _horizontal_step(stack, R_new, mu, rule)
    Q = R.T @ R_new
    c_final = _blockdiag(Q) @ c_new
    fit = TangentFit(c_final, mu, ambiguous=amb1 or amb2,
                     fallback=mix1 or mix2)
    base = se3(np.zeros(3) if x is None else x, R)
    return fit, ProjectedCurveFit(base, c_final, mu, horizontal_c=c_new)


def twofold_first_order(stack: SE3TensorStack, R: np.ndarray,
                        mu: float | None = None, x=None):
    """Torsion-free first-order fit: spatial step, horizontal step, transport.

    Returns (fit, projected curve); the output satisfies ||c||_mu = 1 and
    has exactly zero torsion (c1 . c2 = 0 is preserved by the block
    transport).
    """
    mu = stack.mu if mu is None else mu
    if stack.kind != "structure":
        raise ValueError("two-fold first order expects a structure tensor")
    return _twofold(stack, R, mu, "structure", x)


def twofold_second_order(stack: SE3TensorStack, R: np.ndarray, mu: float,
                         x=None):
    """Two-fold flow with the Hessian substituted for the structure tensor."""
    if stack.kind not in ("hessian", "hessian_factorized"):
        raise ValueError("two-fold second order expects a Hessian stack")
    return _twofold(stack, R, mu, "hessian", x)


def check_zalpha_equivariance(fit_fn, g: GroupElement, alpha: float) -> float:
    """Residual ||c*(g h_alpha) - Z_alpha^T c*(g)|| of a fit operation."""
    c_g = np.asarray(fit_fn(g), dtype=float)
    Rz = zalpha(alpha)[:3, :3]
    g_rot = se3(g.x, g.R @ Rz)
    c_rot = np.asarray(fit_fn(g_rot), dtype=float)
    return float(np.linalg.norm(c_rot - zalpha(alpha).T @ c_g))


def twofold_first_order_field(field: SE3TensorField, mu: float | None = None):
    """Vectorized two-fold first-order fits at every (vertex, voxel).

    Returns (c, ambiguous, fallback): c of shape (V, nx, ny, nz, 6) with
    ||c||_mu = 1 and exactly zero torsion.
    """
    sphere = field.sphere
    mu = field.mu if mu is None else mu
    V = sphere.n_vertices
    vol_shape = field.values.shape[1:4]
    S = field.values.reshape(V, -1, 6, 6)
    nvox = S.shape[1]
    # step 1: spatial blocks, smallest eigenvector, ||c1|| = 1/mu
    lam, vec = np.linalg.eigh(S[..., :3, :3].astype(np.float64))
    u = vec[..., :, 0]
    flip = (u[..., 2] < 0) | ((np.abs(u[..., 2]) < 1e-12) & (u[..., 0] < 0))
    u = np.where(flip[..., None], -u, u)
    scale1 = np.abs(lam).max(axis=-1)
    amb1 = (lam[..., 1] - lam[..., 0]) / (scale1 + 1e-30) < 0.05
    n_new = np.einsum("vab,vpb->vpa", sphere.rotations, u)
    # step 2: conjugated barycentric tensor at n_new, horizontal fit
    flat_n = n_new.reshape(-1, 3)
    idx, wts = sphere.barycentric(flat_n)
    R_new = rotations_to_directions(flat_n)
    T = np.zeros((V * nvox, 3, 3))
    keep = np.array([2, 3, 4])
    vox = np.tile(np.arange(nvox), V)
    for m in range(3):
        w = idx[:, m]
        Q = np.einsum("pba,pbc->pac", sphere.rotations[w], R_new)
        Rt = _blockdiag(Q)
        Sw = S[w, vox].astype(np.float64)
        full = np.einsum("pba,pbc,pcd->pad", Rt, Sw, Rt)
        T += wts[:, m, None, None] * full[:, keep[:, None], keep[None, :]]
    Mk = np.diag([mu, 1.0, 1.0])
    B = np.einsum("ab,pbc,cd->pad", Mk, T, Mk)
    lam2, vec2 = np.linalg.eigh(B)
    u2 = vec2[..., :, 0]
    flip = (u2[..., 0] < 0) | ((np.abs(u2[..., 0]) < 1e-12) & (u2[..., 1] < 0))
    u2 = np.where(flip[..., None], -u2, u2)
    scale2 = np.abs(lam2).max(axis=-1)
    amb2 = (lam2[..., 1] - lam2[..., 0]) / (scale2 + 1e-30) < 0.05
    c_new = np.zeros((V * nvox, 6))
    c_new[:, 2] = u2[:, 0] / mu
    c_new[:, 3] = u2[:, 1]
    c_new[:, 4] = u2[:, 2]
    Rv = np.repeat(sphere.rotations, nvox, axis=0)
    Qb = _blockdiag(np.einsum("pba,pbc->pac", Rv, R_new))
    c = np.einsum("pab,pb->pa", Qb, c_new)
    c = c.reshape((V,) + vol_shape + (6,))
    ambiguous = (amb1.reshape((V,) + vol_shape)
                 | amb2.reshape((V,) + vol_shape))
    fallback = np.zeros_like(ambiguous)
    return c, ambiguous, fallback
