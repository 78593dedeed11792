"""Core algebra and geometry of the roto-translation groups SE(2) and SE(3).

Group elements, the homogeneous matrix representation, exponential curves
(closed forms for both groups), the left-invariant metric, deviation from
horizontality, curvature/torsion of spatial projections, transport of tangent
coefficients between neighboring exponential curves, and the covariant
derivative of the left Cartan connection.

Tangent coefficients are plain numpy vectors ``c`` of length ``n_d`` =
d(d+1)/2, split as a spatial part ``c[:d]`` and a rotational part ``c[d:]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GroupElement",
    "identity",
    "se2",
    "se3",
    "group_dim",
    "rotation_dim",
    "group_product",
    "inverse",
    "matrix_rep",
    "from_matrix",
    "lie_algebra_basis",
    "structure_constants",
    "exp_curve",
    "exp_se3",
    "exp_se3_batch",
    "rot2",
    "so3_generators",
    "rodrigues",
    "rotation_aligning",
    "rotation_to_direction",
    "rotations_to_directions",
    "project_rotation",
    "wrap_angle",
    "metric_matrix",
    "metric_norm",
    "deviation_from_horizontality",
    "curvature_torsion",
    "neighbor_rotation",
    "transport_coeffs",
    "covariant_derivative",
    "left_invariant_derivative",
]

EZ = np.array([0.0, 0.0, 1.0])

_ORTHO_TOL = 1e-12


def group_dim(d: int) -> int:
    """Dimension n_d of SE(d)."""
    return d * (d + 1) // 2


def rotation_dim(d: int) -> int:
    """Dimension r_d of SO(d)."""
    return (d - 1) * d // 2


def wrap_angle(theta):
    """Wrap an angle to [0, 2*pi)."""
    return np.mod(theta, 2.0 * np.pi)


def rot2(theta):
    """2x2 counterclockwise rotation matrix."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def so3_generators() -> np.ndarray:
    """Generators of so(3): Omega_j v = e_j x v, stacked as (3, 3, 3)."""
    O = np.zeros((3, 3, 3))
    O[0] = [[0, 0, 0], [0, 0, -1], [0, 1, 0]]
    O[1] = [[0, 0, 1], [0, 0, 0], [-1, 0, 0]]
    O[2] = [[0, -1, 0], [1, 0, 0], [0, 0, 0]]
    return O


_SO3_GEN = so3_generators()


@dataclass(frozen=True)
class GroupElement:
    """A rigid body motion g = (x, R) of SE(d), d in {2, 3}.

    The rotation is always stored as a d x d matrix; for d=2 the angle is
    available through :attr:`theta`, wrapped to [0, 2*pi).
    """

    x: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        R = np.asarray(self.R, dtype=float)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "R", R)
        d = x.shape[0]
        if R.shape != (d, d):
            raise ValueError(f"rotation shape {R.shape} does not match d={d}")
        err = np.abs(R.T @ R - np.eye(d)).max()
        if err > 1e-9 or np.linalg.det(R) < 0:
            raise ValueError("R is not a proper rotation")

    @property
    def d(self) -> int:
        return self.x.shape[0]

    @property
    def theta(self) -> float:
        if self.d != 2:
            raise ValueError("theta is only defined for SE(2)")
        return float(wrap_angle(np.arctan2(self.R[1, 0], self.R[0, 0])))

    @property
    def n(self) -> np.ndarray:
        """Direction R a with the reference axis a ((1,0) resp. (0,0,1))."""
        a = np.zeros(self.d)
        a[0 if self.d == 2 else 2] = 1.0
        return self.R @ a

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        return group_product(self, other)

    def inv(self) -> "GroupElement":
        return inverse(self)


def se2(x: float, y: float, theta: float) -> GroupElement:
    """SE(2) element from coordinates (x, y, theta)."""
    return GroupElement(np.array([x, y], dtype=float), rot2(theta))


def se3(x, R) -> GroupElement:
    """SE(3) element from a position and a rotation matrix."""
    return GroupElement(np.asarray(x, dtype=float), np.asarray(R, dtype=float))


def identity(d: int) -> GroupElement:
    return GroupElement(np.zeros(d), np.eye(d))


def group_product(g: GroupElement, h: GroupElement) -> GroupElement:
    """Concatenation of rigid body motions: (x,R)(x',R') = (Rx'+x, RR')."""
    if g.d != h.d:
        raise ValueError("group elements of different dimension")
    return GroupElement(g.R @ h.x + g.x, g.R @ h.R)


def inverse(g: GroupElement) -> GroupElement:
    return GroupElement(-g.R.T @ g.x, g.R.T)


def matrix_rep(g: GroupElement) -> np.ndarray:
    """Homogeneous (d+1)x(d+1) matrix [[R, x], [0, 1]]."""
    d = g.d
    M = np.eye(d + 1)
    M[:d, :d] = g.R
    M[:d, d] = g.x
    return M


def from_matrix(M: np.ndarray) -> GroupElement:
    """Inverse of :func:`matrix_rep`."""
    d = M.shape[0] - 1
    return GroupElement(M[:d, d].copy(), M[:d, :d].copy())


def lie_algebra_basis(d: int) -> np.ndarray:
    """Basis A_1..A_{n_d} of the Lie algebra in the (d+1)x(d+1) matrix rep.

    Ordering: translations along the d axes first, then rotations (the single
    planar generator for d=2; rotations about x, y, z for d=3).  This makes
    A_d the main spatial generator used by the gauge-frame construction.
    """
    n = group_dim(d)
    A = np.zeros((n, d + 1, d + 1))
    for i in range(d):
        A[i, i, d] = 1.0
    if d == 2:
        A[2, :2, :2] = [[0, -1], [1, 0]]
    elif d == 3:
        for j in range(3):
            A[3 + j, :3, :3] = _SO3_GEN[j]
    else:
        raise ValueError("only d=2 and d=3 are supported")
    return A


def structure_constants(d: int) -> np.ndarray:
    """Structure constants c[k, i, j] with [A_i, A_j] = sum_k c[k,i,j] A_k.

    Computed from the matrix representation by expanding each commutator in
    the basis (least squares on the flattened matrices).
    """
    A = lie_algebra_basis(d)
    n = A.shape[0]
    flat = A.reshape(n, -1).T
    C = np.zeros((n, n, n))
    for i in range(n):
        for j in range(n):
            comm = A[i] @ A[j] - A[j] @ A[i]
            coef, *_ = np.linalg.lstsq(flat, comm.ravel(), rcond=None)
            C[:, i, j] = np.where(np.abs(coef) < 1e-12, 0.0, coef)
    return C


def _sinc(x):
    """sin(x)/x, stable at 0."""
    return np.sinc(x / np.pi)


def _rot_series(phi):
    """Coefficients (sin p/p, (1-cos p)/p^2, (p-sin p)/p^3), stable near 0."""
    if abs(phi) < 1e-4:
        p2 = phi * phi
        return (1 - p2 / 6 + p2 * p2 / 120,
                0.5 - p2 / 24 + p2 * p2 / 720,
                1 / 6 - p2 / 120 + p2 * p2 / 5040)
    return (np.sin(phi) / phi,
            (1 - np.cos(phi)) / phi**2,
            (phi - np.sin(phi)) / phi**3)


def rodrigues(omega: np.ndarray) -> np.ndarray:
    """Matrix exponential of the so(3) element with rotation vector omega."""
    phi = np.linalg.norm(omega)
    B = np.einsum("jab,j->ab", _SO3_GEN, omega)
    a, b, _ = _rot_series(phi)
    return np.eye(3) + a * B + b * (B @ B)


def exp_se3(c: np.ndarray, t: float = 1.0) -> GroupElement:
    """Closed-form exponential exp(t sum_i c^i A_i) in SE(3).

    Rotation by Rodrigues; translation through the tangent-space integral
    W = I + (1-cos p)/p^2 B + (p - sin p)/p^3 B^2 applied to t*c1.
    """
    c = np.asarray(c, dtype=float)
    omega = t * c[3:]
    phi = np.linalg.norm(omega)
    B = np.einsum("jab,j->ab", _SO3_GEN, omega)
    a, b, w = _rot_series(phi)
    R = np.eye(3) + a * B + b * (B @ B)
    W = np.eye(3) + b * B + w * (B @ B)
    return GroupElement(W @ (t * c[:3]), R)


def exp_se3_batch(c: np.ndarray, t: float = 1.0):
    """Batched closed-form SE(3) exponential of rows of c (P, 6).

    Returns (translations (P, 3), rotations (P, 3, 3)).
    """
    c = np.asarray(c, dtype=float)
    omega = t * c[:, 3:]
    phi = np.linalg.norm(omega, axis=1)
    B = np.einsum("jab,pj->pab", _SO3_GEN, omega)
    B2 = B @ B
    small = phi < 1e-4
    ps = np.where(small, 1.0, phi)
    p2 = phi * phi
    a = np.where(small, 1 - p2 / 6 + p2 * p2 / 120, np.sin(ps) / ps)
    b = np.where(small, 0.5 - p2 / 24 + p2 * p2 / 720,
                 (1 - np.cos(ps)) / ps**2)
    w = np.where(small, 1 / 6 - p2 / 120 + p2 * p2 / 5040,
                 (ps - np.sin(ps)) / ps**3)
    eye = np.eye(3)[None]
    R = eye + a[:, None, None] * B + b[:, None, None] * B2
    W = eye + b[:, None, None] * B + w[:, None, None] * B2
    trans = np.einsum("pab,pb->pa", W, t * c[:, :3])
    return trans, R


def exp_curve(g0: GroupElement, c: np.ndarray, t: float) -> GroupElement:
    """Point of the exponential curve g0 * exp(t sum_i c^i A_i).

    For d=2 the closed-form circular spiral is used, written with the
    product identities sin(a+e)-sin(a) = 2 cos(a+e/2) sin(e/2) so that the
    c3 -> 0 straight-line limit is exact without branching.
    """
    c = np.asarray(c, dtype=float)
    if g0.d == 2:
        x0, y0, th0 = g0.x[0], g0.x[1], g0.theta
        c1, c2, c3 = c
        e = c3 * t
        # (sin(th0+e) - sin th0)/c3 = t cos(th0+e/2) sinc(e/2), etc.
        ds = t * np.cos(th0 + e / 2) * _sinc(e / 2)
        dc = -t * np.sin(th0 + e / 2) * _sinc(e / 2)
        x = x0 + c1 * ds + c2 * dc
        y = y0 - c1 * dc + c2 * ds
        return se2(x, y, wrap_angle(th0 + e))
    step = exp_se3(c, t)
    return group_product(g0, step)


def project_rotation(R: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix (polar decomposition via SVD)."""
    U, _, Vt = np.linalg.svd(R)
    S = np.eye(R.shape[0])
    S[-1, -1] = np.linalg.det(U @ Vt)
    return U @ S @ Vt


def rotation_aligning(u: np.ndarray, v: np.ndarray,
                      fallback_axis: int = 1) -> np.ndarray:
    """Rotation mapping unit u onto unit v strictly within their 2D span.

    Vectors orthogonal to span{u, v} are fixed.  For anti-parallel inputs the
    plane is ill-defined; the plane spanned by u and the coordinate axis
    ``fallback_axis`` is used (deterministic rotation by pi).
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    n = u.shape[0]
    cos_phi = float(np.dot(u, v))
    w = v - cos_phi * u
    sin_phi = np.linalg.norm(w)
    if sin_phi < 1e-14:
        if cos_phi > 0:
            return np.eye(n)
        w = np.zeros(n)
        w[fallback_axis] = 1.0
        w = w - np.dot(w, u) * u
        if np.linalg.norm(w) < 1e-14:
            w = np.zeros(n)
            w[(fallback_axis + 1) % n] = 1.0
            w = w - np.dot(w, u) * u
        w /= np.linalg.norm(w)
        return (np.eye(n) + (-2.0) * (np.outer(u, u) + np.outer(w, w))
                )  # rotation by pi in span{u, w}
    w = w / sin_phi
    return (np.eye(n)
            + sin_phi * (np.outer(w, u) - np.outer(u, w))
            + (cos_phi - 1.0) * (np.outer(u, u) + np.outer(w, w)))


def rotation_to_direction(n: np.ndarray) -> np.ndarray:
    """Deterministic representative R_n in SO(3) with R_n e_z = n.

    The minimal geodesic rotation about e_z x n; n = -e_z maps to the
    rotation by pi about e_y.
    """
    n = np.asarray(n, dtype=float)
    n = n / np.linalg.norm(n)
    return rotation_aligning(EZ, n, fallback_axis=0)


def rotations_to_directions(n: np.ndarray) -> np.ndarray:
    """Batched :func:`rotation_to_direction`: (P, 3) directions -> (P, 3, 3).

    Minimal rotations e_z -> n via Rodrigues; directions within 1e-12 of
    -e_z get the deterministic rotation by pi about e_y.
    """
    n = np.asarray(n, dtype=float)
    n = n / np.linalg.norm(n, axis=-1, keepdims=True)
    cos = np.clip(n[:, 2], -1.0, 1.0)
    axis = np.stack([-n[:, 1], n[:, 0], np.zeros(len(n))], axis=1)
    s = np.linalg.norm(axis, axis=1)
    safe = s > 1e-12
    axis[safe] /= s[safe, None]
    K = np.einsum("jab,pj->pab", _SO3_GEN, axis)
    sin = np.where(safe, s, 0.0)
    R = (np.eye(3)[None]
         + sin[:, None, None] * K
         + (1 - cos)[:, None, None] * (K @ K))
    south = ~safe & (cos < 0)
    R[south] = np.diag([-1.0, 1.0, -1.0])
    north = ~safe & (cos >= 0)
    R[north] = np.eye(3)
    return R


def metric_matrix(mu: float, d: int) -> np.ndarray:
    """Diagonal M_mu = diag(mu I_d, I_{r_d}) of the left-invariant metric."""
    if mu <= 0:
        raise ValueError("stiffness mu must be positive")
    return np.diag([mu] * d + [1.0] * rotation_dim(d))


def metric_norm(c: np.ndarray, mu: float, d: int | None = None) -> float:
    """mu-norm sqrt(mu^2 ||c1||^2 + ||c2||^2)."""
    c = np.asarray(c, dtype=float)
    if d is None:
        d = {3: 2, 6: 3}[c.shape[-1]]
    if mu <= 0:
        raise ValueError("stiffness mu must be positive")
    c1 = c[..., :d]
    c2 = c[..., d:]
    return np.sqrt(mu**2 * np.sum(c1 * c1, axis=-1) + np.sum(c2 * c2, axis=-1))


def deviation_from_horizontality(c: np.ndarray, d: int | None = None) -> float:
    """Angle chi = arccos(|c1 . a| / ||c1||) in [0, pi/2]."""
    c = np.asarray(c, dtype=float)
    if d is None:
        d = {3: 2, 6: 3}[c.shape[0]]
    c1 = c[:d]
    nrm = np.linalg.norm(c1)
    if nrm == 0:
        raise ValueError("zero spatial velocity: chi undefined")
    axis = c1[0] if d == 2 else c1[2]
    return float(np.arccos(np.clip(abs(axis) / nrm, 0.0, 1.0)))


def curvature_torsion(c: np.ndarray) -> tuple[float, float]:
    """Constant |kappa| and |tau| of the spatial spiral of an SE(3) curve.

    |kappa| = ||c1 x c2|| / ||c1||^2 and |tau| = |c1 . c2| |kappa| / ||c1||.
    """
    c = np.asarray(c, dtype=float)
    c1, c2 = c[:3], c[3:]
    n1 = np.linalg.norm(c1)
    if n1 == 0:
        raise ValueError("zero spatial velocity: curvature undefined")
    kappa = np.linalg.norm(np.cross(c1, c2)) / n1**2
    tau = abs(np.dot(c1, c2)) * kappa / n1
    return float(kappa), float(tau)


def neighbor_rotation(g: GroupElement, h: GroupElement) -> np.ndarray:
    """Rotation R~_{h^-1 g} transporting coefficients from g to h.

    Block diagonal with spatial block (R')^T R; the rotational block is the
    same matrix for d=3 and the trivial 1x1 identity for d=2.
    """
    if g.d != h.d:
        raise ValueError("group elements of different dimension")
    Q = h.R.T @ g.R
    n = group_dim(g.d)
    out = np.eye(n)
    out[:g.d, :g.d] = Q
    if g.d == 3:
        out[3:, 3:] = Q
    return out


def transport_coeffs(c: np.ndarray, g: GroupElement, h: GroupElement) -> np.ndarray:
    """Coefficients R~_{h^-1 g} c of the neighboring curve departing at h."""
    return neighbor_rotation(g, h) @ np.asarray(c, dtype=float)


def covariant_derivative(velocities: np.ndarray, Y: np.ndarray,
                         dt: float, d: int) -> np.ndarray:
    """Covariant derivative of Y along a curve, left Cartan connection.

    ``velocities`` and ``Y`` hold left-invariant components sampled at
    uniform parameter steps ``dt``, shape (M, n_d).  Returns per-sample
    components of nabla_{gamma'} Y = (y'^k - sum_ij c^k_ij gamma'^i y^j) A_k.
    """
    velocities = np.asarray(velocities, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if velocities.shape != Y.shape:
        raise ValueError("velocity and field sample counts differ")
    C = structure_constants(d)
    ydot = np.gradient(Y, dt, axis=0)
    corr = np.einsum("kij,mi,mj->mk", C, velocities, Y)
    return ydot - corr


def left_invariant_derivative(field, g, i: int, eps: float = 1e-4):
    """Left-invariant derivative A_i of a scalar field at g.

    Central difference (field(g e^{eps A_i}) - field(g e^{-eps A_i}))/(2 eps).
    ``field`` is either a callable on group elements (analytic path, exact
    sample points) or a sampled orientation score, in which case the grid
    machinery with interpolation and eps = half a grid step is used.
    """
    if callable(field):
        n = group_dim(g.d)
        e_i = np.zeros(n)
        e_i[i - 1] = 1.0
        gp = exp_curve(g, e_i, eps)
        gm = exp_curve(g, e_i, -eps)
        return (field(gp) - field(gm)) / (2.0 * eps)
    from . import gridops

    return gridops.left_invariant_derivative_point(field, g, i)
