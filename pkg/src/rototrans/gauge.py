"""Locally adaptive (gauge) frames from exponential curve fits.

The frame {B_i} is the left-invariant frame rotated by R^c = R2 R1 and
normalized by M_mu^-1: R1 rotates the spatial reference axis (a, 0) onto
(mu ||c1|| a, c2) in their plane, R2 rotates that onto M_mu c in their
plane.  The main spatial frame vector (index 1 for d=2, index d for d=3)
then carries exactly the fitted tangent c, and for horizontal fits the
other spatial generators stay spatial.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .liegroup import group_dim, metric_matrix, rotation_aligning

__all__ = ["GaugeFrame", "gauge_frame", "gauge_frame_se2", "gauge_frame_sed",
           "gauge_frame_field", "main_index"]


def main_index(d: int) -> int:
    """Row of the frame matrix holding the fitted direction (0-based)."""
    return 0 if d == 2 else d - 1


@dataclass
class GaugeFrame:
    """Adapted orthonormal frame at one point.

    ``matrix`` rows are the left-invariant components of the frame vectors,
    i.e. matrix = (R^c)^T M_mu^-1; row ``main_index(d)`` equals c exactly.
    """

    c: np.ndarray
    mu: float
    rotation: np.ndarray           # R^c in SO(n_d)
    degenerate: bool = False

    @property
    def d(self) -> int:
        return 2 if len(self.c) == 3 else 3

    @property
    def matrix(self) -> np.ndarray:
        n = len(self.c)
        Minv = np.diag([1 / self.mu] * self.d + [1.0] * (n - self.d))
        return self.rotation.T @ Minv

    def vector(self, i: int) -> np.ndarray:
        """Left-invariant components of B_i (1-based index)."""
        return self.matrix[i - 1]


def _reference(d: int) -> np.ndarray:
    u = np.zeros(group_dim(d))
    u[main_index(d)] = 1.0
    return u


def gauge_frame(c: np.ndarray, mu: float) -> GaugeFrame:
    """Construct the gauge frame for a mu-normalized tangent c.

    A zero spatial part leaves the deviation angle undefined; the
    un-adapted normalized frame is returned with the degenerate flag.
    """
    c = np.asarray(c, dtype=float)
    d = 2 if len(c) == 3 else 3
    n = len(c)
    M = metric_matrix(mu, d)
    nrm = np.linalg.norm(M @ c)
    if nrm == 0:
        raise ValueError("zero tangent")
    c = c / nrm
    c1, c2 = c[:d], c[d:]
    if np.linalg.norm(c1) < 1e-12:
        return GaugeFrame(c, mu, np.eye(n), degenerate=True)
    u0 = _reference(d)
    v1 = np.concatenate([mu * np.linalg.norm(c1) * (u0[:d] / 1.0), c2])
    v2 = M @ c
    R1 = rotation_aligning(u0, v1)
    R2 = rotation_aligning(v1, v2)
    return GaugeFrame(c, mu, R2 @ R1)


def gauge_frame_se2(c: np.ndarray, mu: float) -> GaugeFrame:
    """SE(2) gauge frame (two planar rotations by nu and chi)."""
    if len(np.asarray(c)) != 3:
        raise ValueError("expected an SE(2) tangent of length 3")
    return gauge_frame(c, mu)


def gauge_frame_sed(c: np.ndarray, mu: float) -> GaugeFrame:
    """SE(3) gauge frame via the general in-plane construction."""
    if len(np.asarray(c)) != 6:
        raise ValueError("expected an SE(3) tangent of length 6")
    return gauge_frame(c, mu)


def _rotations_aligning_batch(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Batched in-plane rotations mapping unit rows of u onto rows of v."""
    P, n = u.shape
    cos = np.einsum("pi,pi->p", u, v)
    w = v - cos[:, None] * u
    sin = np.linalg.norm(w, axis=1)
    ok = sin > 1e-14
    w[ok] /= sin[ok, None]
    eye = np.broadcast_to(np.eye(n), (P, n, n)).copy()
    wu = np.einsum("pi,pj->pij", w, u)
    uu = np.einsum("pi,pj->pij", u, u)
    ww = np.einsum("pi,pj->pij", w, w)
    R = (eye + sin[:, None, None] * (wu - np.swapaxes(wu, 1, 2))
         + (cos - 1)[:, None, None] * (uu + ww))
    # parallel rows: identity; anti-parallel: rotation by pi via fallback axis
    degen = ~ok
    if degen.any():
        for p in np.where(degen)[0]:
            R[p] = rotation_aligning(u[p], v[p])
    return R


def gauge_frame_field(c_field: np.ndarray, mu: float):
    """Vectorized gauge frames for a field of tangents.

    ``c_field``: (..., n_d) mu-normalized tangents.  Returns (frames,
    degenerate): frames (..., n_d, n_d) with rows = left-invariant
    components of B_1..B_n, degenerate marking zero spatial parts (which
    get the un-adapted normalized frame).
    """
    shape = c_field.shape[:-1]
    n = c_field.shape[-1]
    d = 2 if n == 3 else 3
    C = c_field.reshape(-1, n).astype(float)
    M = metric_matrix(mu, d)
    nrm = np.linalg.norm(C @ M, axis=1)
    nrm = np.where(nrm == 0, 1.0, nrm)
    C = C / nrm[:, None]
    c1n = np.linalg.norm(C[:, :d], axis=1)
    degenerate = c1n < 1e-12
    u0 = np.broadcast_to(_reference(d), C.shape).copy()
    v1 = np.concatenate([(mu * c1n)[:, None] * u0[:, :d], C[:, d:]], axis=1)
    v2 = C @ M
    safe = ~degenerate
    R = np.broadcast_to(np.eye(n), (len(C), n, n)).copy()
    if safe.any():
        R1 = _rotations_aligning_batch(u0[safe], v1[safe])
        R2 = _rotations_aligning_batch(v1[safe], v2[safe])
        R[safe] = R2 @ R1
    Minv = np.diag([1 / mu] * d + [1.0] * (n - d))
    frames = np.einsum("pba,bc->pac", R, Minv)
    return (frames.reshape(shape + (n, n)),
            degenerate.reshape(shape))
