"""Icosphere orientation sampling and discrete analysis on S^2.

Provides the vertex set used to sample the orientation axis of 3D scores,
per-vertex Voronoi quadrature weights, deterministic representative rotations
R_v with R_v e_z = n_v, barycentric interpolation of directions, and heat
smoothing through the cotangent Laplace-Beltrami operator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh
from scipy.spatial import SphericalVoronoi

from .liegroup import rotation_to_direction

__all__ = ["IcoSphere", "icosphere"]


def _icosahedron():
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=float)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=int)
    return verts, faces


def _subdivide(verts, faces):
    cache: dict[tuple[int, int], int] = {}
    verts = list(verts)

    def midpoint(i, j):
        key = (min(i, j), max(i, j))
        if key not in cache:
            m = verts[i] + verts[j]
            m /= np.linalg.norm(m)
            cache[key] = len(verts)
            verts.append(m)
        return cache[key]

    new_faces = []
    for a, b, c in faces:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
    return np.array(verts), np.array(new_faces, dtype=int)


@dataclass
class IcoSphere:
    """Subdivided icosahedron sampling of S^2."""

    vertices: np.ndarray      # (V, 3) unit directions
    faces: np.ndarray         # (F, 3) vertex indices
    level: int
    weights: np.ndarray = field(init=False)        # Voronoi areas, sum 4*pi
    rotations: np.ndarray = field(init=False)      # (V, 3, 3), R_v e_z = n_v
    _face_inv: np.ndarray = field(init=False)      # (F, 3, 3) inverses
    _vert_faces: list = field(init=False)

    def __post_init__(self):
        sv = SphericalVoronoi(self.vertices)
        sv.sort_vertices_of_regions()
        self.weights = sv.calculate_areas()
        self.rotations = np.stack(
            [rotation_to_direction(n) for n in self.vertices])
        self._face_inv = np.linalg.inv(
            self.vertices[self.faces].transpose(0, 2, 1))
        vert_faces = [[] for _ in range(len(self.vertices))]
        for fi, f in enumerate(self.faces):
            for v in f:
                vert_faces[v].append(fi)
        # padded fan (valence 5 or 6) so face lookup vectorizes
        self._vert_faces = np.stack([
            np.array((fs + fs)[:6], dtype=int) for fs in vert_faces])

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def edge_length(self) -> float:
        """Typical geodesic edge length (radians), the angular grid step."""
        f = self.faces[0]
        return float(np.arccos(np.clip(
            self.vertices[f[0]] @ self.vertices[f[1]], -1, 1)))

    def antipode_index(self) -> np.ndarray:
        """Index map v -> v' with n_{v'} = -n_v (exact for the icosphere)."""
        dots = self.vertices @ self.vertices.T
        idx = np.argmin(dots, axis=1)
        if not np.allclose(self.vertices[idx], -self.vertices, atol=1e-12):
            raise RuntimeError("orientation set is not antipodally symmetric")
        return idx

    def barycentric(self, dirs: np.ndarray,
                    chunk: int = 1 << 16) -> tuple[np.ndarray, np.ndarray]:
        """Face-based barycentric interpolation data for unit directions.

        Returns (indices, weights), each (Q, 3): the vertices of the
        containing face and convex weights from central (gnomonic)
        projection, so interpolation is exact at the vertices.  The
        containing face is searched in the fan of the nearest vertex, which
        suffices on the well-shaped icosphere triangulation.
        """
        dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
        Q = len(dirs)
        idx = np.empty((Q, 3), dtype=int)
        wts = np.empty((Q, 3))
        for lo in range(0, Q, chunk):
            d = dirs[lo:lo + chunk]
            near = np.argmax(d @ self.vertices.T, axis=1)
            cand = self._vert_faces[near]                      # (q, 6)
            b = np.einsum("qfab,qb->qfa", self._face_inv[cand], d)
            s = b.sum(axis=2)
            valid = s > 1e-12
            b = np.where(valid[:, :, None], b / np.where(valid, s, 1.0)[:, :, None],
                         -np.inf)
            pick = np.argmax(b.min(axis=2), axis=1)
            rows = np.arange(len(d))
            bsel = np.clip(b[rows, pick], 0.0, None)
            idx[lo:lo + len(d)] = self.faces[cand[rows, pick]]
            wts[lo:lo + len(d)] = bsel / bsel.sum(axis=1, keepdims=True)
        return idx, wts

    def interpolate(self, values: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        """Interpolate per-vertex values (V, ...) at unit directions (Q, 3)."""
        idx, wts = self.barycentric(dirs)
        out = np.einsum("q,q...->q...", wts[:, 0], values[idx[:, 0]])
        out += np.einsum("q,q...->q...", wts[:, 1], values[idx[:, 1]])
        out += np.einsum("q,q...->q...", wts[:, 2], values[idx[:, 2]])
        return out

    def cotan_laplacian(self) -> tuple[np.ndarray, np.ndarray]:
        """Cotangent stiffness matrix W (rows sum to 0) and Voronoi areas."""
        V = self.n_vertices
        W = np.zeros((V, V))
        verts = self.vertices
        for a, b, c in self.faces:
            for (i, j, k) in ((a, b, c), (b, c, a), (c, a, b)):
                e1 = verts[i] - verts[k]
                e2 = verts[j] - verts[k]
                cot = float(e1 @ e2) / np.linalg.norm(np.cross(e1, e2))
                W[i, j] -= 0.5 * cot
                W[j, i] -= 0.5 * cot
                W[i, i] += 0.5 * cot
                W[j, j] += 0.5 * cot
        return W, self.weights

    def heat_operator(self, t: float) -> np.ndarray:
        """Dense heat-flow operator exp(-t A^-1 W) for du/dt = -A^-1 W u.

        Computed by the generalized eigendecomposition W v = lam A v, hence
        exact in time, mass conserving (sum_v A_v u_v) and positivity
        preserving up to eigensolver accuracy.
        """
        if t < 0:
            raise ValueError("heat time must be nonnegative")
        if t == 0:
            return np.eye(self.n_vertices)
        W, areas = self.cotan_laplacian()
        lam, Phi = eigh(W, np.diag(areas))
        # columns Phi are A-orthonormal: u(t) = Phi exp(-lam t) Phi^T A u(0)
        return (Phi * np.exp(-np.clip(lam, 0, None) * t)) @ Phi.T @ np.diag(areas)


_CACHE: dict[int, IcoSphere] = {}


def icosphere(level: int = 2) -> IcoSphere:
    """Icosphere with ``level`` subdivisions (12, 42, 162, 642 vertices)."""
    if level not in _CACHE:
        verts, faces = _icosahedron()
        for _ in range(level):
            verts, faces = _subdivide(verts, faces)
        _CACHE[level] = IcoSphere(verts, faces, level)
    return _CACHE[level]
