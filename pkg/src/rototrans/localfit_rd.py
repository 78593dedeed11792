"""Classical gauge-frame machinery in the image domain R^d.

Structure matrix and Hessian from Gaussian derivatives (FFT multiplication
with analytic kernels, s = sigma^2/2 convention) and the first/second-order
straight-line fits obtained from their spectral decompositions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "FitResult",
    "gaussian_derivative",
    "structure_matrix_rd",
    "first_order_fit_rd",
    "hessian_rd",
    "second_order_fit_rd",
    "fix_sign",
    "AMBIGUITY_GAP",
]

AMBIGUITY_GAP = 0.05


@dataclass
class FitResult:
    """Unit fit direction plus a degeneracy flag."""

    vector: np.ndarray
    ambiguous: bool


def _omega_grids(shape, spacing=1.0):
    return np.meshgrid(*[2 * np.pi * np.fft.fftfreq(n, d=spacing)
                         for n in shape], indexing="ij")


def gaussian_derivative(f: np.ndarray, s: float, orders) -> np.ndarray:
    """Derivative of G_s * f via Fourier multipliers (i w)^orders e^{-s|w|^2}."""
    f = np.asarray(f, dtype=float)
    omegas = _omega_grids(f.shape)
    mult = np.exp(-s * sum(w**2 for w in omegas)).astype(complex)
    for w, order in zip(omegas, orders):
        mult *= (1j * w) ** order
    return np.fft.ifftn(np.fft.fftn(f) * mult).real


def _smooth(f, s):
    if s <= 0:
        return np.asarray(f, dtype=float)
    return gaussian_derivative(f, s, (0,) * f.ndim)


def structure_matrix_rd(f: np.ndarray, s: float, rho: float) -> np.ndarray:
    """S^{s,rho} = G_rho * grad^s f (grad^s f)^T, shape (*f.shape, d, d)."""
    f = np.asarray(f, dtype=float)
    d = f.ndim
    grads = [gaussian_derivative(f, s, tuple(int(i == ax) for i in range(d)))
             for ax in range(d)]
    S = np.empty(f.shape + (d, d))
    for i in range(d):
        for j in range(i, d):
            S[..., i, j] = S[..., j, i] = _smooth(grads[i] * grads[j], rho)
    return S


def hessian_rd(f: np.ndarray, s: float) -> np.ndarray:
    """Gaussian Hessian of f at scale s, shape (*f.shape, d, d)."""
    f = np.asarray(f, dtype=float)
    d = f.ndim
    H = np.empty(f.shape + (d, d))
    for i in range(d):
        for j in range(i, d):
            orders = tuple(int(ax == i) + int(ax == j) for ax in range(d))
            H[..., i, j] = H[..., j, i] = gaussian_derivative(f, s, orders)
    return H


def fix_sign(v: np.ndarray) -> np.ndarray:
    """Deterministic sign: largest-magnitude component made positive."""
    i = int(np.argmax(np.abs(v)))
    return -v if v[i] < 0 else v


def _gap_flag(lams_sorted: np.ndarray) -> bool:
    # gap between the two smallest eigenvalues relative to the spectral
    # radius; the d=2 spread-normalized variant is degenerate (always 1)
    scale = np.abs(lams_sorted).max()
    return (lams_sorted[1] - lams_sorted[0]) / (scale + 1e-30) < AMBIGUITY_GAP


def first_order_fit_rd(f: np.ndarray, s: float, rho: float, x) -> FitResult:
    """Smallest-eigenvalue eigenvector of the structure matrix at pixel x."""
    S = structure_matrix_rd(f, s, rho)[tuple(np.atleast_1d(x))]
    lam, vec = np.linalg.eigh(S)
    return FitResult(fix_sign(vec[:, 0]), _gap_flag(lam))


def second_order_fit_rd(f: np.ndarray, s: float, x) -> FitResult:
    """Smallest-|eigenvalue| eigenvector of the Gaussian Hessian at pixel x."""
    H = hessian_rd(f, s)[tuple(np.atleast_1d(x))]
    lam, vec = np.linalg.eigh(H)
    order = np.argsort(np.abs(lam))
    return FitResult(fix_sign(vec[:, order[0]]),
                     _gap_flag(np.sort(np.abs(lam))))
