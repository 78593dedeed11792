"""Shared spectral-fit utilities: eigen selection, signs, degeneracy flags."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["TangentFit", "smallest_eigvec", "smallest_abs_eigvec",
           "gap_ambiguous", "sign_fix"]

AMBIGUITY_GAP = 0.05


@dataclass
class TangentFit:
    """Tangent components of an exponential curve fit, mu-normalized.

    ``ambiguous`` marks degenerate spectra (ill-defined direction);
    ``fallback`` marks mixed-sign Hessian spectra where the smallest
    absolute eigenvalue no longer solves the variational problem.
    """

    c: np.ndarray
    mu: float
    ambiguous: bool = False
    fallback: bool = False

    @property
    def c1(self) -> np.ndarray:
        d = 2 if len(self.c) == 3 else 3
        return self.c[:d]

    @property
    def c2(self) -> np.ndarray:
        d = 2 if len(self.c) == 3 else 3
        return self.c[d:]


def gap_ambiguous(lams_ascending: np.ndarray) -> bool:
    """Spectral gap between the two smallest eigenvalues, relative to the
    spectral radius (the spread-normalized variant degenerates for 2x2)."""
    lams = np.asarray(lams_ascending, dtype=float)
    scale = np.abs(lams).max()
    return bool((lams[1] - lams[0]) / (scale + 1e-30) < AMBIGUITY_GAP)


def smallest_eigvec(A: np.ndarray) -> tuple[np.ndarray, bool]:
    """Eigenvector of the smallest eigenvalue of symmetric A, with gap flag."""
    lam, vec = np.linalg.eigh(A)
    return vec[:, 0], gap_ambiguous(lam)


def smallest_abs_eigvec(A: np.ndarray) -> tuple[np.ndarray, bool, bool]:
    """Smallest-|lambda| eigenvector of symmetric A.

    Returns (vector, ambiguous, mixed_signs); mixed signs trigger the
    fallback interpretation (minimal absolute principal curvature).
    """
    lam, vec = np.linalg.eigh(A)
    order = np.argsort(np.abs(lam))
    mixed = bool(lam[0] < 0 < lam[-1])
    return vec[:, order[0]], gap_ambiguous(np.sort(np.abs(lam))), mixed


def sign_fix(c: np.ndarray, primary: int, tiebreak: int,
             tol: float = 1e-12) -> np.ndarray:
    """Deterministic orientation of a fit line: c[primary] >= 0, ties broken
    by c[tiebreak] >= 0."""
    if c[primary] < -tol or (abs(c[primary]) <= tol and c[tiebreak] < 0):
        return -c
    return c
