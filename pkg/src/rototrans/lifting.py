"""Invertible orientation scores and Gaussian analysis on the lifted domain.

2D images are lifted with complex cake wavelets built in the Fourier domain:
B-spline wedges over the angle, a flat radial pass-band with a Gaussian taper
at the Nyquist edge, and a high-pass factor that removes the DC component of
every kernel.  Summation of the wedges tiles the pass-band, so the adjoint
with 1/M_psi normalization reconstructs band-limited images near-exactly.

3D images are lifted with an axially symmetric difference-of-anisotropic-
Gaussians line detector evaluated analytically in the Fourier domain (the
exact 3D cake construction is out of scope); reconstruction is not claimed
for d=3.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import gridops
from .sphere import IcoSphere, icosphere

__all__ = [
    "CakeStack",
    "OrientationScore",
    "MultiScaleScore",
    "cakewavelet_stack_2d",
    "orientation_score_2d",
    "reconstruct_2d",
    "scale_list",
    "multiscale_os",
    "tube_wavelet_fourier",
    "lift_3d",
    "group_gaussian_smooth",
    "gaussian_gradient",
]


def _bspline(order: int, x: np.ndarray) -> np.ndarray:
    """Centered cardinal B-spline of degree ``order`` (orders 0..3)."""
    x = np.asarray(x, dtype=float)
    if order == 0:
        return ((x >= -0.5) & (x < 0.5)).astype(float)
    if order == 1:
        return np.clip(1.0 - np.abs(x), 0.0, None)
    if order == 2:
        a = np.abs(x)
        return np.where(a < 0.5, 0.75 - a**2,
                        np.where(a < 1.5, 0.5 * (1.5 - a) ** 2, 0.0))
    if order == 3:
        a = np.abs(x)
        return np.where(a < 1.0, 2.0 / 3 - a**2 + a**3 / 2,
                        np.where(a < 2.0, (2.0 - a) ** 3 / 6, 0.0))
    raise ValueError("B-spline order must be 0..3")


def _freq_grid(n: int):
    """Centered frequency radii (units of Nyquist) and angles for n x n."""
    f = np.fft.fftshift(np.fft.fftfreq(n))  # cycles/px in [-0.5, 0.5)
    fx, fy = np.meshgrid(f, f, indexing="ij")
    r = np.sqrt(fx**2 + fy**2) / 0.5
    phi = np.arctan2(fy, fx)
    return r, phi


def _radial_window(r: np.ndarray, taper_start: float, taper_width: float):
    """Flat pass-band with a Gaussian taper starting at ``taper_start``."""
    out = np.ones_like(r)
    m = r > taper_start
    out[m] = np.exp(-((r[m] - taper_start) / taper_width) ** 2)
    return out


def _dc_removal(r: np.ndarray, sigma: float):
    """High-pass factor 1 - exp(-r^2 / (2 sigma^2)); exactly 0 at DC."""
    return 1.0 - np.exp(-(r**2) / (2.0 * sigma**2))


def _wrap_pi(x):
    return np.mod(x + np.pi, 2.0 * np.pi) - np.pi


@dataclass
class CakeStack:
    """Complex 2D cake-wavelet kernels plus their construction metadata.

    ``wedges`` holds the raw Fourier-domain construction on the kernel grid
    (centered); ``kernels`` the spatially windowed, exactly DC-free complex
    kernels actually correlated with images.
    """

    kernels: np.ndarray          # (N, size, size) complex spatial kernels
    wedges: np.ndarray           # (N, size, size) nonnegative Fourier profiles
    thetas: np.ndarray
    config: dict

    @property
    def n_orientations(self) -> int:
        return len(self.thetas)

    @property
    def size(self) -> int:
        return self.kernels.shape[1]

    def config_hash(self) -> str:
        payload = json.dumps(self.config, sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]

    def fourier_at(self, shape: tuple[int, int]) -> np.ndarray:
        """Effective Fourier responses of the kernels padded to ``shape``."""
        nx, ny = shape
        if self.size > nx or self.size > ny:
            raise ValueError("kernel size exceeds image size")
        out = np.zeros((self.n_orientations, nx, ny), dtype=complex)
        h = self.size // 2
        for j, k in enumerate(self.kernels):
            pad = np.zeros((nx, ny), dtype=complex)
            pad[:self.size, :self.size] = k
            pad = np.roll(pad, (-h, -h), axis=(0, 1))
            out[j] = np.fft.fft2(pad)
        return out


def cakewavelet_stack_2d(n_orientations: int, size: int = 31,
                         spline_order: int = 2, overlap: int = 1,
                         taper_start: float = 0.85, taper_width: float = 0.06,
                         dc_sigma: float = 0.03,
                         window_sigma: float | None = None) -> CakeStack:
    """Build the complex cake-wavelet stack for N orientations.

    The Fourier construction places one B-spline wedge per orientation
    (perpendicular to the line direction it detects, so the real parts are
    line detectors and the imaginary parts edge detectors), multiplied by the
    radial pass-band window and the DC-removing high-pass.  Spatial tails are
    damped with a Gaussian window; the mean of every windowed kernel is then
    re-subtracted so each kernel stays exactly DC free.
    """
    if n_orientations < 4:
        raise ValueError("need at least 4 orientations")
    if size % 2 == 0:
        raise ValueError("kernel size must be odd")
    if overlap < 1 or n_orientations % overlap:
        raise ValueError("overlap must divide the orientation count")
    dth = 2.0 * np.pi / n_orientations
    thetas = np.arange(n_orientations) * dth
    r, phi = _freq_grid(size)
    profile = (_radial_window(r, taper_start, taper_width)
               * _dc_removal(r, dc_sigma))
    wedges = np.empty((n_orientations, size, size))
    for j, th in enumerate(thetas):
        x = _wrap_pi(phi - th - np.pi / 2) / (dth * overlap)
        wedges[j] = profile * _bspline(spline_order, x) / overlap
    if window_sigma is None:
        window_sigma = (size - 1) / 4.0
    c = np.arange(size) - size // 2
    gx, gy = np.meshgrid(c, c, indexing="ij")
    window = np.exp(-(gx**2 + gy**2) / (2.0 * window_sigma**2))
    kernels = np.empty_like(wedges, dtype=complex)
    for j in range(n_orientations):
        spatial = np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(wedges[j])))
        spatial *= window
        spatial -= spatial.mean()
        kernels[j] = spatial
    config = dict(kind="cake2d", n_orientations=n_orientations, size=size,
                  spline_order=spline_order, overlap=overlap,
                  taper_start=taper_start, taper_width=taper_width,
                  dc_sigma=dc_sigma, window_sigma=window_sigma)
    return CakeStack(kernels, wedges, thetas, config)


def cake_profile_polar(config: dict, r: np.ndarray, phi: np.ndarray,
                       j: int) -> np.ndarray:
    """Evaluate wedge j of a cake construction on polar coordinates.

    ``r`` in Nyquist units, ``phi`` in radians; used for resampling-free
    rotation/permutation checks of the stack.
    """
    n = config["n_orientations"]
    dth = 2.0 * np.pi / n
    profile = (_radial_window(np.asarray(r, dtype=float),
                              config["taper_start"], config["taper_width"])
               * _dc_removal(np.asarray(r, dtype=float), config["dc_sigma"]))
    x = _wrap_pi(np.asarray(phi) - j * dth - np.pi / 2) / (dth * config["overlap"])
    return profile * _bspline(config["spline_order"], x) / config["overlap"]


@dataclass
class OrientationScore:
    """Scalar field on R^d x S^{d-1}: (N, nx, ny) or (V, nx, ny, nz) data."""

    data: np.ndarray
    thetas: np.ndarray | None = None
    sphere: IcoSphere | None = None
    spacing: float = 1.0
    kernels: CakeStack | None = None
    scale: float | None = None

    @property
    def d(self) -> int:
        return 2 if self.data.ndim == 3 else 3

    @property
    def n_orientations(self) -> int:
        return self.data.shape[0]

    @property
    def real(self) -> np.ndarray:
        return np.ascontiguousarray(self.data.real)

    def like(self, data: np.ndarray) -> "OrientationScore":
        return OrientationScore(data, self.thetas, self.sphere, self.spacing,
                                self.kernels, self.scale)


@dataclass
class MultiScaleScore:
    """Per-scale orientation scores of the SIM(2) wavelet transform."""

    scores: list
    scales: np.ndarray

    def __iter__(self):
        return iter(self.scores)


def orientation_score_2d(f: np.ndarray, kernels: CakeStack) -> OrientationScore:
    """Correlate an image with every rotated cake wavelet (FFT-based)."""
    f = np.asarray(f, dtype=float)
    Khat = kernels.fourier_at(f.shape)
    fhat = np.fft.fft2(f)
    data = np.fft.ifft2(fhat[None] * np.conj(Khat), axes=(1, 2))
    return OrientationScore(data, thetas=kernels.thetas, kernels=kernels)


def reconstruct_2d(score: OrientationScore, floor_frac: float = 1e-4) -> np.ndarray:
    """Adjoint reconstruction with 1/M_psi normalization.

    Exact (to interpolation-free FFT precision) wherever M_psi is above the
    floor; frequencies with M_psi below ``floor_frac * max(M_psi)`` are
    outside the admissible pass-band and are zeroed.
    """
    if score.kernels is None:
        raise ValueError("score carries no wavelet metadata")
    nx, ny = score.data.shape[1:]
    Khat = score.kernels.fourier_at((nx, ny))
    M = np.sum(np.abs(Khat) ** 2, axis=0)
    floor = floor_frac * M.max()
    if M.max() <= 0:
        raise ValueError("ill-conditioned wavelet set: M_psi vanishes")
    What = np.fft.fft2(score.data, axes=(1, 2))
    num = np.sum(What * Khat, axis=0)
    fhat = np.where(M >= floor, num / np.maximum(M, floor), 0.0)
    return np.fft.ifft2(fhat).real


def scale_list(a_min: float, a_max: float, M: int) -> np.ndarray:
    """Geometric scales a_l = a_min exp(l (M-1)^-1 log(a_max/a_min)).

    For M = 1 the exponent is undefined and the single scale a_min is used.
    """
    if a_min <= 0 or a_max < a_min:
        raise ValueError("need 0 < a_min <= a_max")
    if M == 1:
        return np.array([a_min])
    l = np.arange(M)
    return a_min * np.exp(l / (M - 1) * np.log(a_max / a_min))


def multiscale_os(f: np.ndarray, a_min: float, a_max: float, M: int,
                  n_orientations: int, spline_order: int = 2,
                  ref_freq: float = 0.64, dc_sigma: float = 0.03,
                  taper_start: float = 0.85, taper_width: float = 0.06,
                  ) -> MultiScaleScore:
    """Multiple-scale orientation scores on SIM(2).

    Wavelets are cake wedges times B-spline bands along the log-radial
    Fourier axis, centered at frequency ``ref_freq / a_l`` (units of
    Nyquist); together a partition of unity over the covered log-band.
    Built directly at image size in the Fourier domain.
    """
    f = np.asarray(f, dtype=float)
    scales = scale_list(a_min, a_max, M)
    dth = 2.0 * np.pi / n_orientations
    thetas = np.arange(n_orientations) * dth
    r, phi = _freq_grid(f.shape[0] if f.shape[0] == f.shape[1] else 0)
    if f.shape[0] != f.shape[1]:
        raise ValueError("multiscale transform expects square images")
    shared = (_radial_window(r, taper_start, taper_width)
              * _dc_removal(r, dc_sigma))
    dlog = np.log(scales[1] / scales[0]) if M > 1 else 1.0
    with np.errstate(divide="ignore"):
        logr = np.log(np.where(r > 0, r, np.nan))
    fhat = np.fft.fft2(f)
    scores = []
    for a in scales:
        band = _bspline(spline_order, (logr - np.log(ref_freq / a)) / dlog)
        band = np.nan_to_num(band) * shared
        data = np.empty((n_orientations,) + f.shape, dtype=complex)
        for j, th in enumerate(thetas):
            x = _wrap_pi(phi - th - np.pi / 2) / dth
            Khat = np.fft.ifftshift(band * _bspline(spline_order, x))
            data[j] = np.fft.ifft2(fhat * np.conj(Khat))
        scores.append(OrientationScore(data, thetas=thetas, scale=float(a)))
    return MultiScaleScore(scores, scales)


def tube_wavelet_fourier(shape, sphere: IcoSphere, sigma_perp: float = 1.0,
                         sigma_par: float = 3.0, surround: float = 2.0
                         ) -> np.ndarray:
    """Fourier responses (V, nx, ny, nz) of the rotated 3D line wavelets.

    The wavelet is a difference of two axially symmetric anisotropic
    Gaussians (narrow core minus wider transverse surround, equal on-axis
    profile), so psi(R_{a,alpha}^-1 x) = psi(x) holds exactly and the DC
    component vanishes exactly.
    """
    freqs = [2 * np.pi * np.fft.fftfreq(n) for n in shape]
    wx, wy, wz = np.meshgrid(*freqs, indexing="ij")
    w = np.stack([wx, wy, wz], axis=-1)
    w2 = np.sum(w * w, axis=-1)
    out = np.empty((sphere.n_vertices,) + tuple(shape))
    for v, n in enumerate(sphere.vertices):
        wpar2 = (w @ n) ** 2
        wperp2 = w2 - wpar2
        core = np.exp(-0.5 * (sigma_perp**2 * wperp2 + sigma_par**2 * wpar2))
        sur = np.exp(-0.5 * ((surround * sigma_perp) ** 2 * wperp2
                             + sigma_par**2 * wpar2))
        out[v] = core - sur
    return out


def lift_3d(f: np.ndarray, sphere: IcoSphere | None = None,
            sigma_perp: float = 1.0, sigma_par: float = 3.0,
            surround: float = 2.0, level: int = 1) -> OrientationScore:
    """Lift a 3D image to R^3 x S^2 by correlation with rotated line wavelets."""
    f = np.asarray(f, dtype=float)
    if sphere is None:
        sphere = icosphere(level)
    Khat = tube_wavelet_fourier(f.shape, sphere, sigma_perp, sigma_par, surround)
    fhat = np.fft.fftn(f)
    data = np.fft.ifftn(fhat[None] * Khat, axes=(1, 2, 3)).real
    return OrientationScore(np.ascontiguousarray(data), sphere=sphere)


def group_gaussian_smooth(score: OrientationScore, s: tuple[float, float],
                          mode: str = "reflect") -> OrientationScore:
    """Separable group smoothing: spatial heat kernel then angular heat kernel.

    Scales follow the heat-kernel convention G_s = exp(-|x|^2/(4s)), i.e.
    sigma = sqrt(2 s); the angular part is a wrapped Gaussian on S^1 or the
    exact cotangent-Laplacian heat flow on the icosphere.
    """
    s_p, s_o = s
    if s_p < 0 or s_o < 0:
        raise ValueError("scales must be nonnegative")
    data = score.data
    if s_p > 0:
        data = gridops.spatial_gaussian(data, np.sqrt(2 * s_p) / score.spacing,
                                        mode=mode)
    if s_o > 0:
        if score.d == 2:
            data = gridops.angular_gaussian_s1(data, np.sqrt(2 * s_o))
        else:
            H = score.sphere.heat_operator(s_o)
            data = (H @ data.reshape(score.n_orientations, -1)).reshape(data.shape)
    return score.like(np.ascontiguousarray(data))


def gaussian_gradient(score: OrientationScore, s: tuple[float, float],
                      mu: float, mode: str = "reflect") -> np.ndarray:
    """Gaussian gradient: components M_{mu^-2} (A_1 V, ..., A_n V).

    Returns (n_d, *score.data.shape) with spatial components scaled by
    mu^-2; for d=3 the sixth component vanishes on lifted data.
    """
    sm = group_gaussian_smooth(score, s, mode=mode)
    data = sm.real
    if score.d == 2:
        grad = gridops.se2_derivative_stack(data, score.thetas, score.spacing,
                                            mode)
        grad[:2] /= mu**2
        return grad
    grad = gridops.se3_derivative_stack(data, score.sphere, score.spacing, mode)
    grad[:3] /= mu**2
    return grad
