"""Synthetic images and volumes used by the tests, demos and `verify`.

All generators are deterministic given their RNG / parameters.  Curvilinear
structures have Gaussian cross-sections drawn from exact distances to the
ideal centerline, so analytic tangents/curvatures are available as oracles.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "band_limited_image",
    "line_image",
    "circle_image",
    "crossing_image",
    "blob_image",
    "vessel_tree_2d",
    "tube_volume",
    "helix_volume",
    "crossing_tubes_volume",
    "add_noise",
]


def band_limited_image(n: int, rng, band=(0.1, 0.8)) -> np.ndarray:
    """Random field with spectrum exactly confined to an annulus.

    ``band`` is in units of the Nyquist radius; the result is mean free and
    normalized to unit max amplitude — the disk-limited reconstruction
    phantom.
    """
    noise = rng.normal(size=(n, n))
    f = np.fft.fftfreq(n)
    fx, fy = np.meshgrid(f, f, indexing="ij")
    r = np.sqrt(fx**2 + fy**2) / 0.5
    mask = (r >= band[0]) & (r <= band[1])
    F = np.fft.fft2(noise) * mask
    img = np.fft.ifft2(F).real
    return img / np.abs(img).max()


def _grid2(shape):
    return np.meshgrid(np.arange(shape[0], dtype=float),
                       np.arange(shape[1], dtype=float), indexing="ij")


def line_image(shape, angle: float, width: float = 2.0, center=None,
               amplitude: float = 1.0) -> np.ndarray:
    """Bright straight line through ``center`` at ``angle`` (radians)."""
    xx, yy = _grid2(shape)
    if center is None:
        center = ((shape[0] - 1) / 2, (shape[1] - 1) / 2)
    d = -(xx - center[0]) * np.sin(angle) + (yy - center[1]) * np.cos(angle)
    return amplitude * np.exp(-d**2 / (2 * width**2))


def circle_image(shape, radius: float, width: float = 2.0, center=None,
                 amplitude: float = 1.0) -> np.ndarray:
    """Bright circle of the given radius with Gaussian cross-section."""
    xx, yy = _grid2(shape)
    if center is None:
        center = ((shape[0] - 1) / 2, (shape[1] - 1) / 2)
    d = np.hypot(xx - center[0], yy - center[1]) - radius
    return amplitude * np.exp(-d**2 / (2 * width**2))


def crossing_image(shape, angles=(np.pi / 4, -np.pi / 4), width: float = 2.0,
                   amplitude: float = 1.0) -> np.ndarray:
    """Two straight lines crossing at the image center (max-combined)."""
    lines = [line_image(shape, a, width, amplitude=amplitude) for a in angles]
    return np.maximum.reduce(lines)


def blob_image(shape, sigma: float = 4.0, center=None,
               amplitude: float = 1.0) -> np.ndarray:
    """Isotropic Gaussian blob (the canonical ambiguous structure)."""
    xx, yy = _grid2(shape)
    if center is None:
        center = ((shape[0] - 1) / 2, (shape[1] - 1) / 2)
    return amplitude * np.exp(-((xx - center[0]) ** 2 + (yy - center[1]) ** 2)
                              / (2 * sigma**2))


def _draw_polyline(shape, points, widths):
    """Max of Gaussian tubes around polyline segments, plus a hard mask."""
    xx, yy = _grid2(shape)
    pix = np.stack([xx.ravel(), yy.ravel()], axis=1)
    img = np.zeros(pix.shape[0])
    mask = np.zeros(pix.shape[0], dtype=bool)
    for (p0, p1), w in zip(points, widths):
        p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
        seg = p1 - p0
        L = np.linalg.norm(seg)
        samples = np.linspace(0, 1, max(int(2 * L), 2))[:, None] * seg + p0
        tree = cKDTree(samples)
        d, _ = tree.query(pix, k=1)
        img = np.maximum(img, np.exp(-d**2 / (2 * (w / 2.0) ** 2)))
        mask |= d <= w / 2.0 + 0.5
    return img.reshape(shape), mask.reshape(shape)


def vessel_tree_2d(shape=(192, 192), seed: int = 7, depth: int = 4,
                   width0: float = 7.0, spread: float = 0.4):
    """Branching vessel tree: image in [0, 1] and its centerline-tube mask.

    The tree grows like a vascular arcade along the first axis with bounded
    angular spread, so the connected structure stays strongly elongated.
    """
    rng = np.random.default_rng(seed)
    segments, widths = [], []

    def grow(p, angle, width, level):
        if level > depth or width < 1.5:
            return
        length = rng.uniform(0.2, 0.3) * shape[0] * (0.8 ** level)
        q = p + length * np.array([np.cos(angle), np.sin(angle)])
        segments.append((p, q))
        widths.append(width)
        n_children = 2 if rng.random() < 0.8 else 1
        for _ in range(n_children):
            child = np.clip(angle + rng.uniform(-spread, spread),
                            -2 * spread, 2 * spread)
            grow(q, child, width * rng.uniform(0.6, 0.85), level + 1)

    root = np.array([shape[0] * 0.08, shape[1] * 0.5])
    grow(root, 0.0, width0, 0)
    img, mask = _draw_polyline(shape, segments, widths)
    return img, mask


def _grid3(shape):
    return np.meshgrid(*[np.arange(n, dtype=float) for n in shape],
                       indexing="ij")


def _draw_curve3(shape, samples, radius):
    """Gaussian tube around a sampled 3D curve."""
    xx, yy, zz = _grid3(shape)
    pix = np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=1)
    tree = cKDTree(samples)
    d, _ = tree.query(pix, k=1)
    return np.exp(-d**2 / (2 * radius**2)).reshape(shape)


def tube_volume(shape=(32, 32, 32), direction=(0, 0, 1.0), radius: float = 1.5,
                center=None) -> np.ndarray:
    """Straight tube through the volume center along ``direction``."""
    direction = np.asarray(direction, float)
    direction = direction / np.linalg.norm(direction)
    if center is None:
        center = (np.asarray(shape, float) - 1) / 2
    L = float(np.linalg.norm(shape))
    t = np.linspace(-L, L, int(4 * L))
    samples = center + t[:, None] * direction
    return _draw_curve3(shape, samples, radius)


def helix_volume(shape=(40, 40, 48), r: float = 8.0, pitch: float = 4.0,
                 radius: float = 1.6, turns: float = 1.6):
    """Helix x(t) = c + (r cos t, r sin t, pitch t); returns (volume, curve).

    The analytic curvature is r / (r^2 + pitch^2) and the torsion
    pitch / (r^2 + pitch^2).
    """
    center = (np.asarray(shape, float) - 1) / 2
    t = np.linspace(-turns * np.pi, turns * np.pi, int(40 * turns * np.pi))
    curve = center + np.stack([r * np.cos(t), r * np.sin(t), pitch * t], axis=1)
    keep = np.all((curve > -10) & (curve < np.asarray(shape) + 10), axis=1)
    vol = _draw_curve3(shape, curve[keep], radius)
    return vol, (t, curve)


def crossing_tubes_volume(shape=(28, 28, 28), radius: float = 1.5,
                          angle: float = np.pi / 3):
    """Two straight tubes crossing at the center; returns (volume, dirs)."""
    d1 = np.array([np.sin(angle / 2), 0.0, np.cos(angle / 2)])
    d2 = np.array([-np.sin(angle / 2), 0.0, np.cos(angle / 2)])
    v1 = tube_volume(shape, d1, radius)
    v2 = tube_volume(shape, d2, radius)
    return np.maximum(v1, v2), (d1, d2)


def add_noise(f: np.ndarray, snr_db: float, rng) -> np.ndarray:
    """Additive white Gaussian noise at the requested SNR (signal power)."""
    p_signal = np.mean(np.square(f - f.mean()))
    p_noise = p_signal / (10.0 ** (snr_db / 10.0))
    return f + rng.normal(scale=np.sqrt(p_noise), size=f.shape)
