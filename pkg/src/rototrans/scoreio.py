"""File formats: PGM/PNG images, RTV1 raw volumes, score/field persistence.

Arrays are indexed arr[x, y(, z)]; image files store rows as the y axis, so
2D images are transposed on load/save.  Volumes use the 16-byte RTV1 header
(magic "RTV1" + three little-endian uint32 dims) followed by float32
little-endian C-order data.  Orientation scores and tensor/frame fields are
stored as raw float32/complex64 with a JSON sidecar describing dims, the
orientation sampling and the wavelet configuration, so scores reload ready
for reconstruction.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .lifting import CakeStack, OrientationScore, cakewavelet_stack_2d
from .sphere import icosphere

__all__ = [
    "read_image",
    "write_image",
    "write_png_normalized",
    "read_volume",
    "write_volume",
    "save_score",
    "load_score",
    "save_field",
    "load_field",
]

_MAGIC = b"RTV1"


def read_image(path) -> np.ndarray:
    """Read an 8/16-bit PGM or PNG grayscale image as float in [0, 1]."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return _read_pgm(path)
    img = PILImage.open(path)
    arr = np.asarray(img)
    if arr.ndim == 3:
        arr = arr[..., :3].mean(axis=2)
    peak = 65535.0 if arr.dtype == np.uint16 else 255.0
    return np.ascontiguousarray(arr.T.astype(float) / peak)


def write_image(path, data: np.ndarray, bits: int = 8) -> None:
    """Write a float image in [0, 1] as PGM or PNG (by extension)."""
    path = Path(path)
    data = np.clip(np.asarray(data, dtype=float), 0.0, 1.0)
    if bits == 16:
        arr = np.round(data.T * 65535).astype(np.uint16)
    else:
        arr = np.round(data.T * 255).astype(np.uint8)
    if path.suffix.lower() == ".pgm":
        _write_pgm(path, arr)
    else:
        PILImage.fromarray(arr).save(path)


def write_png_normalized(path, data: np.ndarray) -> None:
    """8-bit PNG of a score image, max-normalized."""
    data = np.asarray(data, dtype=float)
    lo, hi = data.min(), data.max()
    scaled = (data - lo) / (hi - lo) if hi > lo else np.zeros_like(data)
    write_image(path, scaled, bits=8)


def _read_pgm(path: Path) -> np.ndarray:
    with open(path, "rb") as fh:
        tokens = []
        while len(tokens) < 4:
            line = fh.readline()
            if not line:
                raise ValueError("truncated PGM header")
            stripped = line.split(b"#")[0].split()
            tokens.extend(stripped)
        magic, w, h, maxval = tokens[0], *map(int, tokens[1:4])
        if magic == b"P5":
            dtype = ">u2" if maxval > 255 else np.uint8
            arr = np.frombuffer(fh.read(), dtype=dtype)[: w * h]
            arr = arr.reshape(h, w)
        elif magic == b"P2":
            arr = np.array(fh.read().split(), dtype=int)[: w * h].reshape(h, w)
        else:
            raise ValueError(f"unsupported PGM magic {magic!r}")
    return np.ascontiguousarray(arr.T.astype(float) / maxval)


def _write_pgm(path: Path, arr: np.ndarray) -> None:
    h, w = arr.shape
    maxval = 65535 if arr.dtype == np.uint16 else 255
    with open(path, "wb") as fh:
        fh.write(f"P5 {w} {h} {maxval}\n".encode())
        if maxval > 255:
            fh.write(arr.astype(">u2").tobytes())
        else:
            fh.write(arr.astype(np.uint8).tobytes())


def read_volume(path) -> np.ndarray:
    """Read an RTV1 raw float32 volume."""
    with open(path, "rb") as fh:
        header = fh.read(16)
        if header[:4] != _MAGIC:
            raise ValueError("not an RTV1 volume")
        nx, ny, nz = np.frombuffer(header[4:], dtype="<u4")
        data = np.frombuffer(fh.read(), dtype="<f4", count=nx * ny * nz)
    return data.reshape(int(nx), int(ny), int(nz)).astype(float)


def write_volume(path, data: np.ndarray) -> None:
    data = np.asarray(data, dtype="<f4")
    if data.ndim != 3:
        raise ValueError("RTV1 stores 3D volumes")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(np.asarray(data.shape, dtype="<u4").tobytes())
        fh.write(np.ascontiguousarray(data).tobytes())


def save_score(basepath, score: OrientationScore) -> None:
    """Persist a score as raw data plus a JSON sidecar."""
    basepath = Path(basepath)
    data = np.ascontiguousarray(score.data)
    raw = basepath.with_suffix(".raw")
    if np.iscomplexobj(data):
        data.astype("<c8").tofile(raw)
        dtype = "complex64"
    else:
        data.astype("<f4").tofile(raw)
        dtype = "float32"
    meta = {
        "dims": list(data.shape),
        "dtype": dtype,
        "d": score.d,
        "spacing": score.spacing,
    }
    if score.d == 2:
        meta["thetas"] = list(map(float, score.thetas))
        if score.kernels is not None:
            meta["wavelets"] = score.kernels.config
            meta["wavelet_hash"] = score.kernels.config_hash()
    else:
        meta["sphere_level"] = score.sphere.level
        meta["orientations"] = score.sphere.vertices.tolist()
    if score.scale is not None:
        meta["scale"] = score.scale
    basepath.with_suffix(".json").write_text(json.dumps(meta, indent=1))


def load_score(basepath) -> OrientationScore:
    basepath = Path(basepath)
    meta = json.loads(basepath.with_suffix(".json").read_text())
    dtype = "<c8" if meta["dtype"] == "complex64" else "<f4"
    data = np.fromfile(basepath.with_suffix(".raw"), dtype=dtype)
    data = data.reshape(meta["dims"]).astype(
        complex if meta["dtype"] == "complex64" else float)
    if meta["d"] == 2:
        kernels = None
        if "wavelets" in meta:
            cfgw = dict(meta["wavelets"])
            cfgw.pop("kind", None)
            kernels = cakewavelet_stack_2d(**cfgw)
        return OrientationScore(data, thetas=np.array(meta["thetas"]),
                                spacing=meta["spacing"], kernels=kernels,
                                scale=meta.get("scale"))
    sphere = icosphere(meta["sphere_level"])
    if not np.allclose(sphere.vertices, np.array(meta["orientations"]),
                       atol=1e-9):
        raise ValueError("orientation sampling mismatch")
    return OrientationScore(data, sphere=sphere, spacing=meta["spacing"],
                            scale=meta.get("scale"))


def save_field(basepath, values: np.ndarray, meta: dict | None = None) -> None:
    """Persist a float field (tensors, frames, fits) with a JSON sidecar."""
    basepath = Path(basepath)
    values = np.asarray(values)
    values.astype("<f4").tofile(basepath.with_suffix(".raw"))
    info = {"dims": list(values.shape), "dtype": "float32"}
    info.update(meta or {})
    basepath.with_suffix(".json").write_text(json.dumps(info, indent=1))


def load_field(basepath):
    basepath = Path(basepath)
    meta = json.loads(basepath.with_suffix(".json").read_text())
    data = np.fromfile(basepath.with_suffix(".raw"), dtype="<f4")
    return data.reshape(meta["dims"]).astype(float), meta
