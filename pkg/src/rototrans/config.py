"""Pipeline configuration: TOML documents, presets, validation, round trip.

One declarative document holds every stage's parameters.  Unknown keys are
rejected; presets ("retinal-2d", "cedos-3d") provide the experiment defaults
and a document may inherit from a preset and override individual keys.
"""

from __future__ import annotations

import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib as toml_reader
else:
    import tomli as toml_reader

__all__ = ["PRESETS", "PipelineConfig", "default_config"]

_SCHEMA = {
    "seed": int,
    "threads": int,
    "lift": {
        "n_orientations": int, "kernel_size": int, "spline_order": int,
        "overlap": int, "sphere_level": int, "sigma_perp": float,
        "sigma_par": float, "surround": float,
    },
    "multiscale": {"a_min": float, "a_max": float, "n_scales": int},
    "fit": {
        "variant": str, "s_p": float, "s_o": float, "rho_p": float,
        "rho_o": float, "mu": float,
    },
    "diffusion": {"D": list, "t": float, "dt": float, "eps": float},
    "vesselness": {
        "sigma1": float, "sigma2_frac": float, "invert": bool,
        "use_gauge": bool,
    },
    "segment": {"gamma": float, "h": float, "tau": int, "nu": float},
}

_DEFAULTS = {
    "seed": 0,
    "threads": 1,
    "lift": {
        "n_orientations": 12, "kernel_size": 31, "spline_order": 2,
        "overlap": 1, "sphere_level": 1, "sigma_perp": 1.0,
        "sigma_par": 2.5, "surround": 2.0,
    },
    "multiscale": {"a_min": 1.0, "a_max": 8.0, "n_scales": 4},
    "fit": {
        "variant": "hprod2", "s_p": 0.5, "s_o": 0.05, "rho_p": 2.0,
        "rho_o": 0.4, "mu": 0.15,
    },
    "diffusion": {"D": [1.0, 0.01, 0.04], "t": 2.0, "eps": 0.5},
    "vesselness": {
        "sigma1": 0.5, "sigma2_frac": 0.2, "invert": False,
        "use_gauge": True,
    },
    "segment": {"gamma": 100.0, "h": 0.05, "tau": 500, "nu": 0.85},
}

PRESETS = {
    # retinal 2D experiment values: N=12 orientation layers, M=4 scales,
    # second-order symmetric-product fits, dark vessels (inverted input),
    # segmentation constants gamma=100 px, tau=500 px, nu=0.85, h=0.05
    "retinal-2d": {
        "lift": {"n_orientations": 12},
        "multiscale": {"a_min": 1.0, "a_max": 8.0, "n_scales": 4},
        "fit": {"variant": "hprod2", "mu": 0.15},
        "vesselness": {"invert": True},
    },
    # 3D CEDOS experiment values: s_p = (1.5)^2/2, s_o = 0,
    # rho_p = 2^2/2, rho_o = (0.8)^2/2, mu = 0.5, t = 2.5,
    # D = (0.01, 0.01, 1, 0.04, 0.04, 0.04), two-fold first-order fits
    "cedos-3d": {
        "lift": {"sphere_level": 1},
        "fit": {"variant": "st1-2fold", "s_p": 1.125, "s_o": 0.0,
                "rho_p": 2.0, "rho_o": 0.32, "mu": 0.5},
        "diffusion": {"D": [0.01, 0.01, 1.0, 0.04, 0.04, 0.04], "t": 2.5},
    },
}


def _coerce(value, typ):
    if typ is float and isinstance(value, int):
        return float(value)
    if not isinstance(value, typ):
        raise TypeError(f"expected {typ.__name__}, got {value!r}")
    return value


class PipelineConfig:
    """Validated configuration document with preset inheritance."""

    def __init__(self, data: dict | None = None, preset: str | None = None):
        base = {k: (dict(v) if isinstance(v, dict) else v)
                for k, v in _DEFAULTS.items()}
        if preset is not None:
            if preset not in PRESETS:
                raise KeyError(f"unknown preset {preset!r}; "
                               f"available: {sorted(PRESETS)}")
            _merge(base, PRESETS[preset])
        if data:
            payload = dict(data)
            inherited = payload.pop("preset", None)
            if inherited and preset is None:
                _merge(base, PRESETS[inherited])
            _validate(payload)
            _merge(base, payload)
        _validate(base)
        self.data = base
        self.preset = preset

    @classmethod
    def from_toml(cls, path, preset: str | None = None) -> "PipelineConfig":
        with open(path, "rb") as fh:
            return cls(toml_reader.load(fh), preset=preset)

    def __getitem__(self, key):
        return self.data[key]

    def section(self, name: str) -> dict:
        return dict(self.data[name])

    def to_toml(self) -> str:
        lines = []
        for key in ("seed", "threads"):
            lines.append(f"{key} = {_fmt(self.data[key])}")
        for section in ("lift", "multiscale", "fit", "diffusion",
                        "vesselness", "segment"):
            lines.append(f"\n[{section}]")
            for k, v in self.data[section].items():
                lines.append(f"{k} = {_fmt(v)}")
        return "\n".join(lines) + "\n"

    def write_toml(self, path) -> None:
        Path(path).write_text(self.to_toml())


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return f'"{v}"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _merge(base: dict, update: dict) -> None:
    for k, v in update.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            base[k].update(v)
        else:
            base[k] = v


def _validate(doc: dict) -> None:
    for key, val in doc.items():
        if key not in _SCHEMA:
            raise KeyError(f"unknown config key {key!r}")
        spec = _SCHEMA[key]
        if isinstance(spec, dict):
            if not isinstance(val, dict):
                raise TypeError(f"section {key!r} must be a table")
            for k2, v2 in val.items():
                if k2 not in spec:
                    raise KeyError(f"unknown key {key}.{k2}")
                val[k2] = _coerce(v2, spec[k2])
        else:
            doc[key] = _coerce(val, spec)


def default_config(preset: str | None = None) -> PipelineConfig:
    return PipelineConfig(preset=preset)
