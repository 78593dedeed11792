"""Batch command line: lift, reconstruct, fit, frames, diffuse, vesselness,
segment and verify over image files, with TOML configs and JSON reports.

Outputs are deterministic for a fixed config and inputs; every run writes
the effective configuration next to its artifacts.  Errors exit nonzero
with a machine-readable JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import scoreio, verify
from .config import PRESETS, PipelineConfig
from .filters import (DiffusionConfig, VesselnessConfig, gauge_diffusion,
                      multiscale_vesselness, normalized_frame_field, segment)
from .gauge import gauge_frame_field
from .lifting import (cakewavelet_stack_2d, lift_3d, orientation_score_2d,
                      reconstruct_2d)
from .liegroup import exp_curve, se2
from .localfit_se2 import (fit_field_se2, hessian_se2,
                           product_hessian_tensor_se2, structure_tensor_se2)
from .localfit_se3 import structure_tensor_se3, twofold_first_order_field
from .sphere import icosphere

FIT_VARIANTS_2D = ("st1", "hsum2", "hprod2")
FIT_VARIANTS_3D = ("st1-2fold", "h2-2fold", "hfact2")


def _is_volume(path: Path) -> bool:
    return path.suffix.lower() in (".rtv1", ".vol", ".raw3d")


def _load_input(path: Path):
    if _is_volume(path):
        return scoreio.read_volume(path), 3
    return scoreio.read_image(path), 2


def _lift_2d(img, cfg):
    lift = cfg.section("lift")
    stack = cakewavelet_stack_2d(lift["n_orientations"],
                                 size=lift["kernel_size"],
                                 spline_order=lift["spline_order"],
                                 overlap=lift["overlap"])
    return orientation_score_2d(img, stack)


def _lift_3d(vol, cfg):
    lift = cfg.section("lift")
    return lift_3d(vol, icosphere(lift["sphere_level"]),
                   sigma_perp=lift["sigma_perp"], sigma_par=lift["sigma_par"],
                   surround=lift["surround"])


def _fit_field_2d(score, cfg):
    fit = cfg.section("fit")
    s = (fit["s_p"], fit["s_o"])
    rho = (fit["rho_p"], fit["rho_o"])
    variant = fit["variant"]
    if variant == "st1":
        T = structure_tensor_se2(score, s, rho, fit["mu"])
    elif variant == "hsum2":
        T = hessian_se2(score, s)
        T.mu = fit["mu"]
    elif variant == "hprod2":
        T = product_hessian_tensor_se2(score, s, rho, fit["mu"])
    else:
        raise ValueError(f"2D inputs support fit variants {FIT_VARIANTS_2D}, "
                         f"got {variant!r}")
    return fit_field_se2(T, mu=fit["mu"])


def _fit_field_3d(score, cfg):
    from .localfit_se3 import hessian_se3

    fit = cfg.section("fit")
    s = (fit["s_p"], fit["s_o"])
    rho = (fit["rho_p"], fit["rho_o"])
    variant = fit["variant"]
    if variant == "st1-2fold":
        T = structure_tensor_se3(score, s, rho, fit["mu"])
        return twofold_first_order_field(T)
    raise ValueError("full-field 3D fits are provided for 'st1-2fold'; "
                     f"use point queries for {variant!r}")


def _curve_overlay_2d(img, score, c_field, path, step: int = 12):
    """PNG overlay: spatial projections of fitted curves at strong points."""
    from PIL import Image as PILImage

    lo, hi = img.min(), img.max()
    base = ((img - lo) / (hi - lo + 1e-30) * 255).astype(np.uint8)
    rgb = np.stack([base] * 3, axis=-1)
    N = score.n_orientations
    mag = np.abs(score.real)
    ts = np.linspace(-5, 5, 41)
    nx, ny = img.shape
    for ix in range(step // 2, nx, step):
        for iy in range(step // 2, ny, step):
            k = int(np.argmax(mag[:, ix, iy]))
            if mag[k, ix, iy] < 0.3 * mag.max():
                continue
            c = c_field[k, ix, iy]
            g0 = se2(float(ix), float(iy), score.thetas[k])
            for t in ts:
                gt = exp_curve(g0, c, t)
                px, py = int(round(gt.x[0])), int(round(gt.x[1]))
                if 0 <= px < nx and 0 <= py < ny:
                    rgb[px, py] = (255, 64, 32)
    PILImage.fromarray(np.swapaxes(rgb, 0, 1)).save(path)


def _write_outputs(outdir: Path, name: str, arrays: dict, fmt: str):
    written = {}
    for key, arr in arrays.items():
        stem = outdir / f"{name}_{key}"
        if arr.ndim == 2:
            if fmt in ("png", "both"):
                scoreio.write_png_normalized(stem.with_suffix(".png"), arr)
                written[key + "_png"] = str(stem.with_suffix(".png"))
            if fmt in ("raw", "both"):
                arr.astype("<f4").tofile(stem.with_suffix(".f32"))
                written[key + "_raw"] = str(stem.with_suffix(".f32"))
        else:
            scoreio.save_field(stem, arr)
            written[key] = str(stem.with_suffix(".raw"))
    return written


def cmd_lift(args, cfg, outdir):
    reports = []
    for path in args.input:
        data, d = _load_input(Path(path))
        score = _lift_2d(data, cfg) if d == 2 else _lift_3d(data, cfg)
        stem = outdir / (Path(path).stem + "_score")
        scoreio.save_score(stem, score)
        proj = np.abs(score.data).sum(axis=0)
        if proj.ndim == 3:
            proj = proj.max(axis=2)
        scoreio.write_png_normalized(stem.with_suffix(".png"), proj)
        reports.append({"input": str(path), "score": str(stem),
                        "orientations": score.n_orientations,
                        "dims": list(score.data.shape)})
    return {"command": "lift", "outputs": reports}


def cmd_reconstruct(args, cfg, outdir):
    reports = []
    for path in args.input:
        score = scoreio.load_score(Path(path).with_suffix(""))
        rec = reconstruct_2d(score)
        stem = outdir / (Path(path).stem.replace("_score", "") + "_recon")
        written = _write_outputs(outdir, stem.name, {"image": rec}, args.format)
        reports.append({"input": str(path), **written})
    return {"command": "reconstruct", "outputs": reports}


def cmd_fit(args, cfg, outdir):
    reports = []
    for path in args.input:
        data, d = _load_input(Path(path))
        if d == 2:
            score = _lift_2d(data, cfg)
            score = score.like(score.real)
            c_field, amb, fb = _fit_field_2d(score, cfg)
            stem = outdir / (Path(path).stem + "_fit")
            scoreio.save_field(stem, c_field,
                               {"kind": "se2_tangents",
                                "variant": cfg["fit"]["variant"],
                                "mu": cfg["fit"]["mu"]})
            overlay = stem.with_suffix(".png")
            _curve_overlay_2d(data, score, c_field, overlay)
            reports.append({"input": str(path), "field": str(stem),
                            "overlay": str(overlay),
                            "ambiguous_fraction": float(amb.mean()),
                            "fallback_fraction": float(fb.mean())})
        else:
            score = _lift_3d(data, cfg)
            c_field, amb, fb = _fit_field_3d(score, cfg)
            stem = outdir / (Path(path).stem + "_fit")
            scoreio.save_field(stem, c_field,
                               {"kind": "se3_tangents",
                                "variant": cfg["fit"]["variant"],
                                "mu": cfg["fit"]["mu"]})
            reports.append({"input": str(path), "field": str(stem),
                            "ambiguous_fraction": float(amb.mean())})
    return {"command": "fit", "outputs": reports}


def cmd_frames(args, cfg, outdir):
    reports = []
    for path in args.input:
        data, d = _load_input(Path(path))
        score = _lift_2d(data, cfg) if d == 2 else _lift_3d(data, cfg)
        score = score.like(score.real)
        c_field, amb, _ = (_fit_field_2d if d == 2 else _fit_field_3d)(score, cfg)
        frames, degenerate = gauge_frame_field(c_field, cfg["fit"]["mu"])
        stem = outdir / (Path(path).stem + "_frames")
        scoreio.save_field(stem, frames, {"kind": "gauge_frames",
                                          "mu": cfg["fit"]["mu"]})
        reports.append({"input": str(path), "field": str(stem),
                        "degenerate_fraction": float(degenerate.mean())})
    return {"command": "frames", "outputs": reports}


def cmd_diffuse(args, cfg, outdir):
    reports = []
    dcfg = cfg.section("diffusion")
    for path in args.input:
        data, d = _load_input(Path(path))
        score = _lift_2d(data, cfg) if d == 2 else _lift_3d(data, cfg)
        work = score.like(score.real)
        c_field, _, _ = (_fit_field_2d if d == 2 else _fit_field_3d)(work, cfg)
        frames, _ = gauge_frame_field(c_field, cfg["fit"]["mu"])
        diff = DiffusionConfig(D=tuple(dcfg["D"]), t=dcfg["t"],
                               dt=dcfg.get("dt"), eps=dcfg["eps"])
        out = gauge_diffusion(work, frames, diff)
        stem = outdir / (Path(path).stem + "_diffused")
        scoreio.save_score(stem, out)
        proj = out.real.sum(axis=0)
        if proj.ndim == 3:
            proj = proj.max(axis=2)
        scoreio.write_png_normalized(stem.with_suffix(".png"), proj)
        reports.append({"input": str(path), "score": str(stem),
                        "steps_time": dcfg["t"]})
    return {"command": "diffuse", "outputs": reports}


def _vesselness_config(cfg) -> VesselnessConfig:
    v = cfg.section("vesselness")
    fit = cfg.section("fit")
    ms = cfg.section("multiscale")
    return VesselnessConfig(
        a_min=ms["a_min"], a_max=ms["a_max"], n_scales=ms["n_scales"],
        n_orientations=cfg["lift"]["n_orientations"], sigma1=v["sigma1"],
        sigma2_frac=v["sigma2_frac"], s=(fit["s_p"], fit["s_o"]),
        rho=(fit["rho_p"], fit["rho_o"]), mu=fit["mu"], invert=v["invert"],
        use_gauge=v["use_gauge"])


def cmd_vesselness(args, cfg, outdir):
    reports = []
    vcfg = _vesselness_config(cfg)
    for path in args.input:
        data, d = _load_input(Path(path))
        if d != 2:
            raise ValueError("vesselness operates on 2D images")
        V = multiscale_vesselness(data, vcfg)
        written = _write_outputs(outdir, Path(path).stem + "_vesselness",
                                 {"score": V}, args.format)
        reports.append({"input": str(path), **written,
                        "max": float(V.max()), "mean": float(V.mean())})
    return {"command": "vesselness", "outputs": reports}


def cmd_segment(args, cfg, outdir):
    reports = []
    vcfg = _vesselness_config(cfg)
    seg = cfg.section("segment")
    for path in args.input:
        data, d = _load_input(Path(path))
        if d != 2:
            raise ValueError("segment operates on 2D images")
        V = multiscale_vesselness(data, vcfg)
        mask = segment(V, gamma=seg["gamma"], h=seg["h"], tau=seg["tau"],
                       nu=seg["nu"])
        stem = outdir / (Path(path).stem + "_mask")
        scoreio.write_image(stem.with_suffix(".png"), mask.astype(float))
        reports.append({"input": str(path), "mask": str(stem.with_suffix(".png")),
                        "foreground_px": int(mask.sum())})
    return {"command": "segment", "outputs": reports}


def cmd_verify(args, cfg, outdir):
    report = verify.run_all(seed=cfg["seed"], names=args.suite or None)
    path = outdir / "verify_report.json"
    path.write_text(json.dumps(report, indent=1))
    for suite in report["suites"]:
        status = "pass" if suite["passed"] else "FAIL"
        print(f"[{status}] {suite['name']} ({suite['runtime_s']}s)")
    report["command"] = "verify"
    report["report_path"] = str(path)
    return report


COMMANDS = {
    "lift": cmd_lift,
    "reconstruct": cmd_reconstruct,
    "fit": cmd_fit,
    "frames": cmd_frames,
    "diffuse": cmd_diffuse,
    "vesselness": cmd_vesselness,
    "segment": cmd_segment,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rototrans",
        description="Gauge frames on SE(2)/SE(3): orientation scores, "
                    "exponential curve fits, crossing-preserving filters.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None)
        p.add_argument("--preset", choices=sorted(PRESETS), default=None)
        p.add_argument("--input", nargs="*", default=[])
        p.add_argument("--output", type=Path, default=Path("."))
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--format", choices=("png", "raw", "both"),
                       default="both")
        if name == "fit":
            p.add_argument("--variant",
                           choices=FIT_VARIANTS_2D + FIT_VARIANTS_3D,
                           default=None)
        if name == "verify":
            p.add_argument("--suite", nargs="*", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config is not None:
            cfg = PipelineConfig.from_toml(args.config, preset=args.preset)
        else:
            cfg = PipelineConfig(preset=args.preset)
        if args.seed is not None:
            cfg.data["seed"] = args.seed
        threads = args.threads
        if threads is None:
            threads = int(os.environ.get("ROTOTRANS_THREADS", cfg["threads"]))
        cfg.data["threads"] = max(1, threads)
        if getattr(args, "variant", None):
            cfg.data["fit"]["variant"] = args.variant
        outdir = args.output
        outdir.mkdir(parents=True, exist_ok=True)
        cfg.write_toml(outdir / "effective_config.toml")
        handler = COMMANDS[args.command]
        if (cfg["threads"] > 1 and len(args.input) > 1
                and args.command != "verify"):
            # deterministic parallel map over independent input files
            def run_one(path):
                one = argparse.Namespace(**vars(args))
                one.input = [path]
                return handler(one, cfg, outdir)

            with ThreadPoolExecutor(max_workers=cfg["threads"]) as pool:
                parts = list(pool.map(run_one, args.input))
            report = {"command": args.command,
                      "outputs": [o for p in parts for o in p["outputs"]]}
        else:
            report = handler(args, cfg, outdir)
        report["effective_config"] = str(outdir / "effective_config.toml")
        (outdir / f"{args.command}_report.json").write_text(
            json.dumps(report, indent=1))
        if args.command == "verify" and not report["passed"]:
            return 2
        return 0
    except Exception as exc:  # noqa: BLE001 - single CLI error boundary
        err = {"error": type(exc).__name__, "message": str(exc),
               "trace": traceback.format_exc(limit=4)}
        print(json.dumps(err), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
