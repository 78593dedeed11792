"""Self-check suites over bundled phantoms, used by the `verify` subcommand.

Each suite returns a dict with ``name``, ``passed`` and measured values;
sizes are kept small so the whole battery runs in about a minute.  The
pytest acceptance module runs the same checks at the full criterion sizes.
"""

from __future__ import annotations

import time

import numpy as np
from scipy.linalg import expm

from . import phantoms
from .fitting import TangentFit
from .gauge import gauge_frame, main_index
from .lifting import (cakewavelet_stack_2d, cake_profile_polar, lift_3d,
                      orientation_score_2d, reconstruct_2d)
from .liegroup import (covariant_derivative, exp_curve, group_product,
                       identity, inverse, lie_algebra_basis, matrix_rep,
                       metric_matrix, se2, se3, rotation_to_direction,
                       structure_constants)
from .localfit_se2 import first_order_fit_se2, structure_tensor_se2
from .localfit_se3 import (check_zalpha_equivariance, first_order_fit_se3,
                           structure_tensor_se3, zalpha)
from .filters import DiffusionConfig, VesselnessConfig, frangi_baseline, \
    gauge_diffusion, multiscale_vesselness
from .sphere import icosphere

__all__ = ["run_all", "SUITES"]


def _result(name, passed, **values):
    out = {"name": name, "passed": bool(passed)}
    out.update({k: (float(v) if isinstance(v, (np.floating, float, int))
                    else v) for k, v in values.items()})
    return out


def suite_group_axioms(rng):
    worst_assoc = worst_inv = worst_hom = 0.0
    for d in (2, 3):
        for _ in range(40):
            gs = []
            for _ in range(3):
                if d == 2:
                    gs.append(se2(*rng.normal(size=2), rng.uniform(0, 2 * np.pi)))
                else:
                    gs.append(se3(rng.normal(size=3),
                                  rotation_to_direction(rng.normal(size=3))))
            a, b, c = gs
            lhs = matrix_rep(group_product(group_product(a, b), c))
            rhs = matrix_rep(group_product(a, group_product(b, c)))
            worst_assoc = max(worst_assoc, np.abs(lhs - rhs).max())
            gi = group_product(a, inverse(a))
            worst_inv = max(worst_inv,
                            np.abs(matrix_rep(gi) - np.eye(d + 1)).max())
            worst_hom = max(worst_hom, np.abs(
                matrix_rep(group_product(a, b))
                - matrix_rep(a) @ matrix_rep(b)).max())
    ok = max(worst_assoc, worst_inv, worst_hom) <= 1e-12
    return _result("group_axioms", ok, associativity=worst_assoc,
                   inverse=worst_inv, homomorphism=worst_hom)


def suite_exp_oracle(rng, n: int = 100):
    worst2 = worst3 = 0.0
    A2, A3 = lie_algebra_basis(2), lie_algebra_basis(3)
    for _ in range(n):
        c = rng.normal(size=3)
        t = rng.normal()
        g0 = se2(*rng.normal(size=2), rng.uniform(0, 2 * np.pi))
        ours = matrix_rep(exp_curve(g0, c, t))
        oracle = matrix_rep(g0) @ expm(t * np.einsum("i,iab->ab", c, A2))
        worst2 = max(worst2, np.abs(ours - oracle).max())
        c = rng.normal(size=6)
        g0 = se3(rng.normal(size=3), rotation_to_direction(rng.normal(size=3)))
        ours = matrix_rep(exp_curve(g0, c, t))
        oracle = matrix_rep(g0) @ expm(t * np.einsum("i,iab->ab", c, A3))
        worst3 = max(worst3, np.abs(ours - oracle).max())
    ok = max(worst2, worst3) <= 1e-10
    return _result("exp_curve_oracle", ok, se2=worst2, se3=worst3)


def suite_autoparallel(rng, n: int = 100):
    worst = 0.0
    ts = np.linspace(-1, 1, 41)
    dt = ts[1] - ts[0]
    for _ in range(n):
        d = 2 if rng.random() < 0.5 else 3
        c = rng.normal(size=3 if d == 2 else 6)
        vel = np.tile(c, (len(ts), 1))
        cov = covariant_derivative(vel, vel, dt, d)
        worst = max(worst, np.abs(cov).max())
    return _result("auto_parallel", worst <= 1e-8, residual=worst)


def suite_cake(rng):
    stack = cakewavelet_stack_2d(16, size=31)
    dc = np.abs(stack.kernels.sum(axis=(1, 2))).max()
    r = np.linspace(0.1, 0.8, 40)
    phi = np.linspace(0, 2 * np.pi, 90, endpoint=False)
    rr, pp = np.meshgrid(r, phi, indexing="ij")
    total = sum(cake_profile_polar(stack.config, rr, pp, j) for j in range(16))
    flat_lo, flat_hi = total.min(), total.max()
    perm = max(np.abs(cake_profile_polar(stack.config, rr, pp + 2 * np.pi / 16, j + 1)
                      - cake_profile_polar(stack.config, rr, pp, j)).max()
               for j in (0, 5))
    ok = dc <= 1e-12 and 0.98 <= flat_lo and flat_hi <= 1.02 and perm <= 1e-10
    return _result("cake_wavelets", ok, dc=dc, flat_min=flat_lo,
                   flat_max=flat_hi, permutation=perm)


def suite_roundtrip(rng):
    f = phantoms.band_limited_image(128, rng)
    stack = cakewavelet_stack_2d(16, size=31)
    rec = reconstruct_2d(orientation_score_2d(f, stack))
    err = np.linalg.norm(rec - f) / np.linalg.norm(f)
    return _result("reconstruction_roundtrip", err <= 1e-3, rel_l2=err)


def suite_gauge(rng):
    worst_orth = worst_main = 0.0
    for d, n in ((2, 3), (3, 6)):
        mu = 0.3
        M2 = metric_matrix(mu, d) @ metric_matrix(mu, d)
        for _ in range(60):
            c = rng.normal(size=n)
            c /= np.sqrt(c @ M2 @ c)
            fr = gauge_frame(c, mu)
            B = fr.matrix
            worst_orth = max(worst_orth, np.abs(B @ M2 @ B.T - np.eye(n)).max())
            worst_main = max(worst_main, np.abs(B[main_index(d)] - c).max())
    ok = max(worst_orth, worst_main) <= 1e-12
    return _result("gauge_frames", ok, orthonormality=worst_orth,
                   main_direction=worst_main)


def suite_fits_quick(rng):
    stack = cakewavelet_stack_2d(16, size=31)
    img = phantoms.line_image((64, 64), angle=0.0, width=2.0)
    U = orientation_score_2d(img, stack)
    U = U.like(U.real)
    T = structure_tensor_se2(U, (0.5, 0.05), (1.0, 0.4), mu=0.15)
    fit = first_order_fit_se2(T, (0, 32, 32))
    chi = np.degrees(np.arctan2(abs(fit.c[1]), abs(fit.c[0])))
    # eigen solution beats random candidates on its own energy
    S = T.at((0, 32, 32))
    M2 = metric_matrix(0.15, 2) @ metric_matrix(0.15, 2)
    cands = rng.normal(size=(2000, 3))
    cands /= np.sqrt(np.einsum("pi,ij,pj->p", cands, M2, cands))[:, None]
    e_best = np.einsum("pi,ij,pj->p", cands, M2 @ S @ M2, cands).min()
    e_fit = fit.c @ M2 @ S @ M2 @ fit.c
    ok = chi <= 5.0 and e_fit <= e_best * (1 + 1e-6)
    return _result("se2_fit_quick", ok, chi_deg=chi, energy_margin=e_best / e_fit)


def suite_zalpha(rng):
    sphere = icosphere(1)
    vol = phantoms.tube_volume((20, 20, 20), (0.3, 0.2, 1.0), radius=1.5)
    U = lift_3d(vol, sphere, sigma_perp=1.0, sigma_par=2.5)
    stack = structure_tensor_se3(U, (1.125, 0.0), (2.0, 0.32), mu=0.5,
                                 positions=np.array([[10, 10, 10]]))[0]
    v = int(np.argmax(sphere.vertices @ np.array([0.3, 0.2, 1.0])))
    g = se3(np.array([10.0, 10, 10]), sphere.rotations[v])

    def fit_fn(gq):
        return first_order_fit_se3(stack, gq.R).c

    res = max(check_zalpha_equivariance(fit_fn, g, a)
              for a in (np.pi / 4, np.pi / 2, np.pi))
    conj = np.abs(stack.at_rotation(g.R @ zalpha(0.7)[:3, :3])
                  - zalpha(0.7).T @ stack.at_rotation(g.R) @ zalpha(0.7)).max()
    ok = res <= 1e-3 and conj <= 1e-6
    return _result("zalpha_equivariance", ok, fit_residual=res,
                   tensor_conjugation=conj)


def suite_diffusion_quick(rng):
    stack = cakewavelet_stack_2d(16, size=31)
    img = phantoms.crossing_image((48, 48), width=2.0)
    img = phantoms.add_noise(img, 10.0, rng)
    U = orientation_score_2d(img, stack)
    U = U.like(U.real)
    from .localfit_se2 import product_hessian_tensor_se2, fit_field_se2
    from .gauge import gauge_frame_field

    T = product_hessian_tensor_se2(U, (0.5, 0.05), (1.0, 0.4), 0.15)
    cf, _, _ = fit_field_se2(T)
    frames, _ = gauge_frame_field(cf, 0.15)
    cfg = DiffusionConfig(D=(1.0, 0.01, 0.04), t=1.0)
    W = gauge_diffusion(U, frames, cfg)
    drift = abs(W.real.sum() - U.real.sum()) / np.abs(U.real).sum()
    maxp = (W.real.max() <= U.real.max() + 1e-9
            and W.real.min() >= U.real.min() - 1e-9)
    ok = drift <= 1e-4 and maxp
    return _result("diffusion_quick", ok, mass_drift=drift,
                   max_principle=bool(maxp))


def suite_crossing_quick(rng):
    n = 96
    img = phantoms.crossing_image((n, n), angles=(np.pi / 4, -np.pi / 4),
                                  width=2.0)
    cfg = VesselnessConfig(n_orientations=16)
    V = multiscale_vesselness(img, cfg)
    F = frangi_baseline(img)
    xx, yy = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    c = (n - 1) / 2
    cen = np.hypot(xx - c, yy - c) < 2.5
    d1 = np.abs(-(xx - c) * np.sin(np.pi / 4) + (yy - c) * np.cos(np.pi / 4))
    d2 = np.abs(-(xx - c) * np.sin(-np.pi / 4) + (yy - c) * np.cos(-np.pi / 4))
    ring = (np.hypot(xx - c, yy - c) > 12) & (np.hypot(xx - c, yy - c) < 30)
    branch = ((d1 < 1.0) | (d2 < 1.0)) & ring
    g_ratio = V[cen].max() / V[branch].mean()
    f_ratio = F[cen].max() / F[branch].mean()
    ok = g_ratio >= 0.8 and f_ratio <= 0.5
    return _result("crossing_preservation", ok, gauge_ratio=g_ratio,
                   frangi_ratio=f_ratio)


SUITES = [
    suite_group_axioms,
    suite_exp_oracle,
    suite_autoparallel,
    suite_cake,
    suite_roundtrip,
    suite_gauge,
    suite_fits_quick,
    suite_zalpha,
    suite_diffusion_quick,
    suite_crossing_quick,
]


def run_all(seed: int = 0, names=None) -> dict:
    """Run the suites and return a JSON-ready report."""
    report = {"schema": "rototrans-verify/1", "suites": []}
    for suite in SUITES:
        label = suite.__name__.removeprefix("suite_")
        if names and label not in names:
            continue
        rng = np.random.default_rng(seed)
        t0 = time.time()
        out = suite(rng)
        out["runtime_s"] = round(time.time() - t0, 3)
        report["suites"].append(out)
    report["passed"] = all(s["passed"] for s in report["suites"])
    return report
