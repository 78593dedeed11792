import numpy as np
import pytest

from rototrans import phantoms
from rototrans.gauge import gauge_frame_field
from rototrans.lifting import (OrientationScore, cakewavelet_stack_2d,
                               gaussian_gradient, orientation_score_2d)
from rototrans.liegroup import (deviation_from_horizontality, exp_curve,
                                left_invariant_derivative, metric_matrix, se2,
                                structure_constants)
from rototrans.localfit_se2 import (fit_field_se2, first_order_fit_se2,
                                    hessian_se2, product_hessian_tensor_se2,
                                    second_order_fit_product_se2,
                                    second_order_fit_sum_se2,
                                    structure_tensor_se2)

RNG = np.random.default_rng(33)
N = 32
MU = 0.15
S_SCALES = (0.5, 0.05)
RHO_SCALES = (1.0, 0.4)


@pytest.fixture(scope="module")
def stack():
    return cakewavelet_stack_2d(N, size=31)


@pytest.fixture(scope="module")
def line_score(stack):
    img = phantoms.line_image((64, 64), angle=0.0, width=2.0)
    U = orientation_score_2d(img, stack)
    return U.like(U.real)


@pytest.fixture(scope="module")
def circle_score(stack):
    img = phantoms.circle_image((72, 72), radius=16.0, width=2.0)
    U = orientation_score_2d(img, stack)
    return U.like(U.real)


@pytest.fixture(scope="module")
def bump_score():
    # smooth synthetic score with a negative-definite Hessian at its peak
    thetas = np.arange(N) * 2 * np.pi / N
    xx, yy = np.meshgrid(np.arange(48, dtype=float),
                         np.arange(48, dtype=float), indexing="ij")
    ang = np.minimum(np.abs(thetas - np.pi), 2 * np.pi - np.abs(thetas - np.pi))
    data = (np.exp(-ang**2 / (2 * 0.8**2))[:, None, None]
            * np.exp(-((xx - 24) ** 2 + (yy - 24) ** 2) / (2 * 6.0**2)))
    return OrientationScore(data, thetas=thetas)


def sample_unit_mu(rng, n, mu, count):
    c = rng.normal(size=(count, n))
    M = metric_matrix(mu, 2 if n == 3 else 3)
    nrm = np.linalg.norm(c @ M, axis=1)
    return c / nrm[:, None]


class TestStructureTensor:
    def test_zero_score(self):
        score = OrientationScore(np.zeros((8, 16, 16)),
                                 thetas=np.arange(8) * np.pi / 4)
        T = structure_tensor_se2(score, S_SCALES, RHO_SCALES, MU)
        assert np.abs(T.values).max() == 0.0

    def test_line_smallest_eigenvector_horizontal(self, line_score):
        T = structure_tensor_se2(line_score, S_SCALES, RHO_SCALES, MU)
        M = metric_matrix(MU, 2)
        B = M @ T.at((0, 32, 32)) @ M
        lam, vec = np.linalg.eigh(B)
        u = vec[:, 0]
        ang = np.degrees(np.arccos(abs(u[0]) / np.linalg.norm(u)))
        assert ang < 5.0

    def test_positive_semidefinite(self, circle_score):
        T = structure_tensor_se2(circle_score, S_SCALES, RHO_SCALES, MU)
        lam = np.linalg.eigvalsh(T.values)
        assert lam.min() > -1e-10

    def test_rho_zero_limit_is_gradient_outer_product(self, line_score):
        T = structure_tensor_se2(line_score, S_SCALES, (0.0, 0.0), MU)
        grad = gaussian_gradient(line_score, S_SCALES, MU)
        outer = np.einsum("ikxy,jkxy->kxyij", grad, grad)
        assert np.abs(T.values - outer).max() < 1e-6


class TestFirstOrderFit:
    def test_circle_curvature(self, circle_score):
        T = structure_tensor_se2(circle_score, S_SCALES, RHO_SCALES, MU)
        kaps = []
        for ang in np.linspace(0, 2 * np.pi, 12, endpoint=False):
            ix = int(round(35.5 + 16 * np.cos(ang)))
            iy = int(round(35.5 + 16 * np.sin(ang)))
            k = int(round((ang + np.pi / 2) / (2 * np.pi / N))) % N
            fit = first_order_fit_se2(T, (k, ix, iy))
            kaps.append(fit.c[2] / fit.c[0])
        kappa = np.mean(kaps)
        assert abs(kappa - 1 / 16) * 16 < 0.10

    def test_line_horizontal_straight(self, line_score):
        T = structure_tensor_se2(line_score, S_SCALES, RHO_SCALES, MU)
        fit = first_order_fit_se2(T, (0, 32, 32))
        chi = deviation_from_horizontality(fit.c, 2)
        assert np.degrees(chi) < 5.0
        c1n = np.linalg.norm(fit.c[:2])
        assert abs(fit.c[2]) <= 0.05 * MU * c1n

    def test_rejection_sampling_oracle(self, circle_score):
        T = structure_tensor_se2(circle_score, S_SCALES, RHO_SCALES, MU)
        M2 = metric_matrix(MU, 2) @ metric_matrix(MU, 2)
        for point in [(8, 51, 35), (0, 35, 19), (24, 35, 51)]:
            S = T.at(point)
            fit = first_order_fit_se2(T, point)
            cands = sample_unit_mu(RNG, 3, MU, 10_000)
            energies = np.einsum("pi,ij,pj->p", cands, M2 @ S @ M2, cands)
            e_fit = fit.c @ M2 @ S @ M2 @ fit.c
            assert e_fit <= energies.min() * (1 + 1e-6)


class TestHessian:
    def test_constant_score(self):
        score = OrientationScore(np.ones((8, 16, 16)),
                                 thetas=np.arange(8) * np.pi / 4)
        H = hessian_se2(score, (0.0, 0.0))
        assert np.abs(H.values).max() < 1e-10

    def test_linear_field_noncommuting_entries(self):
        # V = x: A_1 V = cos(theta), A_3 A_1 V = -sin(theta), A_1 A_3 V = 0
        Nfine, n = 96, 24
        thetas = np.arange(Nfine) * 2 * np.pi / Nfine
        xs = np.arange(n, dtype=float)
        data = np.broadcast_to(xs[None, :, None], (Nfine, n, n)).copy()
        score = OrientationScore(data, thetas=thetas)
        H = hessian_se2(score, (0.0, 0.0))
        k = 7
        got = H.at((k, 12, 12))
        assert abs(got[0, 2] - (-np.sin(thetas[k]))) < 1e-3
        assert abs(got[2, 0]) < 1e-10
        assert abs(got[0, 2] - got[2, 0]) > 0.1  # visibly non-symmetric

    def test_commutator_identity_analytic(self):
        # H - H^T against the structure constants, on an analytic field with
        # small-step central differences (grid interpolation cannot reach 1e-6)
        C = structure_constants(2)

        def field(g):
            return (np.sin(0.7 * g.x[0]) * np.cos(0.4 * g.x[1])
                    + 0.3 * np.cos(g.theta))

        g0 = se2(0.6, -0.3, 1.1)
        eps = 1e-3
        H = np.empty((3, 3))
        for i in range(3):
            def Di(g, i=i):
                return left_invariant_derivative(field, g, i + 1, eps=eps)
            for j in range(3):
                H[i, j] = left_invariant_derivative(Di, g0, j + 1, eps=eps)
        A = np.array([left_invariant_derivative(field, g0, k + 1, eps=eps)
                      for k in range(3)])
        for i in range(3):
            for j in range(3):
                expected = np.einsum("k,k->", C[:, j, i], A)
                assert abs((H[i, j] - H[j, i]) - expected) < 1e-6


class TestSecondOrderFits:
    def test_sum_fit_ridge_tangent(self, line_score):
        H = hessian_se2(line_score, S_SCALES)
        fit = second_order_fit_sum_se2(H, (0, 32, 32), MU)
        chi = deviation_from_horizontality(fit.c, 2)
        assert np.degrees(chi) < 5.0

    def test_sum_fit_mixed_sign_fallback_flag(self):
        # saddle-like synthetic score: mixed-sign Hessian at the center
        thetas = np.arange(8) * 2 * np.pi / 8
        xx, yy = np.meshgrid(np.arange(32, dtype=float),
                             np.arange(32, dtype=float), indexing="ij")
        saddle = np.cos(2 * np.pi * (xx - 16) / 32) - np.cos(
            2 * np.pi * (yy - 16) / 32)
        data = np.broadcast_to(saddle, (8, 32, 32)).copy()
        score = OrientationScore(data, thetas=thetas)
        H = hessian_se2(score, (0.0, 0.0))
        fit = second_order_fit_sum_se2(H, (0, 16, 16), MU)
        assert fit.fallback

    def test_sum_fit_sampling_oracle(self, bump_score):
        H = hessian_se2(bump_score, (0.5, 0.05))
        point = (N // 2, 24, 24)
        A = H.at(point)
        lam = np.linalg.eigvalsh(0.5 * (A + A.T))
        assert lam.max() < 0  # same-sign precondition holds at the bump peak
        fit = second_order_fit_sum_se2(H, point, MU)
        cands = sample_unit_mu(RNG, 3, MU, 10_000)
        energies = np.abs(np.einsum("pi,ij,pj->p", cands,
                                    0.5 * (A + A.T), cands))
        e_fit = abs(fit.c @ (0.5 * (A + A.T)) @ fit.c)
        assert e_fit <= energies.min() * (1 + 1e-6)

    def test_product_matrix_psd(self, circle_score):
        T = product_hessian_tensor_se2(circle_score, S_SCALES, RHO_SCALES, MU)
        lam = np.linalg.eigvalsh(T.values)
        assert lam.min() > -1e-10

    def test_product_fit_line_horizontal(self, line_score):
        fit = second_order_fit_product_se2(line_score, S_SCALES, RHO_SCALES,
                                           MU, (0, 32, 32))
        chi = deviation_from_horizontality(fit.c, 2)
        assert np.degrees(chi) < 5.0

    def test_product_fit_sampling_oracle(self, circle_score):
        T = product_hessian_tensor_se2(circle_score, S_SCALES, RHO_SCALES, MU)
        Minv = np.diag([1 / MU, 1 / MU, 1.0])
        for point in [(8, 51, 35), (0, 35, 19)]:
            P = T.at(point)
            fit = second_order_fit_product_se2(T, g=point)
            cands = sample_unit_mu(RNG, 3, MU, 10_000)
            energies = np.einsum("pi,ij,pj->p", cands, P, cands)
            e_fit = fit.c @ P @ fit.c
            assert e_fit <= energies.min() * (1 + 1e-6)


class TestInvariants:
    def test_left_invariance_under_quarter_turn(self, circle_score):
        # the circle phantom is invariant under the quarter turn about its
        # center, so fits at rotated points must be equal components
        T = structure_tensor_se2(circle_score, S_SCALES, RHO_SCALES, MU)
        q = N // 4
        for ang_i in range(4):
            ang = ang_i * np.pi / 6
            ix = int(round(35.5 + 16 * np.cos(ang)))
            iy = int(round(35.5 + 16 * np.sin(ang)))
            k = int(round((ang + np.pi / 2) / (2 * np.pi / N))) % N
            fit = first_order_fit_se2(T, (k, ix, iy))
            # rotate the sample point by 90 degrees about the center
            dx, dy = ix - 35.5, iy - 35.5
            ix2, iy2 = int(round(35.5 - dy)), int(round(35.5 + dx))
            fit2 = first_order_fit_se2(T, ((k + q) % N, ix2, iy2))
            cos = np.dot(fit.c, fit2.c) / (
                np.linalg.norm(fit.c) * np.linalg.norm(fit2.c))
            assert np.degrees(np.arccos(np.clip(abs(cos), 0, 1))) < 5.0

    def test_spiral_consistency(self, circle_score):
        T = structure_tensor_se2(circle_score, S_SCALES, RHO_SCALES, MU)
        center = np.array([35.5, 35.5])
        ang = np.pi / 3
        ix = int(round(35.5 + 16 * np.cos(ang)))
        iy = int(round(35.5 + 16 * np.sin(ang)))
        k = int(round((ang + np.pi / 2) / (2 * np.pi / N))) % N
        fit = first_order_fit_se2(T, (k, ix, iy))
        g0 = se2(float(ix), float(iy), circle_score.thetas[k])
        # arclength parameterization: ||c1|| pixels of motion per unit t
        speed = np.linalg.norm(fit.c[:2])
        for t in np.linspace(-5.0, 5.0, 21):
            gt = exp_curve(g0, fit.c, t / speed)
            assert abs(np.linalg.norm(gt.x - center) - 16.0) < 1.0


class TestFitField:
    def test_matches_pointwise(self, circle_score):
        T = structure_tensor_se2(circle_score, S_SCALES, RHO_SCALES, MU)
        c_field, amb, fb = fit_field_se2(T)
        for point in [(8, 51, 35), (0, 35, 19), (5, 40, 48)]:
            fit = first_order_fit_se2(T, point)
            assert np.abs(c_field[point] - fit.c).max() < 1e-8

    def test_frames_from_field(self, circle_score):
        T = product_hessian_tensor_se2(circle_score, S_SCALES, RHO_SCALES, MU)
        c_field, _, _ = fit_field_se2(T)
        frames, degenerate = gauge_frame_field(c_field, MU)
        M2 = metric_matrix(MU, 2) @ metric_matrix(MU, 2)
        sel = frames[::8, ::16, ::16]
        G = np.einsum("...ia,ab,...jb->...ij", sel, M2, sel)
        assert np.abs(G - np.eye(3)).max() < 1e-10
