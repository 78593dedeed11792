import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from rototrans import liegroup as lg
from rototrans.lifting import OrientationScore
from rototrans.sphere import icosphere

RNG = np.random.default_rng(1234)

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)
angle = st.floats(0, 2 * np.pi - 1e-9, allow_nan=False)


def random_se2(rng):
    return lg.se2(*rng.normal(size=2), rng.uniform(0, 2 * np.pi))


def random_se3(rng):
    return lg.se3(rng.normal(size=3),
                  lg.rotation_to_direction(rng.normal(size=3)))


def random_element(rng, d):
    return random_se2(rng) if d == 2 else random_se3(rng)


class TestGroupProduct:
    def test_identity(self):
        g = lg.se2(0.3, -1.2, 1.0)
        gi = lg.group_product(lg.identity(2), g)
        assert np.allclose(gi.x, g.x) and abs(gi.theta - g.theta) < 1e-14

    def test_translation_rotation_composition(self):
        g = lg.se2(1.0, 0.0, np.pi / 2)
        h = lg.se2(1.0, 0.0, 0.0)
        gh = lg.group_product(g, h)
        assert np.allclose(gh.x, [1.0, 1.0], atol=1e-14)
        assert abs(gh.theta - np.pi / 2) < 1e-14

    @pytest.mark.parametrize("d", [2, 3])
    def test_inverse_axiom(self, d):
        for _ in range(50):
            g = random_element(RNG, d)
            e = lg.group_product(g, lg.inverse(g))
            assert np.abs(lg.matrix_rep(e) - np.eye(d + 1)).max() < 1e-12

    @given(x1=finite, y1=finite, t1=angle, x2=finite, y2=finite, t2=angle,
           x3=finite, y3=finite, t3=angle)
    @settings(max_examples=60, deadline=None)
    def test_associativity(self, x1, y1, t1, x2, y2, t2, x3, y3, t3):
        a, b, c = lg.se2(x1, y1, t1), lg.se2(x2, y2, t2), lg.se2(x3, y3, t3)
        lhs = lg.group_product(lg.group_product(a, b), c)
        rhs = lg.group_product(a, lg.group_product(b, c))
        assert np.abs(lg.matrix_rep(lhs) - lg.matrix_rep(rhs)).max() < 1e-12


class TestMatrixRep:
    def test_identity(self):
        assert np.array_equal(lg.matrix_rep(lg.identity(3)), np.eye(4))

    @pytest.mark.parametrize("d", [2, 3])
    def test_homomorphism(self, d):
        worst = 0.0
        for _ in range(100):
            g, h = random_element(RNG, d), random_element(RNG, d)
            M = lg.matrix_rep(lg.group_product(g, h))
            worst = max(worst, np.abs(M - lg.matrix_rep(g) @ lg.matrix_rep(h)).max())
        assert worst < 1e-12

    def test_pure_translation_column(self):
        g = lg.se3([1, 2, 3], np.eye(3))
        assert np.allclose(lg.matrix_rep(g)[:, 3], [1, 2, 3, 1])


class TestExpCurve:
    def test_horizontal_circle(self):
        g = lg.exp_curve(lg.identity(2), np.array([1.0, 0, 1.0]), np.pi)
        assert np.allclose([g.x[0], g.x[1], g.theta], [0, 2, np.pi], atol=1e-12)

    def test_straight_line(self):
        g = lg.exp_curve(lg.identity(2), np.array([1.0, 0, 0]), 2.0)
        assert np.allclose([g.x[0], g.x[1], g.theta], [2, 0, 0], atol=1e-14)

    def test_matrix_exponential_oracle(self):
        # independent scaling-and-squaring oracle for both groups
        A2, A3 = lg.lie_algebra_basis(2), lg.lie_algebra_basis(3)
        for _ in range(200):
            t = RNG.normal()
            c2 = RNG.normal(size=3)
            g0 = random_se2(RNG)
            ours = lg.matrix_rep(lg.exp_curve(g0, c2, t))
            oracle = lg.matrix_rep(g0) @ expm(t * np.einsum("i,iab->ab", c2, A2))
            assert np.abs(ours - oracle).max() < 1e-10
            c3 = RNG.normal(size=6)
            h0 = random_se3(RNG)
            ours = lg.matrix_rep(lg.exp_curve(h0, c3, t))
            oracle = lg.matrix_rep(h0) @ expm(t * np.einsum("i,iab->ab", c3, A3))
            assert np.abs(ours - oracle).max() < 1e-10

    def test_one_parameter_subgroup_law(self):
        for _ in range(30):
            d = 2 if RNG.random() < 0.5 else 3
            c = RNG.normal(size=lg.group_dim(d))
            g0 = random_element(RNG, d)
            s, t = RNG.normal(), RNG.normal()
            lhs = lg.exp_curve(g0, c, s + t)
            rhs = lg.group_product(lg.exp_curve(g0, c, s),
                                   lg.exp_curve(lg.identity(d), c, t))
            assert np.abs(lg.matrix_rep(lhs) - lg.matrix_rep(rhs)).max() < 1e-10

    def test_horizontal_lift_relation(self):
        # theta(t) = arg(xdot + i ydot) along the spatial projection, c2 = 0
        c = np.array([1.3, 0.0, 0.7])
        dt = 1e-5
        for t in np.linspace(-2, 2, 17):
            gp = lg.exp_curve(lg.identity(2), c, t + dt)
            gm = lg.exp_curve(lg.identity(2), c, t - dt)
            vel = (gp.x - gm.x) / (2 * dt)
            th = lg.exp_curve(lg.identity(2), c, t).theta
            diff = np.angle(np.exp(1j * (np.arctan2(vel[1], vel[0]) - th)))
            assert abs(diff) < 1e-8


class TestLieAlgebra:
    @pytest.mark.parametrize("d", [2, 3])
    def test_commutators_reproduced(self, d):
        A = lg.lie_algebra_basis(d)
        C = lg.structure_constants(d)
        n = len(A)
        for i in range(n):
            for j in range(n):
                comm = A[i] @ A[j] - A[j] @ A[i]
                rec = np.einsum("k,kab->ab", C[:, i, j], A)
                assert np.abs(comm - rec).max() < 1e-12

    @pytest.mark.parametrize("d", [2, 3])
    def test_antisymmetry_and_jacobi(self, d):
        C = lg.structure_constants(d)
        assert np.abs(C + C.transpose(0, 2, 1)).max() < 1e-12
        jac = (np.einsum("mil,ljk->mijk", C, C)
               + np.einsum("mjl,lki->mijk", C, C)
               + np.einsum("mkl,lij->mijk", C, C))
        assert np.abs(jac).max() < 1e-12


class TestLeftInvariantDerivative:
    def test_spatial_field_on_grid(self):
        N, n = 8, 16
        thetas = np.arange(N) * 2 * np.pi / N
        xs = np.arange(n, dtype=float)
        data = np.broadcast_to(xs[None, :, None], (N, n, n)).copy()
        score = OrientationScore(data, thetas=thetas)
        g = lg.se2(8.0, 8.0, 0.0)
        val = lg.left_invariant_derivative(score, g, 1)
        assert abs(val - 1.0) < 1e-6

    def test_angular_field_on_grid(self):
        N, n = 16, 8
        thetas = np.arange(N) * 2 * np.pi / N
        data = np.broadcast_to(thetas[:, None, None], (N, n, n)).copy()
        score = OrientationScore(data, thetas=thetas)
        g = lg.se2(4.0, 4.0, thetas[5])
        val = lg.left_invariant_derivative(score, g, 3)
        assert abs(val - 1.0) < 1e-6

    def test_stabilizer_derivative_vanishes_on_lift(self):
        sphere = icosphere(1)
        n = 10
        rng = np.random.default_rng(0)
        data = rng.random((sphere.n_vertices, n, n, n))
        score = OrientationScore(data, sphere=sphere)
        v = 7
        g = lg.se3([5.0, 5, 5], sphere.rotations[v])
        val = lg.left_invariant_derivative(score, g, 6)
        assert abs(val) < 1e-8

    def test_analytic_callable(self):
        field = lambda g: g.x[0] ** 2  # noqa: E731
        g = lg.se2(1.5, 0.0, 0.0)
        # A_1 x^2 = 2 x cos(theta) = 3 at theta = 0
        val = lg.left_invariant_derivative(field, g, 1, eps=1e-5)
        assert abs(val - 3.0) < 1e-8


class TestCurvatureTorsion:
    def test_horizontal_planar_circle(self):
        kappa, tau = lg.curvature_torsion(np.array([0, 0, 1, 1, 0, 0.0]))
        assert np.allclose([kappa, tau], [1.0, 0.0], atol=1e-14)

    def test_parallel_rotation(self):
        kappa, tau = lg.curvature_torsion(np.array([0, 0, 1, 0, 0, 1.0]))
        assert np.allclose([kappa, tau], [0.0, 0.0], atol=1e-14)

    def test_mixed(self):
        kappa, tau = lg.curvature_torsion(np.array([0, 0, 2, 1, 0, 1.0]))
        assert abs(kappa - 0.5) < 1e-14 and abs(tau - 0.5) < 1e-14

    def test_zero_spatial_velocity_raises(self):
        with pytest.raises(ValueError):
            lg.curvature_torsion(np.array([0, 0, 0, 1, 0, 0.0]))


class TestHorizontality:
    def test_horizontal(self):
        assert lg.deviation_from_horizontality(np.array([1, 0, 0.4])) == 0.0

    def test_diagonal(self):
        chi = lg.deviation_from_horizontality(np.array([1, 1, 0.0]))
        assert abs(chi - np.pi / 4) < 1e-14

    def test_d3_orthogonal(self):
        chi = lg.deviation_from_horizontality(np.array([1, 0, 0, 0, 0, 0.0]))
        assert abs(chi - np.pi / 2) < 1e-14

    def test_zero_spatial_raises(self):
        with pytest.raises(ValueError):
            lg.deviation_from_horizontality(np.array([0, 0, 1.0]))


class TestMetric:
    def test_unit(self):
        assert abs(lg.metric_norm(np.array([1, 0, 0.0]), 1.0) - 1) < 1e-15

    def test_spatial_scaling(self):
        c = np.array([1, 0, 0, 0, 0, 0.0])
        assert abs(lg.metric_norm(c, 2.0) - 2.0) < 1e-15

    def test_mixed(self):
        c = np.array([1, 0, 0, 0, 0, 3.0])
        assert abs(lg.metric_norm(c, 2.0) - np.sqrt(13)) < 1e-14

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_transport_preserves_metric(self, seed):
        rng = np.random.default_rng(seed)
        d = 2 if rng.random() < 0.5 else 3
        g, h = random_element(rng, d), random_element(rng, d)
        c = rng.normal(size=lg.group_dim(d))
        mu = rng.uniform(0.05, 3.0)
        ct = lg.transport_coeffs(c, g, h)
        assert abs(lg.metric_norm(ct, mu, d) - lg.metric_norm(c, mu, d)) < 1e-12


class TestNeighborRotation:
    def test_same_point_identity(self):
        g = random_se2(RNG)
        assert np.abs(lg.neighbor_rotation(g, g) - np.eye(3)).max() < 1e-14

    def test_planar_quarter_turn(self):
        g = lg.se2(0, 0, np.pi / 2)
        h = lg.se2(1, 1, 0.0)
        R = lg.neighbor_rotation(g, h)
        expected = np.eye(3)
        expected[:2, :2] = [[0, -1], [1, 0]]
        assert np.abs(R - expected).max() < 1e-14

    @pytest.mark.parametrize("d", [2, 3])
    def test_neighboring_curve_lemma(self, d):
        # direct simulation: the transported curve differs by the rigid
        # relation x_h(t) = x_g(t) - x + x', R_h(t) = R_g(t) R^-1 R'
        for _ in range(100):
            g, h = random_element(RNG, d), random_element(RNG, d)
            c = RNG.normal(size=lg.group_dim(d))
            t = RNG.normal()
            gq = lg.exp_curve(g, c, t)
            hq = lg.exp_curve(h, lg.transport_coeffs(c, g, h), t)
            assert np.abs(hq.x - (gq.x - g.x + h.x)).max() < 1e-10
            assert np.abs(hq.R - gq.R @ g.R.T @ h.R).max() < 1e-10


def _parallel_transport_back(C, vel, y_end, t1, t0, steps=200):
    """RK4 transport of y along the parallel ODE ydot^k = c^k_ij v^i y^j."""
    def rhs(y):
        return np.einsum("kij,i,j->k", C, vel, y)

    h = (t0 - t1) / steps
    y = y_end.copy()
    for _ in range(steps):
        k1 = rhs(y)
        k2 = rhs(y + h / 2 * k1)
        k3 = rhs(y + h / 2 * k2)
        k4 = rhs(y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


class TestCovariantDerivative:
    def test_autoparallel(self):
        ts = np.linspace(0, 1, 51)
        for d in (2, 3):
            c = RNG.normal(size=lg.group_dim(d))
            vel = np.tile(c, (len(ts), 1))
            cov = lg.covariant_derivative(vel, vel, ts[1] - ts[0], d)
            assert np.abs(cov).max() < 1e-8

    def test_constant_section_with_vanishing_contraction(self):
        # gamma' along A_1 only; y along A_1: c^k_{11} = 0 for SE(2)
        ts = np.linspace(0, 1, 21)
        vel = np.tile([1.0, 0, 0], (len(ts), 1))
        Y = np.tile([1.0, 0, 0], (len(ts), 1))
        cov = lg.covariant_derivative(vel, Y, ts[1] - ts[0], 2)
        assert np.abs(cov).max() < 1e-12

    def test_against_transport_oracle(self):
        # finite-difference of parallel-transported samples, independent of
        # the structure-constant contraction formula used in production
        d = 2
        C = lg.structure_constants(d)
        vel_c = np.array([1.0, 0, 1.0])
        y0 = np.array([0.0, 1.0, 0.0])
        ts = np.linspace(0, 0.5, 26)
        dt = ts[1] - ts[0]
        Y = np.tile(y0, (len(ts), 1))  # constant components along the curve
        vel = np.tile(vel_c, (len(ts), 1))
        cov = lg.covariant_derivative(vel, Y, dt, d)
        eps = 1e-4
        # central difference of parallel-transported samples (constant field:
        # components at t +- eps equal y0)
        fwd = _parallel_transport_back(C, vel_c, y0, eps, 0.0)
        bwd = _parallel_transport_back(C, vel_c, y0, -eps, 0.0)
        oracle = (fwd - bwd) / (2 * eps)
        # also the analytic value -sum c^k_ij v^i y^j
        analytic = -np.einsum("kij,i,j->k", C, vel_c, y0)
        assert np.abs(cov[10] - analytic).max() < 1e-10
        assert np.abs(oracle - analytic).max() < 1e-6

    def test_mismatched_sample_counts(self):
        with pytest.raises(ValueError):
            lg.covariant_derivative(np.zeros((5, 3)), np.zeros((4, 3)), 0.1, 2)
