import numpy as np
import pytest

from curvediff import calculus, curves
from curvediff.checks import finite_difference_drift
from curvediff.errors import SingularMetric, StepTooLarge
from oracles import drift_reference, metric_gradient_reference


def fd_metric_gradient(c, m, step=1e-6):
    X = c.vertices
    n, d = X.shape
    dn = n * d
    flat = X.reshape(-1)
    out = np.zeros((dn, dn, dn))
    for j in range(dn):
        h = step * max(1.0, abs(flat[j]))
        xp, xm = flat.copy(), flat.copy()
        xp[j] += h
        xm[j] -= h
        Gp = curves.metric_tensor(curves.DiscreteCurve(xp.reshape(n, d)), m).matrix
        Gm = curves.metric_tensor(curves.DiscreteCurve(xm.reshape(n, d)), m).matrix
        out[:, :, j] = (Gp - Gm) / (2 * h)
    return out


class TestMetricGradient:
    def test_matches_central_differences(self, rng, rand_curve):
        for m in (0, 1, 2):
            for _ in range(4):
                c = rand_curve(rng, int(rng.integers(3, 7)), 2)
                dG = calculus.metric_tensor_derivative(c, m)
                fd = fd_metric_gradient(c, m)
                scale = max(1.0, np.abs(fd).max())
                assert np.abs(dG - fd).max() / scale <= 1e-5

    def test_matches_complex_step_reference(self, rng, rand_curve):
        c = rand_curve(rng, 4, 2)
        for m in (1, 3):
            dG = calculus.metric_tensor_derivative(c, m)
            ref = metric_gradient_reference(c.vertices, m)
            assert np.abs(dG - ref).max() <= 1e-9 * max(1.0, np.abs(ref).max())

    def test_translation_directions_vanish(self, rng, rand_curve):
        c = rand_curve(rng, 6, 3)
        dG = calculus.metric_tensor_derivative(c, 2)
        for a in range(3):
            t = np.zeros((6, 3))
            t[:, a] = 1.0
            assert np.abs(dG @ t.reshape(-1)).max() <= 1e-12

    def test_low_order_weight_derivative_hand_formula(self):
        # d/dx of the L^2 weights (|e_i| + |e_{i-1}|) / (2 l^3) on the unit
        # square, differentiated by hand via unit edge vectors
        c = curves.make_square()
        X = c.vertices
        n, d = X.shape
        elen, J = calculus._edge_geometry(X)
        l = elen.sum()
        from curvediff.dual import Dual

        w_low, _ = curves._metric_weights(Dual(elen, np.eye(n)), Dual(elen, np.eye(n)).sum(), 1)
        grad = w_low.dot @ J  # chain to vertex coordinates, shape (n, dn)
        prev = np.roll(elen, 1)
        dl = J.sum(axis=0)
        hand = np.zeros((n, n * d))
        for i in range(n):
            d_ei = J[i]
            d_eprev = J[(i - 1) % n]
            hand[i] = (d_ei + d_eprev) / (2 * l**3) - 3 * (
                elen[i] + prev[i]
            ) / (2 * l**4) * dl
        assert np.abs(grad - hand).max() <= 1e-14


class TestDrift:
    def test_zero_for_constant_tensor_surrogate(self):
        G = np.diag([2.0, 3.0, 1.5, 4.0])
        dG = np.zeros((4, 4, 4))
        assert np.allclose(calculus._drift_from_parts(G, dG), 0.0)

    def test_zero_for_two_dim_conformal_tensor(self):
        # f(x) I_2 in the plane: sqrt(det) = f and g^{ij} = f^{-1} d_ij force
        # exact cancellation whatever f is
        def tensor(xy):
            x, y = xy
            f = 1.5 + 0.4 * np.sin(x) + 0.2 * x * y
            df = np.array([0.4 * np.cos(x) + 0.2 * y, 0.2 * x])
            dG = np.zeros((2, 2, 2))
            dG[0, 0] = df
            dG[1, 1] = df
            return f * np.eye(2), dG

        for xy in ([0.2, -1.0], [1.5, 0.7], [-2.0, 0.1]):
            G, dG = tensor(np.array(xy))
            assert np.abs(calculus._drift_from_parts(G, dG)).max() <= 1e-14

    def test_matches_finite_difference_formula(self, rng, rand_curve):
        for m in (0, 1, 2):
            for _ in range(3):
                c = rand_curve(rng, 5, 2)
                b = calculus.drift(c, m)
                b_fd = finite_difference_drift(c, m)
                assert np.linalg.norm(b - b_fd) <= 1e-5 * max(
                    np.linalg.norm(b_fd), 1e-12
                )

    def test_matches_complex_step_reference(self, rng, rand_curve):
        c = rand_curve(rng, 4, 2)
        for m in (1, 2):
            b = calculus.drift(c, m)
            ref = drift_reference(c.vertices, m)
            assert np.linalg.norm(b - ref) <= 1e-9 * max(1.0, np.linalg.norm(ref))

    def test_translation_invariance_of_field(self, rng, rand_curve):
        c = rand_curve(rng, 5, 3)
        b = calculus.drift(c, 2)
        moved = calculus.drift(c.translated([4.0, -2.0, 1.0]), 2)
        assert np.linalg.norm(moved - b) <= 1e-8 * np.linalg.norm(b)

    def test_rotation_equivariance(self, rng, rand_curve):
        c = rand_curve(rng, 5, 2)
        rot = np.linalg.qr(rng.standard_normal((2, 2)))[0]
        b = calculus.drift(c, 2).reshape(5, 2)
        b_rot = calculus.drift(c.transformed(rot), 2).reshape(5, 2)
        assert np.abs(b_rot - b @ rot.T).max() <= 1e-8 * max(np.abs(b).max(), 1.0)

    def test_divergence_sum_has_no_translation_content(self, rng, rand_curve):
        # the i-sum in b^j = 1/2 d_i g^{ij} + 1/2 g^{ij} d_i log sqrt det G
        # receives nothing from differentiation along constant fields
        for m in (0, 1, 2):
            c = rand_curve(rng, int(rng.integers(3, 7)), 2)
            G, dG = calculus.metric_with_gradient(c.vertices, m)
            grad_logdet = np.einsum("kl,klj->j", np.linalg.inv(G), dG)
            for a in range(2):
                t = np.zeros((c.n, 2))
                t[:, a] = 1.0
                t = t.reshape(-1)
                assert np.abs(dG @ t).max() <= 1e-8
                assert abs(float(grad_logdet @ t)) <= 1e-8


class TestDiffusionFactor:
    def test_identity_surrogate(self):
        assert np.array_equal(calculus.lower_inverse_factor(np.eye(5)), np.eye(5))

    def test_conformal_scaling(self):
        f = 3.7
        sigma = calculus.lower_inverse_factor(f * np.eye(2))
        assert np.allclose(sigma, np.eye(2) / np.sqrt(f), rtol=1e-14)

    def test_residual_and_shape(self, rng, rand_curve):
        for _ in range(20):
            n, d = int(rng.integers(3, 9)), int(rng.integers(2, 4))
            m = int(rng.integers(0, 3))
            c = rand_curve(rng, n, d)
            sigma = calculus.diffusion_factor(c, m)
            assert np.allclose(sigma, np.tril(sigma))
            G = curves.metric_tensor(c, m).matrix
            eye = np.eye(n * d)
            res = np.linalg.norm(sigma @ sigma.T @ G - eye) / np.linalg.norm(eye)
            assert res <= 1e-10

    def test_singular_metric_raises(self):
        bad = np.array([[1.0, 2.0], [2.0, 1.0]])  # indefinite
        with pytest.raises(SingularMetric):
            calculus.lower_inverse_factor(bad)


class TestGeodesics:
    def test_flat_surrogate_is_straight_line(self, rng):
        c0 = curves.make_circle(5, 1.0, 2)
        h0 = rng.standard_normal((5, 2))
        states = calculus.geodesic_shoot(
            c0, h0, 2.0, 16, 2, tensor_field=calculus.flat_tensor_field
        )
        expect = c0.vertices + 2.0 * h0
        assert np.abs(states[-1].position.vertices - expect).max() <= 1e-12

    def test_energy_conservation(self, rng, rand_curve):
        c0 = rand_curve(rng, 5, 2)
        h0 = calculus.unit_speed_velocity(c0, rng.standard_normal((5, 2)), 2)
        states = calculus.geodesic_shoot(c0, h0, 1.0, 1000, 2)
        H = np.array([s.energy for s in states])
        assert H[0] == pytest.approx(0.5, rel=1e-12)  # unit speed
        assert np.abs(H / H[0] - 1.0).max() <= 1e-6

    def test_log_edge_bound_along_unit_speed(self, rng, rand_curve):
        c0 = rand_curve(rng, 5, 2)
        e0 = c0.edge_lengths()
        h0 = calculus.unit_speed_velocity(c0, rng.standard_normal((5, 2)), 2)
        for s in calculus.geodesic_shoot(c0, h0, 1.0, 200, 2)[1:]:
            ratio = np.abs(np.log(s.position.edge_lengths() / e0)).max()
            assert ratio <= s.t / 2.0 * (1.0 + 1e-6)

    def test_reversal_returns_home(self, rng, rand_curve):
        c0 = rand_curve(rng, 4, 2)
        h0 = calculus.unit_speed_velocity(c0, rng.standard_normal((4, 2)), 2)
        fwd = calculus.geodesic_shoot(c0, h0, 0.5, 100, 2)
        end = fwd[-1]
        G_end, _ = calculus.metric_with_gradient(end.position.vertices, 2)
        back_vel = np.linalg.solve(G_end, -end.momentum).reshape(4, 2)
        back = calculus.geodesic_shoot(end.position, back_vel, 0.5, 100, 2)
        assert np.abs(back[-1].position.vertices - c0.vertices).max() <= 1e-9

    def test_reversed_direction_retraces(self, rng, rand_curve):
        # shooting from the endpoint with the opposite velocity replays the
        # forward path in reverse, state by state
        c0 = rand_curve(rng, 4, 2)
        h0 = calculus.unit_speed_velocity(c0, rng.standard_normal((4, 2)), 2)
        fwd = calculus.geodesic_shoot(c0, h0, 0.4, 80, 2)
        end = fwd[-1]
        G_end, _ = calculus.metric_with_gradient(end.position.vertices, 2)
        back_vel = np.linalg.solve(G_end, -end.momentum).reshape(4, 2)
        back = calculus.geodesic_shoot(end.position, back_vel, 0.4, 80, 2)
        for k in (20, 40, 60, 80):
            assert np.abs(
                back[k].position.vertices - fwd[80 - k].position.vertices
            ).max() <= 1e-8

    def test_energy_guard_raises(self, rng, rand_curve):
        c0 = rand_curve(rng, 4, 2)
        h0 = calculus.unit_speed_velocity(c0, rng.standard_normal((4, 2)), 2)
        with pytest.raises(StepTooLarge):
            calculus.geodesic_shoot(c0, 80.0 * h0.components, 1.0, 3, 2,
                                    energy_tol=1e-12)

    def test_rejects_zero_velocity(self):
        c0 = curves.make_circle(4, 1.0, 2)
        with pytest.raises(ValueError):
            calculus.geodesic_shoot(c0, np.zeros((4, 2)), 1.0, 10, 2)


class TestEdgeRate:
    def test_constant_field_rate_zero(self, rng, rand_curve):
        c = rand_curve(rng, 5, 2)
        h = np.tile([1.0, 0.5], (5, 1))
        h = calculus.unit_speed_velocity(c, h, 2).components
        for i in range(5):
            assert calculus.log_edge_rate(c, h, i, 2) == pytest.approx(0.0, abs=1e-14)

    def test_requires_unit_norm(self, rng, rand_curve):
        c = rand_curve(rng, 5, 2)
        with pytest.raises(ValueError):
            calculus.log_edge_rate(c, 5.0 * rng.standard_normal((5, 2)), 0, 2)

    def test_bound_on_samples(self, rng, rand_curve):
        for m in (2, 3):
            bound = 2.0 ** (1 - m)
            for _ in range(100):
                n = int(rng.integers(3, 8))
                c = rand_curve(rng, n, 2, min_edge=0.05, spread=0.5)
                h = calculus.unit_speed_velocity(c, rng.standard_normal((n, 2)), m)
                rates = calculus.log_edge_rates(c, h.components)
                assert np.abs(rates).max() <= bound + 1e-9

    def test_exact_operator_norm_below_bound(self, rng, rand_curve):
        # the rate is linear in h, so its max over the unit metric ball is
        # sqrt(a^T G^{-1} a); check that exact value, not just samples
        for m in (2, 3):
            bound = 2.0 ** (1 - m)
            for _ in range(10):
                n = int(rng.integers(3, 8))
                c = rand_curve(rng, n, 2, min_edge=0.05, spread=0.5)
                Ginv = np.linalg.inv(curves.metric_tensor(c, m).matrix)
                e = c.edges()
                el2 = np.einsum("ia,ia->i", e, e)
                for i in range(n):
                    a = np.zeros((n, 2))
                    a[(i + 1) % n] = e[i] / el2[i]
                    a[i] -= e[i] / el2[i]
                    a = a.reshape(-1)
                    assert np.sqrt(a @ Ginv @ a) <= bound + 1e-9


class TestVolumeProbe:
    def test_flat_surrogate_slope_zero(self):
        c0 = curves.make_circle(5, 1.0, 2)
        report = calculus.probe_volume_growth(
            c0, 2, [0.5, 1.0, 1.5], samples=2, seed=3,
            tensor_field=calculus.flat_tensor_field, steps_per_unit=40,
        )
        assert report.fit_slope == pytest.approx(0.0, abs=1e-12)
        assert report.grigoryan_divergent

    def test_sobolev_probe_linear_and_edge_bound(self):
        c0 = curves.make_circle(5, 1.0, 2)
        radii = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0]
        report = calculus.probe_volume_growth(
            c0, 2, radii, samples=4, seed=11, steps_per_unit=120
        )
        assert report.grigoryan_divergent
        for r, ratio in zip(report.radii, report.log_edge_ratio_max):
            assert ratio <= r / 2.0 * (1.0 + 1e-6)

    def test_requires_complete_orders(self):
        c0 = curves.make_circle(4, 1.0, 2)
        with pytest.raises(ValueError):
            calculus.probe_volume_growth(c0, 1, [1.0, 2.0], samples=1, seed=0)

    def test_deterministic_and_parallel_equal(self):
        c0 = curves.make_circle(4, 1.0, 2)
        kw = dict(radii=[0.5, 1.0], samples=3, seed=5, steps_per_unit=40)
        a = calculus.probe_volume_growth(c0, 2, **kw)
        b = calculus.probe_volume_growth(c0, 2, **kw)
        c = calculus.probe_volume_growth(c0, 2, workers=2, **kw)
        assert a == b == c
