import math
import warnings

import numpy as np
import pytest

from htcpipe import kernels, rbf
from htcpipe.domain import LoadCase, gen_rect_face
from htcpipe.surrogate import SurrogateParams, synth_htc


def probe_points(rng, n=20, scale=1.0):
    return rng.uniform(-scale, 2 * scale, size=(n, 3)) * np.array([1.0, 1.0, 0.0])


class TestFit:
    def test_single_center(self):
        model = rbf.fit(np.array([[0.2, 0.3, 0.0]]), [7.0])
        assert rbf.evaluate(model, (0.2, 0.3, 0.0)) == pytest.approx(7.0, rel=1e-12)

    def test_interpolates_all_nodes_exactly(self, square_face, base_case):
        field = synth_htc(square_face, base_case, SurrogateParams(face_phase=2))
        model = rbf.fit(square_face.positions, field.values, ridge=0.0)
        pred = rbf.evaluate(model, square_face.positions)
        assert np.max(np.abs(pred - field.values) / np.abs(field.values)) <= 1e-8

    def test_recovers_manufactured_coefficients(self):
        # Forward-evaluate Phi @ c for known c, then invert.
        centers = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.3, 0.9, 0.0]])
        c_true = np.array([1.0, -2.0, 0.5])
        eps = 1.2
        phi = kernels.kernel_matrix(centers, centers, eps, kernels.KERNEL_GAUSSIAN)
        values = phi @ c_true
        model = rbf.fit(centers, values, shape_eps=eps, ridge=0.0)
        assert np.allclose(model.coefficients, c_true, rtol=1e-6, atol=1e-9)

    def test_duplicate_centers_rejected(self):
        centers = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        with pytest.raises(rbf.RBFFitError, match="duplicate"):
            rbf.fit(centers, [1.0, 2.0])

    def test_length_mismatch_rejected(self):
        centers = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        with pytest.raises(ValueError, match="values"):
            rbf.fit(centers, [1.0])

    def test_ill_conditioned_system_warns(self):
        centers = np.array([[0.0, 0.0, 0.0], [1e-10, 0.0, 0.0], [1.0, 0.0, 0.0]])
        with pytest.warns(RuntimeWarning, match="ill-conditioned"):
            rbf.fit(centers, [1.0, 1.0, 2.0], ridge=0.0)

    def test_auto_ridge_stays_close_to_interpolation(self, square_face, base_case):
        field = synth_htc(square_face, base_case, SurrogateParams())
        model = rbf.fit(square_face.positions, field.values, ridge=None)
        pred = rbf.evaluate(model, square_face.positions)
        assert np.max(np.abs(pred - field.values)) <= 1e-6

    def test_multiquadric_kernel(self, square_face, base_case):
        field = synth_htc(square_face, base_case, SurrogateParams())
        model = rbf.fit(square_face.positions, field.values, kernel="multiquadric", ridge=0.0)
        pred = rbf.evaluate(model, square_face.positions)
        assert np.max(np.abs(pred - field.values) / np.abs(field.values)) <= 1e-8


class TestEvaluate:
    def test_far_field_decay_gaussian(self):
        centers = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        model = rbf.fit(centers, [3.0, -1.0], shape_eps=1.0, ridge=0.0)
        d_min = 9.0
        far = rbf.evaluate(model, (10.0, 0.0, 0.0))
        bound = np.sum(np.abs(model.coefficients)) * math.exp(-(1.0 * d_min) ** 2)
        assert abs(far) <= bound

    def test_symmetric_two_center_midpoint(self):
        # Hand evaluation: equal values w at centers +/- a on the x axis give
        # equal coefficients c = w / (1 + phi(2a)); the midpoint evaluates to
        # 2 c phi(a).
        a, w, eps = 1.0, 5.0, 0.8
        centers = np.array([[-a, 0.0, 0.0], [a, 0.0, 0.0]])
        model = rbf.fit(centers, [w, w], shape_eps=eps, ridge=0.0)
        phi = lambda r: math.exp(-((eps * r) ** 2))
        c = w / (1.0 + phi(2 * a))
        expected = 2.0 * c * phi(a)
        assert rbf.evaluate(model, (0.0, 0.0, 0.0)) == pytest.approx(expected, rel=1e-12)

    def test_permutation_symmetry(self):
        rng = np.random.default_rng(0)
        centers = rng.uniform(0, 1, (8, 3)) * np.array([1.0, 1.0, 0.0])
        values = rng.uniform(1, 10, 8)
        perm = rng.permutation(8)
        m1 = rbf.fit(centers, values, shape_eps=2.0, ridge=0.0)
        m2 = rbf.fit(centers[perm], values[perm], shape_eps=2.0, ridge=0.0)
        probes = probe_points(rng)
        assert np.allclose(rbf.evaluate(m1, probes), rbf.evaluate(m2, probes),
                           rtol=1e-10, atol=1e-10)

    def test_linear_in_values(self):
        rng = np.random.default_rng(1)
        centers = rng.uniform(0, 1, (6, 3)) * np.array([1.0, 1.0, 0.0])
        w1 = rng.uniform(1, 5, 6)
        w2 = rng.uniform(1, 5, 6)
        a, b = 2.5, -0.75
        opts = dict(shape_eps=1.5, ridge=0.0)
        m1 = rbf.fit(centers, w1, **opts)
        m2 = rbf.fit(centers, w2, **opts)
        m12 = rbf.fit(centers, a * w1 + b * w2, **opts)
        probes = probe_points(rng)
        combined = a * rbf.evaluate(m1, probes) + b * rbf.evaluate(m2, probes)
        got = rbf.evaluate(m12, probes)
        assert np.allclose(got, combined, rtol=1e-8, atol=1e-10)


class TestDefaultShape:
    def test_unit_square_corners(self):
        centers = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], dtype=float)
        assert rbf.default_shape(centers) == pytest.approx(1.0)

    def test_collinear_half_spacing(self):
        centers = np.array([[0, 0, 0], [0.5, 0, 0], [1.0, 0, 0]], dtype=float)
        assert rbf.default_shape(centers) == pytest.approx(2.0)

    def test_single_center_returns_one(self):
        assert rbf.default_shape(np.array([[0.3, 0.4, 0.0]])) == 1.0

    def test_matches_brute_force_nn_scan(self):
        rng = np.random.default_rng(2)
        centers = rng.uniform(0, 2, (10, 3))
        nn = []
        for i in range(10):
            best = math.inf
            for j in range(10):
                if i != j:
                    best = min(best, float(np.linalg.norm(centers[i] - centers[j])))
            nn.append(best)
        assert rbf.default_shape(centers) == pytest.approx(1.0 / np.mean(nn), rel=1e-12)


class TestBackends:
    def test_compiled_and_numpy_agree(self):
        from htcpipe import _kernels_np

        try:
            from htcpipe import _kernels
        except ImportError:
            pytest.skip("compiled extension not built")
        rng = np.random.default_rng(3)
        a = rng.uniform(0, 1, (30, 3))
        b = rng.uniform(0, 1, (9, 3))
        c = rng.uniform(-2, 2, 9)
        for kind in (kernels.KERNEL_GAUSSIAN, kernels.KERNEL_MULTIQUADRIC):
            k_c = _kernels.kernel_matrix(a, b, 1.7, kind)
            k_n = _kernels_np.kernel_matrix(a, b, 1.7, kind)
            assert np.allclose(k_c, k_n, rtol=1e-12, atol=1e-14)
            e_c = _kernels.rbf_eval(b, c, a, 1.7, kind)
            e_n = _kernels_np.rbf_eval(b, c, a, 1.7, kind)
            assert np.allclose(e_c, e_n, rtol=1e-12, atol=1e-12)

    def test_unknown_kernel_id_rejected(self):
        a = np.zeros((1, 3))
        with pytest.raises(ValueError):
            kernels.kernel_matrix(a, a, 1.0, 7)
