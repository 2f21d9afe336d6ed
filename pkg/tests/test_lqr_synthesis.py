import math

import numpy as np
import pytest
import scipy.linalg

from cbfaw import constants
from cbfaw.errors import DimensionError, SynthesisError, ValidationError
from cbfaw.lqr_synthesis import (
    design_lqr_servo,
    make_gains,
    make_weights,
    riccati_residual,
    servo_gains,
    solve_care,
    weights_from_diagonal,
)
from cbfaw.lti_core import build_extended_system, make_plant


class TestSolveCare:
    def test_single_integrator(self):
        p = solve_care([[0.0]], [[1.0]], [[1.0]], [[1.0]])
        np.testing.assert_allclose(p, [[1.0]], rtol=1e-12)

    def test_stable_scalar(self):
        p = solve_care([[-1.0]], [[1.0]], [[1.0]], [[1.0]])
        np.testing.assert_allclose(p, [[math.sqrt(2.0) - 1.0]], rtol=1e-12)

    def test_matches_scipy_on_reference_design(self, reference_extended):
        weights = weights_from_diagonal(constants.REFERENCE_Q_DIAG, constants.REFERENCE_R)
        p = solve_care(reference_extended.A, reference_extended.B, weights.Q, weights.R)
        expected = scipy.linalg.solve_continuous_are(
            reference_extended.A, reference_extended.B, weights.Q, weights.R
        )
        np.testing.assert_allclose(p, expected, rtol=1e-8, atol=1e-10)
        np.testing.assert_array_equal(p, p.T)

    def test_residual_and_stability(self, rng):
        for _ in range(10):
            a = rng.standard_normal((4, 4))
            b = rng.standard_normal((4, 2))
            q = np.eye(4)
            r = np.eye(2)
            p = solve_care(a, b, q, r)
            assert riccati_residual(a, b, q, r, p) <= constants.RICCATI_RTOL * (
                1.0 + np.linalg.norm(p)
            )
            closed = a - b @ np.linalg.solve(r, b.T @ p)
            assert np.all(np.linalg.eigvals(closed).real < 0.0)

    def test_not_stabilizable(self):
        with pytest.raises(SynthesisError):
            solve_care([[1.0]], [[0.0]], [[1.0]], [[1.0]])

    def test_imaginary_axis_mode(self):
        with pytest.raises(SynthesisError):
            solve_care([[0.0]], [[0.0]], [[1.0]], [[1.0]])

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            solve_care(np.eye(2), np.ones((3, 1)), np.eye(2), [[1.0]])


class TestWeights:
    def test_asymmetric_q(self):
        with pytest.raises(ValidationError):
            make_weights([[1.0, 0.5], [0.0, 1.0]], [[1.0]])

    def test_indefinite_q(self):
        with pytest.raises(ValidationError):
            make_weights(np.diag([1.0, -1.0]), [[1.0]])

    def test_singular_r(self):
        with pytest.raises(ValidationError):
            make_weights(np.eye(2), [[0.0]])

    def test_zero_diagonal_entries_allowed(self):
        weights = weights_from_diagonal(constants.REFERENCE_Q_DIAG, 1.0)
        np.testing.assert_array_equal(np.diag(weights.Q), constants.REFERENCE_Q_DIAG)


class TestServoGains:
    def test_pure_integrator_split(self):
        gains = servo_gains([[1.0]], [[1.0]], [[1.0]], 0, 1)
        np.testing.assert_array_equal(gains.K_I, [[1.0]])
        assert gains.K_P.shape == (1, 0)

    def test_split(self):
        gains = servo_gains(2.0 * np.eye(2), [[1.0], [0.0]], [[1.0]], 1, 1)
        np.testing.assert_array_equal(gains.K_I, [[2.0]])
        np.testing.assert_array_equal(gains.K_P, [[0.0]])

    def test_singular_integral_gain(self):
        with pytest.raises(SynthesisError):
            servo_gains(np.diag([0.0, 1.0]), [[1.0], [0.0]], [[1.0]], 1, 1)

    def test_reference_design(self, reference_extended):
        gains = design_lqr_servo(
            reference_extended, weights_from_diagonal(constants.REFERENCE_Q_DIAG, constants.REFERENCE_R)
        )
        np.testing.assert_allclose(gains.K.ravel(), constants.REFERENCE_GAINS, rtol=1e-3)
        np.testing.assert_allclose(gains.K_I, [[-math.sqrt(20.0)]], rtol=1e-6)
        closed = reference_extended.A - reference_extended.B @ gains.K
        assert np.all(np.linalg.eigvals(closed).real < 0.0)

    def test_joint_weight_scaling(self, reference_extended):
        base = weights_from_diagonal(constants.REFERENCE_Q_DIAG, constants.REFERENCE_R)
        scaled = make_weights(7.0 * base.Q, 7.0 * base.R)
        np.testing.assert_allclose(
            design_lqr_servo(reference_extended, scaled).K,
            design_lqr_servo(reference_extended, base).K,
            rtol=1e-9,
        )

    def test_mimo_design(self, rng):
        plant = make_plant(
            -np.eye(3) + 0.3 * rng.standard_normal((3, 3)),
            rng.standard_normal((3, 2)),
            rng.standard_normal((2, 3)),
            np.zeros((2, 2)),
        )
        extended = build_extended_system(plant)
        gains = design_lqr_servo(extended, weights_from_diagonal(np.ones(5), np.eye(2)))
        assert gains.K_I.shape == (2, 2)
        assert gains.K_P.shape == (2, 3)


class TestMakeGains:
    def test_explicit(self):
        gains = make_gains([[-4.4721]], [-1.0369, -0.58504], 2, 1)
        assert gains.K_P.shape == (1, 2)
        np.testing.assert_array_equal(gains.K, [[-4.4721, -1.0369, -0.58504]])

    def test_wrong_size(self):
        with pytest.raises(DimensionError):
            make_gains([[1.0]], [1.0, 2.0, 3.0], 2, 1)

    def test_singular(self):
        with pytest.raises(SynthesisError):
            make_gains([[0.0]], [1.0, 2.0], 2, 1)
