import logging

import numpy as np
import pytest

from cbfaw.errors import DimensionError, ValidationError
from cbfaw.lti_core import (
    build_extended_system,
    check_augmentation_controllable,
    check_hurwitz,
    controllability_rank_test,
    make_limits,
    make_plant,
    saturate,
    zero_test_matrix,
)


class TestExtendedSystem:
    def test_reference_plant(self, reference_extended):
        np.testing.assert_array_equal(
            reference_extended.A,
            [[0.0, 1.0, 0.0], [0.0, -2.241, 0.9897], [0.0, -4.474, -0.9024]],
        )
        np.testing.assert_array_equal(reference_extended.B, [[0.0], [-0.23307], [-4.5926]])
        np.testing.assert_array_equal(reference_extended.B_cmd, [[-1.0], [0.0], [0.0]])
        assert reference_extended.n == 3
        assert reference_extended.m == 1

    def test_integrator_columns_are_zero(self, rng):
        plant = make_plant(
            rng.standard_normal((4, 4)),
            rng.standard_normal((4, 2)),
            rng.standard_normal((2, 4)),
            rng.standard_normal((2, 2)),
        )
        extended = build_extended_system(plant)
        np.testing.assert_array_equal(extended.A[:, :2], 0.0)
        np.testing.assert_array_equal(extended.B_cmd[:2], -np.eye(2))
        np.testing.assert_array_equal(extended.B_cmd[2:], 0.0)

    def test_matrices_are_read_only(self, reference_extended):
        with pytest.raises(ValueError):
            reference_extended.A[0, 0] = 1.0


class TestMakePlant:
    def test_inconsistent_dimensions(self):
        with pytest.raises(DimensionError):
            make_plant(np.eye(2), np.ones((3, 1)), np.ones((1, 2)), np.zeros((1, 1)))
        with pytest.raises(DimensionError):
            make_plant(np.eye(2), np.ones((2, 1)), np.ones((2, 2)), np.zeros((1, 1)))

    def test_non_finite_entry(self):
        with pytest.raises(ValidationError):
            make_plant([[np.nan]], [[1.0]], [[1.0]], [[0.0]])


class TestSaturate:
    def test_examples(self, reference_limits):
        np.testing.assert_allclose(saturate(np.array([0.2]), reference_limits), [0.17453], atol=1e-5)
        np.testing.assert_allclose(saturate(np.array([-0.5]), reference_limits), [-0.17453], atol=1e-5)
        np.testing.assert_array_equal(saturate(np.array([0.1]), reference_limits), [0.1])

    def test_idempotent(self, rng):
        limits = make_limits([-1.0, -0.5], [2.0, 0.5])
        u = 3.0 * rng.standard_normal((50, 2))
        once = saturate(u, limits)
        np.testing.assert_array_equal(saturate(once, limits), once)
        assert np.all(once >= limits.u_min)
        assert np.all(once <= limits.u_max)


class TestMakeLimits:
    def test_broadcast(self):
        limits = make_limits(-1.0, 1.0, 3)
        np.testing.assert_array_equal(limits.u_min, [-1.0, -1.0, -1.0])

    def test_empty_interval(self):
        with pytest.raises(ValidationError):
            make_limits(1.0, 1.0, 1)

    def test_channel_mismatch(self):
        with pytest.raises(DimensionError):
            make_limits([-1.0, -1.0], [1.0])


class TestHurwitz:
    def test_examples(self, reference_plant):
        assert check_hurwitz(reference_plant.A_p)
        assert not check_hurwitz(np.array([[0.0, 1.0], [-1.0, 0.0]]))
        assert not check_hurwitz(np.array([[1e-13]]))
        assert check_hurwitz(np.array([[-1.0]]))

    def test_logs_offending_eigenvalues(self, caplog, monkeypatch):
        monkeypatch.setattr(logging.getLogger("cbfaw"), "propagate", True)
        check_hurwitz(np.array([[2.0]]))
        assert "not Hurwitz" in caplog.text


class TestAugmentationControllability:
    def test_reference_plant(self, reference_plant):
        assert np.linalg.det(zero_test_matrix(reference_plant)) == pytest.approx(-4.7556, abs=1e-3)
        assert check_augmentation_controllable(reference_plant)

    def test_zero_at_origin(self):
        plant = make_plant([[-1.0]], [[1.0]], [[0.0]], [[0.0]])
        assert not check_augmentation_controllable(plant)
        assert not controllability_rank_test(build_extended_system(plant))

    def test_direct_feedthrough_without_state_output(self):
        plant = make_plant([[-1.0]], [[1.0]], [[0.0]], [[1.0]])
        assert np.linalg.det(zero_test_matrix(plant)) == pytest.approx(-1.0)
        assert check_augmentation_controllable(plant)
        assert controllability_rank_test(build_extended_system(plant))

    @pytest.mark.parametrize("n_p, m", [(1, 1), (2, 1), (3, 1), (3, 2), (4, 2)])
    def test_agrees_with_rank_test(self, rng, n_p, m):
        for _ in range(10):
            plant = make_plant(
                rng.standard_normal((n_p, n_p)),
                rng.standard_normal((n_p, m)),
                rng.standard_normal((m, n_p)),
                rng.standard_normal((m, m)),
            )
            assert check_augmentation_controllable(plant) == controllability_rank_test(
                build_extended_system(plant)
            )
