import numpy as np
import pytest

from cbfaw import constants
from cbfaw.analysis import (
    alpha_time_constant,
    default_grid,
    loop_gain_response,
    saturated_mode_consistency,
    saturated_mode_matrix,
    spectrum_identity,
    step_response,
)
from cbfaw.aw_cbf import make_cbf_params
from cbfaw.errors import ConfigurationError, InvalidStateError
from cbfaw.linalg import match_spectra
from cbfaw.lqr_synthesis import ServoGains, make_gains
from cbfaw.lti_core import ExtendedSystem, make_plant
from cbfaw.sim_engine import make_actuator
from cbfaw.verify import random_plant_case, saturated_samples


@pytest.fixture(scope="module")
def actuator():
    return make_actuator(constants.REFERENCE_ACTUATOR_FREQUENCY, constants.REFERENCE_ACTUATOR_DAMPING, True)


class TestSaturatedModeMatrix:
    def test_reference_design(self, lqr_problem):
        closed = saturated_mode_matrix(lqr_problem.plant, lqr_problem.gains, lqr_problem.params)
        assert match_spectra(
            closed.spectrum, [-4.4721, -1.5717 + 1.9950j, -1.5717 - 1.9950j], 1e-4
        ).matched
        assert spectrum_identity(closed, lqr_problem.plant, lqr_problem.params).matched
        np.testing.assert_array_equal(closed.A_tilde[1:, :1], 0.0)
        np.testing.assert_array_equal(closed.A_tilde[1:, 1:], lqr_problem.plant.A_p)
        np.testing.assert_array_equal(closed.C0[1:], lqr_problem.plant.B_p)

    @pytest.mark.parametrize("n_p, m", [(1, 1), (2, 1), (3, 2), (4, 2)])
    def test_spectrum_identity_on_random_plants(self, rng, n_p, m):
        for _ in range(12):
            plant, gains, params = random_plant_case(rng, n_p, m)
            closed = saturated_mode_matrix(plant, gains, params)
            match = spectrum_identity(closed, plant, params)
            assert match.matched, match.max_deviation

    def test_unit_rate_on_negative_identity(self, rng):
        plant = make_plant(-np.eye(3), rng.standard_normal((3, 2)), rng.standard_normal((2, 3)), np.zeros((2, 2)))
        gains = make_gains(rng.standard_normal((2, 2)) + 3.0 * np.eye(2), rng.standard_normal((2, 3)), 3, 2)
        closed = saturated_mode_matrix(plant, gains, make_cbf_params(1.0))
        assert match_spectra(closed.spectrum, [-1.0] * 5, 1e-9).matched

    def test_singular_integral_gain(self, reference_plant, reference_params):
        gains = ServoGains(np.zeros((1, 1)), np.zeros((1, 2)))
        with pytest.raises(ConfigurationError):
            saturated_mode_matrix(reference_plant, gains, reference_params)


class TestSaturatedModeConsistency:
    def test_random_saturated_states(self, lqr_problem, rng):
        states, commands = saturated_samples(lqr_problem, rng, 100)
        deviation = saturated_mode_consistency(
            lqr_problem.plant, lqr_problem.gains, lqr_problem.limits, lqr_problem.params,
            states, commands,
        )
        assert deviation <= constants.KKT_TOL

    def test_state_on_the_limit(self, reference_plant, printed_gains, reference_limits, reference_params):
        state = [[reference_limits.u_max[0] / 4.4721, 0.0, 0.0]]
        deviation = saturated_mode_consistency(
            reference_plant, printed_gains, reference_limits, reference_params, state, [[-0.2]]
        )
        assert deviation <= constants.KKT_TOL

    def test_rejects_unsaturated_state(self, reference_plant, printed_gains, reference_limits, reference_params):
        with pytest.raises(InvalidStateError):
            saturated_mode_consistency(
                reference_plant, printed_gains, reference_limits, reference_params, [[0.0, 0.0, 0.0]]
            )


class TestLoopGain:
    def test_single_integrator(self):
        extended = ExtendedSystem(np.zeros((1, 1)), np.ones((1, 1)), -np.ones((1, 1)), 1)
        gains = ServoGains(np.ones((1, 1)), np.zeros((1, 0)))
        response = loop_gain_response(extended, gains, grid=np.logspace(-1.0, 1.0, 201))
        assert response.crossover == pytest.approx(1.0)
        assert response.phase_margin == pytest.approx(90.0)
        assert response.gain_margin is None
        np.testing.assert_allclose(response.phase_deg, -90.0)

    def test_reference_design(self, lqr_problem):
        response = loop_gain_response(lqr_problem.extended, lqr_problem.gains)
        assert response.magnitude_db[0] > 40.0
        assert response.magnitude_db[0] > response.magnitude_db[1]
        assert response.phase_margin >= 60.0
        assert response.gain_margin is None
        assert response.skipped == []
        assert sum(c.worst for c in response.gain_crossings) == 1

    def test_actuator_gives_finite_gain_margin(self, lqr_problem, actuator):
        response = loop_gain_response(lqr_problem.extended, lqr_problem.gains, actuator=actuator)
        assert response.gain_margin is not None
        assert response.gain_margin > 0.0
        assert response.phase_margin > 0.0
        assert response.phase_crossover > response.crossover

    def test_margins_converge_with_grid(self, lqr_problem, actuator):
        coarse = loop_gain_response(
            lqr_problem.extended, lqr_problem.gains, default_grid(400), actuator
        )
        fine = loop_gain_response(
            lqr_problem.extended, lqr_problem.gains, default_grid(800), actuator
        )
        assert coarse.phase_margin == pytest.approx(fine.phase_margin, abs=0.1)
        assert coarse.gain_margin == pytest.approx(fine.gain_margin, abs=0.1)

    @pytest.mark.parametrize(
        "grid",
        [np.array([1.0, 0.5, 2.0]), np.array([1e-4, 1.0]), np.array([1.0, 1e5]), np.array([1.0])],
    )
    def test_invalid_grid(self, lqr_problem, grid):
        with pytest.raises(InvalidStateError):
            loop_gain_response(lqr_problem.extended, lqr_problem.gains, grid)

    def test_skips_singular_resolvent(self):
        extended = ExtendedSystem(
            np.array([[0.0, 1.0], [-1.0, 0.0]]), np.array([[0.0], [1.0]]), np.array([[-1.0], [0.0]]), 1
        )
        gains = ServoGains(np.ones((1, 1)), np.ones((1, 1)))
        response = loop_gain_response(extended, gains, grid=np.array([0.5, 1.0, 2.0]))
        assert response.skipped == [1.0]
        np.testing.assert_array_equal(response.frequencies, [0.5, 2.0])


class TestStepResponse:
    def test_integral_action(self, lqr_problem):
        step = step_response(lqr_problem.extended, lqr_problem.plant, lqr_problem.gains)
        assert step.final_value == pytest.approx(1.0, abs=1e-9)
        assert step.output[0, 0] == 0.0
        assert step.rise_time is not None and step.rise_time > 0.0
        assert step.overshoot_pct >= 0.0

    def test_with_actuator(self, lqr_problem, actuator):
        step = step_response(
            lqr_problem.extended, lqr_problem.plant, lqr_problem.gains, actuator=actuator
        )
        assert step.final_value == pytest.approx(1.0, abs=1e-9)
        assert step.output[-1, 0] == pytest.approx(1.0, abs=0.02)

    def test_times_must_be_uniform(self, lqr_problem):
        with pytest.raises(InvalidStateError):
            step_response(
                lqr_problem.extended, lqr_problem.plant, lqr_problem.gains,
                times=np.array([0.0, 0.1, 0.3]),
            )


def test_alpha_time_constant(reference_params):
    assert alpha_time_constant(reference_params) == pytest.approx(1.0 / 4.4721)
