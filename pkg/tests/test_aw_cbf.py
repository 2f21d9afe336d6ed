import numpy as np
import pytest

from cbfaw.aw_cbf import (
    aw_signal,
    closed_form_discrepancy,
    commanded_control,
    constraint_values,
    control_deficiency,
    delta_terms,
    evaluate_aw,
    kkt_residuals,
    lagrange_multipliers,
    make_cbf_params,
    qp_reference_solve,
)
from cbfaw.errors import ConfigurationError, QpInfeasibleError, ValidationError
from cbfaw.lqr_synthesis import ServoGains, make_gains


def _random_evaluations(problem, rng, count):
    for _ in range(count):
        state = rng.uniform(-1.0, 1.0, problem.extended.n)
        y_cmd = rng.uniform(-0.3, 0.3, problem.plant.m)
        yield evaluate_aw(
            state[: problem.plant.m],
            state[problem.plant.m :],
            y_cmd,
            problem.plant,
            problem.gains,
            problem.limits,
            problem.params,
        )


class TestCommandedControl:
    def test_examples(self, printed_gains):
        np.testing.assert_array_equal(commanded_control([0.0], [0.0, 0.0], printed_gains), [0.0])
        np.testing.assert_allclose(
            commanded_control([0.1], [0.0, 0.0], printed_gains), [0.44721], atol=1e-12
        )
        np.testing.assert_allclose(
            commanded_control([0.0], [0.1, 0.0], printed_gains), [0.10369], atol=1e-12
        )


class TestConstraints:
    def test_deficiency(self, reference_limits):
        np.testing.assert_allclose(control_deficiency([0.2], reference_limits), [-0.02547], atol=1e-5)
        np.testing.assert_array_equal(control_deficiency([0.1], reference_limits), [0.0])
        np.testing.assert_allclose(control_deficiency([-0.2], reference_limits), [0.02547], atol=1e-5)

    def test_constraint_values(self, reference_limits):
        g1, g2 = constraint_values([0.0], reference_limits)
        np.testing.assert_allclose([g1[0], g2[0]], [-0.17453, -0.17453], atol=1e-5)
        g1, g2 = constraint_values([0.2], reference_limits)
        np.testing.assert_allclose([g1[0], g2[0]], [-0.37453, 0.02547], atol=1e-5)
        _, g2 = constraint_values(reference_limits.u_max, reference_limits)
        np.testing.assert_array_equal(g2, [0.0])

    def test_deficiency_vanishes_iff_inside(self, reference_limits, rng):
        for u in rng.uniform(-0.5, 0.5, 200):
            g1, g2 = constraint_values([u], reference_limits)
            inside = g1[0] <= 0.0 and g2[0] <= 0.0
            assert (control_deficiency([u], reference_limits)[0] == 0.0) == inside


class TestDeltaTerms:
    def test_examples(self, printed_gains, reference_params):
        zero = np.zeros(1)
        d1, d2 = delta_terms(zero, np.zeros(2), zero, zero, printed_gains, reference_params)
        np.testing.assert_array_equal([d1[0], d2[0]], [0.0, 0.0])
        d1, d2 = delta_terms(zero, np.zeros(2), [-0.1], [-0.1], printed_gains, reference_params)
        np.testing.assert_allclose([d1[0], d2[0]], [-0.44721, -0.44721], atol=1e-12)

    def test_sum_identity(self, printed_gains, reference_params, rng):
        for _ in range(20):
            e_y, x_dot = rng.standard_normal(1), rng.standard_normal(2)
            g1, g2 = rng.standard_normal(1), rng.standard_normal(1)
            d1, d2 = delta_terms(e_y, x_dot, g1, g2, printed_gains, reference_params)
            np.testing.assert_allclose(d1 + d2, reference_params.alpha_cbf * (g1 + g2), atol=1e-12)


class TestMultipliers:
    def test_examples(self, printed_gains):
        l1, l2 = lagrange_multipliers([-1.0], [-1.0], printed_gains)
        np.testing.assert_array_equal([l1[0], l2[0]], [0.0, 0.0])
        l1, l2 = lagrange_multipliers([1.0], [-1.0], printed_gains)
        np.testing.assert_allclose(l1, [0.1], rtol=1e-4)
        np.testing.assert_array_equal(l2, [0.0])

    def test_tie_is_inactive(self, printed_gains):
        l1, _ = lagrange_multipliers([0.0], [-1.0], printed_gains)
        np.testing.assert_array_equal(l1, [0.0])

    def test_singular_integral_gain(self):
        gains = ServoGains(np.zeros((1, 1)), np.zeros((1, 2)))
        with pytest.raises(ConfigurationError):
            lagrange_multipliers([1.0], [-1.0], gains)

    def test_aw_signal(self, printed_gains):
        np.testing.assert_array_equal(aw_signal([0.0], [0.0], printed_gains), [0.0])
        np.testing.assert_allclose(aw_signal([0.1], [0.0], printed_gains), [0.22361], atol=1e-5)


class TestEvaluateAw:
    def test_interior_state(self, reference_plant, printed_gains, reference_limits, reference_params):
        e = evaluate_aw(
            [0.01], [0.0, 0.0], [0.0], reference_plant, printed_gains, reference_limits, reference_params
        )
        np.testing.assert_array_equal(e.v, [0.0])
        np.testing.assert_array_equal(e.G1, e.delta1)
        np.testing.assert_array_equal(e.G2, e.delta2)

    def test_upper_limit_active(self, reference_plant, printed_gains, reference_limits, reference_params):
        e_yI = [0.2 / 4.4721]
        e = evaluate_aw(
            e_yI, [0.0, 0.0], [-0.2], reference_plant, printed_gains, reference_limits, reference_params
        )
        np.testing.assert_allclose(e.u_cmd, [0.2], atol=1e-12)
        assert e.lambda1[0] == 0.0
        assert e.lambda2[0] == pytest.approx(0.0497, abs=1e-3)
        assert e.v[0] == pytest.approx(-0.111, abs=1e-3)
        assert abs(e.G2[0]) <= 1e-9

        oracle = qp_reference_solve(e.delta1, e.delta2, printed_gains)
        np.testing.assert_allclose(e.v, oracle, atol=1e-12)

    def test_disabled_law(self, reference_plant, printed_gains, reference_limits, reference_params):
        e = evaluate_aw(
            [0.2 / 4.4721], [0.0, 0.0], [-0.2], reference_plant, printed_gains, reference_limits,
            reference_params, aw_enabled=False,
        )
        np.testing.assert_array_equal(e.v, [0.0])
        np.testing.assert_array_equal(e.lambda2, [0.0])
        np.testing.assert_array_equal(e.G2, e.delta2)

    def test_kkt_conditions_hold(self, lqr_problem, rng):
        for e in _random_evaluations(lqr_problem, rng, 500):
            residuals = kkt_residuals(e, lqr_problem.gains)
            assert residuals.min_multiplier >= 0.0
            assert residuals.stationarity <= 1e-12
            assert residuals.complementary_slackness <= 1e-9
            assert e.lambda1[0] * e.lambda2[0] == 0.0
            active = np.concatenate([e.G1[e.lambda1 > 0.0], e.G2[e.lambda2 > 0.0]])
            assert np.all(active <= 1e-9)


class TestQpReference:
    def test_examples(self, printed_gains):
        np.testing.assert_array_equal(qp_reference_solve([-1.0], [-1.0], printed_gains), [0.0])
        np.testing.assert_allclose(
            qp_reference_solve([-3.0], [1.0], printed_gains), [-0.22361], atol=1e-5
        )

    def test_matches_closed_form_on_random_states(self, lqr_problem, rng):
        for e in _random_evaluations(lqr_problem, rng, 1000):
            oracle = qp_reference_solve(e.delta1, e.delta2, lqr_problem.gains)
            assert np.abs(e.v - oracle).max() <= 1e-9

    def test_single_channel_discrepancy_is_zero(self, printed_gains, rng):
        samples = [(rng.standard_normal(1) - 1.0, rng.standard_normal(1) - 1.0) for _ in range(50)]
        samples = [(d1, np.minimum(d2, -d1 - 0.1)) for d1, d2 in samples]
        assert closed_form_discrepancy(samples, printed_gains) <= 1e-12

    def test_two_channels(self):
        # Lower limit active on channel 0, upper limit on channel 1
        gains = make_gains([[2.0, 0.0], [0.0, 3.0]], np.zeros((2, 1)), 1, 2)
        v = qp_reference_solve([1.0, -4.0], [-2.0, 3.0], gains)
        np.testing.assert_allclose(v, [-0.5, 1.0], atol=1e-12)
        l1, l2 = lagrange_multipliers([1.0, -4.0], [-2.0, 3.0], gains)
        np.testing.assert_allclose(l1, [0.5, 0.0], atol=1e-12)
        np.testing.assert_allclose(l2, [0.0, 2.0 / 3.0], atol=1e-12)
        np.testing.assert_allclose(aw_signal(l1, l2, gains), v, atol=1e-12)

    def test_infeasible(self, printed_gains):
        with pytest.raises(QpInfeasibleError):
            qp_reference_solve([1.0], [1.0], printed_gains)


class TestCbfParams:
    @pytest.mark.parametrize("alpha", [0.0, -1.0, float("nan")])
    def test_rejects_non_positive(self, alpha):
        with pytest.raises(ValidationError):
            make_cbf_params(alpha)

    def test_accepts_positive(self):
        assert make_cbf_params(4.4721).alpha_cbf == 4.4721
