"""
Acceptance suite run by `cbfaw verify`.

Each check returns a CheckResult; informational checks are reported but never
fail the suite.

Functions:
    random_plant_case(rng, n_p, m)
    reference_problem()
    scenario_checks(path, run)
    run_acceptance(output_dir, force_overwrite, config)
"""

import filecmp
import logging
import os
import tempfile
import time
from typing import Callable, Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from cbfaw import constants
from cbfaw.analysis import (
    loop_gain_response,
    saturated_mode_consistency,
    saturated_mode_matrix,
    spectrum_identity,
    step_response,
)
from cbfaw.aw_cbf import (
    CbfParams,
    aw_signal,
    closed_form_discrepancy,
    evaluate_aw,
    lagrange_multipliers,
    make_cbf_params,
    qp_reference_solve,
)
from cbfaw.errors import CbfawError
from cbfaw.lqr_synthesis import ServoGains, design_lqr_servo, make_gains, weights_from_diagonal
from cbfaw.lti_core import (
    ExtendedSystem,
    PlantModel,
    PositionLimits,
    build_extended_system,
    make_limits,
    make_plant,
)
from cbfaw.save import emit_csv
from cbfaw.sim_engine import ScenarioResult, SimTrace, propagate_linear, run_config, run_scenario

logger = logging.getLogger(__name__)

SEED = 20240601
ORACLE_SAMPLES = 1000
SATURATED_SAMPLES = 100
RANDOM_PLANTS = 50
WINDUP_RATIO = 2.0
DISTURBANCE_FACTOR = 3.0


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str
    seconds: float
    informational: bool = False


class ReferenceProblem(NamedTuple):
    plant: PlantModel
    extended: ExtendedSystem
    gains: ServoGains
    limits: PositionLimits
    params: CbfParams


def reference_problem() -> ReferenceProblem:
    """
    The short-period design with LQR gains, +/-10 deg limits and alpha = 4.4721.
    """
    plant = make_plant(
        constants.REFERENCE_A_P, constants.REFERENCE_B_P, constants.REFERENCE_C_P_REG, constants.REFERENCE_D_P_REG
    )
    extended = build_extended_system(plant)
    gains = design_lqr_servo(
        extended, weights_from_diagonal(constants.REFERENCE_Q_DIAG, constants.REFERENCE_R)
    )
    limits = make_limits(-constants.REFERENCE_LIMIT, constants.REFERENCE_LIMIT, plant.m)
    return ReferenceProblem(plant, extended, gains, limits, make_cbf_params(constants.REFERENCE_ALPHA_CBF))


def random_plant_case(
    rng: np.random.Generator, n_p: int, m: int
) -> Tuple[PlantModel, ServoGains, CbfParams]:
    """
    A random plant with Hurwitz A_p (spectral abscissa -1.5), nonsingular K_I = R + 3I
    and alpha drawn from [0.3, 0.7].
    """
    M = rng.standard_normal((n_p, n_p))
    A_p = M - (np.max(np.linalg.eigvals(M).real) + 1.5) * np.eye(n_p)
    plant = make_plant(
        A_p,
        rng.standard_normal((n_p, m)),
        rng.standard_normal((m, n_p)),
        np.zeros((m, m)),
    )
    gains = make_gains(
        rng.standard_normal((m, m)) + 3.0 * np.eye(m),
        rng.standard_normal((m, n_p)),
        n_p,
        m,
    )
    return plant, gains, make_cbf_params(rng.uniform(0.3, 0.7))


def _timed(name: str, check: Callable[[], Tuple[bool, str]], informational: bool = False) -> CheckResult:
    started = time.perf_counter()
    try:
        passed, detail = check()
    except CbfawError as e:
        passed, detail = False, f"{type(e).__name__}: {e}"
    seconds = time.perf_counter() - started
    logger.info("%s: %s (%.2f s)", name, "pass" if passed else "FAIL", seconds)
    return CheckResult(name, passed, detail, seconds, informational)


def _check_lqr(problem: ReferenceProblem) -> Tuple[bool, str]:
    computed = problem.gains.K.ravel()
    expected = np.asarray(constants.REFERENCE_GAINS)
    error = float(np.max(np.abs(computed - expected) / np.abs(expected)))
    return error <= 1e-3, f"gains {np.array2string(computed, precision=5)}, max relative error {error:.2e}"


def _check_spectrum(problem: ReferenceProblem, rng: np.random.Generator) -> Tuple[bool, str]:
    closed = saturated_mode_matrix(problem.plant, problem.gains, problem.params)
    worst = spectrum_identity(closed, problem.plant, problem.params).max_deviation
    failures = 0
    for _ in range(RANDOM_PLANTS):
        plant, gains, params = random_plant_case(rng, int(rng.integers(1, 5)), int(rng.integers(1, 3)))
        match = spectrum_identity(saturated_mode_matrix(plant, gains, params), plant, params)
        worst = max(worst, match.max_deviation)
        failures += not match.matched
    passed = failures == 0 and worst <= constants.SPECTRUM_TOL
    return passed, f"{RANDOM_PLANTS} random plants plus the design, max deviation {worst:.2e}"


def _random_evaluation(problem: ReferenceProblem, rng: np.random.Generator):
    n = problem.extended.n
    m = problem.extended.m
    x = rng.uniform(-1.0, 1.0, n)
    y_cmd = rng.uniform(-1.0, 1.0, m)
    return x, y_cmd, evaluate_aw(
        x[:m], x[m:], y_cmd, problem.plant, problem.gains, problem.limits, problem.params
    )


def _check_oracle(problem: ReferenceProblem, rng: np.random.Generator) -> Tuple[bool, str]:
    worst = 0.0
    for _ in range(ORACLE_SAMPLES):
        _, _, e = _random_evaluation(problem, rng)
        lambda1, lambda2 = lagrange_multipliers(e.delta1, e.delta2, problem.gains)
        closed = aw_signal(lambda1, lambda2, problem.gains)
        oracle = qp_reference_solve(e.delta1, e.delta2, problem.gains)
        worst = max(worst, float(np.abs(closed - oracle).max()))
    return worst <= constants.KKT_TOL, f"{ORACLE_SAMPLES} states, max |v_closed - v_qp| {worst:.2e}"


def saturated_samples(
    problem: ReferenceProblem, rng: np.random.Generator, count: int
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Draw states and commands from [-1, 1] until count of them sit on an active limit
    in every channel.
    """
    tol = constants.SATURATION_BOUNDARY_TOL
    states, commands = [], []
    for _ in range(1000 * count):
        x, y_cmd, e = _random_evaluation(problem, rng)
        active = ((e.lambda1 > 0.0) & (e.g1 >= -tol)) | ((e.lambda2 > 0.0) & (e.g2 >= -tol))
        if np.all(active):
            states.append(x)
            commands.append(y_cmd)
            if len(states) == count:
                break
    assert len(states) == count, "could not draw enough saturated states"
    return np.asarray(states), np.asarray(commands)


def _check_consistency(problem: ReferenceProblem, rng: np.random.Generator) -> Tuple[bool, str]:
    states, commands = saturated_samples(problem, rng, SATURATED_SAMPLES)
    worst = saturated_mode_consistency(
        problem.plant, problem.gains, problem.limits, problem.params, states, commands
    )
    return worst <= constants.KKT_TOL, f"{SATURATED_SAMPLES} saturated states, max deviation {worst:.2e}"


def trace_states(trace: SimTrace) -> np.ndarray:
    """
    The full state (e_yI, x_p, x_a, x_a') at every sample of a trace.
    """
    return np.hstack([trace.e_yI, trace.x_p, trace.x_a, trace.x_a_dot])


def _check_linear(runs: Dict[str, ScenarioResult]) -> Tuple[bool, str]:
    run = runs["fig2_unlimited"]
    problem = run.problem
    if problem.sim.limits_enabled or problem.sim.aw_enabled:
        return False, "fig2_unlimited must run with limits and anti-windup off"
    exact = propagate_linear(problem.sim, problem.plant, problem.gains)
    worst = float(np.abs(trace_states(run.trace) - exact).max())
    return worst <= constants.LINEAR_FIDELITY_TOL, f"max deviation from the matrix-exponential solution {worst:.2e}"


def _active_barrier_peak(trace: SimTrace) -> float:
    active = np.concatenate([trace.G1[trace.lambda1 > 0.0], trace.G2[trace.lambda2 > 0.0]])
    return float(active.max(initial=-np.inf))


def _check_windup(runs: Dict[str, ScenarioResult]) -> Tuple[bool, str]:
    without = runs["fig3_limited_no_aw"].summary.peak_abs_e_yI
    with_aw = runs["fig4_limited_aw"].summary.peak_abs_e_yI
    ratio = without / with_aw if with_aw > 0.0 else np.inf
    barrier = _active_barrier_peak(runs["fig4_limited_aw"].trace)
    passed = ratio >= WINDUP_RATIO and barrier <= constants.CBF_DECAY_TOL
    return passed, (
        f"peak |e_yI| {without:.5g} without vs {with_aw:.5g} with anti-windup (ratio {ratio:.3g}); "
        f"max active G {barrier:.2e}"
    )


def _check_disturbance(runs: Dict[str, ScenarioResult]) -> Tuple[bool, str]:
    run = runs["fig6_disturbance"]
    trace, limits = run.trace, run.problem.limits
    finite = bool(np.all(np.isfinite(trace_states(trace))))
    inside = bool(np.all(trace.u >= limits.u_min) and np.all(trace.u <= limits.u_max))
    bound = DISTURBANCE_FACTOR * runs["fig4_limited_aw"].summary.peak_abs_e_yI
    peak = run.summary.peak_abs_e_yI
    passed = finite and inside and peak <= bound
    return passed, f"finite {finite}, control inside limits {inside}, peak |e_yI| {peak:.5g} <= {bound:.5g}"


def _trace_kkt(trace: SimTrace, k_i: np.ndarray) -> Tuple[float, float, float]:
    # Smallest multiplier, worst stationarity and worst slackness over every row
    stationarity = 2.0 * trace.v + (trace.lambda1 - trace.lambda2) @ k_i
    slackness = np.sum(trace.lambda1 * trace.G1, axis=1) + np.sum(trace.lambda2 * trace.G2, axis=1)
    return (
        min(float(trace.lambda1.min()), float(trace.lambda2.min()), 0.0),
        float(np.abs(stationarity).max()),
        float(np.abs(slackness).max()),
    )


def _check_kkt(runs: Dict[str, ScenarioResult], problem: ReferenceProblem, rng: np.random.Generator) -> Tuple[bool, str]:
    worst_dual, worst_stationarity, worst_slackness = 0.0, 0.0, 0.0
    for run in runs.values():
        dual, stationarity, slackness = _trace_kkt(run.trace, run.problem.gains.K_I)
        worst_dual = min(worst_dual, dual)
        worst_stationarity = max(worst_stationarity, stationarity)
        worst_slackness = max(worst_slackness, slackness)
    for _ in range(ORACLE_SAMPLES):
        _, _, e = _random_evaluation(problem, rng)
        worst_dual = min(worst_dual, float(e.lambda1.min()), float(e.lambda2.min()))
        stationarity = 2.0 * e.v + problem.gains.K_I.T @ (e.lambda1 - e.lambda2)
        worst_stationarity = max(worst_stationarity, float(np.abs(stationarity).max()))
        worst_slackness = max(worst_slackness, abs(float(e.lambda1 @ e.G1 + e.lambda2 @ e.G2)))
    passed = (
        worst_dual >= 0.0
        and worst_stationarity <= constants.KKT_TOL
        and worst_slackness <= constants.KKT_TOL
    )
    return passed, (
        f"min multiplier {worst_dual:.2e}, stationarity {worst_stationarity:.2e}, "
        f"slackness {worst_slackness:.2e}"
    )


def _same_csv(first_trace: SimTrace, second_trace: SimTrace) -> bool:
    with tempfile.TemporaryDirectory() as tmp:
        first = os.path.join(tmp, "first.csv")
        second = os.path.join(tmp, "second.csv")
        emit_csv(first_trace, first, force_overwrite=True)
        emit_csv(second_trace, second, force_overwrite=True)
        return filecmp.cmp(first, second, shallow=False)


def _check_determinism(runs: Dict[str, ScenarioResult]) -> Tuple[bool, str]:
    same = _same_csv(runs["fig4_limited_aw"].trace, run_scenario("fig4_limited_aw").trace)
    return same, "repeated fig4_limited_aw trace is byte-identical" if same else "traces differ"


def _info_mimo(rng: np.random.Generator) -> Tuple[bool, str]:
    _, gains, _ = random_plant_case(rng, 3, 2)
    samples = [(rng.uniform(-1.0, 1.0, 2), rng.uniform(-1.0, 1.0, 2)) for _ in range(200)]
    # Keep only samples whose constraint set is non-empty
    feasible = [(d1, d2) for d1, d2 in samples if np.all(d1 + d2 < 0.0)]
    gap = closed_form_discrepancy(feasible, gains)
    return True, f"two-channel closed form vs QP optimum over {len(feasible)} samples: max gap {gap:.3e}"


def _info_margins(problem: ReferenceProblem, runs: Dict[str, ScenarioResult]) -> Tuple[bool, str]:
    bare = loop_gain_response(problem.extended, problem.gains)
    actuator = runs["fig4_limited_aw"].problem.sim.actuator
    with_actuator = loop_gain_response(problem.extended, problem.gains, actuator=actuator)
    step = step_response(problem.extended, problem.plant, problem.gains)

    def fmt(value: Optional[float]) -> str:
        return "inf" if value is None else f"{value:.4g}"

    return True, (
        f"phase margin {fmt(bare.phase_margin)} deg, gain margin {fmt(bare.gain_margin)} dB; "
        f"with actuator {fmt(with_actuator.phase_margin)} deg, {fmt(with_actuator.gain_margin)} dB; "
        f"step final value {step.final_value:.6g}"
    )


def scenario_checks(path: str, run: Optional[ScenarioResult] = None) -> List[CheckResult]:
    """
    Checks on one scenario file: finite states, the barrier condition on active
    constraints (limits and anti-windup on), the KKT conditions on every row, the
    saturated-mode spectrum and a byte-identical re-run. run is simulated from path
    when not given.
    """
    if run is None:
        run = run_config(path)
    name = run.name
    trace, problem = run.trace, run.problem

    def finite() -> Tuple[bool, str]:
        ok = bool(np.all(np.isfinite(trace_states(trace))))
        return ok, f"{trace.rows} samples, all finite" if ok else "non-finite state in the trace"

    def barrier() -> Tuple[bool, str]:
        if not (problem.sim.limits_enabled and problem.sim.aw_enabled):
            return True, "limits or anti-windup off; barrier not checked"
        peak = _active_barrier_peak(trace)
        return peak <= constants.CBF_DECAY_TOL, f"max active G {peak:.2e}"

    def kkt() -> Tuple[bool, str]:
        dual, stationarity, slackness = _trace_kkt(trace, problem.gains.K_I)
        passed = dual >= 0.0 and stationarity <= constants.KKT_TOL and slackness <= constants.KKT_TOL
        return passed, (
            f"min multiplier {dual:.2e}, stationarity {stationarity:.2e}, slackness {slackness:.2e}"
        )

    def spectrum() -> Tuple[bool, str]:
        ok = run.summary.spectrum_check
        return ok, "saturated-mode spectrum matches" if ok else "saturated-mode spectrum deviates"

    def determinism() -> Tuple[bool, str]:
        same = _same_csv(trace, run_config(path).trace)
        return same, "repeated trace is byte-identical" if same else "traces differ"

    return [
        _timed(f"{name}:finite", finite),
        _timed(f"{name}:barrier", barrier),
        _timed(f"{name}:kkt_invariants", kkt),
        _timed(f"{name}:spectrum_identity", spectrum),
        _timed(f"{name}:determinism", determinism),
    ]


def run_acceptance(
    output_dir: Optional[str] = None,
    force_overwrite: bool = False,
    config: Optional[str] = None,
) -> List[CheckResult]:
    """
    Run every acceptance check.

    Args:
        output_dir (Optional[str]): When given, each scenario trace is written to
                                    <output_dir>/<scenario>/trace.csv.
        force_overwrite (bool): Whether to replace existing trace files.
        config (Optional[str]): A further scenario file; its trace is checked for
                                finite states, the barrier condition, the KKT
                                conditions, the saturated-mode spectrum and determinism.

    Preconditions:
        - The bundled scenario fixtures are installed.

    Side effects:
        - Runs the four bundled scenarios (fig4_limited_aw twice).
        - Logs each outcome at INFO level.
        - Writes trace files when output_dir is given.
        - Runs config twice when it is given.

    Exceptions:
        CbfawError: If a scenario cannot be run at all, including config.

    Returns:
        List[CheckResult]: One result per check, in a fixed order.
    """
    rng = np.random.default_rng(SEED)
    problem = reference_problem()

    extra = run_config(config) if config is not None else None
    runs = {name: run_scenario(name) for name in constants.SCENARIO_NAMES}
    if output_dir is not None:
        written = list(runs.values()) + ([extra] if extra is not None else [])
        for run in written:
            emit_csv(
                run.trace,
                os.path.join(output_dir, run.name, constants.TRACE_FILE),
                run.problem.extra_columns,
                force_overwrite,
            )

    results = [
        _timed("lqr_reproduction", lambda: _check_lqr(problem)),
        _timed("spectrum_identity", lambda: _check_spectrum(problem, rng)),
        _timed("closed_form_vs_qp", lambda: _check_oracle(problem, rng)),
        _timed("saturated_mode_consistency", lambda: _check_consistency(problem, rng)),
        _timed("linear_fidelity", lambda: _check_linear(runs)),
        _timed("windup_demonstration", lambda: _check_windup(runs)),
        _timed("disturbance_robustness", lambda: _check_disturbance(runs)),
        _timed("kkt_invariants", lambda: _check_kkt(runs, problem, rng)),
        _timed("determinism", lambda: _check_determinism(runs)),
        _timed("mimo_closed_form_gap", lambda: _info_mimo(rng), informational=True),
        _timed("stability_margins", lambda: _info_margins(problem, runs), informational=True),
    ]
    if extra is not None:
        results.extend(scenario_checks(config, extra))
    return results
