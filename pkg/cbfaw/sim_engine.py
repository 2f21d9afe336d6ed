"""
Fixed-step simulation of the position-limited servo loop with CBF anti-windup.

The state vector is laid out as (e_yI, x_p, x_a, x_a'), with m integrator states,
n_p plant states and two actuator states per channel. The actuator states stay at
rest when the actuator model is disabled.

Functions:
    command_doublet(t, amplitude, t_start, t_half, t_end)
    sinusoidal_disturbance(t, amplitude, frequency)
    signal_value(spec, t)
    closed_loop_derivative(state, t, config, plant, gains, limits, params, hold_time)
    integrate(config, plant, gains, limits, params)
    linear_closed_loop(config, plant, gains)
    propagate_linear(config, plant, gains)
    run_scenario(name, overrides)
    run_config(path, overrides)
    parameter_sweep(source, key, values, overrides)
    trace_table(trace, extra_groups)
"""

import logging
import math
import time
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from cbfaw import constants
from cbfaw.aw_cbf import AwEvaluation, CbfParams, evaluate_aw
from cbfaw.errors import InvalidStateError, SimulationError, ValidationError
from cbfaw.lqr_synthesis import ServoGains
from cbfaw.lti_core import PlantModel, PositionLimits, build_extended_system

logger = logging.getLogger(__name__)

# Largest step that still resolves a 70 rad/s actuator
MAX_DT = 1e-2

# Optional CSV column groups
EXTRA_COLUMN_GROUPS = ("xa", "xadot", "udot", "delta1", "delta2")


class ActuatorModel(NamedTuple):
    """
    Second-order actuator x_a'' = w^2 (u - x_a) - 2 zeta w x_a'.
    """

    natural_frequency: float
    damping_ratio: float
    enabled: bool


class SignalSpec(NamedTuple):
    """
    A scalar time signal: doublet, step, sinusoid or zero.

    Doublets hold +amplitude on [t_start, t_half), -amplitude on [t_half, t_end)
    and zero elsewhere. Steps switch on at t_start. Sinusoids are
    amplitude sin(frequency t) from t_start on.
    """

    kind: str
    amplitude: float
    t_start: float = 0.0
    t_half: float = 0.0
    t_end: float = 0.0
    frequency: float = 0.0


class SimConfig(NamedTuple):
    dt: float
    duration: float
    aw_enabled: bool
    limits_enabled: bool
    actuator: ActuatorModel
    command: SignalSpec
    disturbance: SignalSpec
    disturbance_column: np.ndarray
    initial_state: np.ndarray


class SimTrace(NamedTuple):
    """
    Sampled closed-loop signals, one row per sample time.

    Vector signals are (rows, m) or (rows, n_p) arrays; t and d are (rows,).
    u is the position-limited actuator command (raw u_cmd with limits off),
    x_a the actuator position, u_dot the first difference of u.
    """

    t: np.ndarray
    y_cmd: np.ndarray
    y_cmd_plus_v: np.ndarray
    y_reg: np.ndarray
    e_yI: np.ndarray
    x_p: np.ndarray
    u_cmd: np.ndarray
    u: np.ndarray
    x_a: np.ndarray
    x_a_dot: np.ndarray
    u_dot: np.ndarray
    v: np.ndarray
    lambda1: np.ndarray
    lambda2: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    G1: np.ndarray
    G2: np.ndarray
    delta1: np.ndarray
    delta2: np.ndarray
    d: np.ndarray
    final_state: np.ndarray

    @property
    def rows(self) -> int:
        return self.t.shape[0]


class ScenarioResult(NamedTuple):
    """
    One simulated scenario: its trace, the RunSummary of the trace and the
    ScenarioProblem it was built from.
    """

    name: str
    trace: SimTrace
    summary: Any
    problem: Any


class _Stage(NamedTuple):
    derivative: np.ndarray
    evaluation: AwEvaluation
    y_cmd: np.ndarray
    y_reg: np.ndarray
    u: np.ndarray
    d: float


def make_actuator(
    natural_frequency: float, damping_ratio: float, enabled: bool
) -> ActuatorModel:
    """
    Exceptions:
        ValidationError: If the natural frequency or the damping ratio is not positive.
    """
    if not natural_frequency > 0.0:
        raise ValidationError(f"actuator natural frequency must be positive, got {natural_frequency}")
    if not damping_ratio > 0.0:
        raise ValidationError(f"actuator damping ratio must be positive, got {damping_ratio}")
    return ActuatorModel(float(natural_frequency), float(damping_ratio), bool(enabled))


def make_signal(
    kind: str,
    amplitude: float,
    t_start: float = 0.0,
    t_half: float = 0.0,
    t_end: float = 0.0,
    frequency: float = 0.0,
) -> SignalSpec:
    """
    Exceptions:
        ValidationError: On an unknown kind, negative timing, or a doublet whose
                         switching times are not increasing.
    """
    if kind not in constants.SIGNAL_KINDS:
        raise ValidationError(
            f"unknown signal kind '{kind}', expected one of {', '.join(constants.SIGNAL_KINDS)}"
        )
    if min(t_start, t_half, t_end) < 0.0:
        raise ValidationError("signal timing parameters must be non-negative")
    if kind == "doublet" and not t_start < t_half < t_end:
        raise ValidationError(
            f"doublet requires t_start < t_half < t_end, got {t_start}, {t_half}, {t_end}"
        )
    return SignalSpec(kind, float(amplitude), float(t_start), float(t_half), float(t_end), float(frequency))


def make_sim_config(
    plant: PlantModel,
    dt: float,
    duration: float,
    aw_enabled: bool,
    limits_enabled: bool,
    actuator: ActuatorModel,
    command: SignalSpec,
    disturbance: SignalSpec,
    disturbance_column: Optional[Sequence[float]] = None,
    initial_state: Optional[Sequence[float]] = None,
) -> SimConfig:
    """
    Build a SimConfig for the given plant, filling the disturbance column with e_1
    and the initial state with zeros when they are not given.

    Args:
        plant (PlantModel): Plant whose dimensions size the state.
        dt (float): Integration step (s), 0 < dt <= min(duration, 1e-2).
        duration (float): Simulated horizon (s).
        aw_enabled (bool): Whether the anti-windup signal drives the integrator.
        limits_enabled (bool): Whether the position limits are applied.
        actuator (ActuatorModel): Actuator dynamics.
        command (SignalSpec): Command y_cmd, applied to every channel.
        disturbance (SignalSpec): Scalar disturbance d.
        disturbance_column (Optional[Sequence[float]]): Plant input direction of d, length n_p.
        initial_state (Optional[Sequence[float]]): Initial state, length n_p + 3m.

    Preconditions:
        - plant was built by make_plant.

    Side effects:
        None

    Exceptions:
        ValidationError: If the step, horizon or vector lengths are invalid.

    Returns:
        SimConfig: The validated configuration.
    """
    n_p, m = plant.n_p, plant.m
    if not (dt > 0.0 and dt <= duration):
        raise ValidationError(f"need 0 < dt <= duration, got dt={dt}, duration={duration}")
    if dt > MAX_DT:
        raise ValidationError(f"dt must not exceed {MAX_DT} s, got {dt}")

    if disturbance_column is None:
        column = np.zeros(n_p)
        column[0] = 1.0
    else:
        column = np.asarray(disturbance_column, dtype=float).ravel()
        if column.shape != (n_p,):
            raise ValidationError(f"disturbance column must have length {n_p}")

    size = n_p + 3 * m
    if initial_state is None:
        x0 = np.zeros(size)
    else:
        x0 = np.asarray(initial_state, dtype=float).ravel()
        if x0.shape != (size,):
            raise ValidationError(f"initial state must have length {size} (n_p + 3m)")
    if not (np.all(np.isfinite(column)) and np.all(np.isfinite(x0))):
        raise ValidationError("disturbance column and initial state must be finite")

    return SimConfig(
        float(dt), float(duration), bool(aw_enabled), bool(limits_enabled),
        actuator, command, disturbance, column, x0,
    )


def command_doublet(
    t: float, amplitude: float, t_start: float, t_half: float, t_end: float
) -> float:
    """
    +amplitude on [t_start, t_half), -amplitude on [t_half, t_end), zero elsewhere.
    """
    assert t_start < t_half < t_end, "doublet needs t_start < t_half < t_end"
    if t_start <= t < t_half:
        return amplitude
    if t_half <= t < t_end:
        return -amplitude
    return 0.0


def sinusoidal_disturbance(t: float, amplitude: float, frequency: float) -> float:
    return amplitude * math.sin(frequency * t)


def signal_value(spec: SignalSpec, t: float) -> float:
    """
    Evaluate a SignalSpec at time t.
    """
    if spec.kind == "doublet":
        return command_doublet(t, spec.amplitude, spec.t_start, spec.t_half, spec.t_end)
    if spec.kind == "step":
        return spec.amplitude if t >= spec.t_start else 0.0
    if spec.kind == "sinusoid":
        if t < spec.t_start:
            return 0.0
        return sinusoidal_disturbance(t, spec.amplitude, spec.frequency)
    return 0.0


def _signal_time(spec: SignalSpec, t: float, hold_time: Optional[float]) -> float:
    # Piecewise-constant signals are held over a whole step
    if hold_time is not None and spec.kind in constants.PIECEWISE_CONSTANT_KINDS:
        return hold_time
    return t


def _stage(
    state: np.ndarray,
    t: float,
    config: SimConfig,
    plant: PlantModel,
    gains: ServoGains,
    limits: PositionLimits,
    params: CbfParams,
    hold_time: Optional[float],
) -> _Stage:
    m, n_p = plant.m, plant.n_p
    e_yI = state[:m]
    x_p = state[m : m + n_p]
    x_a = state[m + n_p : 2 * m + n_p]
    x_a_dot = state[2 * m + n_p :]

    y_cmd = np.full(m, signal_value(config.command, _signal_time(config.command, t, hold_time)))
    d = signal_value(config.disturbance, _signal_time(config.disturbance, t, hold_time))

    evaluation = evaluate_aw(
        e_yI, x_p, y_cmd, plant, gains, limits, params, aw_enabled=config.aw_enabled
    )
    u = evaluation.u_sat if config.limits_enabled else evaluation.u_cmd
    u_plant = x_a if config.actuator.enabled else u

    y_reg = plant.C_p_reg @ x_p + plant.D_p_reg @ u_plant

    derivative = np.empty_like(state)
    derivative[:m] = y_reg - y_cmd + evaluation.v
    derivative[m : m + n_p] = plant.A_p @ x_p + plant.B_p @ u_plant + config.disturbance_column * d
    if config.actuator.enabled:
        w = config.actuator.natural_frequency
        zeta = config.actuator.damping_ratio
        derivative[m + n_p : 2 * m + n_p] = x_a_dot
        derivative[2 * m + n_p :] = w * w * (u - x_a) - 2.0 * zeta * w * x_a_dot
    else:
        derivative[m + n_p :] = 0.0

    return _Stage(derivative, evaluation, y_cmd, y_reg, u, d)


def closed_loop_derivative(
    state: np.ndarray,
    t: float,
    config: SimConfig,
    plant: PlantModel,
    gains: ServoGains,
    limits: PositionLimits,
    params: CbfParams,
    hold_time: Optional[float] = None,
) -> np.ndarray:
    """
    Time derivative of the closed-loop state.

    e_yI' = e_y + v, with v = 0 when anti-windup is off.
    x_p' = A_p x_p + B_p u_plant + disturbance_column d(t), where u_plant is the actuator
    position when the actuator is enabled, else sat(u_cmd), or raw u_cmd with limits off.
    The actuator states are driven by the position-limited command.

    Args:
        state (np.ndarray): (e_yI, x_p, x_a, x_a'), length n_p + 3m.
        t (float): Time (s).
        config (SimConfig): Simulation switches and signals.
        plant (PlantModel): Plant.
        gains (ServoGains): Servo gains.
        limits (PositionLimits): Position limits.
        params (CbfParams): Barrier decay rate.
        hold_time (Optional[float]): When given, doublet, step and zero signals are
                                     evaluated at this time instead of t.

    Preconditions:
        - config was built for this plant.

    Side effects:
        None

    Exceptions:
        ConfigurationError: If K_I K_I' is singular.

    Returns:
        np.ndarray: The state derivative.
    """
    state = np.asarray(state, dtype=float)
    assert state.shape == config.initial_state.shape, "state has the wrong length"
    return _stage(state, t, config, plant, gains, limits, params, hold_time).derivative


def _step_count(config: SimConfig) -> int:
    return int(math.floor(config.duration / config.dt + constants.ROW_COUNT_SLACK))


def integrate(
    config: SimConfig,
    plant: PlantModel,
    gains: ServoGains,
    limits: PositionLimits,
    params: CbfParams,
) -> SimTrace:
    """
    Integrate the closed loop with classical fixed-step fourth-order Runge-Kutta.

    Sample k is taken at t_k = k dt for k = 0..floor(duration/dt). Doublet, step and
    zero signals are sampled at t_k + dt/2 and held over the four stages of step k;
    sinusoids are evaluated at each stage time. The anti-windup signal is recomputed
    at every stage.

    Args:
        config (SimConfig): Simulation configuration.
        plant (PlantModel): Plant.
        gains (ServoGains): Servo gains.
        limits (PositionLimits): Position limits.
        params (CbfParams): Barrier decay rate.

    Preconditions:
        - config was built for this plant.

    Side effects:
        - Logs the step count and wall time at DEBUG level.

    Exceptions:
        SimulationError: If the state becomes NaN or infinite; carries the step index.
        ConfigurationError: If K_I K_I' is singular.

    Returns:
        SimTrace: floor(duration/dt) + 1 samples.
    """
    dt = config.dt
    steps = _step_count(config)
    rows = steps + 1
    m, n_p = plant.m, plant.n_p

    def block(width: int) -> np.ndarray:
        return np.zeros((rows, width))

    t_col = np.arange(rows) * dt
    y_cmd, y_cmd_plus_v, y_reg, e_yI = block(m), block(m), block(m), block(m)
    x_p = block(n_p)
    u_cmd, u, x_a, x_a_dot = block(m), block(m), block(m), block(m)
    v, lambda1, lambda2 = block(m), block(m), block(m)
    g1, g2, G1, G2, delta1, delta2 = block(m), block(m), block(m), block(m), block(m), block(m)
    d = np.zeros(rows)

    started = time.perf_counter()
    state = np.array(config.initial_state, dtype=float)

    for k in range(rows):
        t_k = k * dt
        hold = t_k + 0.5 * dt
        first = _stage(state, t_k, config, plant, gains, limits, params, hold)
        e = first.evaluation

        y_cmd[k] = first.y_cmd
        y_cmd_plus_v[k] = first.y_cmd + e.v
        y_reg[k] = first.y_reg
        e_yI[k] = state[:m]
        x_p[k] = state[m : m + n_p]
        u_cmd[k] = e.u_cmd
        u[k] = first.u
        x_a[k] = state[m + n_p : 2 * m + n_p]
        x_a_dot[k] = state[2 * m + n_p :]
        v[k], lambda1[k], lambda2[k] = e.v, e.lambda1, e.lambda2
        g1[k], g2[k], G1[k], G2[k] = e.g1, e.g2, e.G1, e.G2
        delta1[k], delta2[k] = e.delta1, e.delta2
        d[k] = first.d

        if k == steps:
            break

        k1 = first.derivative
        k2 = _stage(state + 0.5 * dt * k1, t_k + 0.5 * dt, config, plant, gains, limits, params, hold).derivative
        k3 = _stage(state + 0.5 * dt * k2, t_k + 0.5 * dt, config, plant, gains, limits, params, hold).derivative
        k4 = _stage(state + dt * k3, t_k + dt, config, plant, gains, limits, params, hold).derivative
        state = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

        if not np.all(np.isfinite(state)):
            raise SimulationError("non-finite closed-loop state", k + 1)

    u_dot = np.zeros_like(u)
    u_dot[1:] = np.diff(u, axis=0) / dt

    logger.debug(
        "Integrated %d steps in %.3f s", steps, time.perf_counter() - started
    )

    return SimTrace(
        t_col, y_cmd, y_cmd_plus_v, y_reg, e_yI, x_p, u_cmd, u, x_a, x_a_dot, u_dot,
        v, lambda1, lambda2, g1, g2, G1, G2, delta1, delta2, d, state,
    )


def linear_closed_loop(
    config: SimConfig, plant: PlantModel, gains: ServoGains
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Closed-loop matrices of the position-unlimited loop without anti-windup.

    Returns (A_cl, B_w) such that z' = A_cl z + B_w (y_cmd, d) for the full state
    z = (e_yI, x_p, x_a, x_a'); the actuator rows are zero when the actuator is off.
    """
    extended = build_extended_system(plant)
    n, m = extended.n, extended.m
    size = n + 2 * m
    K = np.hstack([gains.K_I, gains.K_P])

    a_cl = np.zeros((size, size))
    if config.actuator.enabled:
        w = config.actuator.natural_frequency
        zeta = config.actuator.damping_ratio
        a_cl[:n, :n] = extended.A
        a_cl[:n, n : n + m] = extended.B
        a_cl[n : n + m, n + m :] = np.eye(m)
        a_cl[n + m :, :n] = -w * w * K
        a_cl[n + m :, n : n + m] = -w * w * np.eye(m)
        a_cl[n + m :, n + m :] = -2.0 * zeta * w * np.eye(m)
    else:
        a_cl[:n, :n] = extended.A - extended.B @ K

    b_w = np.zeros((size, m + 1))
    b_w[:n, :m] = extended.B_cmd
    b_w[m:n, m] = config.disturbance_column
    return a_cl, b_w


def propagate_linear(
    config: SimConfig, plant: PlantModel, gains: ServoGains
) -> np.ndarray:
    """
    Exact sampled solution of the linear closed loop under the same held inputs
    that integrate uses, by zero-order-hold discretisation with scipy.linalg.expm.

    Exceptions:
        InvalidStateError: If a signal is not piecewise constant.

    Returns:
        np.ndarray: States at every sample time, shape (rows, n_p + 3m).
    """
    for spec in (config.command, config.disturbance):
        if spec.kind not in constants.PIECEWISE_CONSTANT_KINDS:
            raise InvalidStateError(
                f"the matrix-exponential solution needs piecewise-constant signals, got '{spec.kind}'"
            )

    a_cl, b_w = linear_closed_loop(config, plant, gains)
    size, inputs = b_w.shape
    augmented = np.zeros((size + inputs, size + inputs))
    augmented[:size, :size] = a_cl
    augmented[:size, size:] = b_w
    transition = scipy.linalg.expm(augmented * config.dt)
    phi = transition[:size, :size]
    gamma = transition[:size, size:]

    steps = _step_count(config)
    m = plant.m
    states = np.zeros((steps + 1, size))
    states[0] = config.initial_state
    for k in range(steps):
        hold = k * config.dt + 0.5 * config.dt
        w = np.empty(inputs)
        w[:m] = signal_value(config.command, hold)
        w[m] = signal_value(config.disturbance, hold)
        states[k + 1] = phi @ states[k] + gamma @ w
    return states


def run_config(path: str, overrides: Optional[Dict[str, object]] = None) -> ScenarioResult:
    """
    Load a scenario file, simulate it and compute its summary metrics.

    Args:
        path (str): Scenario file.
        overrides (Optional[Dict[str, object]]): Dotted-key values applied on top of the file.

    Preconditions:
        - path names a readable scenario file.

    Side effects:
        - Logs the scenario name and wall time at INFO level.

    Exceptions:
        ValidationError: If the file is missing or violates the schema.
        NumericalError: If synthesis or integration fails.

    Returns:
        ScenarioResult: The trace, its summary and the assembled problem.
    """
    # Deferred: load and analysis build on this module's types
    from cbfaw.analysis import saturated_mode_matrix, spectrum_identity
    from cbfaw.load import build_problem, parse_config
    from cbfaw.pure import summary_metrics

    started = time.perf_counter()
    scenario = parse_config(path, overrides)
    problem = build_problem(scenario)
    logger.info("Running scenario [bold]%s[/bold]", problem.name)

    trace = integrate(problem.sim, problem.plant, problem.gains, problem.limits, problem.params)
    closed = saturated_mode_matrix(problem.plant, problem.gains, problem.params)
    spectrum_check = spectrum_identity(closed, problem.plant, problem.params).matched

    wall_time = time.perf_counter() - started
    summary = summary_metrics(
        problem.name, trace, problem.limits, problem.sim, spectrum_check, wall_time
    )
    logger.info("Scenario %s finished in %.2f s", problem.name, wall_time)
    return ScenarioResult(problem.name, trace, summary, problem)


def run_scenario(name: str, overrides: Optional[Dict[str, object]] = None) -> ScenarioResult:
    """
    Run one of the bundled scenarios by name.

    Exceptions:
        UnknownScenarioError: If name is not a bundled scenario.
    """
    from cbfaw.load import scenario_path

    return run_config(str(scenario_path(name)), overrides)


def parameter_sweep(
    source: str,
    key: str,
    values: Sequence[object],
    overrides: Optional[Dict[str, object]] = None,
) -> List[ScenarioResult]:
    """
    Repeat a scenario once per value of one dotted config key.

    source is a bundled scenario name or a scenario file path. Runs are sequential
    and independent; results keep the order of values.
    """
    from cbfaw.load import resolve_scenario

    path = resolve_scenario(source)
    results = []
    for value in values:
        merged = dict(overrides or {})
        merged[key] = value
        logger.info("Sweep %s = %s", key, value)
        results.append(run_config(str(path), merged))
    return results


def trace_table(
    trace: SimTrace, extra_groups: Sequence[str] = ()
) -> Tuple[List[str], np.ndarray]:
    """
    Arrange a trace as CSV columns.

    The default columns are t, y_cmd, y_cmd_plus_v, y_reg, e_yI, xp_*, u_cmd_*, u_*,
    v_*, lambda1_*, lambda2_*, g1_*, g2_*, G1_*, G2_*, d. The command, output and
    integrator columns carry a channel suffix only when m > 1. extra_groups may add
    xa_*, xadot_*, udot_*, delta1_*, delta2_* in that order.

    Returns:
        Tuple[List[str], np.ndarray]: Header names and a (rows, columns) array.
    """
    unknown = [g for g in extra_groups if g not in EXTRA_COLUMN_GROUPS]
    assert not unknown, f"unknown column groups: {unknown}"

    header: List[str] = ["t"]
    blocks: List[np.ndarray] = [trace.t[:, None]]

    def add(name: str, values: np.ndarray, suffix_single: bool = True) -> None:
        width = values.shape[1]
        if width == 1 and not suffix_single:
            header.append(name)
        else:
            header.extend(f"{name}_{i}" for i in range(width))
        blocks.append(values)

    add("y_cmd", trace.y_cmd, suffix_single=False)
    add("y_cmd_plus_v", trace.y_cmd_plus_v, suffix_single=False)
    add("y_reg", trace.y_reg, suffix_single=False)
    add("e_yI", trace.e_yI, suffix_single=False)
    add("xp", trace.x_p)
    add("u_cmd", trace.u_cmd)
    add("u", trace.u)
    add("v", trace.v)
    add("lambda1", trace.lambda1)
    add("lambda2", trace.lambda2)
    add("g1", trace.g1)
    add("g2", trace.g2)
    add("G1", trace.G1)
    add("G2", trace.G2)
    header.append("d")
    blocks.append(trace.d[:, None])

    optional = {
        "xa": trace.x_a,
        "xadot": trace.x_a_dot,
        "udot": trace.u_dot,
        "delta1": trace.delta1,
        "delta2": trace.delta2,
    }
    for group in EXTRA_COLUMN_GROUPS:
        if group in extra_groups:
            add(group, optional[group])

    return header, np.hstack(blocks)
