"""
Closed-loop analysis: the saturated-mode system matrix and its spectrum, the
loop gain at the control input with stability margins, and the unlimited
closed-loop step response.

Functions:
    saturated_mode_matrix(plant, gains, params)
    spectrum_identity(closed, plant, params)
    saturated_mode_consistency(plant, gains, limits, params, sample_states, commands)
    default_grid(points, low, high)
    loop_gain_response(extended, gains, grid, actuator)
    step_response(extended, plant, gains, times, actuator)
    alpha_time_constant(params)
"""

import logging
from typing import List, NamedTuple, Optional

import numpy as np
import scipy.linalg

from cbfaw import constants
from cbfaw.aw_cbf import CbfParams, evaluate_aw
from cbfaw.errors import ConfigurationError, InvalidStateError
from cbfaw.linalg import SpectrumMatch, eigenvalues, is_nonsingular, match_spectra, readonly
from cbfaw.lqr_synthesis import ServoGains
from cbfaw.lti_core import ExtendedSystem, PlantModel, PositionLimits
from cbfaw.sim_engine import ActuatorModel

logger = logging.getLogger(__name__)

# Resolvents with a larger condition number are treated as singular
_RESOLVENT_COND_LIMIT = 1e12


class SaturatedClosedLoop(NamedTuple):
    """
    Closed loop while every channel sits on an active limit: x' = A_tilde x + C0 sat(u_cmd).
    """

    A_tilde: np.ndarray
    C0: np.ndarray
    spectrum: np.ndarray


class Crossing(NamedTuple):
    """
    One gain (0 dB) or phase (-180 deg) crossing and the margin it defines.
    """

    frequency: float
    margin: float
    worst: bool


class FrequencyResponse(NamedTuple):
    """
    Loop gain L(jw) = K (jwI - A)^-1 B on a frequency grid.

    loop_gain has shape (points, m, m). Magnitude, unwrapped phase and margins refer
    to the diagonal element of the analysed channel. Margins are None when the
    corresponding crossing does not occur on the grid (an infinite margin).
    """

    frequencies: np.ndarray
    loop_gain: np.ndarray
    magnitude_db: np.ndarray
    phase_deg: np.ndarray
    gain_margin: Optional[float]
    phase_margin: Optional[float]
    crossover: Optional[float]
    phase_crossover: Optional[float]
    gain_crossings: List[Crossing]
    phase_crossings: List[Crossing]
    skipped: List[float]


class StepResponse(NamedTuple):
    times: np.ndarray
    output: np.ndarray
    final_value: float
    rise_time: Optional[float]
    overshoot_pct: float
    settling_time: Optional[float]


def saturated_mode_matrix(
    plant: PlantModel, gains: ServoGains, params: CbfParams
) -> SaturatedClosedLoop:
    """
    Assemble the closed-loop matrices that hold while every channel is on an active limit.

    A_tilde = [[-alpha I_m, -K_I^-1 K_P (A_p + alpha I)], [0, A_p]] and
    C0 = [-K_I^-1 (alpha I_m + K_P B_p); B_p].

    Args:
        plant (PlantModel): Plant.
        gains (ServoGains): Servo gains.
        params (CbfParams): Barrier decay rate.

    Preconditions:
        - gains match the plant dimensions.

    Side effects:
        None

    Exceptions:
        ConfigurationError: If K_I is singular.
        EigenvalueConvergenceError: If the spectrum cannot be computed.

    Returns:
        SaturatedClosedLoop: Read-only matrices and the eigenvalues of A_tilde.
    """
    if not is_nonsingular(gains.K_I):
        raise ConfigurationError("K_I is singular; the saturated-mode matrix is undefined")
    m, n_p = plant.m, plant.n_p
    alpha = params.alpha_cbf
    eye_m = np.eye(m)

    a_tilde = np.zeros((m + n_p, m + n_p))
    a_tilde[:m, :m] = -alpha * eye_m
    a_tilde[:m, m:] = -np.linalg.solve(gains.K_I, gains.K_P @ (plant.A_p + alpha * np.eye(n_p)))
    a_tilde[m:, m:] = plant.A_p

    c0 = np.vstack([
        -np.linalg.solve(gains.K_I, alpha * eye_m + gains.K_P @ plant.B_p),
        plant.B_p,
    ])

    spectrum = eigenvalues(a_tilde)
    return SaturatedClosedLoop(readonly(a_tilde), readonly(c0), spectrum)


def spectrum_identity(
    closed: SaturatedClosedLoop, plant: PlantModel, params: CbfParams
) -> SpectrumMatch:
    """
    Compare the saturated-mode spectrum with {-alpha} (m times) together with eig(A_p).
    """
    expected = np.concatenate([
        np.full(plant.m, -params.alpha_cbf, dtype=complex),
        eigenvalues(plant.A_p),
    ])
    return match_spectra(closed.spectrum, expected, constants.SPECTRUM_TOL)


def saturated_mode_consistency(
    plant: PlantModel,
    gains: ServoGains,
    limits: PositionLimits,
    params: CbfParams,
    sample_states: np.ndarray,
    commands: Optional[np.ndarray] = None,
) -> float:
    """
    Evaluate the closed-loop derivative of saturated states two ways and return
    the largest difference.

    The first path runs the anti-windup pipeline (e_yI' = e_y + v, x_p' = A_p x_p + B_p u_sat);
    the second multiplies out A_tilde x + C0 sat(u_cmd).

    Args:
        plant (PlantModel): Plant.
        gains (ServoGains): Servo gains.
        limits (PositionLimits): Position limits.
        params (CbfParams): Barrier decay rate.
        sample_states (np.ndarray): (samples, m + n_p) states (e_yI, x_p).
        commands (Optional[np.ndarray]): (samples, m) commands y_cmd; zero when omitted.

    Preconditions:
        - In every channel of every sample, one multiplier is active and its
          limit is reached: lambda_k > 0 with g_k >= -1e-12.

    Side effects:
        None

    Exceptions:
        InvalidStateError: If a sample does not satisfy the precondition.

    Returns:
        float: The largest absolute deviation between the two derivatives.
    """
    states = np.atleast_2d(np.asarray(sample_states, dtype=float))
    m, n_p = plant.m, plant.n_p
    assert states.shape[1] == m + n_p, f"sample states must have {m + n_p} columns"
    if commands is None:
        commands = np.zeros((states.shape[0], m))
    commands = np.atleast_2d(np.asarray(commands, dtype=float))
    assert commands.shape == (states.shape[0], m), "one command per sample state"

    closed = saturated_mode_matrix(plant, gains, params)
    tol = constants.SATURATION_BOUNDARY_TOL
    worst = 0.0

    for index, (x, y_cmd) in enumerate(zip(states, commands)):
        e = evaluate_aw(x[:m], x[m:], y_cmd, plant, gains, limits, params)
        active = ((e.lambda1 > 0.0) & (e.g1 >= -tol)) | ((e.lambda2 > 0.0) & (e.g2 >= -tol))
        if not np.all(active):
            raise InvalidStateError(
                f"sample {index} is not on an active position limit in every channel"
            )
        pipeline = np.concatenate([e.e_y + e.v, e.x_p_dot])
        matrix_form = closed.A_tilde @ x + closed.C0 @ e.u_sat
        worst = max(worst, float(np.abs(pipeline - matrix_form).max()))

    return worst


def default_grid(
    points: int = constants.GRID_POINTS,
    low: float = constants.GRID_MIN,
    high: float = constants.GRID_MAX,
) -> np.ndarray:
    return np.logspace(np.log10(low), np.log10(high), points)


def _validate_grid(grid: np.ndarray) -> None:
    lo, hi = constants.GRID_BOUNDS
    if grid.ndim != 1 or grid.size < 2:
        raise InvalidStateError("the frequency grid needs at least two points")
    if np.any(np.diff(grid) <= 0.0):
        raise InvalidStateError("the frequency grid must be strictly increasing")
    if grid[0] < lo or grid[-1] > hi:
        raise InvalidStateError(f"the frequency grid must lie within [{lo:g}, {hi:g}] rad/s")


def _wrap_degrees(angle: float) -> float:
    return (angle + 180.0) % 360.0 - 180.0


def _gain_crossings(log_w: np.ndarray, mag_db: np.ndarray, phase: np.ndarray) -> List[Crossing]:
    found = []
    for i in range(len(log_w) - 1):
        a, b = mag_db[i], mag_db[i + 1]
        if (a >= 0.0 > b) or (a < 0.0 <= b):
            s = a / (a - b)
            w = 10.0 ** (log_w[i] + s * (log_w[i + 1] - log_w[i]))
            phase_at = phase[i] + s * (phase[i + 1] - phase[i])
            found.append((w, _wrap_degrees(180.0 + phase_at)))
    return _flag_worst(found)


def _phase_crossings(log_w: np.ndarray, mag_db: np.ndarray, phase: np.ndarray) -> List[Crossing]:
    found = []
    for i in range(len(log_w) - 1):
        a, b = phase[i], phase[i + 1]
        if a == b:
            continue
        lo, hi = min(a, b), max(a, b)
        # Odd multiples of 180 deg in (lo, hi]
        target = -180.0 + 360.0 * (np.floor((lo + 180.0) / 360.0) + 1.0)
        while target <= hi:
            s = (target - a) / (b - a)
            w = 10.0 ** (log_w[i] + s * (log_w[i + 1] - log_w[i]))
            mag_at = mag_db[i] + s * (mag_db[i + 1] - mag_db[i])
            found.append((w, -mag_at))
            target += 360.0
    return _flag_worst(found)


def _flag_worst(found: List[tuple]) -> List[Crossing]:
    if not found:
        return []
    worst = int(np.argmin([margin for _, margin in found]))
    return [Crossing(float(w), float(margin), i == worst) for i, (w, margin) in enumerate(found)]


def loop_gain_response(
    extended: ExtendedSystem,
    gains: ServoGains,
    grid: Optional[np.ndarray] = None,
    actuator: Optional[ActuatorModel] = None,
    channel: int = 0,
) -> FrequencyResponse:
    """
    Loop gain at the control input, L(jw) = K (jwI - A)^-1 B, with margins.

    The phase margin is 180 deg plus the phase at the first 0 dB crossing; the gain
    margin is minus the magnitude (dB) at the first -180 deg crossing. Crossings are
    located by linear interpolation in log frequency; every crossing is listed and the
    smallest margin of each kind is flagged.

    Args:
        extended (ExtendedSystem): Integral-augmented open loop.
        gains (ServoGains): Servo gains, K = [K_I, K_P].
        grid (Optional[np.ndarray]): Frequencies (rad/s) within [1e-3, 1e4]; 400
                                     log-spaced points over [1e-2, 1e3] by default.
        actuator (Optional[ActuatorModel]): When given and enabled, the second-order
                                            actuator is appended in series at the input.
        channel (int): Diagonal element used for magnitude, phase and margins.

    Preconditions:
        - 0 <= channel < m.

    Side effects:
        - Logs a warning for every grid point whose resolvent is singular; such points are skipped.

    Exceptions:
        InvalidStateError: If the grid is not strictly increasing or leaves the allowed band.

    Returns:
        FrequencyResponse: Loop gain, Bode data and margins.
    """
    w_grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    _validate_grid(w_grid)
    assert 0 <= channel < extended.m, "channel out of range"

    K = gains.K
    n = extended.n
    identity = np.eye(n)

    kept, values, skipped = [], [], []
    for w in w_grid:
        resolvent = 1j * w * identity - extended.A
        if np.linalg.cond(resolvent) > _RESOLVENT_COND_LIMIT:
            logger.warning("Skipping w = %.6g rad/s: resolvent is singular", w)
            skipped.append(float(w))
            continue
        value = K @ np.linalg.solve(resolvent, extended.B)
        if actuator is not None and actuator.enabled:
            wn, zeta = actuator.natural_frequency, actuator.damping_ratio
            s = 1j * w
            value = value * (wn * wn / (s * s + 2.0 * zeta * wn * s + wn * wn))
        kept.append(w)
        values.append(value)

    frequencies = np.asarray(kept)
    loop_gain = np.asarray(values)
    element = loop_gain[:, channel, channel]
    magnitude_db = 20.0 * np.log10(np.abs(element))
    phase_deg = np.degrees(np.unwrap(np.angle(element)))

    log_w = np.log10(frequencies)
    gain_crossings = _gain_crossings(log_w, magnitude_db, phase_deg)
    phase_crossings = _phase_crossings(log_w, magnitude_db, phase_deg)

    return FrequencyResponse(
        frequencies,
        loop_gain,
        magnitude_db,
        phase_deg,
        phase_crossings[0].margin if phase_crossings else None,
        gain_crossings[0].margin if gain_crossings else None,
        gain_crossings[0].frequency if gain_crossings else None,
        phase_crossings[0].frequency if phase_crossings else None,
        gain_crossings,
        phase_crossings,
        skipped,
    )


def _unlimited_closed_loop(
    extended: ExtendedSystem,
    plant: PlantModel,
    gains: ServoGains,
    actuator: Optional[ActuatorModel],
):
    n, m = extended.n, extended.m
    K = gains.K
    if actuator is None or not actuator.enabled:
        a_cl = extended.A - extended.B @ K
        b_cl = extended.B_cmd
        # y_reg = C x_p + D u with u = -K x
        c_y = np.hstack([np.zeros((m, m)), plant.C_p_reg]) - plant.D_p_reg @ K
        return a_cl, b_cl, c_y

    wn, zeta = actuator.natural_frequency, actuator.damping_ratio
    size = n + 2 * m
    a_cl = np.zeros((size, size))
    a_cl[:n, :n] = extended.A
    a_cl[:n, n : n + m] = extended.B
    a_cl[n : n + m, n + m :] = np.eye(m)
    a_cl[n + m :, :n] = -wn * wn * K
    a_cl[n + m :, n : n + m] = -wn * wn * np.eye(m)
    a_cl[n + m :, n + m :] = -2.0 * zeta * wn * np.eye(m)
    b_cl = np.vstack([extended.B_cmd, np.zeros((2 * m, m))])
    c_y = np.zeros((m, size))
    c_y[:, m:n] = plant.C_p_reg
    c_y[:, n : n + m] = plant.D_p_reg
    return a_cl, b_cl, c_y


def step_response(
    extended: ExtendedSystem,
    plant: PlantModel,
    gains: ServoGains,
    times: Optional[np.ndarray] = None,
    actuator: Optional[ActuatorModel] = None,
    channel: int = 0,
) -> StepResponse:
    """
    Unit-step response of y_reg in one channel for the position-unlimited loop.

    The response is propagated exactly with the matrix exponential. Rise time is
    10 % to 90 % of the final value, settling time uses a 2 % band.

    Exceptions:
        InvalidStateError: If the times are not uniformly spaced from zero.
    """
    t = np.linspace(0.0, 10.0, 1001) if times is None else np.asarray(times, dtype=float)
    if t.size < 2 or t[0] != 0.0 or np.any(np.diff(t) <= 0.0):
        raise InvalidStateError("step-response times must start at zero and increase")
    dt = t[1] - t[0]
    if not np.allclose(np.diff(t), dt, rtol=1e-9, atol=0.0):
        raise InvalidStateError("step-response times must be uniformly spaced")

    a_cl, b_cl, c_y = _unlimited_closed_loop(extended, plant, gains, actuator)
    size = a_cl.shape[0]
    step = np.zeros(extended.m)
    step[channel] = 1.0

    augmented = np.zeros((size + 1, size + 1))
    augmented[:size, :size] = a_cl
    augmented[:size, size] = b_cl @ step
    transition = scipy.linalg.expm(augmented * dt)
    phi, gamma = transition[:size, :size], transition[:size, size]

    x = np.zeros(size)
    output = np.zeros((t.size, extended.m))
    for k in range(t.size):
        output[k] = c_y @ x
        x = phi @ x + gamma

    final_value = float((-c_y @ np.linalg.solve(a_cl, b_cl @ step))[channel])
    y = output[:, channel]

    rise_time = None
    if final_value != 0.0:
        scaled = y / final_value
        above_10 = np.flatnonzero(scaled >= 0.1)
        above_90 = np.flatnonzero(scaled >= 0.9)
        if above_10.size and above_90.size:
            rise_time = float(t[above_90[0]] - t[above_10[0]])

    overshoot = 0.0
    if final_value != 0.0:
        overshoot = max(0.0, float((np.max(y * np.sign(final_value)) - abs(final_value)) / abs(final_value) * 100.0))

    band = 0.02 * abs(final_value)
    outside = np.flatnonzero(np.abs(y - final_value) > band)
    if outside.size == 0:
        settling_time: Optional[float] = 0.0
    elif outside[-1] + 1 < t.size:
        settling_time = float(t[outside[-1] + 1])
    else:
        settling_time = None

    return StepResponse(t, output, final_value, rise_time, overshoot, settling_time)


def alpha_time_constant(params: CbfParams) -> float:
    """
    Time constant 1/alpha of the integrator while saturated.
    """
    return 1.0 / params.alpha_cbf
