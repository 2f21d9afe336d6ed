"""
Pure functions summarising simulation traces and controller data.
"""

import logging
from typing import List, NamedTuple

import numpy as np

from cbfaw.lqr_synthesis import ServoGains
from cbfaw.lti_core import PositionLimits, saturate
from cbfaw.sim_engine import SimConfig, SimTrace

logger = logging.getLogger(__name__)

# Settling band relative to the peak command
SETTLING_FRACTION = 0.02


class RunSummary(NamedTuple):
    scenario: str
    peak_abs_e_yI: float
    peak_abs_u_cmd: float
    saturated_time_s: float
    peak_violation: float
    peak_abs_tracking_error: float
    final_abs_tracking_error: float
    settling_time_s: float
    spectrum_check: bool
    wall_time_s: float


def settling_time(trace: SimTrace) -> float:
    """
    Time after the last command change until |y_reg - y_cmd| stays within 2 % of
    the peak |y_cmd|. Zero when the command is identically zero.

    Args:
        trace (SimTrace): A simulation trace.

    Preconditions:
        - trace has at least one row.

    Side effects:
        - Logs a warning when the output never settles within the horizon.

    Exceptions:
        None

    Returns:
        float: Settling time in seconds, or the remaining horizon if the output never settles.
    """
    peak_command = float(np.abs(trace.y_cmd).max(initial=0.0))
    if peak_command == 0.0:
        return 0.0

    changes = np.flatnonzero(np.any(np.diff(trace.y_cmd, axis=0) != 0.0, axis=1))
    start = int(changes[-1]) + 1 if changes.size else 0

    error = np.abs(trace.y_reg[start:] - trace.y_cmd[start:]).max(axis=1)
    outside = np.flatnonzero(error > SETTLING_FRACTION * peak_command)
    if outside.size == 0:
        return 0.0
    last = start + int(outside[-1])
    if last + 1 >= trace.rows:
        logger.warning("Output has not settled by the end of the run")
        return float(trace.t[-1] - trace.t[start])
    return float(trace.t[last + 1] - trace.t[start])


def summary_metrics(
    name: str,
    trace: SimTrace,
    limits: PositionLimits,
    sim: SimConfig,
    spectrum_check: bool,
    wall_time: float,
) -> RunSummary:
    """
    Reduce a trace to its summary metrics.

    Args:
        name (str): Scenario name.
        trace (SimTrace): The trace.
        limits (PositionLimits): Position limits used to count saturated samples.
        sim (SimConfig): The simulation configuration (for dt).
        spectrum_check (bool): Outcome of the saturated-mode spectrum check.
        wall_time (float): Elapsed wall time in seconds.

    Preconditions:
        - trace was produced with sim.

    Side effects:
        None

    Exceptions:
        None

    Returns:
        RunSummary: Every metric is finite.
    """
    deficiency = saturate(trace.u_cmd, limits) - trace.u_cmd
    saturated_rows = int(np.count_nonzero(np.any(deficiency != 0.0, axis=1)))
    violation = max(0.0, float(trace.g1.max(initial=0.0)), float(trace.g2.max(initial=0.0)))
    tracking = np.abs(trace.y_reg - trace.y_cmd)

    return RunSummary(
        scenario=name,
        peak_abs_e_yI=float(np.abs(trace.e_yI).max(initial=0.0)),
        peak_abs_u_cmd=float(np.abs(trace.u_cmd).max(initial=0.0)),
        saturated_time_s=saturated_rows * sim.dt,
        peak_violation=violation,
        peak_abs_tracking_error=float(tracking.max(initial=0.0)),
        final_abs_tracking_error=float(tracking[-1].max(initial=0.0)),
        settling_time_s=settling_time(trace),
        spectrum_check=bool(spectrum_check),
        wall_time_s=float(wall_time),
    )


def format_metrics(summary: RunSummary) -> List[str]:
    """
    One key=value line per metric, floats written with repr.
    """
    lines = []
    for key, value in summary._asdict().items():
        if isinstance(value, bool):
            text = "pass" if value else "fail"
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"{key}={text}")
    return lines


def gain_vector(gains: ServoGains) -> List[float]:
    """
    The gain matrix K = [K_I, K_P] flattened row by row.
    """
    return [float(k) for k in gains.K.ravel()]
