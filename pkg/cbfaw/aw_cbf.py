"""
Control-barrier-function integrator anti-windup.

The position limits u_min <= u_cmd <= u_max are written as g1 = u_min - u_cmd <= 0
and g2 = u_cmd - u_max <= 0. The anti-windup signal v is the minimum-norm input
to the integrator that keeps g_k' + alpha g_k <= 0 along the saturated closed loop,
which has the closed form

    lambda_k = 2 max(0, (K_I K_I')^-1 delta_k),    v = -0.5 K_I' (lambda1 - lambda2).

qp_reference_solve solves the same minimisation by active-set enumeration and is
used as an independent check of the closed form.

Functions:
    commanded_control(e_yI, x_p, gains)
    control_deficiency(u_cmd, limits)
    constraint_values(u_cmd, limits)
    delta_terms(e_y, x_p_dot, g1, g2, gains, params)
    lagrange_multipliers(delta1, delta2, gains)
    aw_signal(lambda1, lambda2, gains)
    evaluate_aw(e_yI, x_p, y_cmd, plant, gains, limits, params)
    qp_reference_solve(delta1, delta2, gains)
    closed_form_discrepancy(samples, gains)
    kkt_residuals(evaluation, gains)
"""

import itertools
import logging
from typing import Iterable, NamedTuple, Tuple

import numpy as np

from cbfaw import constants
from cbfaw.errors import ConfigurationError, QpInfeasibleError, ValidationError
from cbfaw.linalg import is_nonsingular
from cbfaw.lqr_synthesis import ServoGains
from cbfaw.lti_core import PlantModel, PositionLimits, saturate

logger = logging.getLogger(__name__)

# Active-set enumeration visits 2^(2m) subsets
MAX_ORACLE_CHANNELS = 4


class CbfParams(NamedTuple):
    """
    Decay rate alpha_cbf > 0 (1/s) of the barrier condition g' + alpha g <= 0.
    """

    alpha_cbf: float


class AwEvaluation(NamedTuple):
    """
    Every intermediate of one anti-windup evaluation.
    """

    u_cmd: np.ndarray
    u_sat: np.ndarray
    deficiency: np.ndarray
    e_y: np.ndarray
    x_p_dot: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    delta1: np.ndarray
    delta2: np.ndarray
    lambda1: np.ndarray
    lambda2: np.ndarray
    v: np.ndarray
    G1: np.ndarray
    G2: np.ndarray


class KktResiduals(NamedTuple):
    """
    Worst violations of the optimality conditions of one evaluation.
    """

    min_multiplier: float
    stationarity: float
    complementary_slackness: float


def make_cbf_params(alpha_cbf: float) -> CbfParams:
    """
    Exceptions:
        ValidationError: If alpha_cbf is not a finite positive number.
    """
    alpha = float(alpha_cbf)
    if not np.isfinite(alpha) or alpha <= 0.0:
        raise ValidationError(f"alpha_cbf must be positive, got {alpha_cbf}")
    return CbfParams(alpha)


def commanded_control(e_yI: np.ndarray, x_p: np.ndarray, gains: ServoGains) -> np.ndarray:
    """
    The unconstrained servo command u_cmd = -K_I e_yI - K_P x_p.
    """
    return -gains.K_I @ np.asarray(e_yI, dtype=float) - gains.K_P @ np.asarray(
        x_p, dtype=float
    )


def control_deficiency(u_cmd: np.ndarray, limits: PositionLimits) -> np.ndarray:
    """
    sat(u_cmd) - u_cmd, which is zero exactly when u_cmd lies within the limits.
    """
    u = np.asarray(u_cmd, dtype=float)
    return saturate(u, limits) - u


def constraint_values(
    u_cmd: np.ndarray, limits: PositionLimits
) -> Tuple[np.ndarray, np.ndarray]:
    """
    g1 = u_min - u_cmd and g2 = u_cmd - u_max. Both are <= 0 inside the limits.
    """
    u = np.asarray(u_cmd, dtype=float)
    return limits.u_min - u, u - limits.u_max


def delta_terms(
    e_y: np.ndarray,
    x_p_dot: np.ndarray,
    g1: np.ndarray,
    g2: np.ndarray,
    gains: ServoGains,
    params: CbfParams,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    The parts of the barrier conditions that do not depend on v.

    Args:
        e_y (np.ndarray): Tracking error y_reg - y_cmd, with y_reg driven by sat(u_cmd).
        x_p_dot (np.ndarray): Nominal plant derivative under sat(u_cmd), without disturbance.
        g1 (np.ndarray): Lower-limit constraint values.
        g2 (np.ndarray): Upper-limit constraint values.
        gains (ServoGains): Servo gains.
        params (CbfParams): Barrier decay rate.

    Preconditions:
        - All vectors have the channel or plant dimension of gains.

    Side effects:
        None

    Exceptions:
        None

    Returns:
        Tuple[np.ndarray, np.ndarray]: delta1 = K_I e_y + K_P x_p' + alpha g1 and
        delta2 = -K_I e_y - K_P x_p' + alpha g2. Their sum is alpha (g1 + g2).
    """
    rate = gains.K_I @ np.asarray(e_y, dtype=float) + gains.K_P @ np.asarray(
        x_p_dot, dtype=float
    )
    alpha = params.alpha_cbf
    return rate + alpha * np.asarray(g1, dtype=float), -rate + alpha * np.asarray(
        g2, dtype=float
    )


def lagrange_multipliers(
    delta1: np.ndarray, delta2: np.ndarray, gains: ServoGains
) -> Tuple[np.ndarray, np.ndarray]:
    """
    lambda_k = 2 max(0, (K_I K_I')^-1 delta_k), component-wise.

    A tie delta_k = 0 gives lambda_k = 0, so the constraint counts as inactive.

    Exceptions:
        ConfigurationError: If K_I K_I' is singular.
    """
    gram = gains.K_I @ gains.K_I.T
    if not is_nonsingular(gram):
        raise ConfigurationError("K_I K_I^T is singular; the anti-windup law is undefined")
    scaled1 = np.linalg.solve(gram, np.asarray(delta1, dtype=float))
    scaled2 = np.linalg.solve(gram, np.asarray(delta2, dtype=float))
    return 2.0 * np.maximum(0.0, scaled1), 2.0 * np.maximum(0.0, scaled2)


def aw_signal(
    lambda1: np.ndarray, lambda2: np.ndarray, gains: ServoGains
) -> np.ndarray:
    """
    v = -0.5 K_I' (lambda1 - lambda2).
    """
    return -0.5 * gains.K_I.T @ (
        np.asarray(lambda1, dtype=float) - np.asarray(lambda2, dtype=float)
    )


def evaluate_aw(
    e_yI: np.ndarray,
    x_p: np.ndarray,
    y_cmd: np.ndarray,
    plant: PlantModel,
    gains: ServoGains,
    limits: PositionLimits,
    params: CbfParams,
    aw_enabled: bool = True,
) -> AwEvaluation:
    """
    Run the whole anti-windup pipeline at one state.

    commanded_control -> saturate -> constraint_values -> delta_terms ->
    lagrange_multipliers -> aw_signal, then the barrier values
    G1 = K_I (e_y + v) + K_P x_p' + alpha g1 and G2 = -K_I (e_y + v) - K_P x_p' + alpha g2.

    Args:
        e_yI (np.ndarray): Integrator state, length m.
        x_p (np.ndarray): Plant state, length n_p.
        y_cmd (np.ndarray): Command, length m.
        plant (PlantModel): Nominal plant used for x_p' and e_y.
        gains (ServoGains): Servo gains.
        limits (PositionLimits): Position limits.
        params (CbfParams): Barrier decay rate.
        aw_enabled (bool): When False the multipliers and v are zero and G_k equals delta_k.

    Preconditions:
        - Dimensions agree with plant and gains.

    Side effects:
        None

    Exceptions:
        ConfigurationError: If K_I K_I' is singular.

    Returns:
        AwEvaluation: Every intermediate signal of the evaluation.
    """
    e_yI = np.asarray(e_yI, dtype=float)
    x_p = np.asarray(x_p, dtype=float)
    y_cmd = np.asarray(y_cmd, dtype=float)
    assert e_yI.shape == (plant.m,), f"e_yI must have length {plant.m}"
    assert x_p.shape == (plant.n_p,), f"x_p must have length {plant.n_p}"

    u_cmd = commanded_control(e_yI, x_p, gains)
    u_sat = saturate(u_cmd, limits)
    deficiency = u_sat - u_cmd
    g1, g2 = constraint_values(u_cmd, limits)

    e_y = plant.C_p_reg @ x_p + plant.D_p_reg @ u_sat - y_cmd
    x_p_dot = plant.A_p @ x_p + plant.B_p @ u_sat
    delta1, delta2 = delta_terms(e_y, x_p_dot, g1, g2, gains, params)

    if aw_enabled:
        lambda1, lambda2 = lagrange_multipliers(delta1, delta2, gains)
        v = aw_signal(lambda1, lambda2, gains)
    else:
        lambda1 = np.zeros(plant.m)
        lambda2 = np.zeros(plant.m)
        v = np.zeros(plant.m)

    shift = gains.K_I @ v
    G1 = delta1 + shift
    G2 = delta2 - shift

    return AwEvaluation(
        u_cmd, u_sat, deficiency, e_y, x_p_dot, g1, g2,
        delta1, delta2, lambda1, lambda2, v, G1, G2,
    )


def qp_reference_solve(
    delta1: np.ndarray, delta2: np.ndarray, gains: ServoGains
) -> np.ndarray:
    """
    Minimise ||v||^2 subject to K_I v + delta1 <= 0 and -K_I v + delta2 <= 0
    by enumerating every active set.

    For each subset S of the 2m constraints, the minimum-norm solution of the
    active equalities is computed with a pseudo-inverse; inconsistent or infeasible
    candidates are dropped. The problem is strictly convex, so the optimum is the
    feasible candidate of least norm.

    Args:
        delta1 (np.ndarray): Lower-limit delta terms, length m.
        delta2 (np.ndarray): Upper-limit delta terms, length m.
        gains (ServoGains): Servo gains (K_I is used).

    Preconditions:
        - m <= 4.

    Side effects:
        None

    Exceptions:
        QpInfeasibleError: If no point satisfies the constraints.

    Returns:
        np.ndarray: The minimiser v, length m.
    """
    k_i = gains.K_I
    m = k_i.shape[0]
    assert m <= MAX_ORACLE_CHANNELS, f"active-set enumeration supports m <= {MAX_ORACLE_CHANNELS}"

    # Constraints as G v <= h
    G = np.vstack([k_i, -k_i])
    h = -np.concatenate([np.asarray(delta1, dtype=float), np.asarray(delta2, dtype=float)])
    tol = 1e-12 * (1.0 + float(np.abs(h).max(initial=0.0))) * max(
        1.0, float(np.abs(k_i).max())
    )

    best = None
    best_norm = np.inf
    for size in range(0, 2 * m + 1):
        for subset in itertools.combinations(range(2 * m), size):
            if size == 0:
                candidate = np.zeros(m)
            else:
                rows = list(subset)
                candidate = np.linalg.pinv(G[rows]) @ h[rows]
                if np.abs(G[rows] @ candidate - h[rows]).max() > 1e3 * tol:
                    continue
            if np.all(G @ candidate <= h + tol):
                norm = float(np.linalg.norm(candidate))
                if norm < best_norm:
                    best, best_norm = candidate, norm

    if best is None:
        raise QpInfeasibleError(
            "the barrier constraints admit no solution; check that u_min < u_max"
        )
    return best


def closed_form_discrepancy(
    samples: Iterable[Tuple[np.ndarray, np.ndarray]], gains: ServoGains
) -> float:
    """
    Largest infinity-norm gap between the closed-form v and the active-set
    optimum over (delta1, delta2) samples. Zero for a single channel; may be
    positive for coupled multi-channel K_I.
    """
    worst = 0.0
    for delta1, delta2 in samples:
        lambda1, lambda2 = lagrange_multipliers(delta1, delta2, gains)
        closed = aw_signal(lambda1, lambda2, gains)
        oracle = qp_reference_solve(delta1, delta2, gains)
        worst = max(worst, float(np.abs(closed - oracle).max()))
    if worst > constants.KKT_TOL:
        logger.info("Closed-form anti-windup differs from the QP optimum by %.3e", worst)
    return worst


def kkt_residuals(evaluation: AwEvaluation, gains: ServoGains) -> KktResiduals:
    """
    Dual feasibility (smallest multiplier), stationarity ||2v + K_I'(lambda1 - lambda2)||
    and complementary slackness |lambda1'G1 + lambda2'G2| of one evaluation.
    """
    e = evaluation
    min_multiplier = float(min(e.lambda1.min(initial=0.0), e.lambda2.min(initial=0.0)))
    stationarity = float(
        np.abs(2.0 * e.v + gains.K_I.T @ (e.lambda1 - e.lambda2)).max(initial=0.0)
    )
    slackness = float(abs(e.lambda1 @ e.G1 + e.lambda2 @ e.G2))
    return KktResiduals(min_multiplier, stationarity, slackness)
