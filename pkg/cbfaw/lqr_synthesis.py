"""
Baseline PI servo-controller synthesis by continuous-time LQR on the
integral-augmented system.

The Riccati equation A'P + PA - P B R^-1 B'P + Q = 0 is solved from the stable
invariant subspace of the Hamiltonian matrix and then polished with
Newton-Kleinman iterations, symmetrising P after every step.
"""

import logging
from typing import NamedTuple

import numpy as np
import scipy.linalg

from cbfaw import constants
from cbfaw.errors import DimensionError, SynthesisError, ValidationError
from cbfaw.linalg import is_nonsingular, readonly
from cbfaw.lti_core import ExtendedSystem

logger = logging.getLogger(__name__)


class LqrWeights(NamedTuple):
    """
    State cost Q (n x n, positive semidefinite) and control cost R (m x m, positive definite).
    """

    Q: np.ndarray
    R: np.ndarray


class ServoGains(NamedTuple):
    """
    Integral gain K_I (m x m) and proportional gain K_P (m x n_p), with u = -K_I e_yI - K_P x_p.
    """

    K_I: np.ndarray
    K_P: np.ndarray

    @property
    def K(self) -> np.ndarray:
        return np.hstack([self.K_I, self.K_P])


def make_weights(Q: object, R: object) -> LqrWeights:
    """
    Build LqrWeights after checking symmetry (1e-12) and definiteness.

    Exceptions:
        ValidationError: If Q is not symmetric PSD or R is not symmetric PD.
    """
    q = np.atleast_2d(np.asarray(Q, dtype=float))
    r = np.atleast_2d(np.asarray(R, dtype=float))
    for name, w in (("Q", q), ("R", r)):
        if w.shape[0] != w.shape[1]:
            raise DimensionError(f"{name} must be square, got {w.shape}")
        if np.max(np.abs(w - w.T), initial=0.0) > constants.SYMMETRY_TOL:
            raise ValidationError(f"{name} is not symmetric")
    if np.min(np.linalg.eigvalsh(q), initial=0.0) < -constants.SYMMETRY_TOL * max(
        1.0, float(np.abs(q).max(initial=0.0))
    ):
        raise ValidationError("Q is not positive semidefinite")
    if np.min(np.linalg.eigvalsh(r)) <= 0.0:
        raise ValidationError("R is not positive definite")
    return LqrWeights(readonly(q), readonly(r))


def weights_from_diagonal(Q_diag: object, R: object) -> LqrWeights:
    """
    Build LqrWeights from the diagonal of Q and a scalar or matrix R.
    """
    return make_weights(np.diag(np.atleast_1d(np.asarray(Q_diag, dtype=float))), R)


def riccati_residual(
    A: np.ndarray, B: np.ndarray, Q: np.ndarray, R: np.ndarray, P: np.ndarray
) -> float:
    """
    Frobenius norm of A'P + PA - P B R^-1 B'P + Q.
    """
    gain = np.linalg.solve(R, B.T @ P)
    residual = A.T @ P + P @ A - P @ B @ gain + Q
    return float(np.linalg.norm(residual, ord="fro"))


def _hamiltonian_solution(
    A: np.ndarray, B: np.ndarray, Q: np.ndarray, R: np.ndarray
) -> np.ndarray:
    n = A.shape[0]
    s = B @ np.linalg.solve(R, B.T)
    hamiltonian = np.block([[A, -s], [-Q, -A.T]])

    values, vectors = scipy.linalg.eig(hamiltonian)
    scale = max(1.0, float(np.abs(values).max()))
    if np.any(np.abs(values.real) <= 1e-9 * scale):
        raise SynthesisError(
            "Hamiltonian has eigenvalues on the imaginary axis; "
            "(A, B) is not stabilizable or (A, Q) has an unobservable imaginary-axis mode"
        )

    stable = np.flatnonzero(values.real < 0.0)
    if stable.size != n:
        raise SynthesisError(
            f"expected {n} stable Hamiltonian eigenvalues, found {stable.size}"
        )

    v1 = vectors[:n, stable]
    v2 = vectors[n:, stable]
    s_v1 = np.linalg.svd(v1, compute_uv=False)
    if s_v1[-1] <= constants.SINGULAR_RTOL * s_v1[0]:
        raise SynthesisError("stable subspace basis V1 is singular")
    # P = V2 V1^-1
    p = np.linalg.solve(v1.T, v2.T).T.real
    return 0.5 * (p + p.T)


def solve_care(
    A: np.ndarray, B: np.ndarray, Q: np.ndarray, R: np.ndarray
) -> np.ndarray:
    """
    Solve the continuous algebraic Riccati equation for the stabilising P.

    Args:
        A (np.ndarray): n x n state matrix.
        B (np.ndarray): n x m input matrix.
        Q (np.ndarray): n x n state weight, symmetric positive semidefinite.
        R (np.ndarray): m x m control weight, symmetric positive definite.

    Preconditions:
        - (A, B) is stabilizable and the weights are valid.

    Side effects:
        - Logs Newton-Kleinman progress at DEBUG level.

    Exceptions:
        DimensionError: If the shapes do not agree.
        SynthesisError: If the pair is not stabilizable, the closed loop is not Hurwitz,
                        or the residual does not reach tolerance.

    Returns:
        np.ndarray: Symmetric P with residual <= 1e-8 (1 + ||P||) and A - B R^-1 B'P Hurwitz.
    """
    a = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_2d(np.asarray(B, dtype=float))
    weights = make_weights(Q, R)
    q, r = weights.Q, weights.R
    n = a.shape[0]
    if a.shape != (n, n) or b.shape[0] != n or q.shape != (n, n) or r.shape != (b.shape[1],) * 2:
        raise DimensionError(
            f"inconsistent shapes A{a.shape} B{b.shape} Q{q.shape} R{r.shape}"
        )

    p = _hamiltonian_solution(a, b, q, r)

    for iteration in range(constants.NEWTON_MAX_ITER):
        residual = riccati_residual(a, b, q, r, p)
        tolerance = constants.RICCATI_RTOL * (1.0 + np.linalg.norm(p, ord="fro"))
        logger.debug("Newton-Kleinman iteration %d: residual %.3e", iteration, residual)
        if residual <= 0.01 * tolerance:
            break

        gain = np.linalg.solve(r, b.T @ p)
        closed = a - b @ gain
        if np.any(np.linalg.eigvals(closed).real >= 0.0):
            raise SynthesisError("Newton-Kleinman iterate is not stabilising", residual)
        rhs = -(q + gain.T @ r @ gain)
        p_next = scipy.linalg.solve_continuous_lyapunov(closed.T, rhs)
        p_next = 0.5 * (p_next + p_next.T)

        if not np.all(np.isfinite(p_next)):
            raise SynthesisError("Newton-Kleinman iteration diverged", residual)
        if riccati_residual(a, b, q, r, p_next) >= residual:
            # No further progress at machine precision
            break
        p = p_next

    residual = riccati_residual(a, b, q, r, p)
    tolerance = constants.RICCATI_RTOL * (1.0 + np.linalg.norm(p, ord="fro"))
    if residual > tolerance:
        raise SynthesisError("Riccati residual above tolerance", residual)

    closed = a - b @ np.linalg.solve(r, b.T @ p)
    if np.any(np.linalg.eigvals(closed).real >= 0.0):
        raise SynthesisError("closed loop A - B K is not Hurwitz", residual)

    return readonly(p)


def servo_gains(
    P: np.ndarray, B: np.ndarray, R: np.ndarray, n_p: int, m: int
) -> ServoGains:
    """
    Split K = R^-1 B'P into the integral gain (first m columns) and the
    proportional gain (remaining n_p columns).

    Args:
        P (np.ndarray): Riccati solution, n x n with n = m + n_p.
        B (np.ndarray): Extended input matrix, n x m.
        R (np.ndarray): Control weight, m x m.
        n_p (int): Plant order.
        m (int): Number of control channels.

    Preconditions:
        - P comes from solve_care for the same B and R.

    Side effects:
        None

    Exceptions:
        DimensionError: If the shapes disagree with n_p and m.
        SynthesisError: If K_I is singular.

    Returns:
        ServoGains: Read-only K_I (m x m) and K_P (m x n_p).
    """
    p = np.atleast_2d(np.asarray(P, dtype=float))
    b = np.atleast_2d(np.asarray(B, dtype=float))
    r = np.atleast_2d(np.asarray(R, dtype=float))
    n = n_p + m
    if p.shape != (n, n) or b.shape != (n, m) or r.shape != (m, m):
        raise DimensionError(
            f"shapes P{p.shape} B{b.shape} R{r.shape} disagree with n_p={n_p}, m={m}"
        )

    k = np.linalg.solve(r, b.T @ p)
    k_i, k_p = k[:, :m], k[:, m:]
    if not is_nonsingular(k_i):
        raise SynthesisError("integral gain K_I is singular")
    return ServoGains(readonly(k_i), readonly(k_p))


def make_gains(K_I: object, K_P: object, n_p: int, m: int) -> ServoGains:
    """
    Build ServoGains from explicit matrices.

    Exceptions:
        DimensionError: If the shapes disagree with n_p and m.
        SynthesisError: If K_I is singular.
    """
    k_i = np.atleast_2d(np.asarray(K_I, dtype=float))
    k_p = np.asarray(K_P, dtype=float)
    if k_p.size != m * n_p:
        raise DimensionError(f"K_P must be {m} x {n_p}, got {k_p.shape}")
    k_p = k_p.reshape(m, n_p)
    if k_i.shape != (m, m):
        raise DimensionError(f"K_I must be {m} x {m}, got {k_i.shape}")
    if not is_nonsingular(k_i):
        raise SynthesisError("integral gain K_I is singular")
    return ServoGains(readonly(k_i), readonly(k_p))


def design_lqr_servo(extended: ExtendedSystem, weights: LqrWeights) -> ServoGains:
    """
    Run solve_care on the extended system and split the resulting gain.
    """
    p = solve_care(extended.A, extended.B, weights.Q, weights.R)
    return servo_gains(p, extended.B, weights.R, extended.n - extended.m, extended.m)
