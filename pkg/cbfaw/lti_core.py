"""
Open-loop plant, integral augmentation, position saturation and the
structural checks made before a servo-controller is designed.

Functions:
    make_plant(A_p, B_p, C_p_reg, D_p_reg)
    make_limits(u_min, u_max)
    build_extended_system(plant)
    saturate(u_cmd, limits)
    check_hurwitz(A_p)
    check_augmentation_controllable(plant)
    controllability_rank_test(extended)
"""

import logging
from typing import NamedTuple

import numpy as np

from cbfaw import constants
from cbfaw.errors import DimensionError, ValidationError
from cbfaw.linalg import eigenvalues, is_nonsingular, numerical_rank, readonly

logger = logging.getLogger(__name__)


class PlantModel(NamedTuple):
    """
    Open-loop LTI plant x_p' = A_p x_p + B_p u, y_reg = C_p_reg x_p + D_p_reg u.
    """

    A_p: np.ndarray
    B_p: np.ndarray
    C_p_reg: np.ndarray
    D_p_reg: np.ndarray

    @property
    def n_p(self) -> int:
        return self.A_p.shape[0]

    @property
    def m(self) -> int:
        return self.B_p.shape[1]


class ExtendedSystem(NamedTuple):
    """
    Integral-augmented system x' = A x + B u + B_cmd y_cmd with x = (e_yI, x_p).
    """

    A: np.ndarray
    B: np.ndarray
    B_cmd: np.ndarray
    m: int

    @property
    def n(self) -> int:
        return self.A.shape[0]


class PositionLimits(NamedTuple):
    """
    Component-wise position limits u_min <= u <= u_max.
    """

    u_min: np.ndarray
    u_max: np.ndarray


def _as_matrix(value: object, name: str) -> np.ndarray:
    a = np.atleast_2d(np.asarray(value, dtype=float))
    if a.ndim != 2:
        raise DimensionError(f"{name} must be a matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} contains non-finite entries")
    return a


def make_plant(
    A_p: object, B_p: object, C_p_reg: object, D_p_reg: object
) -> PlantModel:
    """
    Build a PlantModel, checking that all dimensions agree.

    Args:
        A_p: State matrix, n_p x n_p.
        B_p: Input matrix, n_p x m.
        C_p_reg: Regulated-output matrix, m x n_p.
        D_p_reg: Feedthrough matrix, m x m.

    Preconditions:
        - All arguments are array-like of real numbers.

    Side effects:
        None

    Exceptions:
        DimensionError: If a dimension is inconsistent.
        ValidationError: If an entry is not finite.

    Returns:
        PlantModel: Read-only plant matrices.
    """
    a = _as_matrix(A_p, "A_p")
    b = _as_matrix(B_p, "B_p")
    c = _as_matrix(C_p_reg, "C_p_reg")
    d = _as_matrix(D_p_reg, "D_p_reg")

    n_p = a.shape[0]
    if a.shape != (n_p, n_p) or n_p == 0:
        raise DimensionError(f"A_p must be square and non-empty, got {a.shape}")
    if b.shape[0] != n_p or b.shape[1] == 0:
        raise DimensionError(f"B_p must be {n_p} x m, got {b.shape}")
    m = b.shape[1]
    if c.shape != (m, n_p):
        raise DimensionError(f"C_p_reg must be {m} x {n_p}, got {c.shape}")
    if d.shape != (m, m):
        raise DimensionError(f"D_p_reg must be {m} x {m}, got {d.shape}")

    return PlantModel(readonly(a), readonly(b), readonly(c), readonly(d))


def make_limits(u_min: object, u_max: object, m: int = 0) -> PositionLimits:
    """
    Build PositionLimits. Scalars are broadcast to m channels when m > 0.

    Exceptions:
        DimensionError: If the two vectors differ in length (or from m).
        ValidationError: If u_min[i] >= u_max[i] for some channel.
    """
    lo = np.atleast_1d(np.asarray(u_min, dtype=float)).ravel()
    hi = np.atleast_1d(np.asarray(u_max, dtype=float)).ravel()
    if m > 0:
        if lo.size == 1:
            lo = np.full(m, lo[0])
        if hi.size == 1:
            hi = np.full(m, hi[0])
        if lo.size != m or hi.size != m:
            raise DimensionError(f"limits must have {m} channels")
    if lo.shape != hi.shape:
        raise DimensionError(
            f"u_min has {lo.size} channels but u_max has {hi.size}"
        )
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValidationError("position limits must be finite")
    if np.any(lo >= hi):
        raise ValidationError(f"u_min must be below u_max in every channel: {lo} vs {hi}")
    return PositionLimits(readonly(lo), readonly(hi))


def build_extended_system(plant: PlantModel) -> ExtendedSystem:
    """
    Assemble the integral-augmented open-loop system.

    A = [[0_{m x m}, C_p_reg], [0_{n_p x m}, A_p]], B = [D_p_reg; B_p], B_cmd = [-I_m; 0].

    Args:
        plant (PlantModel): The open-loop plant.

    Preconditions:
        - plant was built by make_plant (dimensions already validated).

    Side effects:
        None

    Exceptions:
        DimensionError: If the plant matrices are inconsistent.

    Returns:
        ExtendedSystem: Read-only block matrices of dimension n = n_p + m.
    """
    assert isinstance(plant, PlantModel), "plant must be a PlantModel"
    n_p, m = plant.A_p.shape[0], plant.B_p.shape[1]
    if (
        plant.B_p.shape != (n_p, m)
        or plant.C_p_reg.shape != (m, n_p)
        or plant.D_p_reg.shape != (m, m)
    ):
        raise DimensionError("plant matrices have inconsistent dimensions")

    n = n_p + m
    a = np.zeros((n, n))
    a[:m, m:] = plant.C_p_reg
    a[m:, m:] = plant.A_p

    b = np.vstack([plant.D_p_reg, plant.B_p])

    b_cmd = np.zeros((n, m))
    b_cmd[:m, :] = -np.eye(m)

    return ExtendedSystem(readonly(a), readonly(b), readonly(b_cmd), m)


def saturate(u_cmd: np.ndarray, limits: PositionLimits) -> np.ndarray:
    """
    Clamp u_cmd component-wise into [u_min, u_max].
    """
    return np.minimum(np.maximum(u_cmd, limits.u_min), limits.u_max)


def check_hurwitz(A_p: np.ndarray) -> bool:
    """
    Decide whether every eigenvalue of A_p has real part below -1e-12.

    Args:
        A_p (np.ndarray): Square matrix.

    Preconditions:
        - A_p is square.

    Side effects:
        - Logs a warning listing the offending eigenvalues when the test fails.

    Exceptions:
        DimensionError: If A_p is not square.
        EigenvalueConvergenceError: If the eigenvalue iteration does not converge.

    Returns:
        bool: True iff A_p is strictly Hurwitz.
    """
    spectrum = eigenvalues(A_p)
    offending = spectrum[spectrum.real >= constants.HURWITZ_MARGIN]
    if offending.size > 0:
        logger.warning(
            "Matrix is not Hurwitz; eigenvalues with real part >= %g: %s",
            constants.HURWITZ_MARGIN,
            np.array2string(offending, precision=6),
        )
        return False
    return True


def zero_test_matrix(plant: PlantModel) -> np.ndarray:
    """
    The (n_p + m) x (n_p + m) matrix [[A_p, B_p], [C_p_reg, D_p_reg]].
    """
    return np.block([[plant.A_p, plant.B_p], [plant.C_p_reg, plant.D_p_reg]])


def check_augmentation_controllable(plant: PlantModel) -> bool:
    """
    The augmented system is controllable iff [[A_p, B_p], [C_p_reg, D_p_reg]] is
    nonsingular, i.e. the plant has no transmission zero at the origin.
    Assumes (A_p, B_p) is controllable.
    """
    return is_nonsingular(zero_test_matrix(plant))


def controllability_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """
    Build [B, AB, A^2 B, ..., A^{n-1} B].
    """
    n = A.shape[0]
    blocks = [B]
    for _ in range(1, n):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def controllability_rank_test(extended: ExtendedSystem) -> bool:
    """
    Direct rank test of the controllability matrix of (A, B).
    """
    ctrb = controllability_matrix(extended.A, extended.B)
    return numerical_rank(ctrb) == extended.n
