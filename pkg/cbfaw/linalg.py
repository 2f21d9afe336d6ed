"""
Dense linear-algebra helpers shared by the control modules.

Functions:
    eigenvalues(matrix)
    characteristic_roots(matrix)
    is_nonsingular(matrix)
    numerical_rank(matrix)
    match_spectra(actual, expected, tol)
    readonly(array)
"""

import cmath
import logging
from typing import NamedTuple, Optional, Sequence

import numpy as np
import scipy.linalg

from cbfaw import constants
from cbfaw.errors import DimensionError, EigenvalueConvergenceError

logger = logging.getLogger(__name__)

_EPS = np.finfo(float).eps

# Exceptional shifts break rare cycles of the Wilkinson shift
_EXCEPTIONAL_SHIFT_PERIOD = 11


class SpectrumMatch(NamedTuple):
    """
    Result of comparing two eigenvalue multisets.
    """

    matched: bool
    max_deviation: float


def readonly(array: np.ndarray) -> np.ndarray:
    """
    Return a float copy of array that cannot be written to.
    """
    frozen = np.array(array, dtype=float)
    frozen.setflags(write=False)
    return frozen


def _require_square(a: np.ndarray) -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")


def _wilkinson_shift(block: np.ndarray) -> complex:
    a, b = block[0, 0], block[0, 1]
    c, d = block[1, 0], block[1, 1]
    half_trace = 0.5 * (a + d)
    root = cmath.sqrt(0.25 * (a - d) ** 2 + b * c)
    first, second = half_trace + root, half_trace - root
    return first if abs(first - d) <= abs(second - d) else second


def eigenvalues(matrix: np.ndarray, max_iterations: Optional[int] = None) -> np.ndarray:
    """
    Compute the eigenvalues of a real square matrix by Hessenberg reduction
    followed by Wilkinson-shifted QR iteration in complex arithmetic.

    Args:
        matrix (np.ndarray): Real square matrix.
        max_iterations (Optional[int]): Total QR sweeps allowed. Defaults to 100 x n.

    Preconditions:
        - matrix is square and finite.

    Side effects:
        - Logs a warning when the characteristic-polynomial cross-check (n <= 3) disagrees.

    Exceptions:
        DimensionError: If matrix is not square.
        EigenvalueConvergenceError: If the iteration budget is exhausted.

    Returns:
        np.ndarray: Complex eigenvalues, one per dimension, in deflation order.
    """
    a = np.asarray(matrix, dtype=float)
    _require_square(a)
    n = a.shape[0]
    if n == 0:
        return np.empty(0, dtype=complex)

    if max_iterations is None:
        max_iterations = constants.EIG_MAX_ITER_PER_DIM * n

    h = scipy.linalg.hessenberg(a).astype(complex)
    norm = float(np.linalg.norm(a, ord=np.inf))
    result = np.empty(n, dtype=complex)

    hi = n - 1
    sweeps = 0
    since_deflation = 0

    while hi >= 0:
        # Locate the top of the unreduced block ending at row hi
        lo = hi
        while lo > 0:
            scale = abs(h[lo, lo]) + abs(h[lo - 1, lo - 1])
            threshold = _EPS * (scale if scale > 0.0 else norm)
            if abs(h[lo, lo - 1]) <= threshold:
                h[lo, lo - 1] = 0.0
                break
            lo -= 1

        if lo == hi:
            result[hi] = h[hi, hi]
            hi -= 1
            since_deflation = 0
            continue

        if sweeps >= max_iterations:
            raise EigenvalueConvergenceError(
                f"shifted QR did not converge within {max_iterations} sweeps "
                f"({hi + 1} of {n} eigenvalues outstanding)"
            )

        block = h[lo : hi + 1, lo : hi + 1]
        size = hi - lo + 1
        if since_deflation > 0 and since_deflation % _EXCEPTIONAL_SHIFT_PERIOD == 0:
            shift = block[-1, -1] + 0.75 * abs(block[-1, -2])
        else:
            shift = _wilkinson_shift(block[-2:, -2:])

        identity = np.eye(size, dtype=complex)
        q, r = np.linalg.qr(block - shift * identity)
        h[lo : hi + 1, lo : hi + 1] = r @ q + shift * identity

        sweeps += 1
        since_deflation += 1

    if n <= 3:
        _cross_check(a, result)

    return result


def characteristic_roots(matrix: np.ndarray) -> np.ndarray:
    """
    Roots of the characteristic polynomial of a matrix of size 1 to 3,
    built from trace, principal minors and determinant.
    """
    a = np.asarray(matrix, dtype=float)
    _require_square(a)
    n = a.shape[0]
    assert 1 <= n <= 3, "characteristic_roots supports sizes 1 to 3"

    trace = float(np.trace(a))
    if n == 1:
        coefficients = [1.0, -trace]
    elif n == 2:
        det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
        coefficients = [1.0, -trace, det]
    else:
        minors = (
            a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
            + a[0, 0] * a[2, 2] - a[0, 2] * a[2, 0]
            + a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1]
        )
        det = (
            a[0, 0] * (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1])
            - a[0, 1] * (a[1, 0] * a[2, 2] - a[1, 2] * a[2, 0])
            + a[0, 2] * (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0])
        )
        coefficients = [1.0, -trace, minors, -det]
    return np.roots(coefficients).astype(complex)


def _cross_check(a: np.ndarray, computed: np.ndarray) -> None:
    roots = characteristic_roots(a)
    # Repeated roots are only accurate to about eps ** (1 / multiplicity)
    tol = 1e-4 * max(1.0, float(np.linalg.norm(a, ord=np.inf)))
    check = match_spectra(computed, roots, tol)
    if not check.matched:
        logger.warning(
            "Eigenvalues %s disagree with characteristic-polynomial roots %s "
            "(deviation %.3e)",
            np.array2string(computed, precision=6),
            np.array2string(roots, precision=6),
            check.max_deviation,
        )


def singular_values(matrix: np.ndarray) -> np.ndarray:
    return np.linalg.svd(np.atleast_2d(np.asarray(matrix, dtype=float)), compute_uv=False)


def is_nonsingular(matrix: np.ndarray, rtol: float = constants.SINGULAR_RTOL) -> bool:
    """
    A square matrix is nonsingular when its smallest singular value exceeds
    rtol times its largest.
    """
    a = np.atleast_2d(np.asarray(matrix, dtype=float))
    _require_square(a)
    if a.shape[0] == 0:
        return True
    s = singular_values(a)
    return bool(s[0] > 0.0 and s[-1] > rtol * s[0])


def numerical_rank(matrix: np.ndarray, rtol: float = constants.SINGULAR_RTOL) -> int:
    """
    Number of singular values above rtol times the largest.
    """
    a = np.atleast_2d(np.asarray(matrix, dtype=float))
    if a.size == 0:
        return 0
    s = singular_values(a)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def match_spectra(
    actual: Sequence[complex], expected: Sequence[complex], tol: float
) -> SpectrumMatch:
    """
    Compare two eigenvalue multisets.

    The expected values are visited in lexicographic (real, imag) order and each
    is paired with its nearest unused actual value, so conjugate pairs whose real
    parts differ in the last bit are still paired correctly.

    Args:
        actual (Sequence[complex]): Computed eigenvalues.
        expected (Sequence[complex]): Reference eigenvalues.
        tol (float): Absolute tolerance on every pairing.

    Preconditions:
        - tol is non-negative.

    Side effects:
        None

    Exceptions:
        None

    Returns:
        SpectrumMatch: matched is True when the sizes agree and every pair lies within tol;
        max_deviation is the largest pair distance (inf on size mismatch).
    """
    assert tol >= 0.0, "tol must be non-negative"
    actual_list = [complex(z) for z in actual]
    expected_list = sorted((complex(z) for z in expected), key=lambda z: (z.real, z.imag))
    if len(actual_list) != len(expected_list):
        return SpectrumMatch(False, float("inf"))

    unused = list(actual_list)
    worst = 0.0
    for target in expected_list:
        distances = [abs(z - target) for z in unused]
        index = int(np.argmin(distances))
        worst = max(worst, distances[index])
        unused.pop(index)
    return SpectrumMatch(worst <= tol, worst)
