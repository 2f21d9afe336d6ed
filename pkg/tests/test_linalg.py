import numpy as np
import pytest

from cbfaw.errors import DimensionError, EigenvalueConvergenceError
from cbfaw.linalg import (
    characteristic_roots,
    eigenvalues,
    is_nonsingular,
    match_spectra,
    numerical_rank,
    readonly,
)


class TestEigenvalues:
    def test_short_period_matrix(self, reference_plant):
        values = eigenvalues(reference_plant.A_p)
        assert match_spectra(values, [-1.5717 + 1.9950j, -1.5717 - 1.9950j], 1e-4).matched
        assert match_spectra(values, np.linalg.eigvals(reference_plant.A_p), 1e-10).matched

    @pytest.mark.parametrize("n", [1, 2, 4, 6, 9])
    def test_matches_lapack_on_random_matrices(self, rng, n):
        a = rng.standard_normal((n, n))
        check = match_spectra(eigenvalues(a), np.linalg.eigvals(a), 1e-8)
        assert check.matched, check.max_deviation

    def test_triangular_matrix(self):
        a = np.array([[1.0, 5.0, -2.0], [0.0, -3.0, 4.0], [0.0, 0.0, 7.0]])
        assert match_spectra(eigenvalues(a), [1.0, -3.0, 7.0], 1e-12).matched

    def test_rotation_has_imaginary_pair(self):
        values = eigenvalues(np.array([[0.0, 1.0], [-1.0, 0.0]]))
        assert match_spectra(values, [1j, -1j], 1e-12).matched

    def test_empty_matrix(self):
        assert eigenvalues(np.zeros((0, 0))).size == 0

    def test_non_square_is_rejected(self):
        with pytest.raises(DimensionError):
            eigenvalues(np.zeros((2, 3)))

    def test_iteration_budget(self):
        with pytest.raises(EigenvalueConvergenceError):
            eigenvalues(np.array([[1.0, 2.0], [3.0, 4.0]]), max_iterations=0)


class TestCharacteristicRoots:
    def test_three_by_three(self, rng):
        a = rng.standard_normal((3, 3))
        assert match_spectra(characteristic_roots(a), np.linalg.eigvals(a), 1e-8).matched

    def test_scalar(self):
        np.testing.assert_allclose(characteristic_roots(np.array([[-2.5]])), [-2.5])


class TestRankTests:
    def test_nonsingular(self):
        assert is_nonsingular(np.eye(3))
        assert not is_nonsingular(np.array([[1.0, 2.0], [2.0, 4.0]]))
        assert not is_nonsingular(np.zeros((2, 2)))

    def test_relative_tolerance_is_scale_invariant(self):
        assert is_nonsingular(1e-20 * np.eye(2))

    def test_numerical_rank(self):
        assert numerical_rank(np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]])) == 1
        assert numerical_rank(np.zeros((2, 2))) == 0


class TestMatchSpectra:
    def test_order_does_not_matter(self):
        assert match_spectra([3.0, 1.0 + 1j, 1.0 - 1j], [1.0 - 1j, 3.0, 1.0 + 1j], 0.0).matched

    def test_size_mismatch(self):
        result = match_spectra([1.0], [1.0, 2.0], 1.0)
        assert not result.matched
        assert result.max_deviation == float("inf")

    def test_reports_deviation(self):
        result = match_spectra([1.0, 2.0 + 1e-6], [1.0, 2.0], 1e-9)
        assert not result.matched
        assert result.max_deviation == pytest.approx(1e-6)


def test_readonly_copies_and_freezes():
    source = np.array([[1, 2], [3, 4]])
    frozen = readonly(source)
    assert frozen.dtype == float
    with pytest.raises(ValueError):
        frozen[0, 0] = 5.0
    source[0, 0] = 9
    assert frozen[0, 0] == 1.0
