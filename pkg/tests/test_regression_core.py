"""
Tests for the dense least-squares and matrix helpers
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from core.regression import (
    TAU_EIG,
    TAU_FIT,
    TAU_ORTH,
    matrix_chain_product,
    matrix_power,
    orthogonality_violation,
    solve_least_squares,
    solve_ridge,
    spectral_radius,
)
from safety.guards import DimensionError, NonFiniteError, ParameterError


class TestSolveLeastSquares:

    def test_exact_scalar_fit(self):
        fit = solve_least_squares(np.array([[1.0], [2.0]]), np.array([[2.0], [4.0]]))
        assert_allclose(fit.coefficients, [[2.0]])
        assert_allclose(fit.residuals, [[0.0], [0.0]], atol=1e-12)
        assert fit.rank == 1 and fit.full_rank

    def test_identity_design_returns_targets(self, rng):
        targets = rng.normal(size=(4, 3))
        fit = solve_least_squares(np.eye(4), targets)
        assert_allclose(fit.coefficients, targets, rtol=TAU_FIT, atol=1e-12)

    def test_mean_fit_has_orthogonal_residuals(self):
        fit = solve_least_squares(np.array([[1.0], [1.0]]), np.array([[0.0], [2.0]]))
        assert_allclose(fit.coefficients, [[1.0]])
        assert_allclose(fit.residuals, [[-1.0], [1.0]])
        assert float(np.array([[1.0, 1.0]]) @ fit.residuals) == pytest.approx(0.0)

    def test_rank_deficient_design_gives_minimum_norm(self):
        # duplicated column: minimum-norm solution splits the weight evenly
        design = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
        targets = np.array([[2.0], [4.0], [6.0]])
        fit = solve_least_squares(design, targets)
        assert fit.rank == 1
        assert not fit.full_rank
        assert_allclose(fit.coefficients, [[1.0], [1.0]], rtol=1e-9)

    def test_underdetermined_design(self, rng):
        design = rng.normal(size=(3, 6))
        targets = rng.normal(size=(3, 1))
        fit = solve_least_squares(design, targets)
        assert fit.rank == 3
        assert_allclose(design @ fit.coefficients, targets, atol=1e-10)
        assert_allclose(fit.coefficients, np.linalg.pinv(design) @ targets, atol=1e-10)

    def test_row_mismatch_is_rejected(self):
        with pytest.raises(DimensionError):
            solve_least_squares(np.ones((3, 2)), np.ones((4, 1)))

    def test_non_finite_input_is_rejected(self):
        design = np.array([[1.0], [np.nan]])
        with pytest.raises(NonFiniteError):
            solve_least_squares(design, np.ones((2, 1)))

    def test_inputs_are_not_modified(self, rng):
        design = rng.normal(size=(10, 3))
        targets = rng.normal(size=(10, 2))
        design_copy, targets_copy = design.copy(), targets.copy()
        solve_least_squares(design, targets)
        assert np.array_equal(design, design_copy)
        assert np.array_equal(targets, targets_copy)

    @settings(max_examples=40, deadline=None)
    @given(m=st.integers(1, 40), p=st.integers(1, 8), q=st.integers(1, 3), seed=st.integers(0, 2**32 - 1))
    def test_residuals_are_orthogonal_to_design(self, m, p, q, seed):
        gen = np.random.default_rng(seed)
        design = gen.normal(size=(m, p))
        targets = gen.normal(size=(m, q))
        fit = solve_least_squares(design, targets)
        assert_allclose(fit.residuals, targets - design @ fit.coefficients, atol=1e-12)
        assert orthogonality_violation(design, fit) <= TAU_ORTH

    @settings(max_examples=40, deadline=None)
    @given(p=st.integers(1, 8), seed=st.integers(0, 2**32 - 1))
    def test_exact_data_is_recovered(self, p, seed):
        gen = np.random.default_rng(seed)
        design = gen.normal(size=(p + 10, p))
        truth = gen.normal(size=(p, 2))
        fit = solve_least_squares(design, design @ truth)
        scale = max(1.0, np.max(np.abs(truth)))
        assert np.max(np.abs(fit.coefficients - truth)) <= 1e3 * TAU_FIT * scale


class TestRidge:

    def test_hand_computed_scalar(self):
        coefficients = solve_ridge(np.array([[1.0], [1.0]]), np.array([[2.0], [2.0]]), 2.0)
        assert_allclose(coefficients, [[1.0]])

    def test_zero_penalty_matches_least_squares(self, rng):
        design = rng.normal(size=(20, 4))
        targets = rng.normal(size=(20, 1))
        assert_allclose(solve_ridge(design, targets, 0.0),
                        solve_least_squares(design, targets).coefficients, atol=1e-12)

    def test_negative_penalty_is_rejected(self):
        with pytest.raises(ParameterError):
            solve_ridge(np.ones((2, 1)), np.ones((2, 1)), -1.0)


class TestMatrixChain:

    def test_single_identity(self):
        assert_allclose(matrix_chain_product([np.eye(3)]), np.eye(3))

    def test_inverse_pair(self, rng):
        a = rng.normal(size=(4, 4)) + 4 * np.eye(4)
        assert_allclose(matrix_chain_product([a, np.linalg.inv(a)]), np.eye(4), atol=1e-10)

    def test_hand_product(self):
        product = matrix_chain_product([np.array([[1.0, 1.0], [0.0, 1.0]]), np.array([[1.0, 0.0], [1.0, 1.0]])])
        assert_allclose(product, [[2.0, 1.0], [1.0, 1.0]])

    def test_order_is_left_to_right(self, rng):
        a, b, c = (rng.normal(size=(3, 3)) for _ in range(3))
        assert_allclose(matrix_chain_product([a, b, c]), a @ b @ c)

    def test_empty_and_nonconforming_chains(self):
        with pytest.raises(DimensionError):
            matrix_chain_product([])
        with pytest.raises(DimensionError):
            matrix_chain_product([np.ones((2, 3)), np.ones((2, 2))])


class TestMatrixPower:

    def test_zero_exponent_is_identity(self, rng):
        assert_allclose(matrix_power(rng.normal(size=(3, 3)), 0), np.eye(3))

    def test_diagonal_power(self):
        assert_allclose(matrix_power(np.diag([2.0, 3.0]), 3), np.diag([8.0, 27.0]))

    def test_shear_power(self):
        assert_allclose(matrix_power(np.array([[1.0, 1.0], [0.0, 1.0]]), 4), [[1.0, 4.0], [0.0, 1.0]])

    @pytest.mark.parametrize("k", [1, 2, 5])
    def test_agrees_with_chain_of_copies(self, rng, k):
        a = rng.normal(size=(4, 4)) * 0.5
        expected = matrix_chain_product([a] * k)
        assert_allclose(matrix_power(a, k), expected, rtol=TAU_FIT, atol=1e-14)

    def test_non_square_and_negative_exponent(self):
        with pytest.raises(DimensionError):
            matrix_power(np.ones((2, 3)), 2)
        with pytest.raises(ParameterError):
            matrix_power(np.eye(2), -1)


class TestSpectralRadius:

    def test_diagonal(self):
        assert spectral_radius(np.diag([2.0, 1.0])) == pytest.approx(2.0, rel=TAU_EIG)

    def test_rotation_has_unit_radius(self):
        assert spectral_radius(np.array([[0.0, -1.0], [1.0, 0.0]])) == pytest.approx(1.0, rel=TAU_EIG)

    def test_hand_characteristic_polynomial(self):
        assert spectral_radius(np.array([[0.0, 4.0], [1.0, 0.0]])) == pytest.approx(2.0, rel=TAU_EIG)

    def test_non_square_is_rejected(self):
        with pytest.raises(DimensionError):
            spectral_radius(np.ones((2, 3)))

    @settings(max_examples=40, deadline=None)
    @given(d=st.integers(1, 8), c=st.floats(-5, 5).filter(lambda v: abs(v) > 1e-3),
           seed=st.integers(0, 2**32 - 1))
    def test_scales_with_absolute_factor(self, d, c, seed):
        a = np.random.default_rng(seed).normal(size=(d, d))
        assert spectral_radius(c * a) == pytest.approx(abs(c) * spectral_radius(a), rel=1e3 * TAU_EIG)
