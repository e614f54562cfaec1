"""
Regression core - dense least squares, matrix chains and spectral radius

All functions are pure; inputs are validated and never modified.
"""

import logging
from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import linalg

from safety.guards import (
    DimensionError,
    ParameterError,
    as_matrix,
    ensure_same_rows,
    ensure_square,
)


logger = logging.getLogger(__name__)

Matrix = NDArray[np.float64]

# Singular values below TAU_RANK * s_max count as zero.
TAU_RANK = 1e-10
TAU_ORTH = 1e-8
TAU_FIT = 1e-9
TAU_EIG = 1e-8


@dataclass(frozen=True)
class LeastSquaresFit:
    """Minimum-norm least-squares solution of design @ coefficients ~ targets."""
    coefficients: Matrix
    residuals: Matrix
    rank: int

    @property
    def full_rank(self) -> bool:
        return self.rank == self.coefficients.shape[0]


def solve_least_squares(design: Matrix, targets: Matrix) -> LeastSquaresFit:
    """Solve min ||design @ B - targets|| with the minimum-norm B.

    Uses an SVD-based LAPACK driver, so rank-deficient designs (m < p in
    small-sample runs) still have a well-defined answer.
    """
    design = as_matrix(design, "design")
    targets = as_matrix(targets, "targets")
    ensure_same_rows(design, targets)

    coefficients, _, rank, singular_values = linalg.lstsq(
        design, targets, cond=TAU_RANK, lapack_driver="gelsd"
    )
    if rank < design.shape[1]:
        logger.debug(
            f"Rank-deficient solve: rank {rank} < {design.shape[1]} columns "
            f"(m={design.shape[0]}, s_max={singular_values[0] if len(singular_values) else 0.0:.3g})"
        )
    residuals = targets - design @ coefficients
    return LeastSquaresFit(coefficients=coefficients, residuals=residuals, rank=int(rank))


def solve_ridge(design: Matrix, targets: Matrix, lambda_reg: float) -> Matrix:
    """Closed-form ridge solution (X'X + lambda I)^-1 X'Y.

    lambda_reg = 0 falls back to the minimum-norm least-squares solve.
    """
    design = as_matrix(design, "design")
    targets = as_matrix(targets, "targets")
    ensure_same_rows(design, targets)
    lambda_reg = float(lambda_reg)
    if not np.isfinite(lambda_reg) or lambda_reg < 0:
        raise ParameterError(f"lambda_reg must be finite and >= 0, got {lambda_reg}", value=lambda_reg)
    if lambda_reg == 0.0:
        return solve_least_squares(design, targets).coefficients

    gram = design.T @ design
    gram[np.diag_indices_from(gram)] += lambda_reg
    factor = linalg.cho_factor(gram, overwrite_a=True)
    return linalg.cho_solve(factor, design.T @ targets)


def matrix_chain_product(factors: Sequence[Matrix]) -> Matrix:
    """Left-to-right product F1 @ F2 @ ... @ Fk."""
    if len(factors) == 0:
        raise DimensionError("matrix chain needs at least one factor")
    matrices = [as_matrix(factor, f"factor[{i}]") for i, factor in enumerate(factors)]
    for i in range(len(matrices) - 1):
        if matrices[i].shape[1] != matrices[i + 1].shape[0]:
            raise DimensionError(
                f"factor[{i}] {matrices[i].shape} does not conform with factor[{i + 1}] {matrices[i + 1].shape}",
                index=i,
            )
    return reduce(np.matmul, matrices)


def matrix_power(base: Matrix, exponent: int) -> Matrix:
    """base raised to a non-negative integer power; exponent 0 gives I."""
    base = as_matrix(base, "base")
    ensure_square(base, "base")
    if int(exponent) != exponent or exponent < 0:
        raise ParameterError(f"exponent must be a non-negative integer, got {exponent}", exponent=exponent)
    return np.linalg.matrix_power(base, int(exponent))


def spectral_radius(square: Matrix) -> float:
    """Largest eigenvalue modulus; complex eigenvalues count by modulus."""
    square = as_matrix(square, "square")
    ensure_square(square, "square")
    eigenvalues = linalg.eigvals(square)
    return float(np.max(np.abs(eigenvalues)))


def orthogonality_violation(design: Matrix, fit: LeastSquaresFit) -> float:
    """max|design' residuals| scaled by the invariant's normaliser."""
    design = np.asarray(design, dtype=np.float64)
    gradient = np.max(np.abs(design.T @ fit.residuals))
    targets = design @ fit.coefficients + fit.residuals
    scale = np.max(np.abs(design)) * max(np.max(np.abs(targets)), 1e-300) * design.shape[0]
    return float(gradient / scale) if scale > 0 else 0.0
