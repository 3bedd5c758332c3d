"""Variance / invariance / covariance loss terms and their closed-form gradients.

The objective compares two embedding batches z_a, z_b of shape (n, d):

    total = lambda * inv(z_a, z_b) + mu * (var(z_a) + var(z_b))
          + nu * (cov(z_a) + cov(z_b))

where

    inv(z_a, z_b) = mean over rows of ||z_a[i] - z_b[i]||^2
    var(z)        = mean over columns of max(0, gamma - sqrt(Var_col + epsilon))
    cov(z)        = sum of squared off-diagonal covariance entries / d

Var_col is the unbiased per-column variance. The hinge keeps every column's
regularized std pushed up toward gamma; the covariance penalty decorrelates
columns; the invariance term ties the two views together. Gradients for all
three terms are derived by hand below and checked against central finite
differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import (
    ShapeMismatchError,
    as_batch,
    covariance_matrix,
    regularized_column_stds,
    standardize_columns,
)

__all__ = [
    "LossCoefficients",
    "LossBreakdown",
    "LossGradients",
    "UndefinedStatisticError",
    "variance_term",
    "variance_term_grad",
    "variance_hinge_on_raw_variance",
    "covariance_term",
    "covariance_term_grad",
    "invariance_term",
    "invariance_term_grads",
    "vicreg_loss",
    "vicreg_loss_backward",
    "vicreg_loss_elementwise",
    "avg_correlation_coefficient",
]


class UndefinedStatisticError(ValueError):
    """Statistic is undefined for the given dimensionality."""


@dataclass(frozen=True)
class LossCoefficients:
    """Weights and constants of the objective.

    lambda_ weighs the invariance term, mu the variance hinge, nu the
    covariance penalty. gamma is the std target inside the hinge and
    epsilon the variance regularizer under the square root.
    """

    lambda_: float = 25.0
    mu: float = 25.0
    nu: float = 1.0
    gamma: float = 1.0
    epsilon: float = 1.0e-4

    def __post_init__(self) -> None:
        for name in ("lambda_", "mu", "nu"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0.0:
                raise ValueError(f"{name} must be finite and >= 0, got {value}")
        if not np.isfinite(self.gamma) or self.gamma <= 0.0:
            raise ValueError(f"gamma must be finite and positive, got {self.gamma}")
        if not np.isfinite(self.epsilon) or self.epsilon <= 0.0:
            raise ValueError(f"epsilon must be finite and positive, got {self.epsilon}")


@dataclass(frozen=True)
class LossBreakdown:
    """Unweighted term values plus the weighted total."""

    inv: float
    var_a: float
    var_b: float
    cov_a: float
    cov_b: float
    total: float


@dataclass(frozen=True)
class LossGradients:
    grad_z: np.ndarray
    grad_z_prime: np.ndarray


# ---------------------------------------------------------------------------
# individual terms
# ---------------------------------------------------------------------------


def variance_term(z, gamma: float, epsilon: float) -> float:
    """Mean over columns of max(0, gamma - sqrt(Var_col + epsilon))."""
    z = as_batch(z, min_rows=2)
    stds = regularized_column_stds(z, epsilon)
    return float(np.mean(np.maximum(0.0, gamma - stds)))


def variance_term_grad(z, gamma: float, epsilon: float) -> np.ndarray:
    """Gradient of variance_term with respect to every entry of z.

    For a column j with regularized std S_j strictly below gamma the hinge
    is active and

        d/dz[i,j] = -(z[i,j] - mean_j) / (d * (n-1) * S_j).

    Centering makes the mean-coupling contribution vanish (the centered
    deviations sum to zero), so the expression above is already the total
    derivative. Inactive columns get zero; at the kink S_j == gamma the
    zero (inactive) subgradient is used.
    """
    z = as_batch(z, min_rows=2)
    n, d = z.shape
    stds = regularized_column_stds(z, epsilon)
    active = stds < gamma
    centered = z - z.mean(axis=0)
    grad = np.zeros_like(z)
    if np.any(active):
        cols = np.flatnonzero(active)
        grad[:, cols] = -centered[:, cols] / (d * (n - 1) * stds[cols])
    return grad


def variance_hinge_on_raw_variance(z, gamma: float, epsilon: float):
    """Diagnostic foil: hinge applied to the epsilon-shifted variance itself.

    Returns (value, gradient) of mean_j max(0, gamma - (Var_j + epsilon)).
    Unlike the std form, its gradient magnitude shrinks proportionally to
    the column scale as columns contract, which is exactly why the sqrt
    matters for preventing collapse. Kept for tests and demonstrations.
    """
    z = as_batch(z, min_rows=2)
    n, d = z.shape
    centered = z - z.mean(axis=0)
    variances = np.sum(centered * centered, axis=0) / (n - 1)
    shifted = variances + epsilon
    value = float(np.mean(np.maximum(0.0, gamma - shifted)))
    active = shifted < gamma
    grad = np.zeros_like(z)
    if np.any(active):
        cols = np.flatnonzero(active)
        grad[:, cols] = -2.0 * centered[:, cols] / (d * (n - 1))
    return value, grad


def covariance_term(z) -> float:
    """Sum of squared off-diagonal covariance entries divided by d."""
    z = as_batch(z, min_rows=2)
    c = covariance_matrix(z)
    off = c - np.diag(np.diag(c))
    return float(np.sum(off * off) / z.shape[1])


def covariance_term_grad(z) -> np.ndarray:
    """Gradient of covariance_term with respect to every entry of z.

    With C the unbiased covariance and C_off its off-diagonal part, the
    derivative is (4 / (d * (n-1))) * centered(z) @ C_off. The result is
    already column-centered, so the centering projection adds nothing.
    """
    z = as_batch(z, min_rows=2)
    n, d = z.shape
    centered = z - z.mean(axis=0)
    c = covariance_matrix(z)
    c_off = c - np.diag(np.diag(c))
    return (4.0 / (d * (n - 1))) * centered @ c_off


def invariance_term(z_a, z_b) -> float:
    """Mean over rows of the squared Euclidean distance between paired rows."""
    z_a, z_b = _paired_batches(z_a, z_b)
    diff = z_a - z_b
    return float(np.sum(diff * diff) / z_a.shape[0])


def invariance_term_grads(z_a, z_b):
    """Gradients of invariance_term: ((2/n)(z_a - z_b), -(2/n)(z_a - z_b))."""
    z_a, z_b = _paired_batches(z_a, z_b)
    g = (2.0 / z_a.shape[0]) * (z_a - z_b)
    return g, -g


# ---------------------------------------------------------------------------
# combined objective
# ---------------------------------------------------------------------------


def vicreg_loss(z_a, z_b, coeffs: LossCoefficients) -> LossBreakdown:
    """Evaluate all terms on a pair of embedding batches.

    The breakdown carries the unweighted term values; ``total`` applies
    the coefficient weights. Batches must share a common (n, d) shape
    with n >= 2.
    """
    z_a, z_b = _paired_batches(z_a, z_b, min_rows=2)
    inv = invariance_term(z_a, z_b)
    var_a = variance_term(z_a, coeffs.gamma, coeffs.epsilon)
    var_b = variance_term(z_b, coeffs.gamma, coeffs.epsilon)
    cov_a = covariance_term(z_a)
    cov_b = covariance_term(z_b)
    total = (
        coeffs.lambda_ * inv
        + coeffs.mu * (var_a + var_b)
        + coeffs.nu * (cov_a + cov_b)
    )
    return LossBreakdown(inv, var_a, var_b, cov_a, cov_b, float(total))


def vicreg_loss_backward(z_a, z_b, coeffs: LossCoefficients) -> LossGradients:
    """Closed-form gradients of the weighted total for both batches."""
    z_a, z_b = _paired_batches(z_a, z_b, min_rows=2)
    inv_a, inv_b = invariance_term_grads(z_a, z_b)
    grad_a = (
        coeffs.lambda_ * inv_a
        + coeffs.mu * variance_term_grad(z_a, coeffs.gamma, coeffs.epsilon)
        + coeffs.nu * covariance_term_grad(z_a)
    )
    grad_b = (
        coeffs.lambda_ * inv_b
        + coeffs.mu * variance_term_grad(z_b, coeffs.gamma, coeffs.epsilon)
        + coeffs.nu * covariance_term_grad(z_b)
    )
    return LossGradients(grad_a, grad_b)


def vicreg_loss_elementwise(z_a, z_b, coeffs: LossCoefficients) -> float:
    """Total with the invariance term averaged per element instead of per row.

    This matches the convention of computing the invariance part as a plain
    elementwise mean-squared error over the whole (n, d) batch, which is the
    row-mean convention divided by d. Variance and covariance parts are
    identical, so the value equals vicreg_loss with lambda_ scaled by 1/d.
    Kept as an independent cross-check of that correspondence.
    """
    z_a, z_b = _paired_batches(z_a, z_b, min_rows=2)
    diff = z_a - z_b
    sim = float(np.mean(diff * diff))
    std_part = variance_term(z_a, coeffs.gamma, coeffs.epsilon) + variance_term(
        z_b, coeffs.gamma, coeffs.epsilon
    )
    cov_part = covariance_term(z_a) + covariance_term(z_b)
    return float(coeffs.lambda_ * sim + coeffs.mu * std_part + coeffs.nu * cov_part)


def avg_correlation_coefficient(y_a, y_b, epsilon: float) -> float:
    """Average squared off-diagonal correlation across two batches.

    Both batches are column-standardized (with an epsilon-regularized
    divisor), their covariance matrices computed, and the squared
    off-diagonal entries summed and divided by 2*d*(d-1). The result lives
    in [0, 1] up to the epsilon perturbation: near 0 for decorrelated
    dimensions, near 1 when every pair of dimensions is perfectly
    correlated.
    """
    y_a, y_b = _paired_batches(y_a, y_b, min_rows=2)
    d = y_a.shape[1]
    if d < 2:
        raise UndefinedStatisticError(
            "correlation statistic needs at least two columns"
        )
    total = 0.0
    for y in (y_a, y_b):
        c = covariance_matrix(standardize_columns(y, epsilon))
        off = c - np.diag(np.diag(c))
        total += float(np.sum(off * off))
    return total / (2.0 * d * (d - 1))


def _paired_batches(z_a, z_b, min_rows: int = 1):
    z_a = as_batch(z_a, min_rows=min_rows)
    z_b = as_batch(z_b, min_rows=min_rows)
    if z_a.shape != z_b.shape:
        raise ShapeMismatchError(
            f"paired batches must share a shape, got {z_a.shape} and {z_b.shape}"
        )
    return z_a, z_b
