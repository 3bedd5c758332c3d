"""Loss terms: hand-worked fixtures, closed-form gradients, oracles.

Exactness tests use dyadic-rational inputs so sums and means incur no
rounding; those assertions are bitwise. Values that involve square roots
or non-dyadic divisions get explicit tolerances instead.
"""

import math

import numpy as np
import pytest

from vicreg.gradcheck import central_difference, max_relative_error
from vicreg.losses import (
    LossCoefficients,
    UndefinedStatisticError,
    avg_correlation_coefficient,
    covariance_term,
    covariance_term_grad,
    invariance_term,
    invariance_term_grads,
    variance_hinge_on_raw_variance,
    variance_term,
    variance_term_grad,
    vicreg_loss,
    vicreg_loss_backward,
    vicreg_loss_elementwise,
)
from vicreg.linalg import DegenerateBatchError, ShapeMismatchError

DEFAULTS = LossCoefficients()


def dyadic(rng, n, d, scale=2.0):
    """Random matrix of multiples of 1/16; sums of these are exact."""
    return rng.integers(-32, 33, size=(n, d)).astype(np.float64) / 16.0 * (scale / 2.0)


# ---------------------------------------------------------------------------
# variance term
# ---------------------------------------------------------------------------


def test_variance_term_collapsed_batch():
    z = np.ones((4, 3)) * 2.5
    assert variance_term(z, 1.0, 1e-4) == pytest.approx(0.99, abs=1e-12)


def test_variance_term_spread_batch_is_zero():
    z = np.array([[0.0, 0.0], [4.0, 4.0], [-4.0, -4.0], [8.0, 8.0]])
    assert variance_term(z, 1.0, 1e-4) == 0.0


def test_variance_term_mixed_columns():
    # column [0, 2]: S = sqrt(2.0001) >= 1 so it contributes 0; column
    # [0, 0]: S = 0.01 so it contributes 0.99; the mean is 0.495
    z = [[0.0, 0.0], [2.0, 0.0]]
    assert variance_term(z, 1.0, 1e-4) == pytest.approx(0.495, abs=1e-9)


def test_variance_term_bounded_by_gamma(rng):
    for _ in range(10):
        z = rng.standard_normal((6, 4)) * rng.uniform(0.01, 3.0)
        v = variance_term(z, 1.0, 1e-4)
        assert 0.0 <= v <= 1.0


def test_hinge_inactive_above_gamma_is_exact_zero(rng):
    # every column std >= gamma + 1e-3: value and gradient exactly zero
    z = rng.standard_normal((8, 5)) * 3.0
    stds = np.std(z, axis=0, ddof=1)
    assert np.all(stds >= 1.0 + 1e-3)
    assert variance_term(z, 1.0, 1e-4) == 0.0
    assert np.array_equal(variance_term_grad(z, 1.0, 1e-4), np.zeros((8, 5)))


def test_variance_term_grad_matches_finite_differences(rng):
    z = rng.standard_normal((6, 4)) * 0.5  # all columns hinge-active
    ana = variance_term_grad(z, 1.0, 1e-4)
    num = central_difference(lambda m: variance_term(m, 1.0, 1e-4), z.copy())
    assert max_relative_error(ana, num) < 1e-7


def test_variance_term_grad_zero_for_inactive_columns(rng):
    # one tight column, one wide column: only the tight one gets gradient
    z = np.column_stack([rng.standard_normal(8) * 0.1,
                         rng.standard_normal(8) * 5.0])
    grad = variance_term_grad(z, 1.0, 1e-4)
    assert np.any(grad[:, 0] != 0.0)
    assert np.array_equal(grad[:, 1], np.zeros(8))


def test_variance_hinge_on_raw_variance_value_and_grad(rng):
    z = rng.standard_normal((10, 3)) * 0.3
    value, grad = variance_hinge_on_raw_variance(z, 1.0, 1e-4)

    def f(m):
        centered = m - m.mean(axis=0)
        variances = np.sum(centered * centered, axis=0) / (m.shape[0] - 1)
        return float(np.mean(np.maximum(0.0, 1.0 - (variances + 1e-4))))

    assert value == pytest.approx(f(z), abs=1e-12)
    num = central_difference(f, z.copy())
    assert max_relative_error(grad, num) < 1e-7


# ---------------------------------------------------------------------------
# covariance term
# ---------------------------------------------------------------------------


def test_covariance_term_single_column_is_zero(rng):
    assert covariance_term(rng.standard_normal((9, 1))) == 0.0


def test_covariance_term_antipodal_rows():
    assert covariance_term([[1.0, 1.0], [-1.0, -1.0]]) == pytest.approx(4.0, abs=1e-12)


def test_covariance_term_decorrelated_design_is_exact_zero():
    z = [[1.0, 1.0], [-1.0, 1.0], [1.0, -1.0], [-1.0, -1.0]]
    assert covariance_term(z) == 0.0


def test_covariance_term_grad_matches_finite_differences(rng):
    z = rng.standard_normal((7, 5))
    ana = covariance_term_grad(z)
    num = central_difference(lambda m: covariance_term(m), z.copy())
    assert max_relative_error(ana, num) < 1e-7


# ---------------------------------------------------------------------------
# invariance term
# ---------------------------------------------------------------------------


def test_invariance_identical_batches():
    z = [[1.0, 2.0], [3.0, 4.0]]
    assert invariance_term(z, z) == 0.0


def test_invariance_single_row():
    assert invariance_term([[1.0, 0.0]], [[0.0, 0.0]]) == 1.0


def test_invariance_two_row_fixture():
    # squared distances 4 and 9, mean 6.5
    got = invariance_term([[1.0, 2.0], [3.0, 4.0]], [[1.0, 0.0], [0.0, 4.0]])
    assert got == 6.5


def test_invariance_grads_closed_form():
    z_a = np.array([[1.0, 2.0], [3.0, 4.0], [0.5, -0.5], [0.0, 1.0]])
    z_b = np.array([[0.0, 2.0], [1.0, 4.0], [0.5, 0.5], [-1.0, 1.0]])
    g_a, g_b = invariance_term_grads(z_a, z_b)
    assert np.array_equal(g_a, 0.5 * (z_a - z_b))
    assert np.array_equal(g_b, -g_a)


def test_invariance_rejects_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        invariance_term([[1.0, 2.0]], [[1.0, 2.0], [3.0, 4.0]])


# ---------------------------------------------------------------------------
# combined objective
# ---------------------------------------------------------------------------


def test_total_is_weighted_combination(rng):
    # the breakdown's total must recompose from its own term fields; the
    # documented example: s=0.1, v=v'=0.2, c=c'=0.05 under (25,25,1)
    # weighs to 12.6
    assert 25.0 * 0.1 + 25.0 * (0.2 + 0.2) + 1.0 * (0.05 + 0.05) == pytest.approx(
        12.6, abs=1e-12
    )
    for _ in range(5):
        z_a = rng.standard_normal((8, 4))
        z_b = rng.standard_normal((8, 4))
        bd = vicreg_loss(z_a, z_b, DEFAULTS)
        recomposed = (
            DEFAULTS.lambda_ * bd.inv
            + DEFAULTS.mu * (bd.var_a + bd.var_b)
            + DEFAULTS.nu * (bd.cov_a + bd.cov_b)
        )
        assert bd.total == pytest.approx(recomposed, rel=1e-12)


def test_total_zero_when_every_term_vanishes():
    # identical batches, decorrelated columns, stds above gamma
    z = np.array([[2.0, 2.0], [-2.0, 2.0], [2.0, -2.0], [-2.0, -2.0]])
    bd = vicreg_loss(z, z, DEFAULTS)
    assert bd.total == 0.0
    assert (bd.inv, bd.var_a, bd.var_b, bd.cov_a, bd.cov_b) == (0, 0, 0, 0, 0)


def test_breakdown_terms_nonnegative(rng):
    for _ in range(10):
        z_a = rng.standard_normal((6, 3)) * rng.uniform(0.05, 4.0)
        z_b = rng.standard_normal((6, 3)) * rng.uniform(0.05, 4.0)
        bd = vicreg_loss(z_a, z_b, DEFAULTS)
        assert min(bd.inv, bd.var_a, bd.var_b, bd.cov_a, bd.cov_b) >= 0.0


def test_backward_identical_batches_invariance_free(rng):
    z = rng.standard_normal((5, 3))
    coeffs = LossCoefficients(lambda_=25.0, mu=0.0, nu=0.0)
    grads = vicreg_loss_backward(z, z.copy(), coeffs)
    assert np.array_equal(grads.grad_z, np.zeros((5, 3)))
    assert np.array_equal(grads.grad_z_prime, np.zeros((5, 3)))


def test_backward_invariance_only_closed_form(rng):
    z_a = dyadic(rng, 4, 3)
    z_b = dyadic(rng, 4, 3)
    coeffs = LossCoefficients(lambda_=25.0, mu=0.0, nu=0.0)
    grads = vicreg_loss_backward(z_a, z_b, coeffs)
    # 2 * 25 / 4 = 12.5 is dyadic, so the closed form is bitwise exact
    assert np.array_equal(grads.grad_z, 12.5 * (z_a - z_b))
    assert np.array_equal(grads.grad_z_prime, -12.5 * (z_a - z_b))


def test_backward_matches_finite_differences_seeded():
    rng = np.random.default_rng(1234)
    z_a = rng.standard_normal((8, 4))
    z_b = rng.standard_normal((8, 4))
    grads = vicreg_loss_backward(z_a, z_b, DEFAULTS)
    num_a = central_difference(lambda m: vicreg_loss(m, z_b, DEFAULTS).total,
                               z_a.copy())
    num_b = central_difference(lambda m: vicreg_loss(z_a, m, DEFAULTS).total,
                               z_b.copy())
    assert max_relative_error(grads.grad_z, num_a) < 1e-6
    assert max_relative_error(grads.grad_z_prime, num_b) < 1e-6


def test_loss_permutation_equivariance(rng):
    # dyadic entries make every sum exact, so a joint row permutation
    # leaves the values bitwise unchanged and permutes gradient rows
    coeffs = LossCoefficients(lambda_=25.0, mu=25.0, nu=1.0, gamma=1.0,
                              epsilon=0.25)
    z_a = dyadic(rng, 8, 3)
    z_b = dyadic(rng, 8, 3)
    perm = rng.permutation(8)
    bd = vicreg_loss(z_a, z_b, coeffs)
    bd_p = vicreg_loss(z_a[perm], z_b[perm], coeffs)
    assert (bd.inv, bd.var_a, bd.var_b, bd.cov_a, bd.cov_b, bd.total) == (
        bd_p.inv, bd_p.var_a, bd_p.var_b, bd_p.cov_a, bd_p.cov_b, bd_p.total
    )
    g = vicreg_loss_backward(z_a, z_b, coeffs)
    g_p = vicreg_loss_backward(z_a[perm], z_b[perm], coeffs)
    assert np.array_equal(g.grad_z[perm], g_p.grad_z)
    assert np.array_equal(g.grad_z_prime[perm], g_p.grad_z_prime)


def test_loss_rejects_single_row_pair():
    with pytest.raises(DegenerateBatchError):
        vicreg_loss([[1.0, 2.0]], [[0.0, 0.0]], DEFAULTS)


def test_coefficients_validation():
    with pytest.raises(ValueError):
        LossCoefficients(lambda_=-1.0)
    with pytest.raises(ValueError):
        LossCoefficients(gamma=0.0)
    with pytest.raises(ValueError):
        LossCoefficients(epsilon=0.0)
    with pytest.raises(ValueError):
        LossCoefficients(mu=float("nan"))


# ---------------------------------------------------------------------------
# elementwise-invariance convention
# ---------------------------------------------------------------------------


def test_elementwise_invariance_fixture():
    coeffs = LossCoefficients(lambda_=1.0, mu=0.0, nu=0.0)
    got = vicreg_loss_elementwise([[1.0, 2.0], [3.0, 4.0]],
                                  [[1.0, 0.0], [0.0, 4.0]], coeffs)
    assert got == 3.25


def test_elementwise_equals_total_with_lambda_over_d(rng):
    for d in (2, 5, 8):
        z_a = rng.standard_normal((8, d))
        z_b = rng.standard_normal((8, d))
        a = vicreg_loss_elementwise(z_a, z_b, DEFAULTS)
        rescaled = LossCoefficients(lambda_=DEFAULTS.lambda_ / d, mu=DEFAULTS.mu,
                                    nu=DEFAULTS.nu)
        b = vicreg_loss(z_a, z_b, rescaled).total
        assert a == pytest.approx(b, rel=1e-12)


def test_elementwise_mu_only_matches_total(rng):
    coeffs = LossCoefficients(lambda_=0.0, mu=25.0, nu=0.0)
    z_a = rng.standard_normal((6, 3)) * 0.4
    z_b = rng.standard_normal((6, 3)) * 0.4
    assert vicreg_loss_elementwise(z_a, z_b, coeffs) == pytest.approx(
        vicreg_loss(z_a, z_b, coeffs).total, rel=1e-15
    )


def test_elementwise_nu_only_matches_total(rng):
    coeffs = LossCoefficients(lambda_=0.0, mu=0.0, nu=1.0)
    z_a = rng.standard_normal((6, 3))
    z_b = rng.standard_normal((6, 3))
    assert vicreg_loss_elementwise(z_a, z_b, coeffs) == pytest.approx(
        vicreg_loss(z_a, z_b, coeffs).total, rel=1e-15
    )


# ---------------------------------------------------------------------------
# correlation diagnostic
# ---------------------------------------------------------------------------


def _naive_avg_correlation(y_a, y_b, epsilon):
    """Independent per-pair loop oracle."""
    total = 0.0
    d = y_a.shape[1]
    for y in (np.asarray(y_a, float), np.asarray(y_b, float)):
        cols = []
        for j in range(d):
            col = y[:, j]
            centered = col - col.mean()
            var = float(centered @ centered) / (len(col) - 1)
            cols.append(centered / math.sqrt(var + epsilon))
        for i in range(d):
            for j in range(d):
                if i == j:
                    continue
                c_ij = float(cols[i] @ cols[j]) / (len(cols[i]) - 1)
                total += c_ij * c_ij
    return total / (2.0 * d * (d - 1))


def test_avg_correlation_perfectly_correlated_columns(rng):
    col = rng.standard_normal(64)
    y = np.column_stack([col, col])
    got = avg_correlation_coefficient(y, y, 1e-4)
    assert 0.99 < got <= 1.0 + 1e-6


def test_avg_correlation_decorrelated_design_is_zero():
    # fused multiply-adds inside the matmul kernel can leave a residue
    # around 1e-34 on the standardized (irrational) columns, so this is
    # zero up to that rather than bitwise
    y = np.array([[1.0, 1.0], [-1.0, 1.0], [1.0, -1.0], [-1.0, -1.0]])
    assert avg_correlation_coefficient(y, y, 1e-4) == pytest.approx(0.0, abs=1e-30)


def test_avg_correlation_large_random_batch_is_small():
    rng = np.random.default_rng(77)
    y_a = rng.standard_normal((4096, 8))
    y_b = rng.standard_normal((4096, 8))
    assert avg_correlation_coefficient(y_a, y_b, 1e-4) < 0.05


def test_avg_correlation_matches_naive_oracle(rng):
    y_a = rng.standard_normal((24, 5))
    y_b = rng.standard_normal((24, 5)) * 2.0 + 1.0
    got = avg_correlation_coefficient(y_a, y_b, 1e-4)
    want = _naive_avg_correlation(y_a, y_b, 1e-4)
    assert got == pytest.approx(want, rel=1e-12)


def test_avg_correlation_rejects_single_column(rng):
    y = rng.standard_normal((8, 1))
    with pytest.raises(UndefinedStatisticError):
        avg_correlation_coefficient(y, y, 1e-4)
