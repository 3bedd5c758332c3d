"""Batch-matrix primitives: column statistics, covariance, normalization.

Every public function accepts anything convertible to a 2-d float64 array
of shape (n_rows, n_cols), validates finiteness, and computes in double
precision. Variances use the unbiased 1/(n-1) estimator throughout the
package; statistics that need it reject batches with fewer than two rows.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "DegenerateBatchError",
    "ShapeMismatchError",
    "ZeroNormError",
    "as_batch",
    "column_means",
    "column_variances",
    "covariance_matrix",
    "regularized_std",
    "regularized_column_stds",
    "standardize_columns",
    "l2_normalize_rows",
]


class DegenerateBatchError(ValueError):
    """Batch has too few rows for the requested statistic."""


class ShapeMismatchError(ValueError):
    """Operands do not have compatible shapes."""


class ZeroNormError(ValueError):
    """A row with zero Euclidean norm cannot be direction-normalized."""


def as_batch(z, min_rows: int = 1) -> np.ndarray:
    """Validate ``z`` as a finite (n, d) float64 matrix and return it.

    Raises ShapeMismatchError for non-2d input, DegenerateBatchError when
    fewer than ``min_rows`` rows are present, and ValueError on NaN/Inf.
    """
    out = np.asarray(z, dtype=np.float64)
    if out.ndim != 2:
        raise ShapeMismatchError(f"expected a 2-d batch, got shape {out.shape}")
    if out.shape[1] < 1:
        raise ShapeMismatchError("batch must have at least one column")
    if out.shape[0] < min_rows:
        raise DegenerateBatchError(
            f"batch has {out.shape[0]} rows, needs at least {min_rows}"
        )
    if not np.all(np.isfinite(out)):
        raise ValueError("batch contains NaN or Inf entries")
    return out


def column_means(z) -> np.ndarray:
    z = as_batch(z, min_rows=1)
    return z.mean(axis=0)


def column_variances(z) -> np.ndarray:
    """Unbiased per-column variance, shape (d,)."""
    z = as_batch(z, min_rows=2)
    centered = z - z.mean(axis=0)
    return np.sum(centered * centered, axis=0) / (z.shape[0] - 1)


def covariance_matrix(z) -> np.ndarray:
    """Unbiased covariance of the rows of ``z``, shape (d, d).

    The result is explicitly symmetrized as (M + M.T)/2 so that
    C[i, j] == C[j, i] holds bitwise, not just up to rounding.
    """
    z = as_batch(z, min_rows=2)
    centered = z - z.mean(axis=0)
    m = centered.T @ centered / (z.shape[0] - 1)
    return (m + m.T) / 2.0


def regularized_std(column, epsilon: float) -> float:
    """sqrt(unbiased variance + epsilon) of a single column vector."""
    _check_epsilon(epsilon)
    col = np.asarray(column, dtype=np.float64).reshape(-1)
    if col.size < 2:
        raise DegenerateBatchError("regularized_std needs at least two values")
    if not np.all(np.isfinite(col)):
        raise ValueError("column contains NaN or Inf entries")
    centered = col - col.mean()
    var = float(centered @ centered) / (col.size - 1)
    return float(np.sqrt(var + epsilon))


def regularized_column_stds(z, epsilon: float) -> np.ndarray:
    """Vectorized regularized_std over all columns, shape (d,)."""
    _check_epsilon(epsilon)
    return np.sqrt(column_variances(z) + epsilon)


def standardize_columns(z, epsilon: float) -> np.ndarray:
    """Center each column and divide by its regularized std.

    A constant column maps to zeros (the epsilon keeps the divisor
    strictly positive), so no special casing is needed downstream.
    """
    z = as_batch(z, min_rows=2)
    stds = regularized_column_stds(z, epsilon)
    return (z - z.mean(axis=0)) / stds


def l2_normalize_rows(z) -> np.ndarray:
    """Scale every row to unit Euclidean norm.

    Raises ZeroNormError if any row has exactly zero norm; nonzero rows,
    however small, are normalized as usual.
    """
    z = as_batch(z, min_rows=1)
    norms = np.sqrt(np.sum(z * z, axis=1))
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise ZeroNormError(f"row {bad} has zero norm")
    return z / norms[:, None]


def _check_epsilon(epsilon: float) -> None:
    if not np.isfinite(epsilon) or epsilon <= 0.0:
        raise ValueError(f"epsilon must be finite and positive, got {epsilon}")
