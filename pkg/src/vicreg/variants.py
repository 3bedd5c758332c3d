"""Training-mechanism variations around the core objective.

Covers the knobs used to morph the symmetric two-branch setup into its
asymmetric relatives and back: a predictor head with a symmetrized
invariance term, exponential-moving-average target weights, an explicit
stop-gradient marker, embedding normalization modes, and a
cross-correlation (redundancy-reduction) comparison loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .linalg import (
    ShapeMismatchError,
    as_batch,
    l2_normalize_rows,
    standardize_columns,
)
from .losses import LossCoefficients
from .network import MlpParams

__all__ = [
    "DISTANCE_SQUARED_ERROR",
    "DISTANCE_NORMALIZED_SQUARED_ERROR",
    "DISTANCE_NEGATIVE_COSINE",
    "DISTANCE_MODES",
    "NORM_NONE",
    "NORM_STANDARDIZE",
    "NORM_L2",
    "NORMALIZATION_MODES",
    "BRANCH_SHARED",
    "BRANCH_DISTINCT",
    "BRANCH_DISTINCT_ARCH",
    "BRANCH_MODES",
    "MechanismConfig",
    "symmetrized_invariance",
    "symmetrized_invariance_grads",
    "ema_update",
    "ema_tau",
    "stop_gradient_mark",
    "apply_normalization_mode",
    "standardize_columns_backward",
    "l2_normalize_rows_backward",
    "barlow_twins_loss",
]

DISTANCE_SQUARED_ERROR = "squared_error"
DISTANCE_NORMALIZED_SQUARED_ERROR = "normalized_squared_error"
DISTANCE_NEGATIVE_COSINE = "negative_cosine"
DISTANCE_MODES = (
    DISTANCE_SQUARED_ERROR,
    DISTANCE_NORMALIZED_SQUARED_ERROR,
    DISTANCE_NEGATIVE_COSINE,
)

NORM_NONE = "none"
NORM_STANDARDIZE = "standardize_embeddings"
NORM_L2 = "l2_normalize_embeddings"
NORMALIZATION_MODES = (NORM_NONE, NORM_STANDARDIZE, NORM_L2)

BRANCH_SHARED = "shared_weights"
BRANCH_DISTINCT = "distinct_weights"
BRANCH_DISTINCT_ARCH = "distinct_arch"
BRANCH_MODES = (BRANCH_SHARED, BRANCH_DISTINCT, BRANCH_DISTINCT_ARCH)


@dataclass(frozen=True)
class MechanismConfig:
    """Which structural mechanisms a training run uses.

    use_variance_reg / use_covariance_reg gate the regularization terms
    (their strengths still come from the loss coefficients). Stop-gradient
    and moving-average targets are mutually exclusive: a moving-average
    target already receives no gradients, so combining the flags would be
    ill-defined. A moving-average target also implies the two branches
    share one architecture, hence branch_mode must stay shared_weights.
    standardize_representations applies column standardization to encoder
    outputs before the expander (a representation-level counterpart of
    the embedding normalization modes).
    """

    use_variance_reg: bool = True
    use_covariance_reg: bool = True
    use_predictor: bool = False
    use_stop_gradient: bool = False
    use_ema: bool = False
    ema_tau_initial: float = 0.99
    normalization_mode: str = NORM_NONE
    branch_mode: str = BRANCH_SHARED
    standardize_representations: bool = False

    def __post_init__(self) -> None:
        if self.use_stop_gradient and self.use_ema:
            raise ValueError(
                "use_stop_gradient and use_ema are mutually exclusive"
            )
        if self.use_ema and self.branch_mode != BRANCH_SHARED:
            raise ValueError(
                "a moving-average target requires branch_mode=shared_weights"
            )
        if not (0.0 <= self.ema_tau_initial <= 1.0):
            raise ValueError(
                f"ema_tau_initial must lie in [0, 1], got {self.ema_tau_initial}"
            )
        if self.normalization_mode not in NORMALIZATION_MODES:
            raise ValueError(
                f"unknown normalization_mode {self.normalization_mode!r}"
            )
        if self.branch_mode not in BRANCH_MODES:
            raise ValueError(f"unknown branch_mode {self.branch_mode!r}")


# ---------------------------------------------------------------------------
# symmetrized predictor loss
# ---------------------------------------------------------------------------


def symmetrized_invariance(z_a, z_b, p_a, p_b, distance_mode: str) -> float:
    """Average of D(z_a[i], p_b[i]) and D(z_b[i], p_a[i]) over the batch.

    p_a and p_b are predictor outputs computed from z_a and z_b. Each of
    the two cross pairings contributes half. Distances:

      squared_error             ||u - v||^2
      normalized_squared_error  ||u/|u| - v/|v|||^2
      negative_cosine           -cos(u, v)

    With the squared-error distance and p_a == z_a, p_b == z_b (a perfect
    identity predictor) this reduces exactly to the plain invariance term.
    """
    z_a, z_b, p_a, p_b = _four_batches(z_a, z_b, p_a, p_b)
    n = z_a.shape[0]
    if distance_mode == DISTANCE_SQUARED_ERROR:
        d1 = z_a - p_b
        d2 = z_b - p_a
        return float((np.sum(d1 * d1) + np.sum(d2 * d2)) / (2.0 * n))
    if distance_mode == DISTANCE_NORMALIZED_SQUARED_ERROR:
        za_n, zb_n = l2_normalize_rows(z_a), l2_normalize_rows(z_b)
        pa_n, pb_n = l2_normalize_rows(p_a), l2_normalize_rows(p_b)
        d1 = za_n - pb_n
        d2 = zb_n - pa_n
        return float((np.sum(d1 * d1) + np.sum(d2 * d2)) / (2.0 * n))
    if distance_mode == DISTANCE_NEGATIVE_COSINE:
        za_n, zb_n = l2_normalize_rows(z_a), l2_normalize_rows(z_b)
        pa_n, pb_n = l2_normalize_rows(p_a), l2_normalize_rows(p_b)
        c1 = np.sum(za_n * pb_n, axis=1)
        c2 = np.sum(zb_n * pa_n, axis=1)
        return float(-(np.sum(c1) + np.sum(c2)) / (2.0 * n))
    raise ValueError(f"unknown distance_mode {distance_mode!r}")


def symmetrized_invariance_grads(z_a, z_b, p_a, p_b):
    """Gradients of the squared-error symmetrized invariance.

    Returns (g_z_a, g_z_b, g_p_a, g_p_b). Only the squared-error distance
    is differentiated here because it is the only one the trainer uses.
    """
    z_a, z_b, p_a, p_b = _four_batches(z_a, z_b, p_a, p_b)
    n = z_a.shape[0]
    d1 = (z_a - p_b) / n
    d2 = (z_b - p_a) / n
    return d1, d2, -d2, -d1


# ---------------------------------------------------------------------------
# target-weight averaging and gradient isolation
# ---------------------------------------------------------------------------


def ema_update(target: MlpParams, online: MlpParams, tau: float) -> MlpParams:
    """Blend every array as tau * target + (1 - tau) * online.

    Applies to trainable parameters and running statistics alike, so the
    target's evaluation-mode behavior tracks the online network. tau=1
    is a fixed point; tau=0 copies the online parameters outright.
    """
    if not (0.0 <= tau <= 1.0):
        raise ValueError(f"tau must lie in [0, 1], got {tau}")

    def blend(ts, os):
        out = []
        for t, o in zip(ts, os):
            if t is None and o is None:
                out.append(None)
            elif t is None or o is None:
                raise ShapeMismatchError("parameter structures do not match")
            else:
                out.append(tau * t + (1.0 - tau) * o)
        return out

    return MlpParams(
        blend(target.weights, online.weights),
        blend(target.biases, online.biases),
        blend(target.scales, online.scales),
        blend(target.shifts, online.shifts),
        blend(target.running_means, online.running_means),
        blend(target.running_vars, online.running_vars),
    )


def ema_tau(step: int, total_steps: int, tau_initial: float) -> float:
    """Cosine ramp of the averaging factor from tau_initial at step 0 to
    1.0 at the final step."""
    if total_steps < 1:
        raise ValueError("total_steps must be positive")
    step = min(max(int(step), 0), int(total_steps))
    frac = step / total_steps
    return 1.0 - (1.0 - tau_initial) * (math.cos(math.pi * frac) + 1.0) / 2.0


def stop_gradient_mark(z):
    """Identity on values; the returned batch must be treated as a
    constant by everything downstream. The trainer honors the mark by
    skipping the marked branch's backward pass entirely."""
    return z


# ---------------------------------------------------------------------------
# embedding normalization modes
# ---------------------------------------------------------------------------


def apply_normalization_mode(z, mode: str, coeffs: LossCoefficients):
    """Transform an embedding batch (and coefficients) for a loss variant.

    none leaves both untouched. standardize_embeddings column-standardizes
    the batch. l2_normalize_embeddings scales rows to the unit sphere and
    lowers the hinge target to 1/sqrt(d), the per-column std of uniformly
    spread unit vectors, so the variance hinge stays satisfiable.
    """
    if mode == NORM_NONE:
        return as_batch(z), coeffs
    if mode == NORM_STANDARDIZE:
        return standardize_columns(z, coeffs.epsilon), coeffs
    if mode == NORM_L2:
        z = as_batch(z)
        adjusted = replace(coeffs, gamma=1.0 / math.sqrt(z.shape[1]))
        return l2_normalize_rows(z), adjusted
    raise ValueError(f"unknown normalization mode {mode!r}")


def standardize_columns_backward(z_raw, grad_out, epsilon: float) -> np.ndarray:
    """Gradient of standardize_columns at z_raw applied to grad_out.

    Same chain as the network's batch-standardization backward but with
    unit scale: subtract the mean coupling and the variance coupling,
    then divide by the regularized std.
    """
    z_raw = as_batch(z_raw, min_rows=2)
    g = np.asarray(grad_out, dtype=np.float64)
    n = z_raw.shape[0]
    centered = z_raw - z_raw.mean(axis=0)
    var = np.sum(centered * centered, axis=0) / (n - 1)
    sigma = np.sqrt(var + epsilon)
    normalized = centered / sigma
    coupling = np.sum(g * normalized, axis=0) / (n - 1)
    return (g - g.mean(axis=0) - normalized * coupling) / sigma


def l2_normalize_rows_backward(z_raw, grad_out) -> np.ndarray:
    """Gradient of l2_normalize_rows at z_raw applied to grad_out.

    Per row: (g - (g . u) u) / ||x|| with u the normalized row.
    """
    z_raw = as_batch(z_raw)
    g = np.asarray(grad_out, dtype=np.float64)
    norms = np.sqrt(np.sum(z_raw * z_raw, axis=1, keepdims=True))
    u = z_raw / norms
    dots = np.sum(g * u, axis=1, keepdims=True)
    return (g - dots * u) / norms


# ---------------------------------------------------------------------------
# cross-correlation comparison loss
# ---------------------------------------------------------------------------


def barlow_twins_loss(z_a, z_b, offdiag_weight: float,
                      epsilon: float = 1.0e-4) -> float:
    """Redundancy-reduction objective on the cross-correlation matrix.

    Both batches are column-standardized, their (d, d) cross-correlation
    M = standardized(z_a).T @ standardized(z_b) / (n - 1) is formed, and
    the loss is sum_i (1 - M[i,i])^2 + offdiag_weight * sum_{i!=j} M[i,j]^2.
    Identical decorrelated batches score near zero; diagonal entries of -1
    (e.g. z_b == -z_a) contribute 4 per dimension before weighting.
    """
    z_a = as_batch(z_a, min_rows=2)
    z_b = as_batch(z_b, min_rows=2)
    if z_a.shape != z_b.shape:
        raise ShapeMismatchError(
            f"paired batches must share a shape, got {z_a.shape} and {z_b.shape}"
        )
    if not np.isfinite(offdiag_weight) or offdiag_weight < 0.0:
        raise ValueError(f"offdiag_weight must be finite and >= 0")
    n = z_a.shape[0]
    sa = standardize_columns(z_a, epsilon)
    sb = standardize_columns(z_b, epsilon)
    m = sa.T @ sb / (n - 1)
    diag = np.diag(m)
    off = m - np.diag(diag)
    return float(np.sum((1.0 - diag) ** 2) + offdiag_weight * np.sum(off * off))


def _four_batches(z_a, z_b, p_a, p_b):
    z_a = as_batch(z_a)
    shapes = []
    out = [z_a]
    for other in (z_b, p_a, p_b):
        other = as_batch(other)
        if other.shape != z_a.shape:
            shapes.append(other.shape)
        out.append(other)
    if shapes:
        raise ShapeMismatchError(
            f"all four batches must share shape {z_a.shape}, got {shapes}"
        )
    return tuple(out)
