"""Two-branch training loop: SGD with momentum, warmup + cosine learning
rate, per-epoch diagnostics, and collapse detection.

One epoch shuffles the training rows (a fixed seeded diagnostic subset is
held out first and never trained on), draws two stochastic views per
sample, runs both branches, applies the closed-form loss gradients, and
chains them through expander and encoder by hand. All updates are
functional; the only state is the explicit parameter/velocity structures
threaded through the loop, which keeps repeated runs bit-identical.

Per-epoch metrics are computed on the held-out diagnostic batch with a
pair of views that is drawn once and reused every epoch, so the metric
curves measure the model, not fresh view noise. The wall_ms column is
real measured time and is the one column of the metrics table that is
not reproducible across runs.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import network as net
from .data import SyntheticDataset, ViewTransformConfig, sample_view_batch
from .linalg import standardize_columns
from .losses import (
    LossCoefficients,
    covariance_term,
    covariance_term_grad,
    invariance_term,
    invariance_term_grads,
    variance_term,
    variance_term_grad,
    avg_correlation_coefficient,
)
from .variants import (
    BRANCH_DISTINCT_ARCH,
    BRANCH_SHARED,
    DISTANCE_SQUARED_ERROR,
    MechanismConfig,
    NORM_L2,
    NORM_NONE,
    NORM_STANDARDIZE,
    apply_normalization_mode,
    ema_tau,
    ema_update,
    l2_normalize_rows_backward,
    standardize_columns_backward,
    stop_gradient_mark,
    symmetrized_invariance,
    symmetrized_invariance_grads,
)

__all__ = [
    "METRICS_HEADER",
    "VERDICT_COLLAPSED",
    "VERDICT_STABLE",
    "COLLAPSE_STD_FRACTION",
    "COLLAPSE_PATIENCE",
    "NetworkShapes",
    "TrainConfig",
    "MetricsRow",
    "TrainedModel",
    "effective_lr",
    "sgd_step",
    "train",
    "detect_collapse",
    "encode_representations",
    "write_metrics_csv",
    "write_metrics_jsonl",
    "read_metrics_csv",
]

METRICS_HEADER = (
    "epoch,inv,var_a,var_b,cov_a,cov_b,total,"
    "mean_repr_std,mean_embed_std,avg_corr_repr,lr,wall_ms"
)

VERDICT_COLLAPSED = "collapsed"
VERDICT_STABLE = "stable"
# An epoch counts as collapsed when the mean per-dimension embedding std
# drops below this fraction of the hinge target; the verdict needs that
# to hold for COLLAPSE_PATIENCE consecutive epochs.
COLLAPSE_STD_FRACTION = 0.01
COLLAPSE_PATIENCE = 5

_REFERENCE_BATCH = 256          # batch size at which base_lr applies as-is
_STREAM_DIAG = 0xD1A6           # seed stream: diagnostic subset choice
_STREAM_SHUFFLE = 0x5FFE        # seed stream: epoch shuffles
_STREAM_INIT = 0x171            # seed stream: parameter init
_DIAG_VIEW_BASE = 2 ** 33       # view seeds for the fixed diagnostic views


@dataclass(frozen=True)
class NetworkShapes:
    """Layer widths for the networks a run trains.

    encoder_b_widths only matters for branch_mode=distinct_arch and must
    agree with encoder_widths on input and output width so both branches
    see the same data and produce comparable representations.
    """

    encoder_widths: tuple = (32, 64, 32)
    expander_widths: tuple = (32, 128, 128, 128)
    predictor_hidden: int = 128
    encoder_b_widths: tuple | None = None
    encoder_standardize: bool = True
    expander_standardize: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "encoder_widths", tuple(self.encoder_widths))
        object.__setattr__(self, "expander_widths", tuple(self.expander_widths))
        if self.encoder_b_widths is not None:
            object.__setattr__(
                self, "encoder_b_widths", tuple(self.encoder_b_widths)
            )
        if self.expander_widths[0] != self.encoder_widths[-1]:
            raise ValueError(
                "expander input width must equal encoder output width"
            )
        if self.predictor_hidden < 1:
            raise ValueError("predictor_hidden must be positive")
        if self.encoder_b_widths is not None:
            if self.encoder_b_widths[0] != self.encoder_widths[0]:
                raise ValueError("both encoders must accept the same input width")
            if self.encoder_b_widths[-1] != self.encoder_widths[-1]:
                raise ValueError(
                    "both encoders must produce the same representation width"
                )


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one pretraining run.

    The gradient magnitude reaching the networks scales with the loss
    coefficients, so the workable learning rate shrinks as they grow.
    The default base_lr of 0.005 is calibrated for the default
    coefficients (25, 25, 1); runs with coefficients near 1 tolerate
    rates around 0.05, while 0.02 and above diverges at the default
    widths with the full-strength loss.
    """

    epochs: int = 200
    batch_size: int = 256
    base_lr: float = 0.005
    warmup_epochs: int = 10
    momentum: float = 0.9
    weight_decay: float = 1.0e-6
    coeffs: LossCoefficients = field(default_factory=LossCoefficients)
    mechanism: MechanismConfig = field(default_factory=MechanismConfig)
    views: ViewTransformConfig = field(default_factory=ViewTransformConfig)
    shapes: NetworkShapes = field(default_factory=NetworkShapes)
    seed: int = 0
    lr_floor_ratio: float = 0.00125
    diagnostic_batch: int = 256

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if not (0 <= self.warmup_epochs <= self.epochs):
            raise ValueError("need 0 <= warmup_epochs <= epochs")
        if self.base_lr <= 0 or not np.isfinite(self.base_lr):
            raise ValueError("base_lr must be positive")
        if not (0.0 <= self.momentum < 1.0):
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if not (0.0 <= self.lr_floor_ratio <= 1.0):
            raise ValueError("lr_floor_ratio must lie in [0, 1]")
        if self.diagnostic_batch < 2:
            raise ValueError("diagnostic_batch must be at least 2")


@dataclass(frozen=True)
class MetricsRow:
    epoch: int
    inv: float
    var_a: float
    var_b: float
    cov_a: float
    cov_b: float
    total: float
    mean_repr_std: float
    mean_embed_std: float
    avg_corr_repr: float
    lr: float
    wall_ms: int


@dataclass
class TrainedModel:
    """Final parameters of a run. encoder/expander are the online branch;
    branch_b holds either the second trainable branch (distinct modes) or
    the moving-average target, per branch_b_role."""

    encoder_spec: net.MlpSpec
    encoder: net.MlpParams
    expander_spec: net.MlpSpec
    expander: net.MlpParams
    predictor_spec: net.MlpSpec | None = None
    predictor: net.MlpParams | None = None
    encoder_b_spec: net.MlpSpec | None = None
    encoder_b: net.MlpParams | None = None
    expander_b_spec: net.MlpSpec | None = None
    expander_b: net.MlpParams | None = None
    branch_b_role: str = "none"  # none | distinct | target


# ---------------------------------------------------------------------------
# optimizer pieces
# ---------------------------------------------------------------------------


def effective_lr(step: int, total_steps: int, config: TrainConfig) -> float:
    """Learning rate at an optimizer step.

    Peak is batch_size/256 * base_lr. The first warmup_epochs worth of
    steps ramp linearly from zero; the remainder follows a half cosine
    from the peak down to lr_floor_ratio * peak at step == total_steps.
    """
    if total_steps < 1:
        raise ValueError("total_steps must be positive")
    peak = config.batch_size / _REFERENCE_BATCH * config.base_lr
    floor = config.lr_floor_ratio * peak
    steps_per_epoch = max(1, total_steps // config.epochs)
    warmup_steps = config.warmup_epochs * steps_per_epoch
    if step < warmup_steps:
        return peak * step / warmup_steps
    span = max(1, total_steps - warmup_steps)
    progress = min(max((step - warmup_steps) / span, 0.0), 1.0)
    return floor + (peak - floor) * 0.5 * (1.0 + np.cos(np.pi * progress))


def sgd_step(params: net.MlpParams, grads: net.MlpGrads,
             velocity: net.MlpGrads, lr: float, momentum: float,
             weight_decay: float):
    """One momentum step: v <- momentum*v + g + wd*p; p <- p - lr*v.

    Returns fresh (params, velocity); running statistics ride along
    untouched. Zero gradients with zero weight decay leave the parameters
    bitwise unchanged once the velocity is zero.
    """
    new_params = params.copy()
    new_velocity = net.zero_grads(params)
    for group in ("weights", "biases", "scales", "shifts"):
        ps = getattr(new_params, group)
        gs = getattr(grads, group)
        vs = getattr(velocity, group)
        nvs = getattr(new_velocity, group)
        for i, p in enumerate(ps):
            if p is None:
                continue
            v = momentum * vs[i] + gs[i] + weight_decay * p
            nvs[i] = v
            ps[i] = p - lr * v
    return new_params, new_velocity


# ---------------------------------------------------------------------------
# collapse detection
# ---------------------------------------------------------------------------


def detect_collapse(rows, gamma: float) -> str:
    """VERDICT_COLLAPSED when mean_embed_std stays below
    COLLAPSE_STD_FRACTION * gamma for COLLAPSE_PATIENCE consecutive
    epochs anywhere in the run, else VERDICT_STABLE."""
    rows = list(rows)
    if len(rows) < COLLAPSE_PATIENCE:
        raise ValueError(
            f"verdict undefined for fewer than {COLLAPSE_PATIENCE} epochs"
        )
    threshold = COLLAPSE_STD_FRACTION * gamma
    run = 0
    for row in rows:
        run = run + 1 if row.mean_embed_std < threshold else 0
        if run >= COLLAPSE_PATIENCE:
            return VERDICT_COLLAPSED
    return VERDICT_STABLE


# ---------------------------------------------------------------------------
# the training loop
# ---------------------------------------------------------------------------


def train(dataset: SyntheticDataset, config: TrainConfig):
    """Run the full loop; returns (TrainedModel, list of MetricsRow)."""
    mech = config.mechanism
    coeffs = config.coeffs
    shapes = config.shapes
    x_all = dataset.samples
    n_total = x_all.shape[0]
    if shapes.encoder_widths[0] != x_all.shape[1]:
        raise ValueError(
            f"encoder input width {shapes.encoder_widths[0]} does not match "
            f"data dimension {x_all.shape[1]}"
        )

    diag_rng = np.random.default_rng(
        np.random.SeedSequence([config.seed, _STREAM_DIAG])
    )
    diag_size = min(config.diagnostic_batch, max(2, n_total - config.batch_size))
    diag_idx = np.sort(diag_rng.choice(n_total, size=diag_size, replace=False))
    train_idx = np.setdiff1d(np.arange(n_total), diag_idx)
    steps_per_epoch = len(train_idx) // config.batch_size
    if steps_per_epoch < 1:
        raise ValueError(
            "dataset too small: no full training batch left after the "
            "diagnostic holdout"
        )
    total_steps = steps_per_epoch * config.epochs

    specs, state = _initial_state(config)

    diag_seeds = _DIAG_VIEW_BASE + diag_idx
    diag_va, diag_vb = sample_view_batch(x_all[diag_idx], config.views, diag_seeds)

    shuffle_rng = np.random.default_rng(
        np.random.SeedSequence([config.seed, _STREAM_SHUFFLE])
    )

    rows = []
    for epoch in range(config.epochs):
        started = time.perf_counter()
        perm = shuffle_rng.permutation(train_idx)
        lr = 0.0
        for b in range(steps_per_epoch):
            batch_rows = perm[b * config.batch_size:(b + 1) * config.batch_size]
            draw_seeds = np.int64(epoch) * n_total + batch_rows
            x_a, x_b = sample_view_batch(x_all[batch_rows], config.views,
                                         draw_seeds)
            step = epoch * steps_per_epoch + b
            lr = effective_lr(step, total_steps, config)
            _train_step(state, specs, config, x_a, x_b, lr)
            if mech.use_ema:
                tau = ema_tau(step, total_steps, mech.ema_tau_initial)
                state.enc_t = ema_update(state.enc_t, state.enc_a, tau)
                state.exp_t = ema_update(state.exp_t, state.exp_a, tau)
        wall_ms = int((time.perf_counter() - started) * 1000.0)
        rows.append(
            _diagnostic_row(state, specs, config, diag_va, diag_vb,
                            epoch, lr, wall_ms)
        )

    model = TrainedModel(
        encoder_spec=specs.enc_a,
        encoder=state.enc_a,
        expander_spec=specs.exp_a,
        expander=state.exp_a,
        predictor_spec=specs.pred,
        predictor=state.pred,
    )
    if mech.use_ema:
        model.encoder_b_spec, model.encoder_b = specs.enc_b, state.enc_t
        model.expander_b_spec, model.expander_b = specs.exp_b, state.exp_t
        model.branch_b_role = "target"
    elif mech.branch_mode != BRANCH_SHARED:
        model.encoder_b_spec, model.encoder_b = specs.enc_b, state.enc_b
        model.expander_b_spec, model.expander_b = specs.exp_b, state.exp_b
        model.branch_b_role = "distinct"
    return model, rows


@dataclass
class _Specs:
    enc_a: net.MlpSpec
    exp_a: net.MlpSpec
    enc_b: net.MlpSpec
    exp_b: net.MlpSpec
    pred: net.MlpSpec | None


@dataclass
class _State:
    enc_a: net.MlpParams
    exp_a: net.MlpParams
    enc_b: net.MlpParams | None
    exp_b: net.MlpParams | None
    enc_t: net.MlpParams | None
    exp_t: net.MlpParams | None
    pred: net.MlpParams | None
    vel: dict


def _initial_state(config: TrainConfig):
    mech = config.mechanism
    shapes = config.shapes
    enc_spec = net.MlpSpec(shapes.encoder_widths, True, shapes.encoder_standardize)
    exp_spec = net.MlpSpec(shapes.expander_widths, True,
                           shapes.expander_standardize)
    if mech.branch_mode == BRANCH_DISTINCT_ARCH:
        widths_b = shapes.encoder_b_widths
        if widths_b is None:
            raise ValueError(
                "branch_mode=distinct_arch requires encoder_b_widths"
            )
        enc_spec_b = net.MlpSpec(widths_b, True, shapes.encoder_standardize)
    else:
        enc_spec_b = enc_spec
    exp_spec_b = exp_spec

    seed_of = lambda k: np.random.SeedSequence(
        [config.seed, _STREAM_INIT, k]
    ).generate_state(1)[0]
    enc_a = net.init_params(enc_spec, seed_of(1))
    exp_a = net.init_params(exp_spec, seed_of(2))
    enc_b = exp_b = enc_t = exp_t = pred = None
    pred_spec = None
    if mech.branch_mode != BRANCH_SHARED:
        enc_b = net.init_params(enc_spec_b, seed_of(3))
        exp_b = net.init_params(exp_spec_b, seed_of(4))
    if mech.use_ema:
        enc_t = enc_a.copy()
        exp_t = exp_a.copy()
    if mech.use_predictor:
        emb = shapes.expander_widths[-1]
        pred_spec = net.MlpSpec((emb, shapes.predictor_hidden, emb), True,
                                shapes.expander_standardize)
        pred = net.init_params(pred_spec, seed_of(5))

    vel = {
        "enc_a": net.zero_grads(enc_a),
        "exp_a": net.zero_grads(exp_a),
    }
    if enc_b is not None:
        vel["enc_b"] = net.zero_grads(enc_b)
        vel["exp_b"] = net.zero_grads(exp_b)
    if pred is not None:
        vel["pred"] = net.zero_grads(pred)

    specs = _Specs(enc_spec, exp_spec, enc_spec_b, exp_spec_b, pred_spec)
    state = _State(enc_a, exp_a, enc_b, exp_b, enc_t, exp_t, pred, vel)
    return specs, state


def _branch_b_params(state: _State, mech: MechanismConfig):
    if mech.use_ema:
        return state.enc_t, state.exp_t
    if mech.branch_mode != BRANCH_SHARED:
        return state.enc_b, state.exp_b
    return state.enc_a, state.exp_a


def _forward_branch(enc_params, enc_spec, exp_params, exp_spec, x,
                    mech: MechanismConfig, epsilon: float):
    """x -> representation -> (optional standardization) -> embedding."""
    y_raw, c_enc = net.forward(enc_params, enc_spec, x, training=True)
    y = standardize_columns(y_raw, epsilon) \
        if mech.standardize_representations else y_raw
    z_raw, c_exp = net.forward(exp_params, exp_spec, y, training=True)
    return y_raw, c_enc, z_raw, c_exp


def _normalization_backward(z_raw, grad, mode: str, epsilon: float):
    if mode == NORM_NONE:
        return grad
    if mode == NORM_STANDARDIZE:
        return standardize_columns_backward(z_raw, grad, epsilon)
    if mode == NORM_L2:
        return l2_normalize_rows_backward(z_raw, grad)
    raise ValueError(f"unknown normalization mode {mode!r}")


def _train_step(state: _State, specs: _Specs, config: TrainConfig,
                x_a, x_b, lr: float) -> None:
    mech = config.mechanism
    coeffs = config.coeffs

    ya_raw, c_enc_a, za_raw, c_exp_a = _forward_branch(
        state.enc_a, specs.enc_a, state.exp_a, specs.exp_a, x_a, mech,
        coeffs.epsilon,
    )
    enc_b_params, exp_b_params = _branch_b_params(state, mech)
    yb_raw, c_enc_b, zb_raw, c_exp_b = _forward_branch(
        enc_b_params, specs.enc_b, exp_b_params, specs.exp_b, x_b, mech,
        coeffs.epsilon,
    )

    z_a, eff_coeffs = apply_normalization_mode(
        za_raw, mech.normalization_mode, coeffs
    )
    z_b, _ = apply_normalization_mode(zb_raw, mech.normalization_mode, coeffs)

    detach_b = mech.use_stop_gradient or mech.use_ema
    if detach_b:
        z_b = stop_gradient_mark(z_b)

    # invariance part (plain pair or predictor-mediated, squared error)
    pred_grads = None
    if mech.use_predictor:
        p_a, c_pred_a = net.forward(state.pred, specs.pred, z_a, training=True)
        p_b, c_pred_b = net.forward(state.pred, specs.pred, z_b, training=True)
        g_za, g_zb, g_pa, g_pb = symmetrized_invariance_grads(z_a, z_b, p_a, p_b)
        g_za = coeffs.lambda_ * g_za
        g_zb = coeffs.lambda_ * g_zb
        gp_a, g_za_extra = net.backward(state.pred, specs.pred, c_pred_a,
                                        coeffs.lambda_ * g_pa)
        gp_b, g_zb_extra = net.backward(state.pred, specs.pred, c_pred_b,
                                        coeffs.lambda_ * g_pb)
        pred_grads = net.add_grads(gp_a, gp_b)
        g_za = g_za + g_za_extra
        if not detach_b:
            g_zb = g_zb + g_zb_extra
    else:
        g_inv_a, g_inv_b = invariance_term_grads(z_a, z_b)
        g_za = coeffs.lambda_ * g_inv_a
        g_zb = coeffs.lambda_ * g_inv_b

    # regularization on the embeddings both loss terms actually see
    mu = coeffs.mu if mech.use_variance_reg else 0.0
    nu = coeffs.nu if mech.use_covariance_reg else 0.0
    if mu > 0.0:
        g_za = g_za + mu * variance_term_grad(z_a, eff_coeffs.gamma,
                                              eff_coeffs.epsilon)
    if nu > 0.0:
        g_za = g_za + nu * covariance_term_grad(z_a)
    if not detach_b:
        if mu > 0.0:
            g_zb = g_zb + mu * variance_term_grad(z_b, eff_coeffs.gamma,
                                                  eff_coeffs.epsilon)
        if nu > 0.0:
            g_zb = g_zb + nu * covariance_term_grad(z_b)

    g_za_raw = _normalization_backward(za_raw, g_za, mech.normalization_mode,
                                       coeffs.epsilon)
    gx_a, g_ya = net.backward(state.exp_a, specs.exp_a, c_exp_a, g_za_raw)
    if mech.standardize_representations:
        g_ya = standardize_columns_backward(ya_raw, g_ya, coeffs.epsilon)
    ge_a, _ = net.backward(state.enc_a, specs.enc_a, c_enc_a, g_ya)

    ge_b = gx_b = None
    if not detach_b:
        g_zb_raw = _normalization_backward(zb_raw, g_zb,
                                           mech.normalization_mode,
                                           coeffs.epsilon)
        gx_b, g_yb = net.backward(exp_b_params, specs.exp_b, c_exp_b, g_zb_raw)
        if mech.standardize_representations:
            g_yb = standardize_columns_backward(yb_raw, g_yb, coeffs.epsilon)
        ge_b, _ = net.backward(enc_b_params, specs.enc_b, c_enc_b, g_yb)

    # parameter updates
    opt = lambda p, g, v: sgd_step(p, g, v, lr, config.momentum,
                                   config.weight_decay)
    if mech.branch_mode == BRANCH_SHARED:
        enc_grads = ge_a if ge_b is None else net.add_grads(ge_a, ge_b)
        exp_grads = gx_a if gx_b is None else net.add_grads(gx_a, gx_b)
        state.enc_a, state.vel["enc_a"] = opt(state.enc_a, enc_grads,
                                              state.vel["enc_a"])
        state.exp_a, state.vel["exp_a"] = opt(state.exp_a, exp_grads,
                                              state.vel["exp_a"])
    else:
        state.enc_a, state.vel["enc_a"] = opt(state.enc_a, ge_a,
                                              state.vel["enc_a"])
        state.exp_a, state.vel["exp_a"] = opt(state.exp_a, gx_a,
                                              state.vel["exp_a"])
        if ge_b is not None:
            state.enc_b, state.vel["enc_b"] = opt(state.enc_b, ge_b,
                                                  state.vel["enc_b"])
            state.exp_b, state.vel["exp_b"] = opt(state.exp_b, gx_b,
                                                  state.vel["exp_b"])
    if pred_grads is not None:
        state.pred, state.vel["pred"] = opt(state.pred, pred_grads,
                                            state.vel["pred"])

    # running statistics: each trainable network tracks the batches it saw
    state.enc_a = net.update_running_stats(state.enc_a, c_enc_a)
    state.exp_a = net.update_running_stats(state.exp_a, c_exp_a)
    if mech.branch_mode == BRANCH_SHARED and not mech.use_ema:
        state.enc_a = net.update_running_stats(state.enc_a, c_enc_b)
        state.exp_a = net.update_running_stats(state.exp_a, c_exp_b)
    elif mech.branch_mode != BRANCH_SHARED:
        state.enc_b = net.update_running_stats(state.enc_b, c_enc_b)
        state.exp_b = net.update_running_stats(state.exp_b, c_exp_b)
    if mech.use_predictor:
        state.pred = net.update_running_stats(state.pred, c_pred_a)
        state.pred = net.update_running_stats(state.pred, c_pred_b)


def _mean_column_std(z) -> float:
    """Mean over columns of the raw (unregularized) unbiased std."""
    z = np.asarray(z, dtype=np.float64)
    centered = z - z.mean(axis=0)
    var = np.sum(centered * centered, axis=0) / (z.shape[0] - 1)
    return float(np.mean(np.sqrt(var)))


def _diagnostic_row(state: _State, specs: _Specs, config: TrainConfig,
                    diag_va, diag_vb, epoch: int, lr: float,
                    wall_ms: int) -> MetricsRow:
    mech = config.mechanism
    coeffs = config.coeffs
    ya_raw, _, za_raw, _ = _forward_branch(
        state.enc_a, specs.enc_a, state.exp_a, specs.exp_a, diag_va, mech,
        coeffs.epsilon,
    )
    enc_b_params, exp_b_params = _branch_b_params(state, mech)
    yb_raw, _, zb_raw, _ = _forward_branch(
        enc_b_params, specs.enc_b, exp_b_params, specs.exp_b, diag_vb, mech,
        coeffs.epsilon,
    )
    z_a, eff_coeffs = apply_normalization_mode(
        za_raw, mech.normalization_mode, coeffs
    )
    z_b, _ = apply_normalization_mode(zb_raw, mech.normalization_mode, coeffs)

    if mech.use_predictor:
        p_a, _ = net.forward(state.pred, specs.pred, z_a, training=True)
        p_b, _ = net.forward(state.pred, specs.pred, z_b, training=True)
        inv = symmetrized_invariance(z_a, z_b, p_a, p_b,
                                     DISTANCE_SQUARED_ERROR)
    else:
        inv = invariance_term(z_a, z_b)
    var_a = variance_term(z_a, eff_coeffs.gamma, eff_coeffs.epsilon)
    var_b = variance_term(z_b, eff_coeffs.gamma, eff_coeffs.epsilon)
    cov_a = covariance_term(z_a)
    cov_b = covariance_term(z_b)
    mu = coeffs.mu if mech.use_variance_reg else 0.0
    nu = coeffs.nu if mech.use_covariance_reg else 0.0
    total = coeffs.lambda_ * inv + mu * (var_a + var_b) + nu * (cov_a + cov_b)

    return MetricsRow(
        epoch=epoch,
        inv=float(inv),
        var_a=float(var_a),
        var_b=float(var_b),
        cov_a=float(cov_a),
        cov_b=float(cov_b),
        total=float(total),
        mean_repr_std=0.5 * (_mean_column_std(ya_raw) + _mean_column_std(yb_raw)),
        mean_embed_std=0.5 * (_mean_column_std(z_a) + _mean_column_std(z_b)),
        avg_corr_repr=avg_correlation_coefficient(ya_raw, yb_raw,
                                                  coeffs.epsilon),
        lr=float(lr),
        wall_ms=int(wall_ms),
    )


def encode_representations(model: TrainedModel, x) -> np.ndarray:
    """Evaluation-mode encoder output for a batch of inputs."""
    y, _ = net.forward(model.encoder, model.encoder_spec, x, training=False)
    return y


# ---------------------------------------------------------------------------
# metrics persistence
# ---------------------------------------------------------------------------


def _format_value(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_metrics_csv(rows, path) -> None:
    """Fixed-header CSV; floats use shortest round-trip formatting."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(METRICS_HEADER + "\n")
        for r in rows:
            fields = [
                r.epoch, r.inv, r.var_a, r.var_b, r.cov_a, r.cov_b, r.total,
                r.mean_repr_std, r.mean_embed_std, r.avg_corr_repr, r.lr,
                r.wall_ms,
            ]
            fh.write(",".join(_format_value(v) for v in fields) + "\n")


def write_metrics_jsonl(rows, path) -> None:
    """Same records as the CSV, one JSON object per line."""
    names = METRICS_HEADER.split(",")
    with open(path, "w", encoding="utf-8") as fh:
        for r in rows:
            record = {name: getattr(r, name) for name in names}
            fh.write(json.dumps(record) + "\n")


def read_metrics_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != METRICS_HEADER:
            raise ValueError(f"unexpected metrics header: {header}")
        rows = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            rows.append(MetricsRow(
                epoch=int(parts[0]),
                inv=float(parts[1]),
                var_a=float(parts[2]),
                var_b=float(parts[3]),
                cov_a=float(parts[4]),
                cov_b=float(parts[5]),
                total=float(parts[6]),
                mean_repr_std=float(parts[7]),
                mean_embed_std=float(parts[8]),
                avg_corr_repr=float(parts[9]),
                lr=float(parts[10]),
                wall_ms=int(parts[11]),
            ))
    return rows
