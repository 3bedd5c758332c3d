"""Variance-invariance-covariance regularized joint-embedding training,
small enough to verify on a desk: closed-form loss gradients, manual
backprop networks, mechanism ablations, synthetic two-view data, a
deterministic trainer, collapse diagnostics, and representation probes.
"""

from .linalg import (
    DegenerateBatchError,
    ShapeMismatchError,
    ZeroNormError,
    covariance_matrix,
    l2_normalize_rows,
    regularized_std,
    standardize_columns,
)
from .losses import (
    LossBreakdown,
    LossCoefficients,
    LossGradients,
    avg_correlation_coefficient,
    covariance_term,
    invariance_term,
    variance_term,
    vicreg_loss,
    vicreg_loss_backward,
    vicreg_loss_elementwise,
)
from .network import MlpParams, MlpSpec, forward, backward, init_params
from .variants import (
    MechanismConfig,
    barlow_twins_loss,
    ema_update,
    symmetrized_invariance,
)
from .data import SyntheticDataset, ViewTransformConfig, generate_dataset, sample_views
from .training import (
    MetricsRow,
    NetworkShapes,
    TrainConfig,
    TrainedModel,
    detect_collapse,
    effective_lr,
    sgd_step,
    train,
)
from .evaluation import ProbeResult, knn_classify, linear_probe

__version__ = "0.1.0"

__all__ = [
    "DegenerateBatchError",
    "ShapeMismatchError",
    "ZeroNormError",
    "covariance_matrix",
    "l2_normalize_rows",
    "regularized_std",
    "standardize_columns",
    "LossBreakdown",
    "LossCoefficients",
    "LossGradients",
    "avg_correlation_coefficient",
    "covariance_term",
    "invariance_term",
    "variance_term",
    "vicreg_loss",
    "vicreg_loss_backward",
    "vicreg_loss_elementwise",
    "MlpParams",
    "MlpSpec",
    "forward",
    "backward",
    "init_params",
    "MechanismConfig",
    "barlow_twins_loss",
    "ema_update",
    "symmetrized_invariance",
    "SyntheticDataset",
    "ViewTransformConfig",
    "generate_dataset",
    "sample_views",
    "MetricsRow",
    "NetworkShapes",
    "TrainConfig",
    "TrainedModel",
    "detect_collapse",
    "effective_lr",
    "sgd_step",
    "train",
    "ProbeResult",
    "knn_classify",
    "linear_probe",
    "__version__",
]
