"""Flat key=value experiment configuration.

A config file is plain text, one dotted key per line (`loss.lambda=25`),
with `#` comments and blank lines ignored. Unknown keys are errors, not
warnings: a typo that silently falls back to a default is the worst kind
of experiment bug. Every key can also be overridden through an
environment variable named ENV_PREFIX + the key upper-cased with dots
replaced by underscores (loss.lambda -> VICREG_LOSS_LAMBDA); environment
overrides are applied after the file.

Serialization emits keys in sorted order with round-trip-exact float
formatting, so parse(serialize(cfg)) reproduces cfg exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

from .data import SyntheticDataset, ViewTransformConfig, generate_dataset
from .losses import LossCoefficients
from .training import NetworkShapes, TrainConfig
from .variants import MechanismConfig

__all__ = [
    "ENV_PREFIX",
    "ConfigError",
    "DatasetConfig",
    "ExperimentConfig",
    "default_experiment_config",
    "parse_config_text",
    "serialize_config",
    "read_config",
    "env_var_name",
    "build_dataset",
]

ENV_PREFIX = "VICREG_"


class ConfigError(ValueError):
    """Malformed configuration input."""


@dataclass(frozen=True)
class DatasetConfig:
    n_classes: int = 8
    per_class: int = 512
    d_latent: int = 8
    d_in: int = 32
    seed: int = 7


@dataclass(frozen=True)
class ExperimentConfig:
    data: DatasetConfig
    train: TrainConfig


# key -> (path inside ExperimentConfig, value kind)
_KEY_SPECS = {
    "data.n_classes": (("data", "n_classes"), "int"),
    "data.per_class": (("data", "per_class"), "int"),
    "data.d_latent": (("data", "d_latent"), "int"),
    "data.d_in": (("data", "d_in"), "int"),
    "data.seed": (("data", "seed"), "int"),
    "views.noise_std": (("train", "views", "noise_std"), "float"),
    "views.mask_prob": (("train", "views", "mask_prob"), "float"),
    "views.scale_low": (("train", "views", "scale_low"), "float"),
    "views.scale_high": (("train", "views", "scale_high"), "float"),
    "views.seed": (("train", "views", "seed"), "int"),
    "loss.lambda": (("train", "coeffs", "lambda_"), "float"),
    "loss.mu": (("train", "coeffs", "mu"), "float"),
    "loss.nu": (("train", "coeffs", "nu"), "float"),
    "loss.gamma": (("train", "coeffs", "gamma"), "float"),
    "loss.epsilon": (("train", "coeffs", "epsilon"), "float"),
    "mech.use_variance_reg": (("train", "mechanism", "use_variance_reg"), "bool"),
    "mech.use_covariance_reg": (
        ("train", "mechanism", "use_covariance_reg"), "bool"),
    "mech.use_predictor": (("train", "mechanism", "use_predictor"), "bool"),
    "mech.use_stop_gradient": (
        ("train", "mechanism", "use_stop_gradient"), "bool"),
    "mech.use_ema": (("train", "mechanism", "use_ema"), "bool"),
    "mech.ema_tau_initial": (("train", "mechanism", "ema_tau_initial"), "float"),
    "mech.normalization_mode": (
        ("train", "mechanism", "normalization_mode"), "str"),
    "mech.branch_mode": (("train", "mechanism", "branch_mode"), "str"),
    "mech.standardize_representations": (
        ("train", "mechanism", "standardize_representations"), "bool"),
    "net.encoder_widths": (("train", "shapes", "encoder_widths"), "ints"),
    "net.expander_widths": (("train", "shapes", "expander_widths"), "ints"),
    "net.predictor_hidden": (("train", "shapes", "predictor_hidden"), "int"),
    "net.encoder_b_widths": (
        ("train", "shapes", "encoder_b_widths"), "opt_ints"),
    "net.encoder_standardize": (
        ("train", "shapes", "encoder_standardize"), "bool"),
    "net.expander_standardize": (
        ("train", "shapes", "expander_standardize"), "bool"),
    "train.epochs": (("train", "epochs"), "int"),
    "train.batch_size": (("train", "batch_size"), "int"),
    "train.base_lr": (("train", "base_lr"), "float"),
    "train.warmup_epochs": (("train", "warmup_epochs"), "int"),
    "train.momentum": (("train", "momentum"), "float"),
    "train.weight_decay": (("train", "weight_decay"), "float"),
    "train.seed": (("train", "seed"), "int"),
    "train.lr_floor_ratio": (("train", "lr_floor_ratio"), "float"),
    "train.diagnostic_batch": (("train", "diagnostic_batch"), "int"),
}


def env_var_name(key: str) -> str:
    return ENV_PREFIX + key.upper().replace(".", "_")


def _parse_value(key: str, kind: str, raw: str):
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if raw == "true":
                return True
            if raw == "false":
                return False
            raise ValueError("expected true or false")
        if kind == "str":
            return raw
        if kind == "ints":
            return tuple(int(p) for p in raw.split(",") if p.strip())
        if kind == "opt_ints":
            if raw in ("", "none"):
                return None
            return tuple(int(p) for p in raw.split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r} ({exc})") from None
    raise ConfigError(f"unknown value kind {kind!r}")


def _format_value(kind: str, value) -> str:
    if kind == "int":
        return str(int(value))
    if kind == "float":
        return repr(float(value))
    if kind == "bool":
        return "true" if value else "false"
    if kind == "str":
        return str(value)
    if kind == "ints":
        return ",".join(str(int(v)) for v in value)
    if kind == "opt_ints":
        if value is None:
            return "none"
        return ",".join(str(int(v)) for v in value)
    raise ConfigError(f"unknown value kind {kind!r}")


def default_experiment_config() -> ExperimentConfig:
    return ExperimentConfig(data=DatasetConfig(), train=TrainConfig())


def _to_flat_typed(cfg: ExperimentConfig) -> dict:
    out = {}
    for key, (path, _kind) in _KEY_SPECS.items():
        node = cfg
        for attr in path:
            node = getattr(node, attr)
        out[key] = node
    return out


def _from_flat_typed(flat: dict) -> ExperimentConfig:
    def collect(prefix: str) -> dict:
        picked = {}
        for key, (path, _kind) in _KEY_SPECS.items():
            if key.startswith(prefix + "."):
                picked[path[-1]] = flat[key]
        return picked

    try:
        data = DatasetConfig(**collect("data"))
        train = TrainConfig(
            coeffs=LossCoefficients(**collect("loss")),
            mechanism=MechanismConfig(**collect("mech")),
            views=ViewTransformConfig(**collect("views")),
            shapes=NetworkShapes(**collect("net")),
            **collect("train"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return ExperimentConfig(data=data, train=train)


def parse_config_text(text: str, environ: dict | None = None) -> ExperimentConfig:
    """Parse config text over the defaults, then apply env overrides."""
    flat = _to_flat_typed(default_experiment_config())
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key not in _KEY_SPECS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        _path, kind = _KEY_SPECS[key]
        flat[key] = _parse_value(key, kind, raw)
    if environ:
        for key, (_path, kind) in _KEY_SPECS.items():
            env_value = environ.get(env_var_name(key))
            if env_value is not None:
                flat[key] = _parse_value(key, kind, env_value)
    return _from_flat_typed(flat)


def serialize_config(cfg: ExperimentConfig) -> str:
    flat = _to_flat_typed(cfg)
    lines = []
    for key in sorted(_KEY_SPECS):
        _path, kind = _KEY_SPECS[key]
        lines.append(f"{key}={_format_value(kind, flat[key])}")
    return "\n".join(lines) + "\n"


def read_config(path, environ: dict | None = None) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, environ)


def build_dataset(cfg: ExperimentConfig) -> SyntheticDataset:
    d = cfg.data
    return generate_dataset(d.n_classes, d.per_class, d.d_latent, d.d_in, d.seed)
