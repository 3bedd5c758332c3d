"""Plain MLP with hand-written forward and backward passes.

A network is a stack of affine layers. Hidden layers optionally apply
batch standardization (learnable scale/shift, running averages for
evaluation mode) followed by a rectifier. The final layer is always
affine only. Parameters live in plain float64 arrays; nothing here
mutates its inputs, and the optimizer applies updates functionally.

Batch standardization uses the same unbiased 1/(n-1) variance estimator
as the loss statistics, with its own small divisor epsilon. Training
mode normalizes with the current batch's statistics; evaluation mode
uses running averages accumulated with momentum RUNNING_STAT_MOMENTUM.
Running averages are not updated implicitly: callers apply
update_running_stats with the forward cache when they want tracking.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from .linalg import DegenerateBatchError, ShapeMismatchError, as_batch

__all__ = [
    "STD_EPSILON",
    "RUNNING_STAT_MOMENTUM",
    "CHECKPOINT_VERSION",
    "MlpSpec",
    "MlpParams",
    "MlpGrads",
    "ForwardCache",
    "init_params",
    "forward",
    "backward",
    "zero_grads",
    "add_grads",
    "iter_trainable",
    "update_running_stats",
    "param_count",
    "save_params",
    "load_params",
]

STD_EPSILON = 1.0e-5
RUNNING_STAT_MOMENTUM = 0.9
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class MlpSpec:
    """Architecture description.

    layer_widths includes the input width, so (4, 8, 3) is two affine
    layers. hidden_activation switches the rectifier on hidden layers;
    batch_standardize_hidden inserts batch standardization between each
    hidden affine layer and its rectifier. The final layer never gets
    either.
    """

    layer_widths: tuple
    hidden_activation: bool = True
    batch_standardize_hidden: bool = False

    def __post_init__(self) -> None:
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2:
            raise ValueError("layer_widths needs an input and an output width")
        if any(w < 1 for w in widths):
            raise ValueError(f"layer widths must be positive, got {widths}")

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths) - 1

    def is_hidden(self, layer: int) -> bool:
        return layer < self.n_layers - 1


@dataclass
class MlpParams:
    """Weights plus standardization state, one entry per layer.

    scales/shifts/running_means/running_vars hold None for layers without
    batch standardization.
    """

    weights: list
    biases: list
    scales: list
    shifts: list
    running_means: list
    running_vars: list

    def copy(self) -> "MlpParams":
        cp = lambda xs: [None if x is None else x.copy() for x in xs]
        return MlpParams(
            cp(self.weights), cp(self.biases), cp(self.scales),
            cp(self.shifts), cp(self.running_means), cp(self.running_vars),
        )


@dataclass
class MlpGrads:
    weights: list
    biases: list
    scales: list
    shifts: list


@dataclass
class ForwardCache:
    """Intermediate values needed by backward, one slot per layer."""

    training: bool
    inputs: list = field(default_factory=list)
    std_means: list = field(default_factory=list)
    std_sigmas: list = field(default_factory=list)
    std_normalized: list = field(default_factory=list)
    std_batch_vars: list = field(default_factory=list)
    activation_inputs: list = field(default_factory=list)


def init_params(spec: MlpSpec, seed: int) -> MlpParams:
    """He-style initialization: W ~ N(0, 2/fan_in), everything else at
    its identity value (biases and shifts zero, scales one, running
    mean 0 / running var 1). Deterministic in seed."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x6E65]))
    weights, biases, scales, shifts, rmeans, rvars = [], [], [], [], [], []
    for layer in range(spec.n_layers):
        fan_in = spec.layer_widths[layer]
        fan_out = spec.layer_widths[layer + 1]
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), (fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
        if spec.is_hidden(layer) and spec.batch_standardize_hidden:
            scales.append(np.ones(fan_out))
            shifts.append(np.zeros(fan_out))
            rmeans.append(np.zeros(fan_out))
            rvars.append(np.ones(fan_out))
        else:
            scales.append(None)
            shifts.append(None)
            rmeans.append(None)
            rvars.append(None)
    return MlpParams(weights, biases, scales, shifts, rmeans, rvars)


def forward(params: MlpParams, spec: MlpSpec, x, training: bool):
    """Run the network, returning (output, cache).

    Training mode standardizes with the batch's own statistics (needs at
    least two rows when standardization is on); evaluation mode uses the
    stored running averages and is therefore per-row pure.
    """
    h = as_batch(x)
    if h.shape[1] != spec.layer_widths[0]:
        raise ShapeMismatchError(
            f"input width {h.shape[1]} does not match spec {spec.layer_widths[0]}"
        )
    cache = ForwardCache(training=training)
    n = h.shape[0]
    for layer in range(spec.n_layers):
        cache.inputs.append(h)
        a = h @ params.weights[layer] + params.biases[layer]
        mean = sigma = normalized = batch_var = act_in = None
        if spec.is_hidden(layer):
            if spec.batch_standardize_hidden:
                if training:
                    if n < 2:
                        raise DegenerateBatchError(
                            "training-mode standardization needs at least two rows"
                        )
                    mean = a.mean(axis=0)
                    centered = a - mean
                    batch_var = np.sum(centered * centered, axis=0) / (n - 1)
                    sigma = np.sqrt(batch_var + STD_EPSILON)
                    normalized = centered / sigma
                else:
                    mean = params.running_means[layer]
                    sigma = np.sqrt(params.running_vars[layer] + STD_EPSILON)
                    normalized = (a - mean) / sigma
                a = params.scales[layer] * normalized + params.shifts[layer]
            if spec.hidden_activation:
                act_in = a
                a = np.maximum(a, 0.0)
        cache.std_means.append(mean)
        cache.std_sigmas.append(sigma)
        cache.std_normalized.append(normalized)
        cache.std_batch_vars.append(batch_var)
        cache.activation_inputs.append(act_in)
        h = a
    return h, cache


def backward(params: MlpParams, spec: MlpSpec, cache: ForwardCache, grad_out):
    """Chain grad_out (d total / d output) back to every parameter.

    Returns (MlpGrads, grad_input). Only training-mode caches are
    accepted: evaluation-mode statistics are constants by definition, so
    differentiating through them would silently compute something else.
    """
    if not cache.training:
        raise ValueError("backward requires a training-mode forward cache")
    g = np.asarray(grad_out, dtype=np.float64)
    grads = zero_grads(params)
    for layer in reversed(range(spec.n_layers)):
        if spec.is_hidden(layer):
            if spec.hidden_activation:
                g = g * (cache.activation_inputs[layer] > 0.0)
            if spec.batch_standardize_hidden:
                normalized = cache.std_normalized[layer]
                grads.scales[layer] = np.sum(g * normalized, axis=0)
                grads.shifts[layer] = np.sum(g, axis=0)
                ghat = g * params.scales[layer]
                n = normalized.shape[0]
                # d/da of (a - mean(a)) / sqrt(var(a) + eps) with the
                # unbiased estimator: subtract the batch-mean coupling and
                # the variance coupling, then undo the sigma scaling.
                coupling = np.sum(ghat * normalized, axis=0) / (n - 1)
                g = (ghat - ghat.mean(axis=0) - normalized * coupling) \
                    / cache.std_sigmas[layer]
        grads.weights[layer] = cache.inputs[layer].T @ g
        grads.biases[layer] = np.sum(g, axis=0)
        g = g @ params.weights[layer].T
    return grads, g


def zero_grads(params: MlpParams) -> MlpGrads:
    z = lambda xs: [None if x is None else np.zeros_like(x) for x in xs]
    return MlpGrads(z(params.weights), z(params.biases),
                    z(params.scales), z(params.shifts))


def add_grads(a: MlpGrads, b: MlpGrads) -> MlpGrads:
    def combine(xs, ys):
        out = []
        for x, y in zip(xs, ys):
            if x is None and y is None:
                out.append(None)
            else:
                out.append(x + y)
        return out

    return MlpGrads(
        combine(a.weights, b.weights),
        combine(a.biases, b.biases),
        combine(a.scales, b.scales),
        combine(a.shifts, b.shifts),
    )


def iter_trainable(params: MlpParams, grads: MlpGrads | None = None):
    """Yield (name, param_array, grad_array) for every trainable array.

    Running statistics are buffers, not parameters, and are skipped.
    With grads=None the third element is None throughout.
    """
    groups = (
        ("w", params.weights, None if grads is None else grads.weights),
        ("b", params.biases, None if grads is None else grads.biases),
        ("scale", params.scales, None if grads is None else grads.scales),
        ("shift", params.shifts, None if grads is None else grads.shifts),
    )
    for prefix, arrays, garrays in groups:
        for layer, arr in enumerate(arrays):
            if arr is None:
                continue
            g = None if garrays is None else garrays[layer]
            yield f"{prefix}{layer}", arr, g


def update_running_stats(params: MlpParams, cache: ForwardCache,
                         momentum: float = RUNNING_STAT_MOMENTUM) -> MlpParams:
    """Fold the cache's batch statistics into fresh running averages."""
    if not cache.training:
        raise ValueError("running statistics only update from training-mode caches")
    out = params.copy()
    for layer, mean in enumerate(cache.std_means):
        if mean is None or out.running_means[layer] is None:
            continue
        out.running_means[layer] = (
            momentum * out.running_means[layer] + (1.0 - momentum) * mean
        )
        out.running_vars[layer] = (
            momentum * out.running_vars[layer]
            + (1.0 - momentum) * cache.std_batch_vars[layer]
        )
    return out


def param_count(spec: MlpSpec) -> int:
    total = 0
    for layer in range(spec.n_layers):
        fan_in = spec.layer_widths[layer]
        fan_out = spec.layer_widths[layer + 1]
        total += fan_in * fan_out + fan_out
        if spec.is_hidden(layer) and spec.batch_standardize_hidden:
            total += 2 * fan_out
    return total


# ---------------------------------------------------------------------------
# checkpointing
# ---------------------------------------------------------------------------


def save_params(params: MlpParams, spec: MlpSpec, path) -> None:
    """Write a versioned, bit-exact dump of all arrays plus the MlpSpec."""
    arrays = {}
    present = []
    for layer in range(spec.n_layers):
        arrays[f"w{layer}"] = params.weights[layer]
        arrays[f"b{layer}"] = params.biases[layer]
        if params.scales[layer] is not None:
            arrays[f"scale{layer}"] = params.scales[layer]
            arrays[f"shift{layer}"] = params.shifts[layer]
            arrays[f"rmean{layer}"] = params.running_means[layer]
            arrays[f"rvar{layer}"] = params.running_vars[layer]
            present.append(layer)
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "layer_widths": list(spec.layer_widths),
        "hidden_activation": spec.hidden_activation,
        "batch_standardize_hidden": spec.batch_standardize_hidden,
        "standardized_layers": present,
    }
    arrays["meta"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8
    )
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_params(path):
    """Inverse of save_params; returns (MlpParams, MlpSpec)."""
    with open(path, "rb") as fh:
        data = np.load(io.BytesIO(fh.read()))
    meta = json.loads(bytes(data["meta"]).decode("utf-8"))
    if meta["format_version"] != CHECKPOINT_VERSION:
        raise ValueError(
            f"unsupported checkpoint version {meta['format_version']}"
        )
    spec = MlpSpec(
        tuple(meta["layer_widths"]),
        hidden_activation=meta["hidden_activation"],
        batch_standardize_hidden=meta["batch_standardize_hidden"],
    )
    weights, biases, scales, shifts, rmeans, rvars = [], [], [], [], [], []
    standardized = set(meta["standardized_layers"])
    for layer in range(spec.n_layers):
        weights.append(np.array(data[f"w{layer}"], dtype=np.float64))
        biases.append(np.array(data[f"b{layer}"], dtype=np.float64))
        if layer in standardized:
            scales.append(np.array(data[f"scale{layer}"], dtype=np.float64))
            shifts.append(np.array(data[f"shift{layer}"], dtype=np.float64))
            rmeans.append(np.array(data[f"rmean{layer}"], dtype=np.float64))
            rvars.append(np.array(data[f"rvar{layer}"], dtype=np.float64))
        else:
            scales.append(None)
            shifts.append(None)
            rmeans.append(None)
            rvars.append(None)
    return MlpParams(weights, biases, scales, shifts, rmeans, rvars), spec
