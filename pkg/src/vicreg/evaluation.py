"""Frozen-representation quality probes.

Both probes treat representations as given: nothing here touches encoder
parameters. The linear probe is softmax regression trained by full-batch
gradient descent from zero-initialized weights, which makes it exactly
deterministic; the k-nearest-neighbor probe votes over cosine similarity
on direction-normalized representations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import as_batch, l2_normalize_rows

__all__ = [
    "ProbeResult",
    "linear_probe",
    "knn_classify",
    "probe_frozen_encoder",
    "DEFAULT_PROBE_EPOCHS",
    "DEFAULT_PROBE_LR",
    "DEFAULT_KNN_KS",
]

DEFAULT_PROBE_EPOCHS = 500
DEFAULT_PROBE_LR = 0.5
DEFAULT_KNN_KS = (20, 200)


@dataclass(frozen=True)
class ProbeResult:
    accuracy: float
    n_eval: int
    protocol: str
    k: int | None = None


def _check_labeled(reps, labels, name: str):
    reps = as_batch(reps)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.shape[0] != reps.shape[0]:
        raise ValueError(f"{name}: {reps.shape[0]} rows but {labels.shape[0]} labels")
    if labels.size and labels.min() < 0:
        raise ValueError(f"{name}: labels must be non-negative")
    return reps, labels


def linear_probe(train_reps, train_labels, eval_reps, eval_labels,
                 epochs: int = DEFAULT_PROBE_EPOCHS,
                 lr: float = DEFAULT_PROBE_LR,
                 seed: int = 0) -> ProbeResult:
    """Softmax regression on frozen representations; returns eval accuracy.

    Weights and biases start at zero and full-batch gradient descent on
    the mean cross-entropy runs for `epochs` steps, so the result is
    deterministic regardless of seed (the parameter exists for interface
    stability). Features are standardized with statistics of the training
    split only, which is a pure conditioning change: the classifier stays
    linear in the original representation space. With zero epochs every
    logit is zero and the argmax tie-break picks class 0 everywhere.
    """
    del seed  # zero init + full-batch descent is already deterministic
    train_reps, train_labels = _check_labeled(train_reps, train_labels, "train")
    eval_reps, eval_labels = _check_labeled(eval_reps, eval_labels, "eval")
    if train_reps.shape[1] != eval_reps.shape[1]:
        raise ValueError("train and eval representations differ in width")
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    n_classes = int(max(train_labels.max(), eval_labels.max())) + 1
    n, d = train_reps.shape

    mean = train_reps.mean(axis=0)
    std = train_reps.std(axis=0) + 1.0e-8
    x = (train_reps - mean) / std
    x_eval = (eval_reps - mean) / std

    w = np.zeros((d, n_classes))
    b = np.zeros(n_classes)
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), train_labels] = 1.0
    for _ in range(epochs):
        logits = x @ w + b
        logits -= logits.max(axis=1, keepdims=True)
        exp = np.exp(logits)
        probs = exp / exp.sum(axis=1, keepdims=True)
        delta = (probs - onehot) / n
        w -= lr * (x.T @ delta)
        b -= lr * delta.sum(axis=0)

    predictions = np.argmax(x_eval @ w + b, axis=1)
    accuracy = float(np.mean(predictions == eval_labels))
    return ProbeResult(accuracy, int(eval_labels.size), "linear_probe")


def knn_classify(train_reps, train_labels, eval_reps, eval_labels,
                 k: int) -> ProbeResult:
    """Cosine k-nearest-neighbor vote on direction-normalized reps.

    Neighbors are ordered by descending similarity with the training row
    index breaking exact similarity ties; the vote breaks count ties
    toward the lowest class index. Invariant to positive global scaling
    of either side by construction.
    """
    train_reps, train_labels = _check_labeled(train_reps, train_labels, "train")
    eval_reps, eval_labels = _check_labeled(eval_reps, eval_labels, "eval")
    if train_reps.shape[1] != eval_reps.shape[1]:
        raise ValueError("train and eval representations differ in width")
    n_train = train_reps.shape[0]
    if not (1 <= k <= n_train):
        raise ValueError(f"need 1 <= k <= {n_train}, got {k}")

    tr = l2_normalize_rows(train_reps)
    ev = l2_normalize_rows(eval_reps)
    sims = ev @ tr.T  # (n_eval, n_train)
    n_classes = int(max(train_labels.max(), eval_labels.max())) + 1

    correct = 0
    for i in range(ev.shape[0]):
        # lexsort: primary key descending similarity, secondary ascending index
        order = np.lexsort((np.arange(n_train), -sims[i]))[:k]
        counts = np.bincount(train_labels[order], minlength=n_classes)
        predicted = int(np.argmax(counts))  # argmax takes the lowest tied index
        correct += int(predicted == eval_labels[i])
    accuracy = correct / ev.shape[0]
    return ProbeResult(float(accuracy), int(eval_labels.size), "knn", k=int(k))


# ---------------------------------------------------------------------------
# standard protocol for scoring a frozen encoder on the synthetic data
# ---------------------------------------------------------------------------

_PROBE_SPLIT_STREAM = 0xEA75
_PROBE_VIEW_BASE = 2 ** 34  # clear of every training/diagnostic view seed


def probe_frozen_encoder(encoder_params, encoder_spec, dataset, views_cfg,
                         n_probe_train: int = 2048, n_probe_eval: int = 1024,
                         seed: int = 0, knn_k: int = 20,
                         probe_epochs: int = DEFAULT_PROBE_EPOCHS):
    """Score an encoder: probes train on representations of augmented
    views and evaluate on representations of the clean samples.

    The split is seeded and disjoint. Training the probe on augmented
    views rewards encoders whose representations are stable under the
    view pipeline; evaluation on clean inputs measures transfer to the
    unaugmented data. Returns {"linear": ProbeResult, "knn": ProbeResult}.
    """
    from .data import sample_view_batch  # local import avoids cycles
    from .network import forward

    n = dataset.samples.shape[0]
    if n_probe_train + n_probe_eval > n:
        raise ValueError("probe split larger than the dataset")
    rng = np.random.default_rng(
        np.random.SeedSequence([int(seed), _PROBE_SPLIT_STREAM])
    )
    order = rng.permutation(n)
    train_idx = order[:n_probe_train]
    eval_idx = order[n_probe_train:n_probe_train + n_probe_eval]

    view_seeds = _PROBE_VIEW_BASE + train_idx
    train_views, _ = sample_view_batch(dataset.samples[train_idx], views_cfg,
                                       view_seeds)
    train_reps, _ = forward(encoder_params, encoder_spec, train_views,
                            training=False)
    eval_reps, _ = forward(encoder_params, encoder_spec,
                           dataset.samples[eval_idx], training=False)
    train_labels = dataset.labels[train_idx]
    eval_labels = dataset.labels[eval_idx]

    linear = linear_probe(train_reps, train_labels, eval_reps, eval_labels,
                          epochs=probe_epochs)
    knn = knn_classify(train_reps, train_labels, eval_reps, eval_labels,
                       k=min(knn_k, n_probe_train))
    return {"linear": linear, "knn": knn}
