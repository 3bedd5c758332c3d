"""Synthetic clustered data and the stochastic two-view pipeline.

The dataset is a mixture of Gaussian clusters living on a random
low-dimensional linear subspace of the ambient space, so that a good
representation has obvious structure to find and a linear probe has
something honest to measure. Views are produced per sample by additive
Gaussian noise, then coordinate masking to zero, then one global scale
factor per view, each view drawing independent randomness.

Every random quantity is derived from explicit integer seeds through
numpy SeedSequence, so datasets and views are bit-reproducible and a
sample's views never depend on which batch it landed in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import as_batch

__all__ = [
    "MIN_MEAN_SEPARATION",
    "ViewTransformConfig",
    "SyntheticDataset",
    "generate_dataset",
    "sample_views",
    "sample_view_batch",
    "save_dataset",
    "load_dataset",
]

# Cluster centers are redrawn until every pair sits at least this many
# within-cluster standard deviations apart.
MIN_MEAN_SEPARATION = 4.0
_MEAN_SCALE = 5.0


@dataclass(frozen=True)
class ViewTransformConfig:
    noise_std: float = 0.2
    mask_prob: float = 0.25
    scale_low: float = 0.8
    scale_high: float = 1.2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.noise_std < 0.0 or not np.isfinite(self.noise_std):
            raise ValueError(f"noise_std must be >= 0, got {self.noise_std}")
        if not (0.0 <= self.mask_prob <= 1.0):
            raise ValueError(f"mask_prob must lie in [0, 1], got {self.mask_prob}")
        if not (0.0 < self.scale_low <= self.scale_high):
            raise ValueError(
                f"need 0 < scale_low <= scale_high, got "
                f"[{self.scale_low}, {self.scale_high}]"
            )


@dataclass
class SyntheticDataset:
    samples: np.ndarray  # (n, d_in) float64
    labels: np.ndarray   # (n,) int64
    n_classes: int
    generator_seed: int

    def __len__(self) -> int:
        return self.samples.shape[0]


def generate_dataset(n_classes: int, per_class: int, d_latent: int,
                     d_in: int, seed: int) -> SyntheticDataset:
    """Gaussian clusters on a random d_latent-dim subspace of R^d_in.

    Cluster means are drawn in latent coordinates and redrawn as a set
    until pairwise separations reach MIN_MEAN_SEPARATION times the unit
    within-cluster std; samples add unit isotropic latent noise and are
    embedded through a random orthonormal basis. Row order is shuffled so
    class blocks do not align with batch boundaries. Deterministic in seed.
    """
    if n_classes < 1 or per_class < 1:
        raise ValueError("n_classes and per_class must be positive")
    if not (1 <= d_latent <= d_in):
        raise ValueError(f"need 1 <= d_latent <= d_in, got {d_latent}, {d_in}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xDA7A]))

    basis, _ = np.linalg.qr(rng.standard_normal((d_in, d_latent)))
    means = _separated_means(rng, n_classes, d_latent)

    latent = np.repeat(means, per_class, axis=0) \
        + rng.standard_normal((n_classes * per_class, d_latent))
    labels = np.repeat(np.arange(n_classes, dtype=np.int64), per_class)
    samples = latent @ basis.T

    order = rng.permutation(samples.shape[0])
    return SyntheticDataset(samples[order], labels[order], n_classes, int(seed))


def _separated_means(rng, n_classes: int, d_latent: int) -> np.ndarray:
    for _ in range(1000):
        means = _MEAN_SCALE * rng.standard_normal((n_classes, d_latent))
        if n_classes == 1:
            return means
        dists = np.sqrt(
            np.sum((means[:, None, :] - means[None, :, :]) ** 2, axis=2)
        )
        np.fill_diagonal(dists, np.inf)
        if np.min(dists) >= MIN_MEAN_SEPARATION:
            return means
    raise RuntimeError("could not place separated cluster means")


def sample_views(x, config: ViewTransformConfig, draw_seed: int):
    """Draw the two stochastic views of one sample vector.

    Each view independently applies, in order: additive Gaussian noise,
    coordinate masking to zero, and one uniform global scale factor.
    Because masking follows the noise, a fully masked view is exactly
    zero regardless of the noise level. Deterministic in
    (config.seed, draw_seed).
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    rng = np.random.default_rng(
        np.random.SeedSequence([int(config.seed), int(draw_seed)])
    )
    views = []
    d = x.size
    for _ in range(2):
        noisy = x + config.noise_std * rng.standard_normal(d)
        keep = rng.random(d) >= config.mask_prob
        scale = rng.uniform(config.scale_low, config.scale_high)
        views.append(scale * (noisy * keep))
    return views[0], views[1]


def sample_view_batch(samples, config: ViewTransformConfig, draw_seeds):
    """Vectorize sample_views over rows; draw_seeds pairs with rows."""
    samples = as_batch(samples)
    draw_seeds = np.asarray(draw_seeds, dtype=np.int64)
    if draw_seeds.shape != (samples.shape[0],):
        raise ValueError("need exactly one draw seed per row")
    view_a = np.empty_like(samples)
    view_b = np.empty_like(samples)
    for i in range(samples.shape[0]):
        view_a[i], view_b[i] = sample_views(samples[i], config, int(draw_seeds[i]))
    return view_a, view_b


# ---------------------------------------------------------------------------
# plain-text persistence
# ---------------------------------------------------------------------------


def save_dataset(dataset: SyntheticDataset, path) -> None:
    """Space-delimited text: one header line, then `label coords...` rows.

    Floats are written with repr-style shortest round-trip formatting, so
    a load returns bitwise-identical float64 values.
    """
    with open(path, "w", encoding="utf-8") as fh:
        n, d_in = dataset.samples.shape
        fh.write(
            f"n={n} d_in={d_in} n_classes={dataset.n_classes} "
            f"seed={dataset.generator_seed}\n"
        )
        for label, row in zip(dataset.labels, dataset.samples):
            coords = " ".join(repr(float(v)) for v in row)
            fh.write(f"{int(label)} {coords}\n")


def load_dataset(path) -> SyntheticDataset:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        fields = dict(part.split("=", 1) for part in header.split())
        n = int(fields["n"])
        d_in = int(fields["d_in"])
        n_classes = int(fields["n_classes"])
        seed = int(fields.get("seed", 0))
        samples = np.empty((n, d_in))
        labels = np.empty(n, dtype=np.int64)
        for i in range(n):
            parts = fh.readline().split()
            if len(parts) != d_in + 1:
                raise ValueError(f"row {i} has {len(parts) - 1} coords, want {d_in}")
            labels[i] = int(parts[0])
            samples[i] = [float(v) for v in parts[1:]]
    return SyntheticDataset(samples, labels, n_classes, seed)
