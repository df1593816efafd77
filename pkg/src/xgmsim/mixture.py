"""XOR-like Gaussian mixture: sampling and exact local-field moments.

Four clusters at ``±phi·mu_1`` (label 1) and ``±phi·mu_2`` (label 0) with
isotropic noise of standard deviation ``sigma`` per coordinate.  The two
centroids are pinned to the first two standard basis vectors, which makes
neuron/centroid overlaps directly readable off the weight matrix.

The local fields ``lam = (W·X, mu_1·X, mu_2·X)`` of a sample from cluster
``s·mu_a`` are jointly Gaussian with mean ``s·phi·(M[:,a], T[:,a])`` and
covariance ``sigma^2 · [[Q, M], [M^T, T]]``; the fading factor scales the
mean block only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class MixtureSpec:
    """Task parameters of the mixture.

    sigma : cluster standard deviation (per coordinate)
    fading : signal rescaling factor phi >= 0 applied to the centroid means
    centroid_overlap : 2x2 Gram matrix of the centroids (identity here)
    """

    sigma: float
    fading: float = 1.0
    centroid_overlap: np.ndarray = field(
        default_factory=lambda: np.eye(2), compare=False
    )

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.fading < 0:
            raise ValueError(f"fading must be >= 0, got {self.fading}")
        t = np.asarray(self.centroid_overlap, dtype=float)
        if t.shape != (2, 2) or not np.allclose(t, t.T):
            raise ValueError("centroid_overlap must be a symmetric 2x2 matrix")
        object.__setattr__(self, "centroid_overlap", t)

    def with_fading(self, phi: float) -> "MixtureSpec":
        return MixtureSpec(self.sigma, phi, self.centroid_overlap)

    def with_sigma(self, sigma: float) -> "MixtureSpec":
        return MixtureSpec(sigma, self.fading, self.centroid_overlap)


@dataclass(frozen=True)
class ClusterId:
    """One of the four signed centroids: axis in {1, 2}, sign in {+1, -1}."""

    axis: int
    sign: int

    def __post_init__(self):
        if self.axis not in (1, 2):
            raise ValueError(f"axis must be 1 or 2, got {self.axis}")
        if self.sign not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {self.sign}")

    @property
    def label(self) -> int:
        # Labelling rule of the task: axis 1 carries class 1, axis 2 class 0.
        return 1 if self.axis == 1 else 0


#: Fixed enumeration order used everywhere a quantity is averaged over clusters.
CLUSTERS: tuple[ClusterId, ...] = (
    ClusterId(1, +1),
    ClusterId(1, -1),
    ClusterId(2, +1),
    ClusterId(2, -1),
)


@dataclass(frozen=True)
class Sample:
    input: np.ndarray
    label: int
    cluster: ClusterId
    fading_used: float


@dataclass(frozen=True)
class FieldMoments:
    """Gaussian moments of the K+2 local fields for one cluster."""

    mean: np.ndarray
    covariance: np.ndarray


def sample_input(
    d: int,
    spec: MixtureSpec,
    rng: np.random.Generator,
    cluster: ClusterId | None = None,
) -> Sample:
    """Draw one sample ``X = sign·phi·mu_axis + z`` with ``z_i ~ N(0, sigma^2)``.

    The cluster is drawn uniformly over the four signed centroids unless given
    explicitly.  Requires d >= 2 so the two centroids fit orthogonally.
    """
    if d < 2:
        raise ValueError(f"ambient dimension must be >= 2, got {d}")
    if cluster is None:
        axis = int(rng.integers(1, 3))
        sign = int(1 - 2 * rng.integers(0, 2))
        cluster = ClusterId(axis, sign)
    x = rng.standard_normal(d) * spec.sigma
    x[cluster.axis - 1] += cluster.sign * spec.fading
    return Sample(input=x, label=cluster.label, cluster=cluster, fading_used=spec.fading)


def sample_batch(
    d: int,
    spec: MixtureSpec,
    rng: np.random.Generator,
    n: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised draw of n samples: (inputs, labels, axes, signs)."""
    if d < 2:
        raise ValueError(f"ambient dimension must be >= 2, got {d}")
    axes = rng.integers(1, 3, size=n)
    signs = 1 - 2 * rng.integers(0, 2, size=n)
    x = rng.standard_normal((n, d)) * spec.sigma
    x[np.arange(n), axes - 1] += signs * spec.fading
    labels = (axes == 1).astype(int)
    return x, labels, axes, signs


def field_moments(state, cluster: ClusterId, spec: MixtureSpec) -> FieldMoments:
    """Exact joint moments of the K+2 local fields under one cluster.

    mean = sign·phi·concat(M[:,axis], T[:,axis]); covariance = sigma^2·Gram,
    where Gram stacks [[Q, M], [M^T, T]].  Degenerate Q = 0 is legal: the
    network fields are then deterministic.
    """
    a = cluster.axis - 1
    mean = cluster.sign * spec.fading * np.concatenate(
        [state.m[:, a], state.t[:, a]]
    )
    cov = spec.sigma**2 * state.gram()
    return FieldMoments(mean=mean, covariance=cov)


def field_means_all_clusters(state, spec: MixtureSpec) -> np.ndarray:
    """Field means for the four clusters in CLUSTERS order, shape (4, K+2)."""
    cols = np.concatenate([state.m, state.t], axis=0)  # (K+2, 2)
    phi = spec.fading
    return np.stack(
        [c.sign * phi * cols[:, c.axis - 1] for c in CLUSTERS], axis=0
    )
