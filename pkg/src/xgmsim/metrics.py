"""Evaluation quantities computed from an order-parameter state.

All metrics are pure functions of the state (plus a random source for the
Monte-Carlo population loss).  Test-time quantities always use the un-faded
distribution: population loss at fading 1, zero-noise error on the exact
centroids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .finite_net import cross_entropy
from .mixture import CLUSTERS, MixtureSpec
from .moments import _field_batch
from .state import OrderState

#: Default normalised-alignment threshold for calling a neuron specialised.
DEFAULT_TAU = 0.5

_LABELS = np.array([c.label for c in CLUSTERS], dtype=float)


@dataclass(frozen=True)
class CoverageReport:
    covered: int
    best_neuron: tuple[int, int, int, int]  # per signed centroid, -1 if none
    best_score: tuple[float, float, float, float]
    tau: float


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic coverage-transition fractions under a noise increase."""

    matrix: np.ndarray  # (5, 5)
    counts: np.ndarray  # (5,) runs per source coverage level
    sigma_from: float
    sigma_to: float


def population_loss(
    state: OrderState,
    spec: MixtureSpec,
    n_mc: int,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """Monte-Carlo population cross-entropy at fading 1, with standard error.

    The evaluation distribution never uses a boosted signal, whatever fading
    the training spec carries.
    """
    eval_spec = spec.with_fading(1.0)
    k = state.k
    fields, labels, n_eff, _ = _field_batch(state, eval_spec, n_mc, rng)
    act = np.maximum(fields[:, :k] + state.b, 0.0)
    logit = act @ state.v / np.sqrt(k)
    losses = cross_entropy(labels, logit)
    return float(losses.mean()), float(losses.std() / np.sqrt(n_eff))


def zero_noise_error(state: OrderState) -> float:
    """Misclassification rate on the four exact centroids (sigma = 0 test).

    Fields are deterministic there (lam_k = s·M_ka), the prediction is
    sign(logit), and a zero logit counts half an error, so the untrained
    network sits exactly at chance.
    """
    err = 0.0
    rtk = np.sqrt(state.k)
    for c in CLUSTERS:
        h = c.sign * state.m[:, c.axis - 1] + state.b
        logit = float(state.v @ np.maximum(h, 0.0)) / rtk
        if logit == 0.0:
            err += 0.5
        elif (logit > 0.0) != (c.label == 1):
            err += 1.0
    return err / 4.0


def coverage(state: OrderState, tau: float = DEFAULT_TAU) -> CoverageReport:
    """Count signed centroids owning at least one specialised neuron.

    Neuron k covers centroid s·mu_a iff its normalised alignment s·M_ka/√Q_kk
    (i) reaches tau, (ii) strictly exceeds its alignment with every other
    signed centroid, and (iii) v_k has the sign that pushes toward the
    centroid's class (positive for axis 1, negative for axis 2).
    """
    if tau <= 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    qd = np.diag(state.q)
    ok = qd > 0
    norm = np.sqrt(np.where(ok, qd, 1.0))
    # alignment table: rows = neurons, cols = signed centroids in CLUSTERS order
    align = np.stack(
        [c.sign * state.m[:, c.axis - 1] / norm for c in CLUSTERS], axis=1
    )
    align[~ok, :] = -np.inf
    best_of_neuron = align.max(axis=1)
    best_n, best_s = [], []
    covered = 0
    for j, c in enumerate(CLUSTERS):
        specialised = (
            (align[:, j] >= tau)
            & (align[:, j] >= best_of_neuron)
            & (align[:, j] > np.partition(align, -2, axis=1)[:, -2])
            & ((state.v > 0) if c.axis == 1 else (state.v < 0))
            & ok
        )
        if specialised.any():
            idx = int(np.argmax(np.where(specialised, align[:, j], -np.inf)))
            best_n.append(idx)
            best_s.append(float(align[idx, j]))
            covered += 1
        else:
            best_n.append(-1)
            best_s.append(float(align[ok, j].max()) if ok.any() else float("-inf"))
    return CoverageReport(
        covered=covered,
        best_neuron=tuple(best_n),
        best_score=tuple(best_s),
        tau=tau,
    )


def relevant_norms(state: OrderState) -> np.ndarray:
    """Per-neuron norm of the component inside the relevant manifold."""
    return np.sqrt((state.m**2).sum(axis=1))


def destabilisation(
    coverages_at_sigma, coverages_at_sigma_plus, sigma_from: float, sigma_to: float
) -> TransitionMatrix:
    """Seed-paired coverage-transition fractions between two noise levels."""
    a = np.asarray(coverages_at_sigma, dtype=int)
    b = np.asarray(coverages_at_sigma_plus, dtype=int)
    if a.shape != b.shape:
        raise ValueError("paired coverage lists must have the same length")
    mat = np.zeros((5, 5))
    counts = np.zeros(5, dtype=int)
    for i, j in zip(a, b):
        mat[i, j] += 1
        counts[i] += 1
    nz = counts > 0
    mat[nz] /= counts[nz, None]
    return TransitionMatrix(matrix=mat, counts=counts,
                            sigma_from=sigma_from, sigma_to=sigma_to)
