"""Finite-dimensional 2-layer rectifier network and its one-pass SGD step.

This is the ground-truth learner the ODE description is checked against:
``logit = (1/sqrt(K)) sum_k v_k g(W_k·X + b_k)`` with g = max(0, ·), trained
by plain gradient descent on the per-sample cross-entropy.  The rectifier
subgradient at 0 is taken as 0, which makes the all-zero network an exact
fixed point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mixture import Sample
from .state import OrderState


def sigmoid(x):
    """Branch-stable logistic function; no overflow for any float input."""
    x = np.asarray(x, dtype=float)
    ex = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + ex), ex / (1.0 + ex))
    return out if out.ndim else float(out)


def cross_entropy(y, logit):
    """-y·logit + softplus(logit), evaluated without overflow.

    Finite and accurate out to |logit| far beyond 1e3; for a saturated correct
    prediction the value underflows gracefully toward 0.
    """
    y = np.asarray(y, dtype=float)
    z = np.asarray(logit, dtype=float)
    # softplus(z) = max(z, 0) + log1p(exp(-|z|))
    sp = np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))
    out = sp - y * z
    return out if out.ndim else float(out)


@dataclass
class SgdConfig:
    """Per-sample step size and first-layer L2 strength.

    eta_tilde is applied literally as the step size multiplying the sample
    gradient; callers emulating the high-dimensional limit pass the rescaled
    value (see harness.sgd_reference_run).
    """

    eta_tilde: float
    weight_decay: float = 0.0
    decay_both_layers: bool = False

    def __post_init__(self):
        if self.eta_tilde <= 0:
            raise ValueError(f"eta_tilde must be > 0, got {self.eta_tilde}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")


@dataclass
class FiniteNet:
    w: np.ndarray  # (K, d)
    b: np.ndarray  # (K,)
    v: np.ndarray  # (K,)

    def __post_init__(self):
        self.w = np.array(self.w, dtype=float)
        self.b = np.array(self.b, dtype=float)
        self.v = np.array(self.v, dtype=float)
        if self.w.ndim != 2:
            raise ValueError("W must be a K x d matrix")
        k = self.w.shape[0]
        if self.b.shape != (k,) or self.v.shape != (k,):
            raise ValueError("b and v must be length-K vectors")

    @property
    def k(self) -> int:
        return self.w.shape[0]

    @property
    def d(self) -> int:
        return self.w.shape[1]

    def copy(self) -> "FiniteNet":
        return FiniteNet(self.w.copy(), self.b.copy(), self.v.copy())


def init_net(k: int, d: int, rng: np.random.Generator) -> FiniteNet:
    """Typical-scaling initialisation: W entries N(0, 1/d), v ~ N(0,1), b = 0.

    The 1/sqrt(d) weight scale puts Q_kk near 1 so pre-activations are O(1).
    """
    if d < 2:
        raise ValueError(f"d must be >= 2, got {d}")
    w = rng.standard_normal((k, d)) / np.sqrt(d)
    v = rng.standard_normal(k)
    return FiniteNet(w=w, b=np.zeros(k), v=v)


def forward(net: FiniteNet, x: np.ndarray) -> float:
    """logit = (1/sqrt(K)) sum_k v_k g(W_k·x + b_k)."""
    h = net.w @ x + net.b
    return float(net.v @ np.maximum(h, 0.0)) / np.sqrt(net.k)


def loss(y: int, logit: float) -> float:
    """Cross-entropy of a single prediction; see cross_entropy."""
    return float(cross_entropy(y, logit))


def sgd_step(net: FiniteNet, sample: Sample, cfg: SgdConfig) -> FiniteNet:
    """One gradient-descent step on the per-sample cross-entropy, in place.

    With error signal Delta = y - sigmoid(logit) and eta = cfg.eta_tilde:
      W_k += eta·Delta·v_k·g'(h_k)·X − eta·wd·W_k
      b_k += eta·Delta·v_k·g'(h_k)
      v_k += eta·Delta·g(h_k)
    which is plain SGD at overall rate eta·sqrt(K) on the 1/sqrt(K)-scaled
    output; the sign strictly decreases the loss to first order.
    """
    x = sample.input
    h = net.w @ x + net.b
    act = np.maximum(h, 0.0)
    gp = (h > 0).astype(float)
    logit = float(net.v @ act) / np.sqrt(net.k)
    delta = sample.label - sigmoid(logit)
    eta = cfg.eta_tilde
    coef = eta * delta * net.v * gp
    net.w += coef[:, None] * x[None, :]
    net.b += coef
    net.v += eta * delta * act
    if cfg.weight_decay > 0:
        net.w -= eta * cfg.weight_decay * net.w
        if cfg.decay_both_layers:
            net.v -= eta * cfg.weight_decay * net.v
    return net


def measure_order_params(net: FiniteNet, centroids: np.ndarray | None = None) -> OrderState:
    """Read the order parameters off explicit weights: Q = W W^T, M = W·mu.

    centroids defaults to the task's basis-aligned pair (e_1, e_2), passed as
    a (2, d) array of orthonormal rows otherwise.
    """
    if centroids is None:
        m = net.w[:, :2].copy()
    else:
        mu = np.asarray(centroids, dtype=float)
        if mu.shape != (2, net.d):
            raise ValueError(f"centroids must be (2, d) = (2, {net.d})")
        if not np.allclose(mu @ mu.T, np.eye(2), atol=1e-10):
            raise ValueError("centroids must be orthonormal")
        m = net.w @ mu.T
    return OrderState(q=net.w @ net.w.T, m=m, v=net.v.copy(), b=net.b.copy())
