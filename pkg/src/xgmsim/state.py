"""Order-parameter state and its initialisers.

An OrderState is the macroscopic description of the 2-layer learner:
``Q = W W^T`` (neuron overlaps), ``M = W [mu_1 mu_2]`` (neuron/centroid
alignments), second-layer weights ``v``, biases ``b``, and the static
centroid Gram ``T`` (identity).  A state is realisable by some finite
weight matrix iff the stacked Gram ``[[Q, M], [M^T, T]]`` is PSD.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

#: PSD slack tolerated when validating freshly constructed states.
GRAM_JITTER = 1e-8


class NonRealisableState(ValueError):
    """Raised when a state's stacked Gram matrix is not PSD within tolerance."""


@dataclass
class OrderState:
    q: np.ndarray  # (K, K) symmetric
    m: np.ndarray  # (K, 2)
    v: np.ndarray  # (K,)
    b: np.ndarray  # (K,)
    t: np.ndarray = field(default_factory=lambda: np.eye(2))

    def __post_init__(self):
        self.q = np.array(self.q, dtype=float)
        self.m = np.array(self.m, dtype=float)
        self.v = np.array(self.v, dtype=float)
        self.b = np.array(self.b, dtype=float)
        self.t = np.array(self.t, dtype=float)
        k = self.q.shape[0]
        if self.q.shape != (k, k):
            raise ValueError(f"Q must be square, got {self.q.shape}")
        if self.m.shape != (k, 2):
            raise ValueError(f"M must be (K, 2), got {self.m.shape}")
        if self.v.shape != (k,) or self.b.shape != (k,):
            raise ValueError("v and b must be length-K vectors")
        if self.t.shape != (2, 2):
            raise ValueError(f"T must be 2x2, got {self.t.shape}")

    @property
    def k(self) -> int:
        return self.q.shape[0]

    def gram(self) -> np.ndarray:
        """Stacked (K+2)x(K+2) Gram matrix [[Q, M], [M^T, T]]."""
        k = self.q.shape[0]
        g = np.empty((k + 2, k + 2))
        g[:k, :k] = self.q
        g[:k, k:] = self.m
        g[k:, :k] = self.m.T
        g[k:, k:] = self.t
        return g

    def copy(self) -> "OrderState":
        return OrderState(self.q.copy(), self.m.copy(), self.v.copy(),
                          self.b.copy(), self.t.copy())

    def gram_violation(self) -> float:
        """Most negative eigenvalue of the stacked Gram, as a positive slack.

        0 means exactly PSD; values above the allowed jitter mean the state
        is not realisable by any finite weight matrix.
        """
        w = np.linalg.eigvalsh(0.5 * (self.gram() + self.gram().T))
        return max(0.0, -float(w[0]))

    def validate(self, jitter: float = GRAM_JITTER) -> None:
        if not np.allclose(self.q, self.q.T, atol=1e-10):
            raise NonRealisableState("Q is not symmetric")
        v = self.gram_violation()
        if v > jitter:
            raise NonRealisableState(f"stacked Gram is not PSD (violation {v:.3e})")

    def flat(self) -> np.ndarray:
        """Row-major Q, then row-major M, then v, then b."""
        return np.concatenate([self.q.ravel(), self.m.ravel(), self.v, self.b])


def schur_violation(state: OrderState) -> float:
    """Most negative eigenvalue of Q − M Mᵀ, as a positive slack.

    With T = I this is an exact realisability test: the stacked Gram is PSD
    iff the Schur complement Q − M Mᵀ is.
    """
    r = state.q - state.m @ state.m.T
    w = np.linalg.eigvalsh(0.5 * (r + r.T))
    return max(0.0, -float(w[0]))


def project_realisable(state: OrderState) -> OrderState:
    """Nearest realisable state with the same M: clip Q − M Mᵀ to PSD.

    A no-op (same object) for states already inside the cone.  Used by the
    integrator when boundary-riding dynamics (perfect alignment at small
    noise, controlled initialisations) overshoot the cone by an Euler step.
    """
    mmT = state.m @ state.m.T
    r = state.q - mmT
    r = 0.5 * (r + r.T)
    evals, evecs = np.linalg.eigh(r)
    if evals[0] >= 0.0:
        return state
    rp = (evecs * np.clip(evals, 0.0, None)) @ evecs.T
    q = mmT + rp
    return OrderState(q=0.5 * (q + q.T), m=state.m, v=state.v, b=state.b, t=state.t)


@dataclass(frozen=True)
class NeuronGeometry:
    """Position of one neuron relative to the relevant manifold.

    rho : fraction of the squared norm lying in span(mu_1, mu_2)
    theta : in-manifold angle to the target centroid, folded into [0, pi]
    """

    rho: float
    theta: float


def random_init(k: int, d0: int, rng: np.random.Generator) -> OrderState:
    """Order parameters of a freshly initialised width-k network in dimension d0.

    First-layer entries are N(0, 1/d0) so Q_kk concentrates at 1; v is standard
    Gaussian; b = 0.  The finite d0 leaves O(1/sqrt(d0)) fluctuations in M that
    seed which coverage basin the dynamics falls into.
    """
    if d0 < 2:
        raise ValueError(f"d0 must be >= 2, got {d0}")
    if d0 < 10 * k:
        raise ValueError(f"d0 must be >= 10*K to stay in the realisable regime "
                         f"(got d0={d0}, K={k})")
    w = rng.standard_normal((k, d0)) / np.sqrt(d0)
    v = rng.standard_normal(k)
    q = w @ w.T
    m = w[:, :2].copy()
    return OrderState(q=q, m=m, v=v, b=np.zeros(k))


def aligned_state_with_free_neuron(
    m1: tuple[float, float], rho1: float, v_signs: tuple[int, ...] = (1, 1, -1, -1)
) -> OrderState:
    """K=4 state with neurons 2..4 pinned to -mu_1, +mu_2, -mu_2 at unit norm.

    Neuron 1 has manifold alignment ``m1 = (M_11, M_12)`` and manifold mass
    ``rho1``, so Q_11 = |m1|^2 / rho1 (or 1 when m1 = 0, i.e. fully
    off-manifold).  Its off-manifold component is orthogonal to every other
    neuron, which is the maximum-entropy completion of the Gram matrix.
    """
    m11, m12 = float(m1[0]), float(m1[1])
    r2 = m11**2 + m12**2
    if rho1 > 0 and r2 > 0:
        q11 = r2 / rho1
    elif r2 == 0:
        q11 = 1.0  # fully off-manifold free neuron of unit norm
    else:
        raise ValueError("rho1 = 0 is incompatible with a nonzero manifold alignment")
    m = np.array([[m11, m12], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    q = m @ m.T
    np.fill_diagonal(q, [q11, 1.0, 1.0, 1.0])
    v = np.array(v_signs, dtype=float)
    return OrderState(q=q, m=m, v=v, b=np.zeros(4))


def controlled_init(theta1: float, rho1: float) -> OrderState:
    """Controlled K=4 setup: 3 neurons pre-aligned, neuron 1 parameterised.

    Neuron 1 has unit norm, manifold mass rho1 and in-manifold angle theta1 to
    the left-out centroid +mu_1: M_1 = sqrt(rho1)·(cos theta1, sin theta1).
    Second-layer signs are (+1, +1, -1, -1) so axis-1 units push toward class 1
    and axis-2 units toward class 0.
    """
    if not 0.0 <= theta1 <= np.pi:
        raise ValueError(f"theta1 must lie in [0, pi], got {theta1}")
    if not 0.0 <= rho1 <= 1.0:
        raise ValueError(f"rho1 must lie in [0, 1], got {rho1}")
    r = np.sqrt(rho1)
    state = aligned_state_with_free_neuron(
        (r * np.cos(theta1), r * np.sin(theta1)), rho1 if rho1 > 0 else 0.0
    )
    state.q[0, 0] = 1.0
    return state


def neuron_geometry(state: OrderState, k: int, target_axis: int) -> NeuronGeometry:
    """(rho, theta) of neuron k relative to the centroid on target_axis.

    theta folds the sign of the orthogonal in-manifold component, because the
    task is invariant under relabelling mu_2 -> -mu_2 within a class.
    """
    qkk = state.q[k, k]
    if qkk <= 0:
        raise ValueError(f"neuron {k} has Q_kk = {qkk}; geometry undefined")
    mrow = state.m[k]
    rho = float(mrow @ mrow) / qkk
    along = mrow[target_axis - 1]
    orth = abs(mrow[2 - target_axis])
    theta = float(np.arctan2(orth, along))
    return NeuronGeometry(rho=rho, theta=theta)


def embed_state(state: OrderState, d: int, rng: np.random.Generator | None = None):
    """Explicit K x d weight matrix realising the state's Q and M exactly.

    Rows are M_k1·e_1 + M_k2·e_2 plus an off-manifold factor of Q − M M^T
    spread over coordinates 3..K+2.  Requires d >= K + 2.
    """
    k = state.k
    if d < k + 2:
        raise ValueError(f"need d >= K+2 = {k + 2} to embed, got {d}")
    resid = state.q - state.m @ state.m.T
    resid = 0.5 * (resid + resid.T)
    evals, evecs = np.linalg.eigh(resid)
    evals = np.clip(evals, 0.0, None)
    s = evecs * np.sqrt(evals)
    w = np.zeros((k, d))
    w[:, :2] = state.m
    w[:, 2:2 + k] = s
    return w
