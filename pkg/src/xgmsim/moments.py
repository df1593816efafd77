"""Monte-Carlo estimation of the drift/diffusion expectations A, B, D, E.

For a state with K neurons the local fields are (K+2)-dimensional Gaussians
(one mean per cluster, shared covariance sigma^2·Gram).  With
``Delta = y − sigmoid(logit)`` the estimator averages, uniformly over the
four clusters,

    A[k, i] = E[ lam_i · g'(lam_k + b_k) · Delta ]        (K, K+2)
    B[k, l] = sigma^2 · E[ g'(lam_k+b_k) g'(lam_l+b_l) · Delta^2 ]
    D[k]    = E[ g(lam_k + b_k) · Delta ]
    E[k]    = E[ g'(lam_k + b_k) · Delta ]

where rows of A index the rectifier slot and columns the field.  One shared
batch of antithetic field draws feeds all four tables (common random
numbers), with equal allocation over the clusters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .finite_net import sigmoid
from .mixture import CLUSTERS, MixtureSpec, field_means_all_clusters
from .state import NonRealisableState, OrderState

#: Labels of the four clusters in CLUSTERS order.
_CLUSTER_LABELS = np.array([c.label for c in CLUSTERS], dtype=float)

#: First nonzero jitter rung tried when the caller passes base_jitter = 0.
_JITTER_FLOOR = 1e-12


@dataclass(frozen=True)
class FactorizedCovariance:
    """Lower-triangular factor of a (possibly jittered) field covariance."""

    factor: np.ndarray
    jitter: float


@dataclass
class ExpectationSet:
    a: np.ndarray  # (K, K+2)
    b: np.ndarray  # (K, K)
    d: np.ndarray  # (K,)
    e: np.ndarray  # (K,)
    n_samples: int
    jitter: float = 0.0
    a_se: np.ndarray | None = None
    b_se: np.ndarray | None = None
    d_se: np.ndarray | None = None
    e_se: np.ndarray | None = None

    def finite(self) -> bool:
        return bool(
            np.isfinite(self.a).all() and np.isfinite(self.b).all()
            and np.isfinite(self.d).all() and np.isfinite(self.e).all()
        )


def _chol_jittered(c: np.ndarray, base_jitter: float) -> FactorizedCovariance:
    """Jitter-escalation core of factorize, without the symmetry check."""
    n = c.shape[0]
    cap = max(1e-4 * float(np.trace(c)) / n, _JITTER_FLOOR)
    jit = base_jitter
    while True:
        try:
            if jit > 0:
                cj = c.copy()
                cj.flat[:: n + 1] += jit
            else:
                cj = c
            return FactorizedCovariance(factor=np.linalg.cholesky(cj), jitter=jit)
        except np.linalg.LinAlgError:
            if jit >= cap:
                raise NonRealisableState(
                    f"covariance not factorisable with jitter up to {cap:.3e}"
                ) from None
            jit = min(_JITTER_FLOOR if jit == 0 else jit * 10.0, cap)


def factorize(c: np.ndarray, base_jitter: float = 0.0) -> FactorizedCovariance:
    """Cholesky factor of a symmetric PSD matrix, with escalating jitter.

    Tries ``base_jitter`` first (0 means a plain factorisation), then escalates
    geometrically by 10 up to 1e-4·trace/dim.  Raises NonRealisableState if the
    largest allowed jitter still fails — the matrix is then meaningfully
    indefinite, not just degenerate.
    """
    c = np.asarray(c, dtype=float)
    if not np.allclose(c, c.T, atol=1e-12 * max(1.0, float(np.abs(c).max(initial=0.0)))):
        raise ValueError("covariance must be symmetric")
    return _chol_jittered(c, base_jitter)


class _Workspace:
    """Reusable per-shape scratch arrays for the estimator hot path."""

    def __init__(self, n8: int, k: int):
        n = 8 * n8
        self.n8 = n8
        self.k = k
        self.fields = np.empty((n, k + 2))
        self.labels = np.empty(n)
        npc = 2 * n8
        for c in range(4):
            self.labels[c * npc:(c + 1) * npc] = _CLUSTER_LABELS[c]
        self.act = np.empty((n, k))
        self.gp = np.empty((n, k))
        self.delta = np.empty(n)
        self.scratch = np.empty(n)
        self.wgp = np.empty((n, k))
        self.wact = np.empty((n, k))


_WORKSPACES: dict[tuple[int, int], _Workspace] = {}


def _workspace(n8: int, k: int) -> _Workspace:
    ws = _WORKSPACES.get((n8, k))
    if ws is None:
        ws = _Workspace(n8, k)
        if len(_WORKSPACES) > 8:
            _WORKSPACES.clear()
        _WORKSPACES[(n8, k)] = ws
    return ws


def _sampling_root(c: np.ndarray) -> tuple[np.ndarray, float]:
    """Square root of a field covariance for sampling.

    Plain Cholesky when the matrix is numerically PD.  Degenerate or slightly
    indefinite covariances fall back to an eigenvalue root with negatives
    clipped, which keeps exactly-degenerate field directions exactly
    noise-free (a zero-weight network must see zero pre-activations, not
    jitter).  Returns (root, repaired), where ``repaired`` is the clipped
    negative mass; raises beyond the same cap factorize uses.
    """
    try:
        return np.linalg.cholesky(c), 0.0
    except np.linalg.LinAlgError:
        pass
    n = c.shape[0]
    evals, evecs = np.linalg.eigh(0.5 * (c + c.T))
    neg = max(0.0, -float(evals[0]))
    cap = max(1e-4 * float(np.trace(c)) / n, _JITTER_FLOOR)
    if neg > cap:
        raise NonRealisableState(
            f"field covariance indefinite beyond tolerance ({neg:.3e} > {cap:.3e})"
        )
    return evecs * np.sqrt(np.clip(evals, 0.0, None)), neg


def _field_batch(state, spec, n_samples, rng, base_normals=None):
    """Antithetic field draws for the four clusters, stacked flat.

    Returns (fields (n_eff, K+2), labels (n_eff,), n_eff, repaired); n_samples
    is rounded up to a multiple of 8 (4 clusters x antithetic pairs), and one
    base normal block is shared by all clusters (common random numbers).
    ``base_normals`` substitutes a pre-drawn (n/8, K+2) block for the fresh
    draw, letting a caller reuse one block across many calls.
    The fields array lives in a reused workspace: consume before the next call.
    """
    k2 = state.k + 2
    root, repaired = _sampling_root(spec.sigma**2 * state.gram())
    n8 = max(1, -(-n_samples // 8))
    npc = 2 * n8
    if base_normals is None:
        base_normals = rng.standard_normal((n8, k2))
    noise = base_normals @ root.T
    means = field_means_all_clusters(state, spec)  # (4, K+2)
    ws = _workspace(n8, state.k)
    fields = ws.fields
    for c in range(4):
        blk = fields[c * npc:(c + 1) * npc]
        np.add(means[c], noise, out=blk[:n8])
        np.subtract(means[c], noise, out=blk[n8:])
    return fields, ws.labels, 4 * npc, repaired


def estimate_expectations(
    state: OrderState,
    spec: MixtureSpec,
    n_samples: int,
    rng: np.random.Generator,
    with_errors: bool = False,
    base_normals=None,
) -> ExpectationSet:
    """Estimate A, B, D, E at the given state and mixture parameters.

    n_samples is split equally over the four clusters and drawn as antithetic
    pairs about each cluster mean, reusing one base normal block for all
    clusters.  Standard errors (pooled, slightly conservative under the
    stratification) are attached when with_errors is set.  Passing
    ``base_normals`` freezes the underlying draw (see dynamics.integrate).
    """
    k = state.k
    fields, labels, n_eff, jitter = _field_batch(state, spec, n_samples, rng,
                                                 base_normals)
    ws = _workspace(n_eff // 8, k)
    act, gp, wgp, wact = ws.act, ws.gp, ws.wgp, ws.wact
    np.add(fields[:, :k], state.b, out=act)          # pre-activations
    np.sign(act, out=gp)
    np.maximum(gp, 0.0, out=gp)                      # g'(h), g'(0) = 0
    np.maximum(act, 0.0, out=act)                    # g(h)
    logit = act @ state.v
    logit *= 1.0 / np.sqrt(k)
    delta = ws.delta
    # Delta = y - sigmoid(logit), via sigmoid(x) = (1 + tanh(x/2))/2
    np.multiply(logit, 0.5, out=delta)
    np.tanh(delta, out=delta)
    delta *= -0.5
    delta += labels
    delta -= 0.5
    np.multiply(gp, delta[:, None], out=wgp)
    np.multiply(act, delta[:, None], out=wact)

    a = wgp.T @ fields
    a *= 1.0 / n_eff
    b = wgp.T @ wgp
    b *= spec.sigma**2 / n_eff
    d = wact.mean(axis=0)
    e = wgp.mean(axis=0)
    exps = ExpectationSet(a=a, b=b, d=d, e=e, n_samples=n_eff, jitter=jitter)

    if with_errors:
        rt = np.sqrt(n_eff)
        # gp is 0/1, so (gp·Delta)^2 = gp·Delta^2 gives the squared integrands.
        a2 = (wgp**2).T @ (fields**2) / n_eff
        exps.a_se = np.sqrt(np.clip(a2 - a**2, 0.0, None) / n_eff)
        gpd2 = gp * (delta**2)[:, None]
        b2 = spec.sigma**4 * (gpd2.T @ gpd2) / n_eff
        exps.b_se = np.sqrt(np.clip(b2 - b**2, 0.0, None) / n_eff)
        exps.d_se = wact.std(axis=0) / rt
        exps.e_se = wgp.std(axis=0) / rt
    return exps
