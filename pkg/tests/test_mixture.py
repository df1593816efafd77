import numpy as np
import pytest

from xgmsim import (CLUSTERS, ClusterId, MixtureSpec, OrderState, factorize,
                    field_moments, measure_order_params, sample_batch, sample_input)
from xgmsim.finite_net import FiniteNet


def test_zero_noise_draw_is_the_scaled_centroid(rng):
    spec = MixtureSpec(sigma=0.0, fading=1.0)
    s = sample_input(4, spec, rng, cluster=ClusterId(1, +1))
    assert np.allclose(s.input, [1, 0, 0, 0])
    assert s.label == 1

    spec3 = MixtureSpec(sigma=0.0, fading=3.0)
    s = sample_input(4, spec3, rng, cluster=ClusterId(2, -1))
    assert np.allclose(s.input, [0, -3, 0, 0])
    assert s.label == 0


def test_rejects_dimension_below_two(rng):
    with pytest.raises(ValueError):
        sample_input(1, MixtureSpec(sigma=0.1), rng)


def test_labels_follow_axis(rng):
    spec = MixtureSpec(sigma=0.5)
    for c in CLUSTERS:
        s = sample_input(8, spec, rng, cluster=c)
        assert s.label == (1 if c.axis == 1 else 0)
        assert s.fading_used == 1.0


def test_monte_carlo_moments_match_definition(rng):
    # d=1000, sigma=0.4, 1e5 draws from cluster (+,1)
    d, n, sigma = 1000, 100_000, 0.4
    spec = MixtureSpec(sigma=sigma)
    x = rng.standard_normal((n, d)) * sigma
    x[:, 0] += 1.0
    proj = x[:, 0]
    se_mean = sigma / np.sqrt(n)
    assert abs(proj.mean() - 1.0) < 3 * se_mean
    # per-coordinate variance near sigma^2 (spot-check a handful of axes)
    var_se = sigma**2 * np.sqrt(2.0 / (n - 1))
    for j in (0, 1, 499, 999):
        assert abs(x[:, j].var(ddof=1) - sigma**2) < 3.5 * var_se


def test_cluster_balance(rng):
    n = 40_000
    _, _, axes, signs = sample_batch(4, MixtureSpec(sigma=0.3), rng, n)
    for c in CLUSTERS:
        count = int(((axes == c.axis) & (signs == c.sign)).sum())
        spread = 3 * np.sqrt(n * 0.25 * 0.75)
        assert abs(count - n / 4) < spread


def _k1_state():
    return OrderState(q=[[1.0]], m=[[0.3, 0.4]], v=[1.0], b=[0.0])


def test_field_moments_direct_substitution():
    st = _k1_state()
    fm = field_moments(st, ClusterId(1, +1), MixtureSpec(sigma=0.5, fading=1.0))
    assert np.allclose(fm.mean, [0.3, 1.0, 0.0])
    expected_cov = 0.25 * np.array([[1.0, 0.3, 0.4], [0.3, 1, 0], [0.4, 0, 1]])
    assert np.allclose(fm.covariance, expected_cov)

    fm2 = field_moments(st, ClusterId(2, -1), MixtureSpec(sigma=0.5, fading=3.0))
    assert np.allclose(fm2.mean, [-1.2, 0.0, -3.0])
    assert np.allclose(fm2.covariance, expected_cov)  # fading never scales noise


def test_field_moments_zero_weights_are_deterministic():
    st = OrderState(q=np.zeros((2, 2)), m=np.zeros((2, 2)), v=[1.0, 1.0], b=[0.0, 0.0])
    fm = field_moments(st, ClusterId(1, +1), MixtureSpec(sigma=0.8))
    assert np.allclose(fm.mean[:2], 0)
    assert np.allclose(fm.covariance[:2, :2], 0)


def test_bridge_identity_samples_vs_moments(rng):
    # empirical moments of (W X, mu_1 X, mu_2 X) match field_moments
    d, n, sigma = 1000, 100_000, 0.4
    k = 3
    w = rng.standard_normal((k, d)) / np.sqrt(d)
    net = FiniteNet(w=w, b=np.zeros(k), v=np.ones(k))
    st = measure_order_params(net)
    spec = MixtureSpec(sigma=sigma, fading=1.0)
    cluster = ClusterId(2, -1)
    fm = field_moments(st, cluster, spec)

    x = rng.standard_normal((n, d)) * sigma
    x[:, cluster.axis - 1] += cluster.sign * spec.fading
    lam = np.concatenate([x @ w.T, x[:, :2]], axis=1)  # (n, K+2)
    emp_mean = lam.mean(axis=0)
    emp_cov = np.cov(lam.T, ddof=1)
    sd = np.sqrt(np.diag(fm.covariance))
    assert np.all(np.abs(emp_mean - fm.mean) < 4 * sd / np.sqrt(n) + 1e-12)
    # covariance entries fluctuate at ~ sd_i sd_j / sqrt(n)
    tol = 4 * np.outer(sd, sd) / np.sqrt(n) + 1e-12
    assert np.all(np.abs(emp_cov - fm.covariance) < tol)


def test_cholesky_reconstruction_of_exact_gram(rng):
    g = rng.standard_normal((6, 3))
    c = g @ g.T
    fac = factorize(c)
    assert fac.jitter <= 1e-8
    recon = fac.factor @ fac.factor.T
    assert np.abs(recon - c).max() < 1e-10 * (1 + np.abs(c).max())
