import numpy as np
import pytest

from xgmsim import (MixtureSpec, NonRealisableState, OrderState,
                    estimate_expectations, factorize)
from oracle_utils import abs_normal_mean, quad_expectations_k1

PILOT = OrderState(q=[[1.0]], m=[[0.5, 0.0]], v=[1.0], b=[0.0])
SPEC = MixtureSpec(sigma=0.4)


class TestFactorize:
    def test_identity_needs_no_jitter(self):
        fac = factorize(np.eye(3))
        assert np.allclose(fac.factor, np.eye(3))
        assert fac.jitter == 0.0

    def test_zero_matrix_gets_sqrt_jitter_identity(self):
        fac = factorize(np.zeros((3, 3)))
        assert fac.jitter > 0
        assert np.allclose(fac.factor, np.sqrt(fac.jitter) * np.eye(3))

    def test_rank_deficient_gram(self, rng):
        g = rng.standard_normal((6, 3))
        c = g @ g.T
        fac = factorize(c)
        assert fac.jitter <= 1e-8
        assert np.abs(fac.factor @ fac.factor.T - c).max() < 1e-10 * (1 + c.max())

    def test_asymmetric_input_rejected(self):
        c = np.array([[1.0, 0.5], [0.0, 1.0]])
        with pytest.raises(ValueError):
            factorize(c)

    def test_indefinite_matrix_fails_permanently(self):
        c = np.diag([1.0, -0.5])
        with pytest.raises(NonRealisableState):
            factorize(c)


class TestDegenerateStates:
    def test_zero_state_gives_exact_zeros(self, rng):
        st = OrderState(q=np.zeros((3, 3)), m=np.zeros((3, 2)),
                        v=np.array([1.0, -2.0, 0.5]), b=np.zeros(3))
        e = estimate_expectations(st, MixtureSpec(sigma=0.7), 4000, rng)
        assert np.all(e.a == 0) and np.all(e.b == 0)
        assert np.all(e.d == 0) and np.all(e.e == 0)

    def test_v_zero_b_zero_matches_closed_forms(self, rng):
        # logit == 0 so Delta = y - 1/2; D and the B diagonal follow closed forms
        st = OrderState(q=[[1.0]], m=[[0.5, 0.0]], v=[0.0], b=[0.0])
        sig = 0.4
        e = estimate_expectations(st, MixtureSpec(sigma=sig), 2_000_000, rng,
                                  with_errors=True)
        d_expected = (abs_normal_mean(0.5, sig) - abs_normal_mean(0.0, sig)) / 8.0
        assert abs(e.d[0] - d_expected) < 4 * e.d_se[0]
        # B_11 = sigma^2/4 * mean over clusters of P(field > 0)
        from math import erf, sqrt
        p_pos = 0.0
        for mean in (0.5, -0.5, 0.0, 0.0):
            p_pos += 0.5 * (1 + erf(mean / (sig * sqrt(2)))) / 4
        b_expected = sig**2 * 0.25 * p_pos
        assert abs(e.b[0, 0] - b_expected) < 4 * e.b_se[0, 0]

    def test_m_zero_state_has_vanishing_d(self, rng):
        st = OrderState(q=[[1.0]], m=[[0.0, 0.0]], v=[0.0], b=[0.0])
        e = estimate_expectations(st, SPEC, 1_000_000, rng, with_errors=True)
        assert abs(e.d[0]) < 3 * e.d_se[0] + 1e-12


class TestAgainstQuadratureOracle:
    def test_pilot_state_all_tables(self, rng):
        qa, qb, qd, qe = quad_expectations_k1(PILOT, SPEC)
        qa2, qb2, qd2, qe2 = quad_expectations_k1(PILOT, SPEC, n1=80, n23=140)
        quad_err = max(np.abs(qa - qa2).max(), np.abs(qb - qb2).max(),
                       np.abs(qd - qd2).max(), np.abs(qe - qe2).max())
        e = estimate_expectations(PILOT, SPEC, 1_000_000, rng, with_errors=True)
        assert np.all(np.abs(e.a - qa) < 4 * e.a_se + quad_err)
        assert np.all(np.abs(e.b - qb) < 4 * e.b_se + quad_err)
        assert np.all(np.abs(e.d - qd) < 4 * e.d_se + quad_err)
        assert np.all(np.abs(e.e - qe) < 4 * e.e_se + quad_err)

    def test_faded_pilot_state(self, rng):
        spec = MixtureSpec(sigma=0.4, fading=3.0)
        qa, qb, qd, qe = quad_expectations_k1(PILOT, spec)
        e = estimate_expectations(PILOT, spec, 1_000_000, rng, with_errors=True)
        assert np.all(np.abs(e.a - qa) < 4 * e.a_se + 1e-10)
        assert np.all(np.abs(e.b - qb) < 4 * e.b_se + 1e-10)
        assert np.all(np.abs(e.d - qd) < 4 * e.d_se + 1e-10)
        assert np.all(np.abs(e.e - qe) < 4 * e.e_se + 1e-10)


class TestEstimatorStatistics:
    def test_standard_errors_shrink_like_sqrt_n(self, rng):
        ses = []
        for n in (10_000, 40_000, 160_000):
            e = estimate_expectations(PILOT, SPEC, n, rng, with_errors=True)
            ses.append(float(e.a_se[0, 1]))
        assert ses[0] / ses[1] == pytest.approx(2.0, rel=0.15)
        assert ses[1] / ses[2] == pytest.approx(2.0, rel=0.15)

    def test_neuron_permutation_symmetry(self, rng):
        q = np.array([[1.0, 0.2], [0.2, 1.5]])
        m = np.array([[0.3, 0.1], [-0.2, 0.4]])
        st = OrderState(q=q, m=m, v=[1.0, -0.5], b=[0.1, -0.2])
        perm = [1, 0]
        stp = OrderState(q=q[np.ix_(perm, perm)], m=m[perm],
                         v=np.array([1.0, -0.5])[perm],
                         b=np.array([0.1, -0.2])[perm])
        e1 = estimate_expectations(st, SPEC, 400_000, rng, with_errors=True)
        e2 = estimate_expectations(stp, SPEC, 400_000, rng, with_errors=True)
        tol_a = 5 * np.sqrt(e1.a_se**2 + e2.a_se[perm][:, [1, 0, 2, 3]]**2) + 1e-9
        assert np.all(np.abs(e1.a - e2.a[perm][:, [1, 0, 2, 3]]) < tol_a)
        tol_d = 5 * np.sqrt(e1.d_se**2 + e2.d_se[perm]**2) + 1e-9
        assert np.all(np.abs(e1.d - e2.d[perm]) < tol_d)

    def test_sigma_scaling_of_b_at_the_zero_mean_state(self, rng):
        # with v = 0, b = 0 and M = 0 the B integrand decouples:
        # B_11(c*sigma) = c^2 * B_11(sigma) exactly in expectation
        st = OrderState(q=[[1.0]], m=[[0.0, 0.0]], v=[0.0], b=[0.0])
        e1 = estimate_expectations(st, MixtureSpec(sigma=0.3), 500_000, rng,
                                   with_errors=True)
        e2 = estimate_expectations(st, MixtureSpec(sigma=0.6), 500_000, rng,
                                   with_errors=True)
        ratio = e2.b[0, 0] / e1.b[0, 0]
        assert ratio == pytest.approx(4.0, rel=0.05)

    def test_b_is_symmetric_and_finite(self, rng):
        st = OrderState(q=np.eye(3), m=np.zeros((3, 2)),
                        v=[1.0, -1.0, 0.5], b=[0.0, 0.1, -0.1])
        e = estimate_expectations(st, SPEC, 50_000, rng)
        assert np.abs(e.b - e.b.T).max() < 1e-15
        assert e.finite()
