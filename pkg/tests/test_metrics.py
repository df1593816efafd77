import numpy as np
import pytest

from xgmsim import (MixtureSpec, OrderState, controlled_init, coverage,
                    destabilisation, embed_state, population_loss, relevant_norms,
                    zero_noise_error)
from xgmsim.finite_net import FiniteNet, cross_entropy, forward
from xgmsim.mixture import sample_batch


def ideal_state():
    # one correctly signed unit-norm neuron per signed centroid
    return controlled_init(0.0, 1.0)


def zero_state(k=4):
    return OrderState(q=np.zeros((k, k)), m=np.zeros((k, 2)),
                      v=np.ones(k), b=np.zeros(k))


class TestPopulationLoss:
    def test_zero_state_is_chance(self, rng):
        ls, se = population_loss(zero_state(), MixtureSpec(sigma=0.4), 4000, rng)
        assert ls == pytest.approx(np.log(2), abs=1e-12)
        assert se < 1e-15

    def test_ideal_configuration_beats_chance_at_zero_noise(self, rng):
        ls, _ = population_loss(ideal_state(), MixtureSpec(sigma=0.0), 4000, rng)
        assert ls < np.log(2)

    def test_training_fading_never_leaks_into_evaluation(self, rng):
        st = ideal_state()
        l1, _ = population_loss(st, MixtureSpec(sigma=0.3, fading=1.0), 100_000,
                                np.random.default_rng(0))
        l3, _ = population_loss(st, MixtureSpec(sigma=0.3, fading=3.0), 100_000,
                                np.random.default_rng(0))
        assert l1 == l3

    def test_matches_finite_dimensional_average(self, rng):
        d, n = 4000, 100_000
        st = controlled_init(np.pi / 3, 0.5)
        spec = MixtureSpec(sigma=0.5)
        ls, se = population_loss(st, spec, 400_000, rng)
        net = FiniteNet(w=embed_state(st, d), b=st.b, v=st.v)
        x, y, _, _ = sample_batch(d, spec, rng, n)
        h = x @ net.w.T + net.b
        logits = np.maximum(h, 0.0) @ net.v / np.sqrt(st.k)
        emp = cross_entropy(y.astype(float), logits)
        comb = np.sqrt(se**2 + (emp.std() / np.sqrt(n))**2)
        assert abs(ls - emp.mean()) < 4 * comb


class TestZeroNoiseError:
    def test_zero_state_sits_at_chance(self):
        assert zero_noise_error(zero_state()) == 0.5

    def test_ideal_configuration_is_perfect(self):
        assert zero_noise_error(ideal_state()) == 0.0

    def test_half_covered_network(self):
        # covers only the class-1 centroids; class-0 logits are 0 -> half wrong
        st = OrderState(q=np.eye(2), m=[[1.0, 0.0], [-1.0, 0.0]],
                        v=[1.0, 1.0], b=[0.0, 0.0])
        assert zero_noise_error(st) == 0.25

    def test_values_live_on_the_eighths_grid(self, rng):
        for _ in range(200):
            k = int(rng.integers(1, 6))
            m = rng.standard_normal((k, 2))
            q = m @ m.T + np.diag(rng.uniform(0.1, 2, k))
            st = OrderState(q=q, m=m, v=rng.standard_normal(k),
                            b=rng.standard_normal(k) * 0.5)
            err = zero_noise_error(st)
            assert err in {i / 8 for i in range(9)}


class TestCoverage:
    def test_ideal_reaches_full_coverage(self):
        rep = coverage(ideal_state(), tau=0.5)
        assert rep.covered == 4
        assert -1 not in rep.best_neuron

    def test_zero_state_covers_nothing(self):
        assert coverage(zero_state(), tau=0.5).covered == 0

    def test_redundant_neurons_do_not_add_coverage(self):
        # two neurons specialised to +mu_1, rest off-manifold
        q = np.eye(4)
        m = np.array([[0.9, 0.0], [0.8, 0.0], [0.0, 0.0], [0.0, 0.0]])
        q[0, 1] = q[1, 0] = 0.72
        st = OrderState(q=q, m=m, v=[1.0, 1.0, -1.0, -1.0], b=np.zeros(4))
        assert coverage(st, tau=0.5).covered == 1

    def test_wrong_second_layer_sign_disqualifies(self):
        st = ideal_state()
        st.v[:] = [-1.0, -1.0, 1.0, 1.0]  # anti-signed everywhere
        assert coverage(st, tau=0.5).covered == 0

    def test_monotone_in_tau(self, rng):
        for _ in range(100):
            k = int(rng.integers(1, 8))
            m = rng.standard_normal((k, 2)) * 0.7
            q = m @ m.T + np.diag(rng.uniform(0.05, 2, k))
            st = OrderState(q=q, m=m, v=rng.standard_normal(k), b=np.zeros(k))
            taus = [0.1, 0.3, 0.5, 0.7, 0.9]
            counts = [coverage(st, tau).covered for tau in taus]
            assert all(a >= b for a, b in zip(counts, counts[1:]))

    def test_scale_invariance(self, rng):
        for _ in range(50):
            st = controlled_init(float(rng.uniform(0, np.pi)),
                                 float(rng.uniform(0.2, 1.0)))
            rep0 = coverage(st, 0.5)
            c = float(rng.uniform(0.2, 5.0))
            st.m[0] *= c
            st.q[0, 0] *= c**2
            st.q[0, 1:] *= c
            st.q[1:, 0] *= c
            assert coverage(st, 0.5).covered == rep0.covered

    def test_tau_must_be_positive(self):
        with pytest.raises(ValueError):
            coverage(ideal_state(), tau=0.0)


class TestRelevantNorms:
    def test_examples(self):
        st = OrderState(q=[[4.0]], m=[[0.6, 0.8]], v=[1.0], b=[0.0])
        assert relevant_norms(st)[0] == pytest.approx(1.0)
        assert np.all(relevant_norms(zero_state()) == 0)
        st2 = controlled_init(0.3, 0.25)
        assert relevant_norms(st2)[0] == pytest.approx(0.5)


class TestDestabilisation:
    def test_identical_ensembles_give_identity_rows(self):
        cov = [4, 4, 3, 2, 4]
        tm = destabilisation(cov, cov, 0.4, 0.55)
        for i in set(cov):
            assert tm.matrix[i, i] == 1.0
        assert tm.counts[4] == 3

    def test_uniform_drop(self):
        tm = destabilisation([4] * 10, [3] * 10, 0.4, 0.55)
        assert tm.matrix[4, 3] == 1.0
        assert tm.matrix[4].sum() == pytest.approx(1.0)

    def test_rows_are_stochastic(self, rng):
        a = rng.integers(0, 5, 200)
        b = np.clip(a - rng.integers(0, 3, 200), 0, 4)
        tm = destabilisation(a, b, 0.4, 0.55)
        for i in range(5):
            if tm.counts[i]:
                assert tm.matrix[i].sum() == pytest.approx(1.0, abs=1e-12)
            else:
                assert np.all(tm.matrix[i] == 0)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            destabilisation([4, 4], [3], 0.4, 0.55)
