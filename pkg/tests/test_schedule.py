import numpy as np
import pytest

from xgmsim import (CURRICULUM, CURRICULUM_DISCRETE, FADING_CHANNEL, NO_FADING,
                    NOISE_CHANNEL, RANDOM_ORDER, Schedule, make_schedule,
                    multiset_check)


def test_linear_ramp_reference_points():
    s = make_schedule(CURRICULUM, total_steps=10_000, phi_max=3.0, alpha=0.1)
    assert s.difficulty_at(0) == pytest.approx(3.0)
    assert s.difficulty_at(500) == pytest.approx(2.0)
    assert s.difficulty_at(1000) == 1.0
    assert s.difficulty_at(9999) == 1.0


def test_no_fading_is_constant():
    s = make_schedule(NO_FADING, total_steps=100, phi_max=3.0)
    assert all(s.difficulty_at(t) == 1.0 for t in range(100))


def test_discrete_two_levels():
    s = make_schedule(CURRICULUM, total_steps=10_000, phi_max=3.0, alpha=0.1,
                      levels=2)
    assert s.kind == CURRICULUM_DISCRETE
    assert s.difficulty_at(0) == 3.0
    assert s.difficulty_at(499) == 3.0
    assert s.difficulty_at(500) == 2.0
    assert s.difficulty_at(999) == 2.0
    assert s.difficulty_at(1000) == 1.0


def test_discrete_single_level():
    s = make_schedule(CURRICULUM, total_steps=1000, phi_max=3.0, alpha=0.2,
                      levels=1)
    vals = s.values()
    assert np.all(vals[:200] == 3.0)
    assert np.all(vals[200:] == 1.0)


def test_random_order_replays_the_curriculum_multiset():
    c = make_schedule(CURRICULUM, total_steps=2000, phi_max=3.0, alpha=0.1)
    r = make_schedule(RANDOM_ORDER, total_steps=2000, phi_max=3.0, alpha=0.1,
                      permutation_seed=7)
    assert multiset_check(c, r)
    assert not np.array_equal(c.values(), r.values())  # actually shuffled
    r2 = make_schedule(RANDOM_ORDER, total_steps=2000, phi_max=3.0, alpha=0.1,
                       permutation_seed=8)
    assert multiset_check(r, r2)
    assert multiset_check(c, c)


def test_no_fading_receives_strictly_less():
    c = make_schedule(CURRICULUM, total_steps=500, phi_max=3.0, alpha=0.1)
    nf = make_schedule(NO_FADING, total_steps=500, phi_max=3.0, alpha=0.1)
    assert not multiset_check(c, nf)


def test_multiset_check_requires_equal_lengths():
    a = make_schedule(CURRICULUM, total_steps=100, alpha=0.5)
    b = make_schedule(CURRICULUM, total_steps=101, alpha=0.5)
    with pytest.raises(ValueError):
        multiset_check(a, b)


def test_fading_values_non_increasing_and_based_after_window():
    s = make_schedule(CURRICULUM, total_steps=1000, phi_max=3.0, alpha=0.25)
    v = s.values()
    assert np.all(np.diff(v) <= 0)
    assert np.all(v[250:] == 1.0)
    assert v.min() == 1.0 and v.max() == 3.0


def test_noise_channel_stays_inside_its_band():
    s = make_schedule(CURRICULUM, total_steps=1000, channel=NOISE_CHANNEL,
                      sigma_easy=0.1, sigma_hard=0.6, alpha=0.3)
    v = s.values()
    assert np.all(np.diff(v) >= 0)
    assert v.min() == pytest.approx(0.1) and v.max() == pytest.approx(0.6)
    assert np.all(v[300:] == 0.6)
    d = make_schedule(CURRICULUM, total_steps=1000, channel=NOISE_CHANNEL,
                      sigma_easy=0.1, sigma_hard=0.6, alpha=0.3, levels=2)
    assert set(np.unique(d.values())) == {0.1, 0.35, 0.6}


def test_norm_based_difficulty_band():
    # doubling-the-norm variant: fading channel capped at 2
    s = make_schedule(CURRICULUM, total_steps=800, phi_max=2.0, alpha=0.5)
    v = s.values()
    assert v.max() == 2.0 and v.min() == 1.0


def test_fixed_easy_sample_budget():
    s = make_schedule(CURRICULUM, total_steps=50_000, phi_max=3.0,
                      easy_samples=1000)
    assert s.alpha == pytest.approx(0.02)
    assert s.difficulty_at(0) == 3.0
    assert s.difficulty_at(999) > 1.0
    assert s.difficulty_at(1000) == 1.0
    r = make_schedule(RANDOM_ORDER, total_steps=50_000, phi_max=3.0,
                      easy_samples=1000, permutation_seed=3)
    assert multiset_check(s, r)
    assert (r.values() > 1.0).sum() == (s.values() > 1.0).sum()


def test_out_of_range_step_rejected():
    s = make_schedule(NO_FADING, total_steps=10)
    with pytest.raises(IndexError):
        s.difficulty_at(10)
    with pytest.raises(IndexError):
        s.difficulty_at(-1)


def test_schedule_validation():
    with pytest.raises(ValueError):
        Schedule(kind="bogus", total_steps=10)
    with pytest.raises(ValueError):
        Schedule(kind=CURRICULUM, total_steps=10, alpha=0.0)
    with pytest.raises(ValueError):
        Schedule(kind=CURRICULUM_DISCRETE, total_steps=10, levels=0)
