import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from atomcavity.loading import (
    InfeasibleError,
    LoadingConfig,
    OccupancyState,
    calibrate_survival,
    defect_free_frequency,
    defect_free_probability,
    rearranged_success_probability,
    run_loading_campaign,
    sample_occupancy,
    simulate_rearranged_success,
    trial_rng,
    trial_uniforms,
)
from atomcavity.physics import DomainError


def tail_oracle(N, n, p):
    """Brute-force binomial tail."""
    return sum(math.comb(n, k) * p**k * (1 - p) ** (n - k) for k in range(N, n + 1))


def test_sample_occupancy_extremes():
    rng = np.random.default_rng(0)
    assert sample_occupancy(40, 0.0, rng).atom_count == 0
    assert sample_occupancy(40, 1.0, rng).atom_count == 40
    with pytest.raises(DomainError):
        sample_occupancy(40, 1.5, rng)


def test_occupancy_roundtrips():
    occ = OccupancyState.from_indices([0, 2, 3], 5)
    assert occ.bitstring() == "10110"
    assert OccupancyState.from_bitstring("10110").atom_count == 3
    assert list(occ.indices) == [0, 2, 3]


def test_trial_stream_matches_chunked_draw():
    cfg = LoadingConfig()
    w = cfg.words_per_trial
    block = trial_uniforms(11, 0, 20, w)
    for t in (0, 7, 19):
        assert np.array_equal(trial_rng(11, t, w).random(w), block[t])
    mid = trial_uniforms(11, 5, 10, w)
    assert np.array_equal(mid, block[5:15])


def test_campaign_occupancy_equals_per_trial_sampling():
    cfg = LoadingConfig()
    st_ = run_loading_campaign(cfg, 50, master_seed=4)
    for t in (0, 13, 49):
        occ = sample_occupancy(40, 0.6, trial_rng(4, t, cfg.words_per_trial))
        assert np.array_equal(occ.occupied, st_.occupancies[t])


def test_campaign_mean_near_24():
    st_ = run_loading_campaign(LoadingConfig(p=0.6), 890, master_seed=2024)
    sigma = math.sqrt(40 * 0.6 * 0.4) / math.sqrt(890)
    assert abs(st_.mean - 24) < 3 * sigma
    assert st_.histogram.sum() == 890
    assert 0 <= st_.mean <= 40


def test_campaign_full_loading():
    st_ = run_loading_campaign(LoadingConfig(p=1.0), 100, master_seed=1)
    assert st_.histogram[40] == 100
    assert st_.mean == 40 and st_.std == 0


def test_campaign_deterministic_and_parallel_invariant():
    cfg = LoadingConfig()
    a = run_loading_campaign(cfg, 20_000, master_seed=9)
    b = run_loading_campaign(cfg, 20_000, master_seed=9, workers=4)
    assert np.array_equal(a.occupancies, b.occupancies)
    assert np.array_equal(a.histogram, b.histogram)
    assert a.mean == b.mean and a.std == b.std
    c = run_loading_campaign(cfg, 20_000, master_seed=10)
    assert not np.array_equal(a.histogram, c.histogram)


def test_manifest_fields():
    st_ = run_loading_campaign(LoadingConfig(), 10, master_seed=0)
    m = st_.manifest()
    assert set(m) == {"n_trials", "p", "mean", "std", "histogram"}
    assert sum(m["histogram"]) == 10


def test_histogram_matches_binomial_chi_square():
    st_ = run_loading_campaign(LoadingConfig(), 100_000, master_seed=123, keep_occupancies=False)
    pmf = stats.binom.pmf(np.arange(41), 40, 0.6) * 100_000
    obs = st_.histogram.astype(float)
    # pool sparse tails so every expected count is >= 5
    keep = pmf >= 5
    lo, hi = np.argmax(keep), len(keep) - np.argmax(keep[::-1])
    exp_pooled = np.r_[pmf[:lo].sum(), pmf[lo:hi], pmf[hi:].sum()]
    obs_pooled = np.r_[obs[:lo].sum(), obs[lo:hi], obs[hi:].sum()]
    _, pval = stats.chisquare(obs_pooled, exp_pooled)
    assert pval > 1e-3


def test_prefix_frequency_converges():
    st_ = run_loading_campaign(LoadingConfig(), 1_000_000, master_seed=77)
    freq = defect_free_frequency(st_.occupancies, 5)
    assert freq == pytest.approx(0.6**5, rel=0.05)


def test_defect_free_probability():
    assert defect_free_probability(20, 0.6) == pytest.approx(3.66e-5, rel=2e-3)
    assert f"{defect_free_probability(20, 0.6):.1e}" == "3.7e-05"
    assert defect_free_probability(0, 0.3) == 1
    assert defect_free_probability(1, 0.6) == 0.6
    with pytest.raises(DomainError):
        defect_free_probability(-1, 0.6)


def test_rearranged_probability_examples():
    assert rearranged_success_probability(20, 40, 0.6, 1.0) == pytest.approx(tail_oracle(20, 40, 0.6), rel=1e-12)
    assert round(rearranged_success_probability(20, 40, 0.6, 1.0), 3) == 0.926
    assert rearranged_success_probability(0, 40, 0.6, 0.3) == 1.0
    with pytest.raises(DomainError):
        rearranged_success_probability(41, 40, 0.6, 1.0)


def test_calibrate_survival_examples():
    s = calibrate_survival(20, 0.38, 40, 0.6)
    closed = (0.38 / tail_oracle(20, 40, 0.6)) ** (1 / 20)
    assert s == pytest.approx(closed, rel=1e-9)
    assert round(s, 3) == 0.956
    assert calibrate_survival(20, tail_oracle(20, 40, 0.6), 40, 0.6) == pytest.approx(1.0, rel=1e-12)
    tiny = calibrate_survival(20, 1e-9, 40, 0.6)
    assert rearranged_success_probability(20, 40, 0.6, tiny) == pytest.approx(1e-9, rel=1e-9)
    with pytest.raises(InfeasibleError):
        calibrate_survival(20, 0.95, 40, 0.6)
    with pytest.raises(InfeasibleError):
        calibrate_survival(20, 0.0, 40, 0.6)


@given(st.integers(1, 40), st.floats(0.01, 0.99), st.floats(0.5, 1.0))
def test_rearranged_monotonicity(N, p, s):
    f = rearranged_success_probability
    if N < 40:
        assert f(N + 1, 40, p, s) <= f(N, 40, p, s)
    assert f(N, 40, min(p + 0.01, 1), s) >= f(N, 40, p, s)
    assert f(N, 40, p, min(s + 0.01, 1)) >= f(N, 40, p, s)


@given(st.integers(2, 39), st.floats(0.05, 0.95))
def test_rearrangement_never_hurts(N, p):
    assert rearranged_success_probability(N, 40, p, 1.0) > defect_free_probability(N, p)


@settings(max_examples=50)
@given(st.integers(1, 40), st.floats(1e-6, 1.0))
def test_calibration_roundtrip(N, frac):
    target = frac * rearranged_success_probability(N, 40, 0.6, 1.0)
    s = calibrate_survival(N, target, 40, 0.6)
    assert rearranged_success_probability(N, 40, 0.6, s) == pytest.approx(target, rel=1e-9)


def test_mc_rearranged_matches_analytic():
    cfg = LoadingConfig()
    s = calibrate_survival(20, 0.38, 40, 0.6)
    n = 100_000
    for N in (5, 20, 26):
        exact = rearranged_success_probability(N, 40, 0.6, s)
        mc = simulate_rearranged_success(cfg, N, s, n, master_seed=5)
        assert abs(mc - exact) < 3 * math.sqrt(exact * (1 - exact) / n) + 1e-12


def test_readout_errors_shift_counts():
    clean = run_loading_campaign(LoadingConfig(p=0.5), 20_000, master_seed=3)
    noisy = run_loading_campaign(LoadingConfig(p=0.5, false_negative=0.2), 20_000, master_seed=3)
    assert noisy.mean == pytest.approx(clean.mean * 0.8, rel=0.02)
    with pytest.raises(DomainError):
        LoadingConfig(false_positive=-0.1)
