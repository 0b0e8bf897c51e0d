import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from atomcavity.fit import (
    fit_spectra,
    fit_spectrum,
    homogeneity_stats,
    initial_guess,
    levenberg_marquardt,
    numeric_jacobian,
    sqrt_scaling_fit,
)
from atomcavity.spectra import Spectrum, SpectrumParams, default_grid, synthesize_spectrum, transmission

K, G = 2.6, 1.1
GRID = default_grid()


def _symbolic_jacobian():
    om, dca, a, d = sp.symbols("om dca a d", real=True)
    k, g = sp.Rational(26, 10), sp.Rational(11, 10)
    T = a * k**2 * (g**2 + d**2) / ((om**2 - d**2 + dca * d + g * k) ** 2 + (k * d + g * d - g * dca) ** 2)
    return [sp.lambdify((om, dca, a, d), sp.diff(T, v), "numpy") for v in (om, dca, a)]


SYM_JAC = _symbolic_jacobian()


def model(theta):
    return transmission(GRID, SpectrumParams(abs(theta[0]), theta[1], K, G, theta[2]))


@settings(max_examples=30, deadline=None)
@given(st.floats(1, 15), st.floats(-0.5, 0.5), st.floats(0.5, 1.5))
def test_numeric_jacobian_matches_analytic(om, dca, a):
    J = numeric_jacobian(model, np.array([om, dca, a]))
    for k, f in enumerate(SYM_JAC):
        exact = f(om, dca, a, GRID)
        scale = np.max(np.abs(exact))
        assert np.max(np.abs(J[:, k] - exact)) <= 1e-6 * scale


def test_lm_solves_rosenbrock():
    res = levenberg_marquardt(lambda x: np.array([10 * (x[1] - x[0] ** 2), 1 - x[0]]), [-1.2, 1.0])
    assert res.converged
    assert np.allclose(res.x, [1, 1], atol=1e-8)


def test_initial_guess_peaks():
    for om in (4.6, 13.36):
        s = synthesize_spectrum(GRID, SpectrumParams(om), 0.0)
        guess = initial_guess(s)
        assert guess.omega_eff == pytest.approx(om, rel=0.10)


def test_initial_guess_flat():
    s = Spectrum(GRID, np.full(GRID.size, 0.3), 0.02)
    guess = initial_guess(s)
    assert guess.omega_eff == 0 and guess.delta_ca == 0
    with pytest.raises(ValueError):
        initial_guess(Spectrum(GRID[:4], np.ones(4), 0.0))


@pytest.mark.parametrize("om", [4.6, 4.54, 13.36])
def test_noiseless_recovery(om):
    truth = SpectrumParams(om, 0.2, K, G, 1.0)
    res = fit_spectrum(synthesize_spectrum(GRID, truth, 0.0), K, G)
    assert res.converged
    assert res.omega_eff == pytest.approx(om, rel=1e-6)
    assert res.delta_ca == pytest.approx(0.2, rel=1e-6)
    assert res.amplitude_scale == pytest.approx(1.0, rel=1e-6)
    assert res.residual_norm <= res.initial_residual_norm


def test_noisy_coverage():
    hits = 0
    for seed in range(100):
        s = synthesize_spectrum(GRID, SpectrumParams(13.36, 0.2), 0.02, np.random.default_rng(seed))
        res = fit_spectrum(s, K, G)
        hits += abs(res.omega_eff - 13.36) <= 3 * res.uncertainties["omega_eff"]
    assert hits >= 95


@pytest.mark.parametrize("dca", [0.0, 0.4])
def test_delta_ca_band_noiseless(dca):
    res = fit_spectrum(synthesize_spectrum(GRID, SpectrumParams(2.62 * math.sqrt(10), dca), 0.0), K, G)
    assert 0.0 - 1e-9 <= res.delta_ca <= 0.4 + 1e-9


def test_delta_ca_band_noisy():
    for seed in range(10):
        s = synthesize_spectrum(GRID, SpectrumParams(2.62 * math.sqrt(10), 0.2), 0.02, np.random.default_rng(seed))
        assert 0.0 <= fit_spectrum(s, K, G).delta_ca <= 0.4


def test_fit_descends_from_poor_start():
    s = synthesize_spectrum(GRID, SpectrumParams(8.0, 0.1), 0.02, np.random.default_rng(3))
    res = fit_spectrum(s, K, G, init=SpectrumParams(5.0, -0.5, K, G, 0.6))
    assert res.residual_norm <= res.initial_residual_norm
    assert res.omega_eff == pytest.approx(8.0, abs=0.1)


@settings(max_examples=20, deadline=None)
@given(st.floats(2, 15), st.floats(-0.4, 0.4), st.floats(0.7, 1.3))
def test_refit_own_output_is_idempotent(om, dca, a):
    s = synthesize_spectrum(GRID, SpectrumParams(om, dca, K, G, a), 0.0)
    first = fit_spectrum(s, K, G)
    again = fit_spectrum(synthesize_spectrum(GRID, first.params(K, G), 0.0), K, G)
    assert again.omega_eff == pytest.approx(first.omega_eff, rel=1e-6)
    assert again.amplitude_scale == pytest.approx(first.amplitude_scale, rel=1e-6)
    assert again.delta_ca == pytest.approx(first.delta_ca, rel=1e-6, abs=1e-9)


def test_omega_kept_non_negative():
    s = synthesize_spectrum(GRID, SpectrumParams(6.0), 0.0)
    res = fit_spectrum(s, K, G, init=SpectrumParams(0.5, 0.0, K, G, 1.0))
    assert res.omega_eff >= 0


def test_batch_fit_keyed_by_n():
    spectra = {n: synthesize_spectrum(GRID, SpectrumParams(2.62 * math.sqrt(n), 0.1), 0.0) for n in (5, 3, 4)}
    serial = fit_spectra(spectra)
    parallel = fit_spectra(spectra, workers=3)
    assert list(serial) == [3, 4, 5]
    assert all(serial[n].omega_eff == parallel[n].omega_eff for n in serial)


def test_scaling_identity_recovery():
    pairs = [(n, 2.62 * math.sqrt(n)) for n in range(3, 27)]
    fit = sqrt_scaling_fit(pairs)
    assert fit.g0_hat == pytest.approx(2.62, rel=1e-14)
    assert fit.max_rel_dev == pytest.approx(0.0, abs=1e-14)
    assert len(fit.per_N_g) == 24


def test_scaling_closed_form():
    assert sqrt_scaling_fit([(1, 3.0), (4, 6.0)]).g0_hat == pytest.approx(3.0)
    with pytest.raises(ValueError):
        sqrt_scaling_fit([])
    with pytest.raises(ValueError):
        sqrt_scaling_fit([(0, 1.0), (1, 1.0)])


def test_scaling_reports_scatter_bound():
    rng = np.random.default_rng(0)
    pairs = [(n, 2.63 * math.sqrt(n) * (1 + rng.uniform(-0.03, 0.03))) for n in range(3, 27)]
    fit = sqrt_scaling_fit(pairs)
    assert fit.max_rel_dev <= 0.038
    assert fit.mean_g == pytest.approx(2.63, rel=0.01)


def test_homogeneity_outlier():
    pairs = [(n, 2.62 * math.sqrt(n)) for n in range(3, 27)]
    pairs[5] = (pairs[5][0], pairs[5][1] * 1.10)
    mean, dev, per_n = homogeneity_stats(pairs)
    n = len(pairs)
    expected_mean = 2.62 * (1 + 0.10 / n)
    assert mean == pytest.approx(expected_mean, rel=1e-12)
    assert dev == pytest.approx(2.62 * 1.10 / expected_mean - 1, rel=1e-12)
    uniform = homogeneity_stats([(n, 2.0 * math.sqrt(n)) for n in range(1, 5)])
    assert uniform[1] == pytest.approx(0.0, abs=1e-15)


pair_lists = st.lists(st.tuples(st.integers(1, 40), st.floats(0.1, 50)), min_size=2, max_size=24)


@given(pair_lists, st.integers(-4, 4))
def test_scaling_scale_equivariant(pairs, e):
    c = 2.0**e
    a = sqrt_scaling_fit(pairs)
    b = sqrt_scaling_fit([(n, c * om) for n, om in pairs])
    assert b.g0_hat == c * a.g0_hat


@given(pair_lists, st.floats(0.1, 10))
def test_scaling_scale_equivariant_general(pairs, c):
    a = sqrt_scaling_fit(pairs)
    b = sqrt_scaling_fit([(n, c * om) for n, om in pairs])
    assert b.g0_hat == pytest.approx(c * a.g0_hat, rel=1e-13)


@given(pair_lists, st.randoms())
def test_scaling_permutation_invariant(pairs, rnd):
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    assert sqrt_scaling_fit(shuffled) == sqrt_scaling_fit(pairs)
