"""Spectrum fitting (damped least squares) and the sqrt(N) collective-coupling analysis."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import signal

from .spectra import Spectrum, SpectrumParams, transmission

PARAM_NAMES = ("omega_eff", "delta_ca", "amplitude_scale")


@dataclass
class FitResult:
    omega_eff: float
    delta_ca: float
    amplitude_scale: float
    residual_norm: float
    uncertainties: dict = field(default_factory=dict)
    converged: bool = False
    iterations: int = 0
    initial_residual_norm: float = float("nan")

    def params(self, kappa: float, gamma: float) -> SpectrumParams:
        return SpectrumParams(self.omega_eff, self.delta_ca, kappa, gamma, self.amplitude_scale)

    def to_record(self) -> dict:
        return asdict(self)


@dataclass
class ScalingFit:
    pairs: list
    g0_hat: float
    g0_sigma: float
    per_N_g: list
    mean_g: float
    max_rel_dev: float

    def to_record(self) -> dict:
        return asdict(self)

    def rows(self):
        """(N, omega_N, g_per_N, model_g_sqrtN) per input pair."""
        for (n, om), g in zip(self.pairs, self.per_N_g):
            yield (n, om, g, self.g0_hat * math.sqrt(n))


# -- least squares engine -----------------------------------------------------

def numeric_jacobian(fun: Callable[[np.ndarray], np.ndarray], theta: np.ndarray,
                     rel_step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of a vector function."""
    theta = np.asarray(theta, dtype=float)
    f0 = fun(theta)
    jac = np.empty((f0.size, theta.size))
    for k in range(theta.size):
        h = rel_step * max(abs(theta[k]), 1e-2)
        up, dn = theta.copy(), theta.copy()
        up[k] += h
        dn[k] -= h
        jac[:, k] = (fun(up) - fun(dn)) / (up[k] - dn[k])
    return jac


@dataclass
class LMResult:
    x: np.ndarray
    cost: float
    initial_cost: float
    jac: np.ndarray
    converged: bool
    iterations: int


def levenberg_marquardt(residuals: Callable[[np.ndarray], np.ndarray], x0, *, project=None,
                        max_iter: int = 500, xtol: float = 1e-8, gtol: float = 1e-10,
                        lam0: float = 1e-3) -> LMResult:
    """Minimise ``0.5 * |residuals(x)|**2``.

    Damping grows x10 on a rejected step and shrinks /10 on an accepted one.
    ``project`` maps a trial point back into the feasible set (e.g. reflection).
    """
    project = project or (lambda v: v)
    x = project(np.asarray(x0, dtype=float).copy())
    r = residuals(x)
    cost = 0.5 * float(r @ r)
    initial = cost
    J = numeric_jacobian(residuals, x)
    lam = lam0
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        A = J.T @ J
        g = J.T @ r
        if np.linalg.norm(g) < gtol:
            converged = True
            break
        D = np.diag(np.maximum(np.diag(A), 1e-12))
        try:
            step = np.linalg.solve(A + lam * D, -g)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        trial = project(x + step)
        rel_step = np.linalg.norm(trial - x) / (np.linalg.norm(x) + 1e-12)
        r_new = residuals(trial)
        cost_new = 0.5 * float(r_new @ r_new)
        if np.isfinite(cost_new) and cost_new < cost:
            x, r, cost = trial, r_new, cost_new
            lam = max(lam / 10.0, 1e-12)
            if rel_step < xtol:
                converged = True
                break
            J = numeric_jacobian(residuals, x)
        else:
            if rel_step < xtol:
                # no representable improvement left
                converged = True
                break
            lam *= 10.0
            if lam > 1e16:
                break
    return LMResult(x=x, cost=cost, initial_cost=initial, jac=J, converged=converged, iterations=it)


# -- spectrum fits ------------------------------------------------------------

def initial_guess(spectrum: Spectrum, kappa: float = 2.6, gamma: float = 1.1) -> SpectrumParams:
    """Seed from the two most prominent maxima of the data.

    Coupling is half the peak separation, the cavity-atom detuning is read from
    the peak-pair offset, and the scale matches the data maximum to the unit
    model maximum.
    """
    if len(spectrum) < 5:
        raise ValueError("need at least 5 points for an initial guess")
    y = spectrum.transmission
    x = spectrum.detuning
    noise = float(np.median(spectrum.sigma)) if spectrum.sigma.size else 0.0
    prominence = max(3.0 * noise, 0.05 * float(y.max()), 1e-12)
    idx, props = signal.find_peaks(y, prominence=prominence)
    if idx.size >= 2:
        top = np.sort(idx[np.argsort(props["prominences"])[-2:]])
        left, right = x[top[0]], x[top[1]]
        omega0 = 0.5 * (right - left)
        dca0 = float(left + right)
    else:
        omega0, dca0 = 0.0, 0.0
    unit = SpectrumParams(omega0, dca0, kappa, gamma, 1.0)
    fine = np.linspace(x[0], x[-1], 4 * x.size)
    peak_model = float(np.max(transmission(fine, unit)))
    scale0 = float(y.max()) / peak_model if y.max() > 0 else 1.0
    return SpectrumParams(omega0, dca0, kappa, gamma, max(scale0, 1e-6))


def _weights(spectrum: Spectrum) -> np.ndarray:
    sig = spectrum.sigma
    if np.all(sig > 0):
        return 1.0 / sig
    # noiseless data: unit weights
    return np.ones_like(sig)


def fit_spectrum(spectrum: Spectrum, kappa: float = 2.6, gamma: float = 1.1,
                 init: SpectrumParams | None = None, max_iter: int = 500) -> FitResult:
    """Fit coupling, cavity-atom detuning and scale with kappa and gamma held fixed.

    Uncertainties are 1-sigma from the linearised covariance scaled by the
    reduced chi-square.
    """
    if kappa <= 0 or gamma <= 0:
        raise ValueError("kappa and gamma must be > 0")
    if init is None:
        init = initial_guess(spectrum, kappa, gamma)
    w = _weights(spectrum)
    x, y = spectrum.detuning, spectrum.transmission

    def residuals(theta: np.ndarray) -> np.ndarray:
        om, dca, scale = theta
        p = SpectrumParams(abs(om), dca, kappa, gamma, abs(scale) or 1e-300)
        return (transmission(x, p) - y) * w

    def reflect(theta: np.ndarray) -> np.ndarray:
        return np.array([abs(theta[0]), theta[1], abs(theta[2])])

    theta0 = np.array([init.omega_eff, init.delta_ca, init.amplitude_scale])
    res = levenberg_marquardt(residuals, theta0, project=reflect, max_iter=max_iter)
    dof = max(x.size - theta0.size, 1)
    chi2 = 2.0 * res.cost
    try:
        cov = np.linalg.inv(res.jac.T @ res.jac) * (chi2 / dof)
        sig = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except np.linalg.LinAlgError:
        sig = np.full(3, np.inf)
    return FitResult(
        omega_eff=float(res.x[0]),
        delta_ca=float(res.x[1]),
        amplitude_scale=float(res.x[2]),
        residual_norm=math.sqrt(chi2),
        uncertainties={name: float(s) for name, s in zip(PARAM_NAMES, sig)},
        converged=res.converged,
        iterations=res.iterations,
        initial_residual_norm=math.sqrt(2.0 * res.initial_cost),
    )


def fit_spectra(spectra: Mapping[int, Spectrum], kappa: float = 2.6, gamma: float = 1.1,
                workers: int = 1) -> dict[int, FitResult]:
    """Fit a batch of spectra keyed by atom number."""
    keys = sorted(spectra)

    def one(n: int) -> FitResult:
        return fit_spectrum(spectra[n], kappa, gamma)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, keys))
    else:
        results = [one(n) for n in keys]
    return dict(zip(keys, results))


# -- collective enhancement ---------------------------------------------------

def _check_pairs(pairs) -> list[tuple[int, float]]:
    pairs = [(int(n), float(om)) for n, om in pairs]
    if not pairs:
        raise ValueError("need at least one (N, omega_N) pair")
    for n, om in pairs:
        if n < 1 or not om > 0:
            raise ValueError(f"invalid pair ({n}, {om}): need N >= 1 and omega_N > 0")
    return pairs


def homogeneity_stats(pairs) -> tuple[float, float, list[float]]:
    """Per-N single-atom coupling omega_N / sqrt(N), its mean and max relative deviation."""
    pairs = _check_pairs(pairs)
    per_n = [om / math.sqrt(n) for n, om in pairs]
    mean = math.fsum(per_n) / len(per_n)
    dev = max(abs(g / mean - 1.0) for g in per_n)
    return mean, dev, per_n


def sqrt_scaling_fit(pairs: Sequence[tuple[int, float]]) -> ScalingFit:
    """Least-squares fit of omega_N = g0 sqrt(N): g0 = sum(omega sqrt N) / sum(N)."""
    pairs = _check_pairs(pairs)
    if len(pairs) < 2:
        raise ValueError("need at least two (N, omega_N) pairs")
    pairs = sorted(pairs)
    num = math.fsum(om * math.sqrt(n) for n, om in pairs)
    den = math.fsum(n for n, _ in pairs)
    g0 = num / den
    resid = [om - g0 * math.sqrt(n) for n, om in pairs]
    g0_sigma = math.sqrt(math.fsum(r * r for r in resid) / (len(pairs) - 1) / den)
    mean, dev, per_n = homogeneity_stats(pairs)
    return ScalingFit(pairs=[list(p) for p in pairs], g0_hat=g0, g0_sigma=g0_sigma,
                      per_N_g=per_n, mean_g=mean, max_rel_dev=dev)
