"""Steady-state cavity transmission with N coupled atoms and synthetic spectra."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import optimize, signal


class UnresolvedSplittingError(ValueError):
    """The transmission curve has a single maximum."""


@dataclass(frozen=True)
class SpectrumParams:
    """Model parameters, all rates in MHz (omega / 2 pi)."""

    omega_eff: float
    delta_ca: float = 0.0
    kappa: float = 2.6
    gamma: float = 1.1
    amplitude_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.omega_eff < 0:
            raise ValueError("omega_eff must be >= 0")
        if self.kappa <= 0 or self.gamma <= 0:
            raise ValueError("kappa and gamma must be > 0")
        if self.amplitude_scale <= 0:
            raise ValueError("amplitude_scale must be > 0")


@dataclass
class Spectrum:
    detuning: np.ndarray
    transmission: np.ndarray
    sigma: np.ndarray

    def __post_init__(self) -> None:
        self.detuning = np.asarray(self.detuning, dtype=float)
        self.transmission = np.asarray(self.transmission, dtype=float)
        sig = np.asarray(self.sigma, dtype=float)
        if sig.ndim == 0:
            sig = np.full_like(self.detuning, float(sig))
        self.sigma = sig
        if not (self.detuning.shape == self.transmission.shape == self.sigma.shape):
            raise ValueError("detuning, transmission and sigma must have equal length")
        if np.any(np.diff(self.detuning) <= 0):
            raise ValueError("detuning grid must be strictly increasing")

    def __len__(self) -> int:
        return int(self.detuning.size)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["detuning_MHz", "transmission", "sigma"])
        for d, t, s in zip(self.detuning, self.transmission, self.sigma):
            w.writerow([repr(float(d)), repr(float(t)), repr(float(s))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path_or_text) -> "Spectrum":
        p = Path(path_or_text) if not str(path_or_text).lstrip().startswith("detuning") else None
        text = p.read_text() if p is not None else str(path_or_text)
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise ValueError("spectrum CSV has no data rows")
        return cls(
            np.array([float(r["detuning_MHz"]) for r in rows]),
            np.array([float(r["transmission"]) for r in rows]),
            np.array([float(r["sigma"]) for r in rows]),
        )


def transmission(delta_pa, params: SpectrumParams):
    """Normalised probe transmission at probe-atom detuning ``delta_pa`` (MHz)."""
    d = np.asarray(delta_pa, dtype=float)
    k, g, om, dca = params.kappa, params.gamma, params.omega_eff, params.delta_ca
    real = om * om - d * d + dca * d + g * k
    imag = k * d + g * d - g * dca
    out = params.amplitude_scale * k * k * (g * g + d * d) / (real * real + imag * imag)
    return float(out) if out.ndim == 0 else out


def empty_cavity_lorentzian(delta_pa, kappa: float):
    if kappa <= 0:
        raise ValueError("kappa must be > 0")
    d = np.asarray(delta_pa, dtype=float)
    out = kappa * kappa / (kappa * kappa + d * d)
    return float(out) if out.ndim == 0 else out


def default_grid(span: float = 25.0, points: int = 201) -> np.ndarray:
    return np.linspace(-span, span, points)


def synthesize_spectrum(grid, params: SpectrumParams, noise_sigma: float, rng: np.random.Generator | None = None) -> Spectrum:
    """Model curve plus additive Gaussian noise of absolute width ``noise_sigma``, clamped at 0."""
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    grid = np.asarray(grid, dtype=float)
    clean = transmission(grid, params)
    if noise_sigma > 0:
        if rng is None:
            raise ValueError("a random generator is required when noise_sigma > 0")
        clean = np.maximum(clean + rng.normal(0.0, noise_sigma, size=grid.size), 0.0)
    return Spectrum(grid, np.atleast_1d(clean), np.full(grid.size, float(noise_sigma)))


def find_peaks_refined(params: SpectrumParams, span: float | None = None, points: int = 20001) -> np.ndarray:
    """Positions of all local maxima of the noiseless curve, refined by bounded search."""
    if span is None:
        span = 3.0 * (params.omega_eff + params.kappa + params.gamma + abs(params.delta_ca))
    grid = np.linspace(-span, span, points)
    t = transmission(grid, params)
    idx, _ = signal.find_peaks(t)
    step = grid[1] - grid[0]
    peaks = []
    for i in idx:
        res = optimize.minimize_scalar(lambda d: -transmission(d, params),
                                       bounds=(grid[i] - step, grid[i] + step), method="bounded",
                                       options={"xatol": 1e-10})
        peaks.append(res.x)
    return np.array(sorted(peaks))


def expected_splitting(params: SpectrumParams) -> float:
    """Separation in MHz of the two normal-mode maxima of the noiseless curve."""
    peaks = find_peaks_refined(params)
    if peaks.size < 2:
        raise UnresolvedSplittingError(f"single transmission maximum for omega_eff={params.omega_eff}")
    height = transmission(peaks, params)
    top = np.sort(np.argsort(height)[-2:])
    return float(peaks[top[1]] - peaks[top[0]])


def with_omega(params: SpectrumParams, omega: float) -> SpectrumParams:
    return replace(params, omega_eff=omega)
