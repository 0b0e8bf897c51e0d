"""End-to-end pipelines behind the figure-data commands."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import Config
from .fit import FitResult, ScalingFit, fit_spectra, sqrt_scaling_fit
from .loading import (
    defect_free_probability,
    rearranged_success_probability,
    simulate_rearranged_success,
)
from .physics import CavityParams, block_sites, effective_collective_coupling, jitter_sites, site_coupling
from .rearrange import target_sites
from .spectra import Spectrum, SpectrumParams, default_grid, synthesize_spectrum


def stream(master_seed: int, *key: int) -> np.random.Generator:
    """Independent generator for a labelled sub-task of a seeded run."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=tuple(key)))


def block_couplings(cfg: Config, N: int, g: float, model: str = "uniform",
                    rng: np.random.Generator | None = None) -> list[float]:
    """Single-atom couplings of a rearranged N-atom block.

    ``uniform`` gives every atom ``g``; ``geometric`` places the atoms on the
    central target block and applies the axial/transverse coupling model with
    ``g`` as the on-centre coupling.
    """
    if model == "uniform":
        return [g] * N
    if model != "geometric":
        raise ValueError(f"unknown coupling model {model!r}")
    tw = cfg.tweezer
    sites = block_sites(tw, target_sites(tw.n_traps, N))
    jitter = cfg["noise.position_jitter_um"]
    if jitter > 0:
        sites = jitter_sites(sites, jitter, rng)
    cav = cfg.cavity
    params = CavityParams(g0_max=g, kappa=cav.kappa, gamma=cav.gamma, lambda_probe=cav.lambda_probe,
                          lambda_lock=cav.lambda_lock, waist=cav.waist, cavity_length=cav.cavity_length,
                          finesse=cav.finesse, beat_cycle=cav.beat_cycle)
    return [site_coupling(params, s) for s in sites]


@dataclass
class ScalingRun:
    spectra: dict[int, Spectrum]
    truth: dict[int, float]
    fits: dict[int, FitResult]
    scaling: ScalingFit


def scaling_campaign(cfg: Config, atom_numbers, master_seed: int, model: str = "uniform",
                     g: float | None = None, noise_sigma: float | None = None,
                     workers: int = 1) -> ScalingRun:
    """Synthesize one spectrum per atom number, fit each, regress omega_N on sqrt(N)."""
    g = cfg["spectrum.g_MHz"] if g is None else g
    sigma = cfg["noise.sigma"] if noise_sigma is None else noise_sigma
    cav = cfg.cavity
    grid = default_grid(cfg["spectrum.span_MHz"], cfg["spectrum.points"])
    spectra, truth = {}, {}
    for n in atom_numbers:
        rng = stream(master_seed, int(n))
        omega = effective_collective_coupling(block_couplings(cfg, int(n), g, model, rng))
        truth[int(n)] = omega
        params = SpectrumParams(omega, cfg["spectrum.delta_ca_MHz"], cav.kappa, cav.gamma, 1.0)
        spectra[int(n)] = synthesize_spectrum(grid, params, sigma, rng)
    fits = fit_spectra(spectra, cav.kappa, cav.gamma, workers=workers)
    scaling = sqrt_scaling_fit([(n, fits[n].omega_eff) for n in sorted(fits)])
    return ScalingRun(spectra=spectra, truth=truth, fits=fits, scaling=scaling)


def defect_free_curve(cfg: Config, atom_numbers, n_trials: int, master_seed: int,
                      workers: int = 1) -> list[dict]:
    """Rows of (N, p^N, analytic rearranged, Monte Carlo rearranged, MC std. error)."""
    load = cfg.loading
    survival = cfg.survival
    rows = []
    for n in atom_numbers:
        analytic = rearranged_success_probability(n, load.n_traps, load.p, survival)
        mc = simulate_rearranged_success(load, n, survival, n_trials, master_seed, workers)
        rows.append({
            "N": int(n),
            "p_N_no_rearrangement": defect_free_probability(n, load.p),
            "rearranged_analytic": analytic,
            "rearranged_mc": mc,
            "mc_stderr": float(np.sqrt(max(analytic * (1 - analytic), 0.0) / n_trials)),
        })
    return rows
