"""Cavity and tweezer constants plus the position-dependent coupling model.

All frequencies are ordinary frequencies (omega / 2 pi) in MHz; lengths carry
their unit in the field name or docstring. Every function here is pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class DomainError(ValueError):
    """Raised when a physical parameter lies outside its allowed domain."""


def _require_positive(**values: float) -> None:
    for name, value in values.items():
        if not value > 0:
            raise DomainError(f"{name} must be > 0, got {value!r}")


@dataclass(frozen=True)
class CavityParams:
    """Cavity/atom rates and mode geometry.

    Defaults reproduce the miniature Fabry-Perot cavity with Cs atoms:
    g0_max = 3.4 MHz, kappa = 2.6 MHz (cavity), gamma = 1.1 MHz (atom).
    """

    g0_max: float = 3.4
    kappa: float = 2.6
    gamma: float = 1.1
    lambda_probe: float = 852.0
    lambda_lock: float = 851.4
    waist: float = 45.3
    cavity_length: float = 1.16
    finesse: float = 5.8e4
    beat_cycle: float = 386.8

    def __post_init__(self) -> None:
        _require_positive(
            g0_max=self.g0_max,
            kappa=self.kappa,
            gamma=self.gamma,
            lambda_probe=self.lambda_probe,
            lambda_lock=self.lambda_lock,
            waist=self.waist,
            cavity_length=self.cavity_length,
            beat_cycle=self.beat_cycle,
        )
        if not self.finesse > 1:
            raise DomainError(f"finesse must be > 1, got {self.finesse!r}")
        if self.lambda_probe == self.lambda_lock:
            raise DomainError("lambda_probe and lambda_lock must differ")

    @property
    def cooperativity(self) -> float:
        return cooperativity(self.g0_max, self.kappa, self.gamma)


@dataclass(frozen=True)
class TweezerParams:
    """Geometry of the 1D tweezer array (spacing in um, depth in mK, power in mW)."""

    n_traps: int = 40
    spacing: float = 4.26
    trap_depth: float = 0.9
    tweezer_waist: float = 1.6
    power_per_trap: float = 10.0

    def __post_init__(self) -> None:
        if int(self.n_traps) != self.n_traps or self.n_traps < 1:
            raise DomainError(f"n_traps must be an integer >= 1, got {self.n_traps!r}")
        _require_positive(
            spacing=self.spacing,
            trap_depth=self.trap_depth,
            tweezer_waist=self.tweezer_waist,
            power_per_trap=self.power_per_trap,
        )

    @property
    def extent(self) -> float:
        """Distance between the outermost traps in um."""
        return (self.n_traps - 1) * self.spacing

    def positions(self) -> np.ndarray:
        """Axial trap positions in um, centred on the cavity centre."""
        return (np.arange(self.n_traps) - (self.n_traps - 1) / 2) * self.spacing

    def position(self, index: int) -> float:
        return (index - (self.n_traps - 1) / 2) * self.spacing


@dataclass(frozen=True)
class AtomSite:
    index: int
    axial_x: float = 0.0
    transverse_r: float = 0.0

    def __post_init__(self) -> None:
        if self.transverse_r < 0:
            raise DomainError(f"transverse_r must be >= 0, got {self.transverse_r!r}")


def cooperativity(g0: float, kappa: float, gamma: float) -> float:
    """Single-atom cooperativity ``g0**2 / (2 kappa gamma)``."""
    _require_positive(g0=g0, kappa=kappa, gamma=gamma)
    return g0 * g0 / (2.0 * kappa * gamma)


def transverse_coupling_factor(r, waist: float):
    """Gaussian fall-off of the mode amplitude, ``exp(-r**2 / waist**2)``."""
    _require_positive(waist=waist)
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("transverse offset r must be >= 0")
    out = np.exp(-(r * r) / (waist * waist))
    return float(out) if out.ndim == 0 else out


def axial_coupling_factor(x, beat_cycle: float):
    """Overlap between lattice node and cavity antinode at axial offset ``x``.

    Unity at the cavity centre, zero half a beat cycle away, period ``beat_cycle``.
    """
    _require_positive(beat_cycle=beat_cycle)
    x = np.asarray(x, dtype=float)
    # reduce first so that x = beat_cycle / 2 gives an exact zero
    phase = np.remainder(x, beat_cycle) / beat_cycle
    out = np.abs(np.cos(np.pi * phase))
    out = np.where(np.isclose(phase, 0.5, rtol=0, atol=1e-12), 0.0, out)
    return float(out) if out.ndim == 0 else out


def beat_decoupling_distance(lambda_lock: float, lambda_probe: float) -> float:
    """Axial distance in um at which the lattice node sits on a cavity-field node.

    Wavelengths in nm. The full overlap/decoupling cycle is twice this value.
    """
    _require_positive(lambda_lock=lambda_lock, lambda_probe=lambda_probe)
    if lambda_lock == lambda_probe:
        raise DomainError("wavelengths must differ for a finite beat length")
    nm = lambda_lock * lambda_probe / (4.0 * abs(lambda_probe - lambda_lock))
    return nm * 1e-3


def site_coupling(params: CavityParams, site: AtomSite) -> float:
    """Single-atom coupling in MHz for an atom at ``site``."""
    return (
        params.g0_max
        * axial_coupling_factor(site.axial_x, params.beat_cycle)
        * transverse_coupling_factor(site.transverse_r, params.waist)
    )


def effective_collective_coupling(g_list: Iterable[float]) -> float:
    """Collective coupling ``sqrt(sum g_i**2)``; 0 for an empty ensemble."""
    g = np.asarray(list(g_list), dtype=float)
    if g.size == 0:
        return 0.0
    if np.any(g < 0):
        raise DomainError("couplings must be >= 0")
    scale = float(g.max())
    if scale == 0.0:
        return 0.0
    # hypot-style scaling: a uniform ensemble gives exactly g * sqrt(N)
    ratio = g / scale
    return scale * math.sqrt(math.fsum(ratio * ratio))


def block_sites(tweezer: TweezerParams, indices: Sequence[int], transverse_r: float = 0.0) -> list[AtomSite]:
    """AtomSite list for the given trap indices of ``tweezer``."""
    return [AtomSite(int(i), tweezer.position(int(i)), transverse_r) for i in indices]


def jitter_sites(sites: Sequence[AtomSite], sigma_um: float, rng: np.random.Generator) -> list[AtomSite]:
    """Per-shot zero-mean Gaussian displacement of both coordinates.

    The transverse coordinate is folded back to a non-negative radius.
    """
    if sigma_um < 0:
        raise DomainError("jitter sigma must be >= 0")
    if sigma_um == 0:
        return list(sites)
    dx = rng.normal(0.0, sigma_um, size=len(sites))
    dr = rng.normal(0.0, sigma_um, size=len(sites))
    return [
        AtomSite(s.index, s.axial_x + float(a), abs(s.transverse_r + float(b)))
        for s, a, b in zip(sites, dx, dr)
    ]
