"""Defect-free rearrangement: move planning, AOD tone sweeps and RF waveform tuning."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from .loading import OccupancyState
from .physics import TweezerParams


class InsufficientAtomsError(RuntimeError):
    """Fewer atoms loaded than requested; the caller should reload."""

    def __init__(self, loaded: int, requested: int):
        super().__init__(f"insufficient atoms, reload: {loaded} loaded, {requested} requested")
        self.loaded = loaded
        self.requested = requested


class CrossingError(RuntimeError):
    """Two tone trajectories touched or crossed (a planner bug)."""


class BalanceError(RuntimeError):
    def __init__(self, spread: float, iterations: int):
        super().__init__(f"amplitude balancing did not converge after {iterations} iterations; spread {spread:.4g}")
        self.spread = spread
        self.iterations = iterations


@dataclass(frozen=True)
class MovePlan:
    moves: tuple[tuple[int, int], ...]
    switch_off: frozenset[int]
    sweep_duration: float
    target_positions: tuple[float, ...]
    source_positions: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        src = [s for s, _ in self.moves]
        dst = [t for _, t in self.moves]
        if len(set(src)) != len(src) or len(set(dst)) != len(dst):
            raise ValueError("sources and targets must be pairwise distinct")
        if any(b <= a for a, b in zip(src, src[1:])) or any(b <= a for a, b in zip(dst, dst[1:])):
            raise ValueError("moves must be order preserving")

    @property
    def sources(self) -> list[int]:
        return [s for s, _ in self.moves]

    @property
    def targets(self) -> list[int]:
        return [t for _, t in self.moves]

    def to_record(self) -> dict:
        return {
            "moves": [[int(s), int(t)] for s, t in self.moves],
            "switch_off": sorted(int(i) for i in self.switch_off),
            "duration_us": float(self.sweep_duration),
        }


@dataclass
class ToneSchedule:
    """Sampled AOD drive: ``freqs[k, i]`` is tone ``i`` at ``times[k]``."""

    times: np.ndarray
    freqs: np.ndarray
    amplitudes: np.ndarray
    phases: np.ndarray

    @property
    def n_tones(self) -> int:
        return int(self.freqs.shape[1])

    def rows(self):
        for k, t in enumerate(self.times):
            for i in range(self.n_tones):
                yield (float(t), i, float(self.freqs[k, i]), float(self.amplitudes[i]), float(self.phases[i]))


@dataclass
class BalanceResult:
    amplitudes: np.ndarray
    iterations: int
    spread_history: list[float] = field(default_factory=list)


# -- planning -----------------------------------------------------------------

def target_sites(n_traps: int, N: int) -> list[int]:
    """The N contiguous sites whose centre is closest to the cavity centre.

    Ties (odd ``n_traps - N``) go to the block on the negative-x side.
    """
    if not 1 <= N <= n_traps:
        raise ValueError(f"N must lie in [1, {n_traps}]")
    start = (n_traps - N) // 2
    return list(range(start, start + N))


def _order_preserving_dp(src: np.ndarray, dst: np.ndarray) -> tuple[float, list[int]]:
    """Pick len(dst) of the sorted ``src`` positions, matched in order, minimising sum |dx|.

    ``cost[i, j]`` is the best cost of filling the first ``j`` targets from the
    first ``i`` sources. Returns the optimum and the chosen indices into ``src``.
    """
    m, N = len(src), len(dst)
    cost = np.full((m + 1, N + 1), np.inf)
    cost[:, 0] = 0.0
    took = np.zeros((m + 1, N + 1), dtype=bool)
    for i in range(1, m + 1):
        for j in range(1, min(i, N) + 1):
            skip = cost[i - 1, j]
            take = cost[i - 1, j - 1] + abs(src[i - 1] - dst[j - 1])
            # ties keep the outer atom out of the block: skip wins
            if take < skip:
                cost[i, j] = take
                took[i, j] = True
            else:
                cost[i, j] = skip
    chosen = []
    i, j = m, N
    while j > 0:
        if took[i, j]:
            chosen.append(i - 1)
            j -= 1
        i -= 1
    return float(cost[m, N]), chosen[::-1]


def plan_rearrangement(occupancy: OccupancyState, N_target: int, geometry: TweezerParams,
                       sweep_duration: float = 800.0) -> MovePlan:
    """Minimum-displacement, order-preserving plan for an N-atom central block.

    Empty traps and surplus atoms are switched off.
    """
    if N_target < 1:
        raise ValueError("N_target must be >= 1")
    if occupancy.n_traps != geometry.n_traps:
        raise ValueError("occupancy length does not match geometry")
    loaded = occupancy.indices
    if loaded.size < N_target:
        raise InsufficientAtomsError(int(loaded.size), N_target)
    targets = target_sites(geometry.n_traps, N_target)
    pos = geometry.positions()
    _, picked = _order_preserving_dp(pos[loaded], pos[targets])
    sources = [int(loaded[k]) for k in picked]
    switch_off = frozenset(range(geometry.n_traps)) - frozenset(sources)
    return MovePlan(
        moves=tuple(zip(sources, targets)),
        switch_off=switch_off,
        sweep_duration=float(sweep_duration),
        target_positions=tuple(float(pos[t]) for t in targets),
        source_positions=tuple(float(pos[s]) for s in sources),
    )


def total_displacement(plan: MovePlan, geometry: TweezerParams) -> float:
    """Sum of |source - target| over all moves, in um."""
    return float(sum(abs(geometry.position(s) - geometry.position(t)) for s, t in plan.moves))


# -- sweeps -------------------------------------------------------------------

def min_jerk(tau):
    tau = np.asarray(tau, dtype=float)
    return tau**3 * (10.0 - 15.0 * tau + 6.0 * tau * tau)


def min_jerk_rate(tau):
    """d(min_jerk)/d(tau)."""
    tau = np.asarray(tau, dtype=float)
    return 30.0 * tau * tau * (1.0 - tau) ** 2


def synthesize_tone_sweeps(plan: MovePlan, duration: float, sample_rate: float = 1.0,
                           aod_calibration: float = 1.0 / 4.26, center_freq: float = 100.0,
                           amplitudes: Sequence[float] | None = None,
                           phases: Sequence[float] | None = None) -> ToneSchedule:
    """Minimum-jerk frequency ramps from source to target trap for every retained tone.

    ``sample_rate`` in MS/s (samples per us), ``aod_calibration`` in MHz per um.
    """
    if duration <= 0:
        raise ValueError("duration must be > 0")
    if sample_rate <= 0:
        raise ValueError("sample_rate must be > 0")
    n_steps = int(round(duration * sample_rate))
    times = np.linspace(0.0, duration, n_steps + 1)
    f0 = center_freq + aod_calibration * np.asarray(plan.source_positions, dtype=float)
    f1 = center_freq + aod_calibration * np.asarray(plan.target_positions, dtype=float)
    s = min_jerk(times / duration)[:, None]
    freqs = f0[None, :] + (f1 - f0)[None, :] * s
    freqs[-1] = f1
    if freqs.shape[1] > 1:
        gaps = np.diff(freqs, axis=1)
        ordered = np.all(gaps > 0) if aod_calibration > 0 else np.all(gaps < 0)
        if not ordered:
            k = int(np.argwhere(gaps * np.sign(aod_calibration) <= 0)[0, 0])
            raise CrossingError(f"tone trajectories cross at t = {times[k]:.3f} us")
    n = freqs.shape[1]
    amps = np.ones(n) if amplitudes is None else np.asarray(amplitudes, dtype=float)
    ph = np.zeros(n) if phases is None else np.asarray(phases, dtype=float)
    if amps.shape != (n,) or ph.shape != (n,):
        raise ValueError("amplitudes and phases need one entry per tone")
    return ToneSchedule(times=times, freqs=freqs, amplitudes=amps, phases=ph)


# -- multi-tone waveform ------------------------------------------------------

def _samples_per_period(n_tones: int, first_harmonic: int) -> int:
    return max(64, 16 * (first_harmonic + n_tones))


def multitone_waveform(phases, amplitudes=None, first_harmonic: int = 1, n_samples: int | None = None) -> np.ndarray:
    """One beat period of sum_k a_k cos(2 pi (h0 + k) t + phi_k), sampled uniformly."""
    phases = np.asarray(phases, dtype=float)
    n = phases.size
    a = np.ones(n) if amplitudes is None else np.asarray(amplitudes, dtype=float)
    m = n_samples or _samples_per_period(n, first_harmonic)
    t = np.arange(m) / m
    h = first_harmonic + np.arange(n)
    return (a[:, None] * np.cos(2 * np.pi * h[:, None] * t[None, :] + phases[:, None])).sum(axis=0)


def crest_factor(phases, amplitudes=None, first_harmonic: int = 1, n_samples: int | None = None) -> float:
    """Peak |amplitude| over RMS of the sampled waveform."""
    y = multitone_waveform(phases, amplitudes, first_harmonic, n_samples)
    return float(np.max(np.abs(y)) / np.sqrt(np.mean(y * y)))


def schroeder_phases(amplitudes) -> np.ndarray:
    """Quadratic (Schroeder) phases, a good low-crest starting point."""
    a = np.asarray(amplitudes, dtype=float)
    power = a * a / np.sum(a * a)
    n = a.size
    phases = np.zeros(n)
    for k in range(1, n):
        phases[k] = phases[0] - 2 * np.pi * np.sum((k - np.arange(k)) * power[:k])
    return np.mod(phases, 2 * np.pi)


def optimize_tone_phases(n_tones: int, amplitudes=None, first_harmonic: int = 1,
                         n_samples: int | None = None, rounds: Sequence[int] = (8, 16, 32, 64)) -> np.ndarray:
    """Phases minimising the crest factor of an equally spaced multi-tone drive.

    Starts from Schroeder phases, then runs L-BFGS on the ``2q``-norm of the
    waveform for increasing ``q`` (a smooth surrogate for the peak). A round is
    only kept if it lowers the true sampled crest factor.
    """
    if n_tones < 1:
        raise ValueError("n_tones must be >= 1")
    a = np.ones(n_tones) if amplitudes is None else np.asarray(amplitudes, dtype=float)
    if n_tones == 1:
        return np.zeros(1)
    m = n_samples or _samples_per_period(n_tones, first_harmonic)
    t = np.arange(m) / m
    arg0 = 2 * np.pi * (first_harmonic + np.arange(n_tones))[:, None] * t[None, :]

    def surrogate(phi: np.ndarray, q: int):
        arg = arg0 + phi[:, None]
        y = (a[:, None] * np.cos(arg)).sum(axis=0)
        peak = np.max(np.abs(y))
        z = y / peak
        s = np.mean(z ** (2 * q))
        val = peak * s ** (1 / (2 * q))
        # d val / d phi_k = val / s * mean(z^(2q-1) * dz/dphi_k), dz/dphi_k = -a_k sin(arg) / peak
        dz = -a[:, None] * np.sin(arg) / peak
        grad = val / s * np.mean(z[None, :] ** (2 * q - 1) * dz, axis=1)
        return val, grad

    best = schroeder_phases(a)
    best_cf = crest_factor(best, a, first_harmonic, m)
    for q in rounds:
        res = optimize.minimize(surrogate, best, args=(q,), jac=True, method="L-BFGS-B",
                                options={"maxiter": 400})
        cf = crest_factor(res.x, a, first_harmonic, m)
        if cf < best_cf:
            best, best_cf = res.x, cf
    return np.mod(best, 2 * np.pi)


# -- amplitude balancing ------------------------------------------------------

def aod_intensity_model(gains, crosstalk: float = 0.0, saturation: float = 0.0) -> Callable[[np.ndarray], np.ndarray]:
    """Per-trap intensity from RF amplitudes.

    I_i = gain_i a_i^2 (1 - saturation * mean(a^2)) + crosstalk (a_{i-1}^2 + a_{i+1}^2)
    """
    gains = np.asarray(gains, dtype=float)

    def model(amps: np.ndarray) -> np.ndarray:
        p = np.asarray(amps, dtype=float) ** 2
        out = gains * p * (1.0 - saturation * p.mean())
        if crosstalk:
            nb = np.zeros_like(p)
            nb[1:] += p[:-1]
            nb[:-1] += p[1:]
            out = out + crosstalk * nb
        return out

    return model


def intensity_spread(intensities) -> float:
    """max |I_i / mean(I) - 1|."""
    i = np.asarray(intensities, dtype=float)
    mean = i.mean()
    if mean <= 0:
        return np.inf
    return float(np.max(np.abs(i / mean - 1.0)))


def balance_amplitudes(target_uniformity: float, intensity_model: Callable[[np.ndarray], np.ndarray],
                       initial=None, n_channels: int | None = None, eta: float = 0.5,
                       max_iter: int = 100) -> BalanceResult:
    """Proportional feedback a_i <- a_i (mean(I) / I_i)^eta until the spread is below target.

    Amplitudes are renormalised to the initial peak after every step; a single
    step never changes an amplitude by more than a factor of 2.
    """
    if initial is None:
        if n_channels is None:
            raise ValueError("give either initial amplitudes or n_channels")
        initial = np.ones(n_channels)
    amps = np.asarray(initial, dtype=float).copy()
    peak = amps.max()
    spread = intensity_spread(intensity_model(amps))
    history = [spread]
    it = 0
    while spread >= target_uniformity:
        if it == max_iter:
            raise BalanceError(spread, it)
        inten = intensity_model(amps)
        with np.errstate(divide="ignore"):
            ratio = np.where(inten > 0, inten.mean() / np.where(inten > 0, inten, 1.0), np.inf)
        amps = amps * np.clip(ratio**eta, 0.5, 2.0)
        amps *= peak / amps.max()
        it += 1
        spread = intensity_spread(intensity_model(amps))
        history.append(spread)
    return BalanceResult(amplitudes=amps, iterations=it, spread_history=history)
