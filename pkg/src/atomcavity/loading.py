"""Stochastic single-atom loading and defect-free success probabilities.

Each trial owns a counter-based Philox stream derived from
``(master_seed, trial_id)``: the key comes from the master seed and the
counter starts at ``trial_id * words_per_trial / 4``. Because Philox is
counter based, a contiguous draw covering trials ``a..b`` is bit-identical to
drawing every trial separately, so campaigns can be chunked (or spread over
workers) without changing any number.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .physics import DomainError

_U53 = 2.0**-53
CHUNK_TRIALS = 8192


class InfeasibleError(ValueError):
    """Requested success probability cannot be reached with any survival."""


@dataclass(frozen=True)
class OccupancyState:
    occupied: np.ndarray
    trial_id: int = 0

    def __post_init__(self) -> None:
        occ = np.asarray(self.occupied, dtype=bool)
        if occ.ndim != 1:
            raise ValueError("occupancy must be one-dimensional")
        object.__setattr__(self, "occupied", occ)

    @property
    def n_traps(self) -> int:
        return int(self.occupied.size)

    @property
    def atom_count(self) -> int:
        return int(self.occupied.sum())

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.occupied)

    def bitstring(self) -> str:
        return "".join("1" if b else "0" for b in self.occupied)

    @classmethod
    def from_indices(cls, indices, n_traps: int, trial_id: int = 0) -> "OccupancyState":
        occ = np.zeros(n_traps, dtype=bool)
        occ[list(indices)] = True
        return cls(occ, trial_id)

    @classmethod
    def from_bitstring(cls, bits: str, trial_id: int = 0) -> "OccupancyState":
        return cls(np.array([c == "1" for c in bits], dtype=bool), trial_id)


@dataclass
class LoadingStats:
    histogram: np.ndarray
    n_trials: int
    mean: float
    std: float
    p: float = float("nan")
    atom_counts: np.ndarray = field(default=None, repr=False)
    occupancies: np.ndarray = field(default=None, repr=False)

    def manifest(self) -> dict:
        return {
            "n_trials": self.n_trials,
            "p": self.p,
            "mean": self.mean,
            "std": self.std,
            "histogram": [int(c) for c in self.histogram],
        }


@dataclass(frozen=True)
class LoadingConfig:
    """Loading model: per-trap probability and imaging readout errors."""

    n_traps: int = 40
    p: float = 0.6
    false_positive: float = 0.0
    false_negative: float = 0.0

    def __post_init__(self) -> None:
        if self.n_traps < 1:
            raise DomainError("n_traps must be >= 1")
        for name in ("p", "false_positive", "false_negative"):
            _check_probability(name, getattr(self, name))

    @property
    def words_per_trial(self) -> int:
        # occupancy, readout and survival draws, padded to whole Philox blocks
        return 4 * math.ceil(3 * self.n_traps / 4)


def _check_probability(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise DomainError(f"{name} must lie in [0, 1], got {value!r}")


def _philox_key(master_seed: int) -> np.ndarray:
    return np.random.SeedSequence(master_seed).generate_state(2, np.uint64)


def trial_rng(master_seed: int, trial_id: int, words_per_trial: int) -> np.random.Generator:
    """Generator positioned at the start of one trial's stream."""
    if words_per_trial % 4:
        raise ValueError("words_per_trial must be a multiple of 4")
    bitgen = np.random.Philox(key=_philox_key(master_seed), counter=trial_id * words_per_trial // 4)
    return np.random.Generator(bitgen)


def trial_uniforms(master_seed: int, first_trial: int, n_trials: int, words_per_trial: int) -> np.ndarray:
    """Uniform [0, 1) draws for a contiguous range of trials, shape (n_trials, words)."""
    bitgen = np.random.Philox(key=_philox_key(master_seed), counter=first_trial * words_per_trial // 4)
    raw = bitgen.random_raw(n_trials * words_per_trial)
    # same mapping as Generator.random
    return ((raw >> np.uint64(11)) * _U53).reshape(n_trials, words_per_trial)


def sample_occupancy(n_traps: int, p: float, rng: np.random.Generator, trial_id: int = 0) -> OccupancyState:
    """Each trap is loaded independently with probability ``p``."""
    _check_probability("p", p)
    return OccupancyState(rng.random(n_traps) < p, trial_id)


def apply_readout(occupied: np.ndarray, u: np.ndarray, false_positive: float, false_negative: float) -> np.ndarray:
    """Imaging readout: flip true atoms with prob. FN and empty traps with prob. FP."""
    flip = np.where(occupied, u < false_negative, u < false_positive)
    return occupied ^ flip


def defect_free_probability(N: int, p: float) -> float:
    """Chance that a fixed block of ``N`` traps is fully loaded without rearrangement."""
    if N < 0:
        raise DomainError("N must be >= 0")
    _check_probability("p", p)
    return float(p) ** N


def binomial_tail(N: int, n_traps: int, p: float) -> float:
    """P(at least N of n_traps load)."""
    if N <= 0:
        return 1.0
    return float(stats.binom.sf(N - 1, n_traps, p))


def rearranged_success_probability(N: int, n_traps: int, p: float, survival: float) -> float:
    """Probability that at least ``N`` atoms load and all ``N`` retained atoms survive."""
    if not 0 <= N <= n_traps:
        raise DomainError(f"N must lie in [0, {n_traps}], got {N!r}")
    _check_probability("p", p)
    _check_probability("survival", survival)
    return binomial_tail(N, n_traps, p) * float(survival) ** N


def calibrate_survival(N_ref: int, target_prob: float, n_traps: int, p: float, rtol: float = 1e-9) -> float:
    """Per-atom survival that makes the rearranged success at ``N_ref`` equal ``target_prob``.

    Solved by bracketing on [0, 1]; the success probability is monotone in survival.
    """
    tail = rearranged_success_probability(N_ref, n_traps, p, 1.0)
    if not 0.0 < target_prob <= tail:
        raise InfeasibleError(
            f"target {target_prob!r} unattainable: must lie in (0, {tail!r}] for N={N_ref}"
        )
    if N_ref == 0 or target_prob == tail:
        return 1.0

    def gap(s: float) -> float:
        return rearranged_success_probability(N_ref, n_traps, p, s) - target_prob

    # success ~ s**N, so a relative error e in s becomes N * e in the probability
    s_rtol = max(rtol / (10 * N_ref), 4 * np.finfo(float).eps)
    return float(optimize.brentq(gap, 0.0, 1.0, xtol=1e-300, rtol=s_rtol))


def _simulate_chunk(cfg: LoadingConfig, master_seed: int, first: int, count: int,
                    N: int | None, survival: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = cfg.n_traps
    u = trial_uniforms(master_seed, first, count, cfg.words_per_trial)
    truth = u[:, :n] < cfg.p
    seen = apply_readout(truth, u[:, n:2 * n], cfg.false_positive, cfg.false_negative)
    counts = seen.sum(axis=1)
    if N is None:
        success = np.zeros(count, dtype=bool)
    else:
        # keep the N detected atoms nearest the array centre; a false positive
        # among them leaves a hole in the final array
        order = np.argsort(np.abs(np.arange(n) - (n - 1) / 2), kind="stable")
        seen_sorted = seen[:, order]
        retained = seen_sorted & (np.cumsum(seen_sorted, axis=1) <= N)
        genuine = ~(retained & ~truth[:, order]).any(axis=1)
        alive = (u[:, 2 * n:2 * n + N] < survival).all(axis=1)
        success = (counts >= N) & genuine & alive
    return seen, counts, success


def _campaign(cfg: LoadingConfig, n_trials: int, master_seed: int, N: int | None,
              survival: float, workers: int):
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    starts = list(range(0, n_trials, CHUNK_TRIALS))
    jobs = [(s, min(CHUNK_TRIALS, n_trials - s)) for s in starts]

    def run(job):
        return _simulate_chunk(cfg, master_seed, job[0], job[1], N, survival)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    seen = np.concatenate([p[0] for p in parts])
    counts = np.concatenate([p[1] for p in parts])
    success = np.concatenate([p[2] for p in parts])
    return seen, counts, success


def run_loading_campaign(config: LoadingConfig, n_trials: int, master_seed: int,
                         workers: int = 1, keep_occupancies: bool = True) -> LoadingStats:
    """Simulate ``n_trials`` independent loads and histogram the atom number.

    Results depend only on ``(config, n_trials, master_seed)``; ``workers`` only
    changes how chunks are scheduled.
    """
    seen, counts, _ = _campaign(config, n_trials, master_seed, None, 1.0, workers)
    hist = np.bincount(counts, minlength=config.n_traps + 1)
    std = float(counts.std(ddof=1)) if n_trials > 1 else 0.0
    return LoadingStats(
        histogram=hist,
        n_trials=n_trials,
        mean=float(counts.mean()),
        std=std,
        p=config.p,
        atom_counts=counts,
        occupancies=seen if keep_occupancies else None,
    )


def occupancy_states(stats_: LoadingStats) -> list[OccupancyState]:
    return [OccupancyState(row, i) for i, row in enumerate(stats_.occupancies)]


def defect_free_frequency(occupancies: np.ndarray, N: int, start: int = 0) -> float:
    """Fraction of trials in which traps ``start .. start+N-1`` are all loaded."""
    occ = np.asarray(occupancies, dtype=bool)
    return float(occ[:, start:start + N].all(axis=1).mean())


def simulate_rearranged_success(config: LoadingConfig, N: int, survival: float, n_trials: int,
                                master_seed: int, workers: int = 1) -> float:
    """Monte Carlo estimate of the rearranged defect-free success probability."""
    if not 0 <= N <= config.n_traps:
        raise DomainError(f"N must lie in [0, {config.n_traps}]")
    _check_probability("survival", survival)
    _, _, success = _campaign(config, n_trials, master_seed, N, survival, workers)
    return float(success.mean())
