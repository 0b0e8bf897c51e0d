"""Loading histogram over 40 tweezers (890 trials), optionally plotted."""

import argparse

import numpy as np

from atomcavity.config import make_config
from atomcavity.loading import run_loading_campaign


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=890)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--plot", action="store_true")
    args = ap.parse_args()

    cfg = make_config()
    stats = run_loading_campaign(cfg.loading, args.trials, args.seed)
    print(f"trials={stats.n_trials} mean={stats.mean:.2f} std={stats.std:.2f}")
    per_trap = stats.occupancies.mean(axis=0)
    print(f"per-trap loading probability: {per_trap.mean():.3f} (min {per_trap.min():.3f}, max {per_trap.max():.3f})")

    if args.plot:
        import matplotlib.pyplot as plt

        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
        ax1.bar(np.arange(cfg.tweezer.n_traps), per_trap)
        ax1.set(xlabel="trap index", ylabel="loading probability")
        ax2.bar(np.arange(stats.histogram.size), stats.histogram)
        ax2.set(xlabel="atoms loaded", ylabel="trials")
        fig.tight_layout()
        plt.show()


if __name__ == "__main__":
    main()
