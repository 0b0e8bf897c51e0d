"""Vacuum Rabi spectra for N = 3..26, fitted, then regressed on sqrt(N)."""

import argparse
import math

from atomcavity.config import make_config
from atomcavity.experiments import scaling_campaign
from atomcavity.spectra import transmission


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--model", choices=["uniform", "geometric"], default="geometric")
    ap.add_argument("--plot", action="store_true")
    args = ap.parse_args()

    cfg = make_config()
    run = scaling_campaign(cfg, range(3, 27), args.seed, model=args.model)
    sc = run.scaling
    for n, om in sc.pairs:
        print(f"N={n:2d}  omega_N={om:7.3f} MHz  (true {run.truth[n]:7.3f})  g={om / math.sqrt(n):.3f}")
    print(f"g0 = {sc.g0_hat:.3f}({round(1000 * sc.g0_sigma):d}) MHz, mean g = {sc.mean_g:.3f} MHz, "
          f"spread {100 * sc.max_rel_dev:.1f}%")

    if args.plot:
        import matplotlib.pyplot as plt
        import numpy as np

        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
        for n in (3, 10, 18, 26):
            spec = run.spectra[n]
            ax1.plot(spec.detuning, spec.transmission + 0.6 * (n // 8), ".", ms=3)
            ax1.plot(spec.detuning, transmission(spec.detuning, run.fits[n].params(2.6, 1.1)) + 0.6 * (n // 8), "r-")
        ax1.set(xlabel="probe detuning (MHz)", ylabel="transmission (offset)")
        ns = np.array([n for n, _ in sc.pairs])
        ax2.plot(ns, [om for _, om in sc.pairs], "ko")
        ax2.plot(ns, sc.g0_hat * np.sqrt(ns), "r-")
        ax2.set(xlabel="N", ylabel="collective coupling (MHz)")
        fig.tight_layout()
        plt.show()


if __name__ == "__main__":
    main()
