"""Defect-free success probability with and without rearrangement."""

import argparse

from atomcavity.config import make_config
from atomcavity.experiments import defect_free_curve


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--plot", action="store_true")
    args = ap.parse_args()

    cfg = make_config()
    print(f"calibrated per-atom survival: {cfg.survival:.5f}")
    rows = defect_free_curve(cfg, range(1, cfg.tweezer.n_traps + 1), args.trials, args.seed)
    print(f"{'N':>3} {'p^N':>11} {'rearranged':>11} {'MC':>9}")
    for r in rows:
        print(f"{r['N']:3d} {r['p_N_no_rearrangement']:11.3e} {r['rearranged_analytic']:11.4f} {r['rearranged_mc']:9.4f}")

    if args.plot:
        import matplotlib.pyplot as plt

        n = [r["N"] for r in rows]
        plt.semilogy(n, [r["p_N_no_rearrangement"] for r in rows], "o", color="red", label="no rearrangement")
        plt.semilogy(n, [r["rearranged_analytic"] for r in rows], "-", color="k", label="rearranged (model)")
        plt.semilogy(n, [max(r["rearranged_mc"], 1e-12) for r in rows], "s", color="k", mfc="none", label="rearranged (MC)")
        plt.xlabel("N")
        plt.ylabel("defect-free probability")
        plt.legend()
        plt.show()


if __name__ == "__main__":
    main()
