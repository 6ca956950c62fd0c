"""Heralded g2(n) versus herald offset n at the calibrated 12.5 mW point.

g2(n) pairs the D_A gate of herald k with the D_B gate of herald k + n, so
only n = 0 shows the single-photon dip.
"""

import argparse

from pairsource.analysis import analytic_prediction, estimate_g2
from pairsource.config import load_config
from pairsource.montecarlo import SimRun, simulate_heralded


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default="paper_12p5mW")
    ap.add_argument("--heralds", type=float, default=1e9)
    ap.add_argument("--offsets", default="1,2,3,4,5,6")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--threads", type=int, default=4)
    args = ap.parse_args()

    cfg = load_config(args.config)
    offsets = tuple(int(v) for v in args.offsets.split(","))
    run = SimRun(cfg.pump, cfg.source, cfg.chain, seed=args.seed, mode="heralded_only",
                 n_heralds=int(args.heralds), g2_offsets=offsets, threads=args.threads)
    rep = simulate_heralded(run)
    print(f"analytic g2(0) = {analytic_prediction(cfg.source, cfg.chain, cfg.pump).g2:.4f}")
    print("n   g2(n)    std")
    for n in (0, *offsets):
        g = estimate_g2(rep, n)
        print(f"{n:<3} {g.value:.4f}   {g.std_error:.4f}")


if __name__ == "__main__":
    main()
