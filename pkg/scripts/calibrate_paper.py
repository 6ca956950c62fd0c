"""Calibrate the source model to the 12.5 mW operating point and print it.

Targets: 3.5e4 heralds/s, p_A|H = 2.975e-3, p_B|H = 3.162e-3, CAR 18.3.
Efficiencies and darks come from the chosen profile; the fitted pair
coefficient and pump-driven backgrounds are what the shipped profiles hold.
"""

import argparse

from pairsource.analysis import CalibrationTargets, calibrate_model
from pairsource.config import load_config


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default="paper_12p5mW")
    ap.add_argument("--herald-rate", type=float, default=3.5e4)
    ap.add_argument("--p-a", type=float, default=2.975e-3)
    ap.add_argument("--p-b", type=float, default=3.162e-3)
    ap.add_argument("--car", type=float, default=18.3)
    args = ap.parse_args()

    cfg = load_config(args.config)
    targets = CalibrationTargets(args.herald_rate, args.p_a, args.p_b, args.car)
    res = calibrate_model(targets, cfg.pump, cfg.chain, cfg.source)
    s, p = res.source, res.prediction
    print(f"iterations          {res.iterations}")
    print(f"pair_coeff_k        {s.pair_coeff_k!r}  (mu = {p.mu:.5g})")
    print(f"herald_bg_per_gate  {s.herald_bg_per_gate!r}")
    print(f"idlerA_bg_per_gate  {s.idlerA_bg_per_gate!r}")
    print(f"idlerB_bg_per_gate  {s.idlerB_bg_per_gate!r}")
    print(f"predicted g2(0)     {p.g2:.4f}")
    print(f"predicted CAR       {p.car:.3f}")
    for name, r in res.residuals.items():
        print(f"residual {name:<14} {r:+.2e}")
    if res.non_identifiable:
        print("non-identifiable:", ", ".join(res.non_identifiable))


if __name__ == "__main__":
    main()
