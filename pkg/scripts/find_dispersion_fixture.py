"""Coarse grid search for a sample dispersion model.

Fixes beta2 = +5 ps^2/km at 1064 nm and a zero-dispersion wavelength of
1092 nm, scans beta4, and picks beta3 from the ZDW condition. Prints the
beta4 whose outer phase-matched signal lands closest to 810 nm. The output
was frozen into tests/conftest.py and the shipped profiles; the values are a
plausible fiber, not measured data.
"""

import argparse

import numpy as np

from pairsource.phasematch import DispersionModel, angular_frequency, solve_sidebands


def beta3_for_zdw(beta2, beta4, ref_nm, zdw_nm):
    dw = float(angular_frequency(zdw_nm) - angular_frequency(ref_nm))
    return -(beta2 + 0.5 * beta4 * dw**2) / dw


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--beta2", type=float, default=5.0)
    ap.add_argument("--gamma", type=float, default=10.0)
    ap.add_argument("--peak-power", type=float, default=0.6667)
    ap.add_argument("--target", type=float, default=810.0)
    args = ap.parse_args()

    best = None
    for beta4 in -np.logspace(-5, -3, 401):
        beta3 = beta3_for_zdw(args.beta2, beta4, 1064.0, 1092.0)
        model = DispersionModel(1064.0, (args.beta2, beta3, beta4), args.gamma, 1092.0, (600.0, 2500.0))
        roots = solve_sidebands(model, 1064.0, args.peak_power, (700.0, 1064.0), 1.0)
        if not roots:
            continue
        err = abs(roots[0].signal_nm - args.target)
        if best is None or err < best[0]:
            best = (err, beta3, beta4, roots[0])
    err, beta3, beta4, root = best
    print(f"beta3 = {beta3!r}\nbeta4 = {beta4!r}")
    print(f"signal {root.signal_nm:.3f} nm  idler {root.idler_nm:.3f} nm")


if __name__ == "__main__":
    main()
