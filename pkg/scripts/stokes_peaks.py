"""Gaussian-Stokes switch: ybar(h) profiles and the overshoot peak."""

import argparse
import csv
from pathlib import Path

import numpy as np

from switchlayer.closures import stokes_integral, stokes_peak, stokes_peak_estimate


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rhos", type=float, nargs="+", default=[0.0, 0.5, 1.0])
    ap.add_argument("--eps", type=float, default=0.1)
    ap.add_argument("--out", type=Path, default=Path("stokes.csv"))
    args = ap.parse_args()
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rho", "h", "y", "ybar"])
        for rho in args.rhos:
            for h in np.linspace(-8 * args.eps, 8 * args.eps, 321):
                v = stokes_integral(args.eps, rho, float(h))
                w.writerow([rho, f"{h:.6g}", v.y, v.ybar])
    for rho in (r for r in args.rhos if r > 0):
        u_est, y_est = stokes_peak_estimate(rho)
        for eps in (1e-1, 1e-2, 1e-3):
            h, y = stokes_peak(eps, rho)
            print(f"rho={rho:g} eps={eps:g}: peak at h/eps={h / eps:.6f} (estimate {u_est:.6f}), "
                  f"|ybar|={y:.6f} (estimate {y_est:.6f})")


if __name__ == "__main__":
    main()
