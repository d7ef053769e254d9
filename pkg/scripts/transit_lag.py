"""Layer transit profiles lam(t) for the linear and nonlinear oscillators.

The nonlinear model lingers in |x1| <= eps far longer than the linear one.
"""

import argparse
import csv
from pathlib import Path

from switchlayer.regularize import Sigmoid, SigmoidKind, layer_transit_profile, smooth_simulate, transits
from switchlayer.scenarios import get


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--eps", type=float, default=1e-3)
    ap.add_argument("--step", type=float, default=1e-5)
    ap.add_argument("--t-end", type=float, default=3.0)
    ap.add_argument("--out", type=Path, default=Path("transit_lag.csv"))
    args = ap.parse_args()
    rows = []
    for name in ("oscillator_linear", "oscillator_nonlinear"):
        sc = get(name)
        tr = smooth_simulate(sc.system, sc.x0, (0.0, args.t_end), Sigmoid(SigmoidKind.TANH, args.eps), args.step, 1)
        for k, (i, j) in enumerate(transits(tr)):
            prof = layer_transit_profile(tr, k)
            print(f"{name}: transit {k} enters at t={tr.t[i]:.4f}, lasts {prof[-1][0]:.5f}")
            rows += [(name, k, tr.t[i], dt, lam) for dt, lam in prof]
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "transit", "t_enter", "dt", "lambda"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
