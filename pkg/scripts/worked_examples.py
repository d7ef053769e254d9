"""Print the sliding/crossing outcome of the four small worked examples."""

import numpy as np

from switchlayer.integrate import Mode, simulate
from switchlayer.scenarios import get


def main() -> None:
    for name in ("example1a", "example1b", "example2a", "example2b"):
        sc = get(name)
        tr = simulate(sc.system, sc.x0, sc.t_span)
        modes = "->".join(m.value for m in tr.mode_sequence())
        sl = np.array([m is Mode.SLIDING for m in tr.mode])
        if sl.sum() > 1:
            t, x, lam = tr.t[sl], tr.x[sl], tr.lam[sl]
            rate = (x[-1, 1] - x[0, 1]) / (t[-1] - t[0])
            extra = f"lam*={lam[0]:+.12f}  dx2/dt={rate:+.12f}"
        else:
            extra = "no sliding"
        events = ", ".join(f"{e.kind.value}@{e.t:.6f}" for e in tr.events)
        print(f"{name:10s} {modes:14s} {extra}  [{events}]")


if __name__ == "__main__":
    main()
