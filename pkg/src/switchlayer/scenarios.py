"""Named worked examples with their reference data and checkable facts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

from .expr import Num
from .model import Combined, Split, SwitchedSystem, decompose

__all__ = ["Fact", "Scenario", "catalog", "get", "names", "filippov_variant", "VDP_PEAK", "LONG_HORIZON"]

# fold of the cubic slow manifold x2/10 + lam - 2 lam^3 = 0 at lam = +-1/sqrt(6)
VDP_PEAK = 20.0 / (3.0 * math.sqrt(6.0))
LONG_HORIZON = 2000.0


@dataclass(frozen=True)
class Fact:
    """A machine-checkable expectation.

    ``basis`` says where the number comes from: ``"worked example"`` for
    values read off the worked examples, ``"derivation"`` for values derived
    here (fold analysis, reference simulation), ``"trivial"`` for sanity facts.
    """

    key: str
    value: object
    tol: float = 0.0
    basis: str = "worked example"
    note: str = ""


@dataclass(frozen=True)
class Scenario:
    name: str
    system: SwitchedSystem
    x0: tuple[float, ...]
    t_span: tuple[float, float]
    expected: tuple[Fact, ...] = ()
    description: str = ""
    long_span: Optional[tuple[float, float]] = None

    def fact(self, key: str) -> Fact:
        for f in self.expected:
            if f.key == key:
                return f
        raise KeyError(key)


def _sys(name: str, n: int, h: str, f=None, **split) -> SwitchedSystem:
    return SwitchedSystem.from_text(n, h, f, name=name, **split)


_R2 = 1.0 / math.sqrt(2.0)


def _build() -> tuple[Scenario, ...]:
    return (
        Scenario(
            "example1a", _sys("example1a", 2, "x1", ["-lam", "2*lam^2 - 1"]), (0.3, 0.0), (0.0, 5.0),
            (Fact("sliding_root", 0.0, 1e-10), Fact("sliding_dx2", -1.0, 1e-8),
             Fact("mode_sequence", ("free+", "sliding"))),
            "hidden term reverses the sliding direction (slides down)",
        ),
        Scenario(
            "example1b", _sys("example1b", 2, "x1", ["-lam", "1"]), (0.3, 0.0), (0.0, 5.0),
            (Fact("sliding_root", 0.0, 1e-10), Fact("sliding_dx2", 1.0, 1e-8),
             Fact("mode_sequence", ("free+", "sliding"))),
            "linear (Filippov) counterpart of example1a (slides up)",
        ),
        Scenario(
            "example2a", _sys("example2a", 2, "x1", ["2*lam^2 - 1", "-lam"]), (-0.5, 0.0), (0.0, 2.0),
            (Fact("roots", (-_R2, _R2), 1e-10), Fact("sliding_root", -_R2, 1e-10),
             Fact("df1_dlam", -2.0 * math.sqrt(2.0), 1e-6), Fact("sliding_dx2", _R2, 1e-8),
             Fact("mode_sequence", ("free-", "sliding"))),
            "hidden term makes the flow stick at lam* = -1/sqrt(2)",
        ),
        Scenario(
            "example2b", _sys("example2b", 2, "x1", ["1", "-lam"]), (-0.5, 0.0), (0.0, 2.0),
            (Fact("roots", ()), Fact("mode_sequence", ("free-", "free+")), Fact("cross_exits", 1),
             Fact("hit_time", 0.5, 1e-9, "derivation", "exact linear flow x1' = 1")),
            "linear counterpart of example2a: crosses",
        ),
        Scenario(
            "hidden_vdp", _sys("hidden_vdp", 2, "x1", ["x2/10 + lam - 2*lam^3", "-lam"]), (1.0, 1.0), (0.0, 150.0),
            (Fact("peak_abs_x2", VDP_PEAK, 0.05, "derivation",
                  "fold of x2/10 + lam - 2 lam^3 = 0 at lam = +-1/sqrt(6); checked against a stiff eps = 1e-6 run"),
             Fact("transient_end", 50.0, 0.0, "derivation")),
            "relaxation oscillation hidden inside x1 = 0",
        ),
        Scenario(
            "hidden_vdp_coupled",
            _sys("hidden_vdp_coupled", 3, "x1", ["x2/10 + lam - 2*lam^3", "-lam", "(lam - x3)/0.0001"]),
            (1.0, 1.0, 1.0), (0.0, 150.0),
            (Fact("peak_abs_x2", VDP_PEAK, 0.05, "derivation"),),
            "hidden_vdp with a fast observer x3 tracking lam (beta = 1e-4)",
        ),
        Scenario(
            "oscillator_linear",
            _sys("oscillator_linear", 2, "x1",
                 fplus=["-0.01*x1 - x2 - sin(3/2*pi*t)", "x1"],
                 fminus=["-0.01*x1 - x2 - sin(1/2*pi*t)", "x1"]),
            (1.0, 0.0), (0.0, 200.0),
            (Fact("step_agreement", 0.05, 0.0, "derivation", "sup-norm over t in [100, 200], steps 1e-4 vs 1e-5"),),
            "forced oscillator, frequency switched linearly in lam",
            (0.0, LONG_HORIZON),
        ),
        Scenario(
            "oscillator_nonlinear",
            _sys("oscillator_nonlinear", 2, "x1", ["-0.01*x1 - x2 - sin((1 + lam/2)*pi*t)", "x1"]),
            (1.0, 0.0), (0.0, 200.0),
            (Fact("step_divergence", 0.5, 0.0, "derivation", "sup-norm over t in [100, 200], steps 1e-4 vs 1e-5"),
             Fact("transit_lag_ratio", 2.0, 0.0, "derivation", "nonlinear transit at least twice the linear one")),
            "forced oscillator, frequency switched nonlinearly in lam",
            (0.0, LONG_HORIZON),
        ),
    )


_CATALOG = _build()


def catalog() -> list[Scenario]:
    return list(_CATALOG)


def names() -> list[str]:
    return [s.name for s in _CATALOG]


def get(name: str) -> Scenario:
    for s in _CATALOG:
        if s.name == name:
            return s
    raise KeyError(f"unknown scenario {name!r}; known: {', '.join(names())}")


def filippov_variant(s: Scenario) -> Scenario:
    """The same scenario with the hidden term dropped (g = 0).

    Raises:
        ModelError: if a combined-form field is not polynomial in lam.
    """
    sys = s.system
    zeros = tuple(Num(0.0) for _ in range(sys.n))
    if isinstance(sys.form, Split):
        fp, fm = sys.form.fplus, sys.form.fminus
    else:
        fp, fm, g = decompose(sys.form.f)
        if all(isinstance(e, Num) and e.value == 0.0 for e in g):
            return s
    name = s.name + "_filippov"
    new = SwitchedSystem(sys.n, sys.h, Split(fp, fm, zeros), name=name)
    facts: tuple[Fact, ...] = ()
    if s.name.startswith("hidden_vdp"):
        facts = (Fact("x2_decay", 1e-3, 0.0, "worked example", "origin attracting without the hidden term; |x2| < 1e-3 by t = 100"),)
    return replace(s, name=name, system=new, expected=facts, description=s.description + " (hidden term removed)")
