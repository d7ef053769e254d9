"""Shared generators for property and acceptance tests."""

import numpy as np

from switchlayer.model import SwitchedSystem


def coeff_text(rng: np.random.Generator) -> str:
    """A small smooth coefficient in x1, x2, t."""
    a, b, c = (float(v) for v in np.round(rng.uniform(-2, 2, 3), 3))
    kind = rng.integers(4)
    if kind == 0:
        return f"{a}"
    if kind == 1:
        return f"{a}*x2 + {b}"
    if kind == 2:
        return f"{a}*sin({b}*t + x2) + {c}"
    return f"{a}*x1*x2 - {b}*cos(x2)"


def lam_poly_text(rng: np.random.Generator, degree: int) -> str:
    terms = [f"({coeff_text(rng)})*lam^{k}" for k in range(degree + 1)]
    return " + ".join(terms)


def random_lam_system(rng: np.random.Generator, max_degree: int = 5) -> SwitchedSystem:
    d1, d2 = rng.integers(0, max_degree + 1, 2)
    return SwitchedSystem.from_text(2, "x1", [lam_poly_text(rng, d1), lam_poly_text(rng, d2)])


def random_layer_poly(rng: np.random.Generator, max_degree: int = 5) -> tuple[SwitchedSystem, np.ndarray]:
    """A system whose normal component f1 is a polynomial in lam with known real roots.

    Roots are drawn inside [-1, 1], at least 1e-3 apart and away from the
    ends, so a brute-force scan can resolve them unambiguously.
    """
    k = int(rng.integers(0, max_degree + 1))
    while True:
        roots = np.sort(rng.uniform(-0.98, 0.98, k))
        if k < 2 or np.min(np.diff(roots)) > 1e-3:
            break
    extra = int(rng.integers(0, 2))
    # an extra factor with no root in [-1, 1] exercises non-monotone f1
    factors = [f"(lam - ({float(r)!r}))" for r in roots]
    if extra:
        factors.append(f"(lam^2 + {float(rng.uniform(0.1, 1.0))!r})")
    scale = float(rng.uniform(0.2, 3.0) * rng.choice([-1.0, 1.0]))
    body = "*".join(factors) if factors else "1"
    f1 = f"{scale!r}*{body}"
    return SwitchedSystem.from_text(2, "x1", [f1, "lam"]), roots
