"""Closed-form switching laws that arise from smooth physics.

Each model produces a sigmoid-like ``y(h)`` that tends to ``sign(h)`` as
``eps -> 0``: the steady state of a bistable relaxation ODE, the steady
state of a diffusive (heat-type) equation, and a Gaussian oscillatory
integral whose stationary-point contribution switches on across ``h = 0``
(a Stokes discontinuity).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

__all__ = [
    "ClosureKind", "ClosureModel", "RelaxationState", "StokesValue",
    "relaxation_steady_state", "relaxation_transient", "heat_steady_state", "heat_tail",
    "stokes_integral", "stokes_switch_asymptote", "stokes_peak", "stokes_peak_estimate",
    "adaptive_simpson",
]


class RelaxationState(NamedTuple):
    y_star: float
    dydot_dy: float
    singular: bool = False


class StokesValue(NamedTuple):
    y: float
    ybar: float


def relaxation_steady_state(eps: float, h: float) -> RelaxationState:
    """Attracting equilibrium of ``eps y' = (1 - y^2) h - eps y`` and its eigenvalue.

    ``y* = -eps/2h + sign(h) sqrt(1 + (eps/2h)^2)``, evaluated in a form free of
    cancellation. At ``h = 0`` the symmetric limit ``y* = 0`` is returned with
    ``singular=True``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if h == 0.0:
        return RelaxationState(0.0, -1.0, True)
    c = eps / (2.0 * h)
    y = math.copysign(1.0, h) / (math.hypot(1.0, c) + abs(c))
    return RelaxationState(y, -math.hypot(1.0, 2.0 * h / eps), False)


def relaxation_transient(eps: float, h: float, y0: float, t: float) -> float:
    """Solution ``y(t)`` of ``eps y' = (1 - y^2) h - eps y`` with ``y(0) = y0``.

    Raises:
        ValueError: if ``h = 0`` or ``y0`` lies outside the tanh branch
            (``|eps/2h + y0| >= sqrt(1 + (eps/2h)^2)``).
    """
    if h == 0.0:
        raise ValueError("h must be non-zero")
    c = eps / (2.0 * h)
    alpha = math.hypot(1.0, c)
    arg = (c + y0) / alpha
    if not -1.0 < arg < 1.0:
        raise ValueError(f"y0={y0} outside the arctanh domain for h={h}, eps={eps}")
    return -c + alpha * math.tanh(alpha * t * h / eps + math.atanh(arg))


def heat_steady_state(eps: float, h: float) -> float:
    """``Erf(h / sqrt(2 eps))``: the bounded odd solution of ``h y' + eps y'' = 0``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    return math.erf(h / math.sqrt(2.0 * eps))


def heat_tail(eps: float, h: float) -> float:
    """Leading tail ``-(sqrt(2 eps/pi)/h) exp(-h^2/2eps)`` of the heat steady state."""
    return -math.sqrt(2.0 * eps / math.pi) / h * math.exp(-h * h / (2.0 * eps))


def adaptive_simpson(f: Callable[[float], float], a: float, b: float, tol: float = 1e-10,
                     max_depth: int = 50) -> float:
    """Adaptive Simpson quadrature with Richardson correction (absolute tolerance)."""
    if a == b:
        return 0.0
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    whole = (b - a) / 6.0 * (fa + 4 * fm + fb)
    total = 0.0
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        a0, b0, f0, f2, f4, s, eps, depth = stack.pop()
        m = 0.5 * (a0 + b0)
        f1, f3 = f(0.5 * (a0 + m)), f(0.5 * (m + b0))
        left = (m - a0) / 6.0 * (f0 + 4 * f1 + f2)
        right = (b0 - m) / 6.0 * (f2 + 4 * f3 + f4)
        delta = left + right - s
        if depth >= max_depth or abs(delta) <= 15.0 * eps:
            total += left + right + delta / 15.0
        else:
            stack.append((a0, m, f0, f1, f2, left, eps / 2, depth + 1))
            stack.append((m, b0, f2, f3, f4, right, eps / 2, depth + 1))
    return sign * total


_NORM = math.sqrt(2.0 / math.pi)


def stokes_integral(eps: float, rho: float, h: float, tol: float = 1e-10) -> StokesValue:
    """``y(h) = sqrt(2/pi) int_{-L}^{h/eps} exp(-k^2/2) cos(rho k) dk`` and ``ybar = e^{rho^2/2} y - 1``.

    The lower limit is ``L = max(10, |h|/eps + 10)`` standard deviations,
    which always lies below the upper limit.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if rho < 0:
        raise ValueError("rho must be non-negative")
    u = h / eps
    lower = -max(10.0, abs(u) + 10.0)

    def g(k: float) -> float:
        return math.exp(-0.5 * k * k) * math.cos(rho * k)

    y = _NORM * adaptive_simpson(g, lower, u, tol / _NORM)
    return StokesValue(y, math.exp(0.5 * rho * rho) * y - 1.0)


def stokes_switch_asymptote(eps: float, rho: float, h: float) -> float:
    """Large-``|h|/eps`` form ``e^{-rho^2/2}(1 + sign h) - sqrt(2/pi) e^{-h^2/2eps^2} cos(rho h/eps) eps/h``."""
    if h == 0.0:
        raise ValueError("the asymptote is undefined at h = 0")
    u = h / eps
    return math.exp(-0.5 * rho * rho) * (1.0 + math.copysign(1.0, h)) - _NORM * math.exp(-0.5 * u * u) * math.cos(rho * u) / u


def stokes_peak_estimate(rho: float) -> tuple[float, float]:
    """Approximate peak ``(h/eps, |ybar|)``: ``pi/2rho`` and ``1 + sqrt(2/pi)(4 rho^3/pi^2) e^{-pi^2/8rho^2}``."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    return math.pi / (2 * rho), 1.0 + _NORM * 4 * rho ** 3 / math.pi ** 2 * math.exp(-math.pi ** 2 / (8 * rho * rho))


def stokes_peak(eps: float, rho: float, tol: float = 1e-9) -> tuple[float, float]:
    """Location ``h > 0`` and height of the first maximum of ``ybar(h)``, by golden-section search.

    ``dy/du`` is proportional to ``cos(rho u)``, so the first maximum of ``y``
    for ``u > 0`` lies in ``(0, pi/rho)``.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    a, b = 0.0, math.pi / rho
    gr = (math.sqrt(5.0) - 1.0) / 2.0

    def val(u: float) -> float:
        return stokes_integral(eps, rho, u * eps).ybar

    c, d = b - gr * (b - a), a + gr * (b - a)
    fc, fd = val(c), val(d)
    while b - a > tol * (1.0 + abs(b)):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - gr * (b - a)
            fc = val(c)
        else:
            a, c, fc = c, d, fd
            d = a + gr * (b - a)
            fd = val(d)
    u = 0.5 * (a + b)
    return u * eps, val(u)


class ClosureKind(enum.Enum):
    RELAXATION_ODE = "RelaxationODE"
    HEAT_STEADY_STATE = "HeatSteadyState"
    GAUSSIAN_STOKES = "GaussianStokes"


@dataclass(frozen=True)
class ClosureModel:
    """One closure law with its small parameter; ``__call__`` gives ``y(h)``
    (``ybar`` for the Gaussian-Stokes model)."""

    kind: ClosureKind
    eps: float
    rho: float = 0.0

    def __post_init__(self) -> None:
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.rho < 0:
            raise ValueError("rho must be non-negative")

    def __call__(self, h: float) -> float:
        if self.kind is ClosureKind.RELAXATION_ODE:
            return relaxation_steady_state(self.eps, h).y_star
        if self.kind is ClosureKind.HEAT_STEADY_STATE:
            return heat_steady_state(self.eps, h)
        return stokes_integral(self.eps, self.rho, h).ybar
