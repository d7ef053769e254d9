"""Switching-layer analysis at a point of the surface.

On ``h = 0`` the multiplier obeys the fast equation ``lam' = f1(x, t; lam)``
with ``f1 = f . grad h``. Its equilibria in ``[-1, 1]`` are the sliding roots;
the sign of ``d f1 / d lam`` decides whether a root captures the fast flow.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .model import SwitchedSystem

__all__ = [
    "Stability", "SlidingRoot", "Crossing", "Sliding", "Degenerate", "PassageDecision",
    "SlideExit", "LayerError", "StaleRootError", "DegenerateRootError",
    "find_sliding_roots", "filippov_root", "decide_passage", "trace_fast",
    "sliding_field", "sliding_drift", "fold_jump",
    "SCAN_POINTS", "DEGENERACY_REL",
]

SCAN_POINTS = 257
DEGENERACY_REL = 1e-8
TANGENCY_REL = 1e-10
DEDUP = 1e-9
SUBDIVIDE_DEPTH = 4


class LayerError(RuntimeError):
    """Caller logic fault in the layer analysis (e.g. flow not incident)."""


class StaleRootError(LayerError):
    pass


class DegenerateRootError(LayerError):
    pass


class Stability(enum.Enum):
    ATTRACTING = "attracting"
    REPELLING = "repelling"
    DEGENERATE = "degenerate"


class SlideExit(enum.Enum):
    BOUNDARY_PLUS = "BoundaryPlus"
    BOUNDARY_MINUS = "BoundaryMinus"
    FOLD = "Fold"
    HORIZON = "Horizon"


@dataclass(frozen=True)
class SlidingRoot:
    lam_star: float
    stability: Stability
    df1_dlam: float


@dataclass(frozen=True)
class Crossing:
    exit_side: int


@dataclass(frozen=True)
class Sliding:
    root: SlidingRoot


@dataclass(frozen=True)
class Degenerate:
    lam: float
    reason: str = ""


PassageDecision = Union[Crossing, Sliding, Degenerate]


def _scale(sys: SwitchedSystem, x, t, grad) -> float:
    fp = sys.f1(x, t, 1.0, grad)
    fm = sys.f1(x, t, -1.0, grad)
    return max(1.0, abs(fp), abs(fm))


def classify(df: float, scale: float) -> Stability:
    thr = DEGENERACY_REL * scale
    if df < -thr:
        return Stability.ATTRACTING
    if df > thr:
        return Stability.REPELLING
    return Stability.DEGENERATE


def _refine(fn, a: float, b: float, fa: float, fb: float) -> float:
    """Bracketed root refinement to machine precision: Illinois false position,
    bisecting whenever two consecutive steps fail to halve the bracket."""
    side = 0
    width = b - a
    for it in range(200):
        if b - a <= 4e-16 * max(1.0, abs(a), abs(b)):
            break
        if it % 2 == 1 and b - a > 0.5 * width:
            c = 0.5 * (a + b)
            side = 0
        else:
            c = (a * fb - b * fa) / (fb - fa)
            if not a < c < b:
                c = 0.5 * (a + b)
        if it % 2 == 1:
            width = b - a
        fc = fn(c)
        if fc == 0.0:
            return c
        if (fc > 0) == (fa > 0):
            a, fa = c, fc
            if side == -1:
                fb *= 0.5
            side = -1
        else:
            b, fb = c, fc
            if side == 1:
                fa *= 0.5
            side = 1
    return a if abs(fa) <= abs(fb) else b


def _bisect_sign(fn, a: float, b: float, fa: float, iters: int = 60) -> float:
    for _ in range(iters):
        m = 0.5 * (a + b)
        fm = fn(m)
        if fm == 0.0:
            return m
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def find_sliding_roots(sys: SwitchedSystem, x: Sequence[float], t: float) -> list[SlidingRoot]:
    """All isolated roots of ``lam -> f1(x, t; lam)`` on ``[-1, 1]``, ascending.

    Brackets come from sign changes on a uniform grid. Cells where ``f1`` is
    small relative to slope times width are subdivided a few times, and a
    cell where ``d f1 / d lam`` changes sign is split at the interior
    extremum, so that close roots inside one cell are not lost.
    """
    grad = sys.grad_h(x)
    lams = np.linspace(-1.0, 1.0, SCAN_POINTS)
    vals = np.empty(SCAN_POINTS)
    ders = np.empty(SCAN_POINTS)
    for i, lam in enumerate(lams):
        vals[i], ders[i] = sys.f1_dlam(x, t, float(lam), grad)
    scale = max(1.0, float(np.max(np.abs(vals))))

    def f(lam: float) -> float:
        return sys.f1(x, t, lam, grad)

    def df(lam: float) -> float:
        return sys.f1_dlam(x, t, lam, grad)[1]

    def fd(lam: float) -> tuple[float, float]:
        return sys.f1_dlam(x, t, lam, grad)

    found: list[float] = []

    def cell(a: float, b: float, fa: float, fb: float, da: float, db: float, depth: int) -> None:
        if fa == 0.0:
            found.append(a)
            return
        # a cell where f1 is small against slope*width may hide a root cluster
        if depth < SUBDIVIDE_DEPTH and min(abs(fa), abs(fb)) <= (b - a) * max(abs(da), abs(db)):
            pts = np.linspace(a, b, 5)
            fs = [(fa, da)] + [fd(float(p)) for p in pts[1:-1]] + [(fb, db)]
            for k in range(4):
                cell(float(pts[k]), float(pts[k + 1]), fs[k][0], fs[k + 1][0], fs[k][1], fs[k + 1][1], depth + 1)
            return
        if fa * fb < 0:
            found.append(_refine(f, a, b, fa, fb))
        elif fb != 0.0 and da * db < 0:
            c = _bisect_sign(df, a, b, da)
            fc = f(c)
            if fc == 0.0:
                found.append(c)
            elif fc * fa < 0:
                found.append(_refine(f, a, c, fa, fc))
                found.append(_refine(f, c, b, fc, fb))

    for i in range(SCAN_POINTS - 1):
        cell(float(lams[i]), float(lams[i + 1]), float(vals[i]), float(vals[i + 1]),
             float(ders[i]), float(ders[i + 1]), 0)
    if vals[-1] == 0.0:
        found.append(1.0)

    found.sort()
    roots: list[SlidingRoot] = []
    for lam in found:
        if roots and abs(lam - roots[-1].lam_star) <= DEDUP:
            continue
        d = df(lam)
        roots.append(SlidingRoot(lam, classify(d, scale), d))
    return roots


def filippov_root(sys: SwitchedSystem, x: Sequence[float], t: float) -> Optional[SlidingRoot]:
    """Sliding root of the convex (hidden-term-free) combination, if the fields oppose."""
    grad = sys.grad_h(x)
    fp = sys.f1(x, t, 1.0, grad)
    fm = sys.f1(x, t, -1.0, grad)
    if fp * fm >= 0:
        return None
    lam = (fp + fm) / (fm - fp)
    d = 0.5 * (fp - fm)
    return SlidingRoot(lam, classify(d, max(1.0, abs(fp), abs(fm))), d)


def trace_fast(sys: SwitchedSystem, x: Sequence[float], t: float, lam_start: float, direction: int,
               skip_until: Optional[float] = None) -> PassageDecision:
    """Follow the fast flow from ``lam_start`` moving in ``direction``.

    The first root met decides: an attracting one captures (Sliding), a
    degenerate one is reported as such. Without a blocking root the flow
    leaves the layer at ``lam = direction`` (Crossing). Roots not beyond
    ``skip_until`` (in the direction of travel) are ignored.
    """
    barrier = lam_start if skip_until is None else skip_until
    roots = find_sliding_roots(sys, x, t)
    ahead = [r for r in roots if (r.lam_star - barrier) * direction > DEDUP]
    ahead.sort(key=lambda r: (r.lam_star - barrier) * direction)
    if not ahead:
        return Crossing(exit_side=direction)
    first = ahead[0]
    if first.stability is Stability.ATTRACTING:
        return Sliding(first)
    if first.stability is Stability.DEGENERATE:
        return Degenerate(first.lam_star, "fast flow blocked by a fold of the sliding manifold")
    return Degenerate(first.lam_star, "first root met is repelling (tangential contact)")


def decide_passage(sys: SwitchedSystem, x: Sequence[float], t: float, entry_side: int) -> PassageDecision:
    """Cross or stick, for flow arriving at the surface from ``entry_side``.

    Raises:
        LayerError: if the field on ``entry_side`` does not point into the surface.
    """
    if entry_side not in (1, -1):
        raise ValueError("entry_side must be +1 or -1")
    grad = sys.grad_h(x)
    f_entry = sys.f1(x, t, float(entry_side), grad)
    scale = _scale(sys, x, t, grad)
    if abs(f_entry) <= TANGENCY_REL * scale:
        return Degenerate(float(entry_side), "tangential arrival at the surface")
    if f_entry * entry_side > 0:
        raise LayerError(f"flow on side {entry_side:+d} points away from the surface (f1={f_entry:g})")
    return trace_fast(sys, x, t, float(entry_side), -entry_side)


def sliding_field(sys: SwitchedSystem, x: Sequence[float], t: float, root: SlidingRoot) -> np.ndarray:
    """Velocity of the sliding mode: ``f`` at ``lam*`` with its normal part removed."""
    grad = sys.grad_h(x)
    f = sys.field(x, t, root.lam_star)
    fn = float(np.dot(f, grad))
    g2 = float(np.dot(grad, grad))
    if abs(fn) > 1e-8 * (1.0 + float(np.linalg.norm(f)) * math.sqrt(g2)):
        raise StaleRootError(f"f1={fn:g} at lam*={root.lam_star}; root is stale")
    return f - (fn / g2) * grad


def _hessian_h_dot(sys: SwitchedSystem, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    # central difference of grad h along v; exact (zero) for affine h
    nv = float(np.linalg.norm(v))
    if nv == 0.0:
        return np.zeros_like(x)
    d = 1e-6 * (1.0 + float(np.linalg.norm(x))) / nv
    return (sys.grad_h(x + d * v) - sys.grad_h(x - d * v)) / (2 * d)


def sliding_drift(sys: SwitchedSystem, x: Sequence[float], t: float,
                  root: SlidingRoot) -> tuple[float, Optional[SlideExit]]:
    """Rate ``d lam*/dt`` of the root along the sliding flow, and any exit it signals.

    The root follows ``f1(x(t), t, lam*(t)) = 0``, so by implicit differentiation
    ``d lam*/dt = -(df1/dt + grad_x f1 . v) / (df1/dlam)``.

    Raises:
        DegenerateRootError: if ``root`` is classified degenerate.
    """
    if root.stability is Stability.DEGENERATE:
        raise DegenerateRootError(f"root lam*={root.lam_star} is degenerate")
    x = np.asarray(x, dtype=float)
    grad = sys.grad_h(x)
    scale = _scale(sys, x, t, grad)
    f1, df1_dlam = sys.f1_dlam(x, t, root.lam_star, grad)
    if abs(df1_dlam) <= DEGENERACY_REL * scale:
        return math.nan, SlideExit.FOLD
    v = sliding_field(sys, x, t, root)
    # one forward sweep with tangent (v, 1, 0) gives df/dt + J_x f . v
    f, df = sys.field_tangent(x, v, t, 1.0, root.lam_star, 0.0)
    total = float(np.dot(df, grad) + np.dot(f, _hessian_h_dot(sys, x, v)))
    rate = -total / df1_dlam
    exit_flag = None
    if root.lam_star >= 1.0 - 1e-12 and rate > 0:
        exit_flag = SlideExit.BOUNDARY_PLUS
    elif root.lam_star <= -1.0 + 1e-12 and rate < 0:
        exit_flag = SlideExit.BOUNDARY_MINUS
    return rate, exit_flag


def fold_jump(sys: SwitchedSystem, x: Sequence[float], t: float, lam_fold: float,
              df1_dlam: float) -> PassageDecision:
    """Fast transition after a sliding root has run into a fold.

    Near the fold the tracked root and a partner of opposite stability meet
    at a critical point of ``f1`` in lam. Once they annihilate the fast flow
    moves past the partner's side; the next capturing root beyond decides.
    """
    grad = sys.grad_h(x)
    delta = 1e-6

    def dfl(lam: float) -> float:
        return sys.f1_dlam(x, t, lam, grad)[1]

    curvature = dfl(lam_fold + delta) - dfl(lam_fold - delta)
    direction = -int(math.copysign(1.0, df1_dlam)) * int(math.copysign(1.0, curvature))
    # critical point of f1 between the tracked root and its partner
    start_sign = math.copysign(1.0, dfl(lam_fold)) if dfl(lam_fold) != 0.0 else 0.0
    lam_c = lam_fold
    if start_sign != 0.0:
        step = 1e-6
        probe = lam_fold
        while True:
            nxt = max(-1.0, min(1.0, probe + direction * step))
            if math.copysign(1.0, dfl(nxt)) != start_sign:
                lam_c = _bisect_sign(dfl, probe, nxt, dfl(probe)) if nxt != probe else nxt
                break
            if nxt == probe or abs(nxt) == 1.0:
                lam_c = nxt
                break
            probe = nxt
            step *= 2.0
    skip = lam_c + (lam_c - lam_fold) * 1.5
    return trace_fast(sys, x, t, lam_fold, direction, skip_until=skip)
