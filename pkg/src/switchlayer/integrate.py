"""Event-driven integration of the piecewise-smooth (eps -> 0) system.

Off the surface the flow is one of the two pure fields ``f(x, t; +-1)``.
At ``h = 0`` the layer analysis decides between crossing and sliding; a
sliding segment carries ``lam*`` as an algebraic variable, re-solved by
Newton at every stage, with ``x`` re-projected onto the surface after each
accepted step.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .layer import (
    Crossing, Degenerate, DegenerateRootError, LayerError, SlideExit, Sliding, SlidingRoot,
    Stability, classify, decide_passage, fold_jump, trace_fast, DEGENERACY_REL,
)
from .model import SwitchedSystem, surface_tolerance

__all__ = [
    "Mode", "EventKind", "Event", "Trajectory", "IntegratorConfig", "IntegrationError",
    "SurfaceHit", "integrate_free", "integrate_sliding", "simulate",
]


class IntegrationError(RuntimeError):
    """Numerical failure: step underflow, non-finite state, domain error."""


class Mode(enum.Enum):
    FREE_PLUS = "free+"
    FREE_MINUS = "free-"
    SLIDING = "sliding"
    TRANSIT = "transit"

    @classmethod
    def free(cls, side: int) -> "Mode":
        return cls.FREE_PLUS if side > 0 else cls.FREE_MINUS


class EventKind(enum.Enum):
    SURFACE_HIT = "SurfaceHit"
    CROSS_EXIT = "CrossExit"
    SLIDE_START = "SlideStart"
    SLIDE_END_BOUNDARY = "SlideEndBoundary"
    SLIDE_END_FOLD = "SlideEndFold"
    DEGENERATE_HALT = "DegenerateHalt"


@dataclass(frozen=True)
class Event:
    t: float
    kind: EventKind
    detail: str = ""


@dataclass
class IntegratorConfig:
    method: str = "rk45_adaptive"
    step: float = 1e-2
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    event_tol: float = 1e-10
    max_events: int = 1_000_000

    def __post_init__(self) -> None:
        if self.method not in ("rk4_fixed", "rk45_adaptive"):
            raise ValueError(f"unknown method {self.method!r}")
        for name in ("step", "rel_tol", "abs_tol", "event_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_events < 1:
            raise ValueError("max_events must be at least 1")


class Trajectory:
    """Samples ``(t, x, lam, mode)`` plus a log of discrete events."""

    def __init__(self, n: int) -> None:
        self.n = n
        self._t: list[float] = []
        self._x: list[np.ndarray] = []
        self._lam: list[float] = []
        self._mode: list[Mode] = []
        self.events: list[Event] = []
        self.status = "running"
        # array views are built on first access and dropped when samples change
        self._cache: dict[str, np.ndarray] = {}

    @classmethod
    def from_arrays(cls, n: int, t, x, lam, modes: Sequence[Mode]) -> "Trajectory":
        tr = cls(n)
        tr._t = [float(v) for v in t]
        tr._x = list(np.asarray(x, dtype=float).reshape(len(tr._t), n))
        tr._lam = [float(v) for v in lam]
        tr._mode = list(modes)
        tr._cache.clear()
        return tr

    def append(self, t: float, x, lam: float, mode: Mode) -> None:
        # a repeated time (event point already stored) is dropped
        if self._t and t <= self._t[-1]:
            return
        self._cache.clear()
        self._t.append(float(t))
        self._x.append(np.array(x, dtype=float))
        self._lam.append(float(lam))
        self._mode.append(mode)

    def extend(self, other: "Trajectory") -> None:
        for t, x, lam, m in zip(other._t, other._x, other._lam, other._mode):
            self.append(t, x, lam, m)
        self.events.extend(other.events)

    def event(self, t: float, kind: EventKind, detail: str = "") -> None:
        self.events.append(Event(float(t), kind, detail))

    def __len__(self) -> int:
        return len(self._t)

    def _array(self, key: str) -> np.ndarray:
        a = self._cache.get(key)
        if a is None:
            if key == "x":
                a = np.array(self._x, dtype=float).reshape(len(self._t), self.n)
            else:
                a = np.array(getattr(self, "_" + key), dtype=float)
            a.setflags(write=False)
            self._cache[key] = a
        return a

    @property
    def t(self) -> np.ndarray:
        return self._array("t")

    @property
    def x(self) -> np.ndarray:
        return self._array("x")

    @property
    def lam(self) -> np.ndarray:
        return self._array("lam")

    @property
    def mode(self) -> list[Mode]:
        return list(self._mode)

    def mode_sequence(self) -> list[Mode]:
        """Modes with consecutive repeats collapsed."""
        out: list[Mode] = []
        for m in self._mode:
            if not out or out[-1] is not m:
                out.append(m)
        return out

    def event_kinds(self) -> list[EventKind]:
        return [e.kind for e in self.events]


@dataclass(frozen=True)
class SurfaceHit:
    t: float
    x: np.ndarray
    side: int


# -- explicit Runge-Kutta steppers ---------------------------------------------

Rhs = Callable[[float, np.ndarray], np.ndarray]

_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)


def rk4_step(rhs: Rhs, t: float, x: np.ndarray, h: float) -> np.ndarray:
    k1 = rhs(t, x)
    k2 = rhs(t + h / 2, x + h / 2 * k1)
    k3 = rhs(t + h / 2, x + h / 2 * k2)
    k4 = rhs(t + h, x + h * k3)
    return x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def dp_step(rhs: Rhs, t: float, x: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """One Dormand-Prince 5(4) step: (5th-order solution, error estimate)."""
    k = []
    for i in range(7):
        xi = x
        for a, kj in zip(_DP_A[i], k):
            if a:
                xi = xi + h * a * kj
        k.append(rhs(t + _DP_C[i] * h, xi))
    x5 = x + h * sum(b * kj for b, kj in zip(_DP_B, k) if b)
    err = h * sum(e * kj for e, kj in zip(_DP_E, k) if e)
    return x5, err


class _Stepper:
    """Adaptive or fixed stepping for one rhs; ``one(t, x, h)`` is a plain step."""

    def __init__(self, rhs: Rhs, cfg: IntegratorConfig, span: float) -> None:
        self.rhs = rhs
        self.cfg = cfg
        self.adaptive = cfg.method == "rk45_adaptive"
        self.h = min(cfg.step, span) if not self.adaptive else min(cfg.step, max(span, 1e-12), 1e-3)
        self.h_min = 1e-14

    def one(self, t: float, x: np.ndarray, h: float) -> np.ndarray:
        if self.adaptive:
            return dp_step(self.rhs, t, x, h)[0]
        return rk4_step(self.rhs, t, x, h)

    def advance(self, t: float, x: np.ndarray, t_end: float,
                accept: Optional[Callable[[float, np.ndarray, float], bool]] = None) -> tuple[float, np.ndarray, float]:
        """Take one accepted step; returns (t_new, x_new, h_used).

        ``accept`` may veto a trial step (e.g. a lost sliding root), which
        halves the step like an error-test failure.
        """
        cfg = self.cfg
        while True:
            h = min(self.h, t_end - t)
            if h < self.h_min * max(1.0, abs(t)):
                raise IntegrationError(f"step size underflow at t={t:.17g}")
            try:
                if self.adaptive:
                    xn, err = dp_step(self.rhs, t, x, h)
                    sc = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(x), np.abs(xn))
                    enorm = float(np.sqrt(np.mean((err / sc) ** 2)))
                else:
                    xn = rk4_step(self.rhs, t, x, h)
                    enorm = 0.0
            except _Reject:
                self.h = h / 2
                continue
            except (ZeroDivisionError, ValueError, OverflowError) as exc:
                raise IntegrationError(f"field evaluation failed near t={t:.17g}: {exc}") from exc
            if not np.all(np.isfinite(xn)) or not math.isfinite(enorm):
                self.h = h / 2
                continue
            if enorm > 1.0:
                self.h = h * max(0.2, 0.9 * enorm ** -0.2)
                continue
            if accept is not None and not accept(t + h, xn, h):
                self.h = h / 2
                continue
            if self.adaptive:
                fac = 5.0 if enorm == 0 else min(5.0, 0.9 * enorm ** -0.2)
                self.h = min(cfg.step, h * fac)
            else:
                self.h = cfg.step
            return t + h, xn, h


class _Reject(Exception):
    """Raised inside a rhs to force a step rejection."""


def _locate(stepper: _Stepper, t0: float, x0: np.ndarray, h: float, g: Callable[[np.ndarray], float],
            tol: float) -> tuple[float, np.ndarray]:
    """Find theta in (0, 1] with g(step(theta h)) ~ 0 given a sign change over the step.

    Bisection on theta (30 halvings) followed by secant polishing until
    ``|g| <= tol``.
    """
    g0 = g(x0)
    lo, hi = 0.0, 1.0
    glo, ghi = g0, None
    xhi = None
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        xm = stepper.one(t0, x0, mid * h)
        gm = g(xm)
        if gm == 0.0:
            return t0 + mid * h, xm
        if (gm > 0) == (g0 > 0):
            lo, glo = mid, gm
        else:
            hi, ghi, xhi = mid, gm, xm
    if ghi is None:
        xhi = stepper.one(t0, x0, h)
        ghi = g(xhi)
    best_th, best_x, best_g = hi, xhi, ghi
    if abs(glo) < abs(best_g):
        best_th, best_g = lo, glo
        best_x = stepper.one(t0, x0, lo * h) if lo > 0 else x0
    for _ in range(20):
        if abs(best_g) <= tol:
            break
        if ghi == glo:
            break
        th = hi - ghi * (hi - lo) / (ghi - glo)
        if not lo < th < hi:
            th = 0.5 * (lo + hi)
        xt = stepper.one(t0, x0, th * h)
        gt = g(xt)
        if abs(gt) < abs(best_g):
            best_th, best_x, best_g = th, xt, gt
        if (gt > 0) == (g0 > 0):
            lo, glo = th, gt
        else:
            hi, ghi = th, gt
    return t0 + best_th * h, best_x


# -- free flow -----------------------------------------------------------------

def integrate_free(sys: SwitchedSystem, x0: Sequence[float], t0: float, t_end: float, side: int,
                   cfg: IntegratorConfig) -> tuple[Trajectory, Optional[SurfaceHit]]:
    """Integrate ``x' = f(x, t; side)`` until ``h`` changes sign or ``t_end``.

    The returned segment holds the accepted steps strictly on ``side``; the
    located surface point (``|h| <= event_tol``) is returned separately.
    """
    x = np.array(x0, dtype=float)
    if sys.hval(x) * side <= 0:
        raise ValueError(f"h(x0)={sys.hval(x):g} is not on side {side:+d}")
    lam = float(side)
    mode = Mode.free(side)
    field_fn = sys._f

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        return np.array(field_fn(y.tolist(), t, lam))

    def g(y: np.ndarray) -> float:
        return sys.hval(y.tolist())

    seg = Trajectory(sys.n)
    seg.append(t0, x, lam, mode)
    stepper = _Stepper(rhs, cfg, t_end - t0)
    t = t0
    while t < t_end:
        t_prev, x_prev = t, x
        t, x, h = stepper.advance(t, x, t_end)
        if g(x) * side <= 0:
            ts, xs = _locate(stepper, t_prev, x_prev, h, g, cfg.event_tol)
            return seg, SurfaceHit(ts, xs, side)
        seg.append(t, x, lam, mode)
    return seg, None


# -- sliding -------------------------------------------------------------------

class _RootTracker:
    """Newton continuation of a sliding root along the flow."""

    def __init__(self, sys: SwitchedSystem, root: SlidingRoot) -> None:
        self.sys = sys
        self.lam = root.lam_star
        self.sign = 1.0 if root.df1_dlam > 0 else -1.0

    def solve(self, x: Sequence[float], t: float, seed: float, grad=None) -> tuple[float, float]:
        """Newton from ``seed``; returns (lam*, df1/dlam) or raises _Reject."""
        sys = self.sys
        grad = sys.grad_h(x) if grad is None else grad
        fp = sys.f1(x, t, 1.0, grad)
        fm = sys.f1(x, t, -1.0, grad)
        scale = max(1.0, abs(fp), abs(fm))
        lam = seed
        for _ in range(30):
            f, d = sys.f1_dlam(x, t, lam, grad)
            if d * self.sign <= DEGENERACY_REL * scale:
                raise _Reject()
            step = f / d
            lam -= step
            if abs(lam) > 2.0:
                raise _Reject()
            if abs(step) <= 1e-15 * (1.0 + abs(lam)) or abs(f) <= 1e-13 * scale:
                f, d = sys.f1_dlam(x, t, lam, grad)
                if abs(f) <= 1e-10 * scale and d * self.sign > DEGENERACY_REL * scale:
                    return lam, d
                if abs(step) <= 1e-15 * (1.0 + abs(lam)):
                    break
        raise _Reject()


def _project(sys: SwitchedSystem, x: np.ndarray) -> np.ndarray:
    # one Newton step along grad h onto h = 0
    grad = sys.grad_h(x)
    return x - sys.hval(x) / float(np.dot(grad, grad)) * grad


def integrate_sliding(sys: SwitchedSystem, x0: Sequence[float], t0: float, t_end: float, root0: SlidingRoot,
                      cfg: IntegratorConfig) -> tuple[Trajectory, SlideExit, float, np.ndarray, SlidingRoot]:
    """Slide along ``h = 0`` from a valid root until it leaves ``[-1, 1]``, folds, or ``t_end``.

    Returns ``(segment, exit, t_exit, x_exit, root_at_exit)``. The segment
    includes the exit point.

    Raises:
        DegenerateRootError: ``root0`` is degenerate.
    """
    if root0.stability is Stability.DEGENERATE:
        raise DegenerateRootError(f"cannot slide on degenerate root lam*={root0.lam_star}")
    tracker = _RootTracker(sys, root0)
    x = np.array(x0, dtype=float)
    lam_now = root0.lam_star
    # the newest stage root seeds the next solve
    seed = [lam_now]

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        yl = y.tolist()
        grad = sys.grad_h(yl)
        lam, _ = tracker.solve(yl, t, seed[0], grad)
        f = np.array(sys._f(yl, t, lam))
        return f - (float(np.dot(f, grad)) / float(np.dot(grad, grad))) * grad

    def root_at(t: float, y: np.ndarray) -> Optional[float]:
        try:
            return tracker.solve(y.tolist(), t, seed[0])[0]
        except _Reject:
            return None

    seg = Trajectory(sys.n)
    seg.append(t0, x, lam_now, Mode.SLIDING)
    stepper = _Stepper(rhs, cfg, t_end - t0)
    h_fold = 1e-10 * max(1.0, abs(t0))
    t = t0
    exit_kind = SlideExit.HORIZON
    pending: dict = {}

    def accept(tn: float, xn: np.ndarray, h: float) -> bool:
        lam = root_at(tn, _project(sys, xn))
        pending["lam"] = lam
        return lam is not None

    while t < t_end:
        t_prev, x_prev, lam_prev = t, x, lam_now
        try:
            t, xn, h = stepper.advance(t, x, t_end, accept)
        except IntegrationError:
            # steps collapsed: the root is being lost, i.e. a fold
            exit_kind = SlideExit.FOLD
            break
        x = _project(sys, xn)
        lam_now = pending["lam"]
        seed[0] = lam_now
        if abs(lam_now) > 1.0:
            side = 1 if lam_now > 0 else -1
            # locate lam*(theta) = side on the last step
            lo, hi = 0.0, 1.0
            xb, lb = x, lam_now
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                seed[0] = lam_prev
                try:
                    xm = _project(sys, stepper.one(t_prev, x_prev, mid * h))
                    lm = tracker.solve(xm.tolist(), t_prev + mid * h, lam_prev)[0]
                except _Reject:
                    hi = mid
                    continue
                if abs(lm) > 1.0:
                    hi, xb, lb = mid, xm, lm
                else:
                    lo = mid
                if hi - lo < 1e-13:
                    break
            t = t_prev + hi * h
            x = xb
            lam_now = float(side)
            exit_kind = SlideExit.BOUNDARY_PLUS if side > 0 else SlideExit.BOUNDARY_MINUS
            seg.append(t, x, lam_now, Mode.SLIDING)
            break
        seg.append(t, x, lam_now, Mode.SLIDING)
        if stepper.h < h_fold:
            exit_kind = SlideExit.FOLD
            break
    if exit_kind is SlideExit.HORIZON and t < t_end:
        exit_kind = SlideExit.FOLD
    grad = sys.grad_h(x)
    _, d = sys.f1_dlam(x, t, lam_now, grad)
    fp = sys.f1(x, t, 1.0, grad)
    fm = sys.f1(x, t, -1.0, grad)
    root = SlidingRoot(lam_now, classify(d, max(1.0, abs(fp), abs(fm))), d)
    return seg, exit_kind, t, x, root


# -- driver --------------------------------------------------------------------

def _nudge_along(sys: SwitchedSystem, x: np.ndarray, t: float, side: int, tol: float) -> tuple[float, np.ndarray]:
    f = sys.field(x, t, float(side))
    f1 = float(np.dot(f, sys.grad_h(x)))
    tau = 2.0 * tol / abs(f1)
    return t + tau, x + tau * f


def _nudge_normal(sys: SwitchedSystem, x: np.ndarray, side: int, tol: float) -> np.ndarray:
    grad = sys.grad_h(x)
    return x + side * 2.0 * tol * grad / float(np.dot(grad, grad))


def _initial_decision(sys: SwitchedSystem, x: np.ndarray, t: float, lam0: float):
    f1 = sys.f1(x, t, lam0)
    if f1 == 0.0:
        from .layer import find_sliding_roots
        for r in find_sliding_roots(sys, x, t):
            if abs(r.lam_star - lam0) <= 1e-9:
                return Sliding(r) if r.stability is not Stability.DEGENERATE else Degenerate(lam0, "start on a fold")
    return trace_fast(sys, x, t, lam0, 1 if f1 > 0 else -1)


def simulate(sys: SwitchedSystem, x0: Sequence[float], t_span: tuple[float, float],
             cfg: Optional[IntegratorConfig] = None, lam0: float = 0.0) -> Trajectory:
    """Piecewise-smooth solution from ``x0`` over ``t_span``.

    A start on the surface is resolved by following the fast layer flow
    from ``lam0``.
    """
    cfg = cfg or IntegratorConfig()
    t, t_end = float(t_span[0]), float(t_span[1])
    x = np.array(x0, dtype=float)
    traj = Trajectory(sys.n)
    tol = cfg.event_tol

    hv = sys.hval(x)
    decision = None
    side = 0
    if abs(hv) <= max(tol, 0.0):
        decision = _initial_decision(sys, x, t, lam0)
    else:
        side = 1 if hv > 0 else -1

    while t < t_end:
        if len(traj.events) >= cfg.max_events:
            traj.status = "max_events"
            return traj
        if decision is None:
            seg, hit = integrate_free(sys, x, t, t_end, side, cfg)
            traj.extend(seg)
            if hit is None:
                t = t_end
                break
            t, x = hit.t, hit.x
            traj.event(t, EventKind.SURFACE_HIT)
            try:
                decision = decide_passage(sys, x, t, hit.side)
            except LayerError as exc:
                decision = Degenerate(float(hit.side), str(exc))
            continue
        if isinstance(decision, Crossing):
            side = decision.exit_side
            f1 = sys.f1(x, t, float(side))
            if f1 * side <= 0:
                decision = Degenerate(float(side), "exit field does not leave the surface")
                continue
            t, x = _nudge_along(sys, x, t, side, tol)
            traj.event(t, EventKind.CROSS_EXIT, f"{side:+d}")
            decision = None
            continue
        if isinstance(decision, Degenerate):
            traj.append(t, x, decision.lam, Mode.TRANSIT)
            traj.event(t, EventKind.DEGENERATE_HALT, decision.reason)
            traj.status = "halted"
            return traj
        root = decision.root
        traj.event(t, EventKind.SLIDE_START, f"{root.lam_star:.17g}")
        seg, exit_kind, t, x, root = integrate_sliding(sys, x, t, t_end, root, cfg)
        traj.extend(seg)
        if exit_kind is SlideExit.HORIZON:
            break
        if exit_kind is SlideExit.FOLD:
            traj.event(t, EventKind.SLIDE_END_FOLD, f"{root.lam_star:.17g}")
            decision = fold_jump(sys, x, t, root.lam_star, root.df1_dlam)
            continue
        side = 1 if exit_kind is SlideExit.BOUNDARY_PLUS else -1
        traj.event(t, EventKind.SLIDE_END_BOUNDARY, f"{side:+d}")
        x = _nudge_normal(sys, x, side, tol)
        decision = None
    traj.status = "horizon"
    return traj
