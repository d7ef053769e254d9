"""Sigmoid regularization and fixed-step reference integrators.

The discontinuity is smoothed by ``lam = Lambda(h(x) / eps)`` and the
resulting ODE (or SDE, with additive noise) is stepped by explicit Euler
or Euler-Maruyama. These are the simulation methods whose sensitivity to
step size and to the form of the lam-dependence is studied in the
examples; the kernels are generated per system and compiled with numba.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numba
import numpy as np

from .expr import Num, to_source
from .integrate import IntegrationError, Mode, Trajectory
from .layer import find_sliding_roots, Stability
from .model import Split, SwitchedSystem

__all__ = [
    "SigmoidKind", "Sigmoid", "NoiseConfig", "sigmoid_eval", "tail_error",
    "smooth_simulate", "stochastic_simulate", "layer_transit_profile", "transits",
    "washout_curve", "WashoutPoint", "r_scale", "default_stride", "STICK_BAND", "STICK_DWELL",
]

MAX_SAMPLES = 1_000_000
# stick classifier: a continuous dwell longer than STICK_DWELL*eps inside |h| < STICK_BAND*eps
STICK_BAND = 5.0
STICK_DWELL = 100.0


class SigmoidKind(enum.IntEnum):
    TANH = 0
    ARCTAN = 1
    HILL = 2
    ALGEBRAIC_SQRT = 3
    NON_ANALYTIC_BUMP = 4


@dataclass(frozen=True)
class Sigmoid:
    kind: SigmoidKind
    eps: float
    theta: float = 1.0

    def __post_init__(self) -> None:
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not self.theta > 0:
            raise ValueError("theta must be positive")

    @classmethod
    def parse(cls, name: str, eps: float, theta: float = 1.0) -> "Sigmoid":
        key = name.strip().lower().replace("-", "_")
        aliases = {"tanh": SigmoidKind.TANH, "arctan": SigmoidKind.ARCTAN, "atan": SigmoidKind.ARCTAN,
                   "hill": SigmoidKind.HILL, "algebraicsqrt": SigmoidKind.ALGEBRAIC_SQRT,
                   "algebraic_sqrt": SigmoidKind.ALGEBRAIC_SQRT, "sqrt": SigmoidKind.ALGEBRAIC_SQRT,
                   "nonanalyticbump": SigmoidKind.NON_ANALYTIC_BUMP,
                   "non_analytic_bump": SigmoidKind.NON_ANALYTIC_BUMP, "bump": SigmoidKind.NON_ANALYTIC_BUMP}
        if key not in aliases:
            raise ValueError(f"unknown sigmoid {name!r}")
        return cls(aliases[key], eps, theta)


@dataclass(frozen=True)
class NoiseConfig:
    kappa: float
    seed: int = 0
    substep: float = 1e-5

    def __post_init__(self) -> None:
        if not self.kappa >= 0:
            raise ValueError("kappa must be non-negative")
        if not self.substep > 0:
            raise ValueError("substep must be positive")


@numba.njit(cache=True, error_model="numpy")
def _sig(kind: int, h: float, eps: float) -> float:
    u = h / eps
    if kind == 0:
        return math.tanh(u)
    if kind == 1:
        return 2.0 / math.pi * math.atan(u)
    if kind == 2:
        # 2 Z(theta e^h) - 1 with r = 1/eps; theta cancels and this form cannot overflow
        return math.tanh(0.5 * u)
    if kind == 3:
        return u / math.sqrt(1.0 + u * u)
    if h >= eps:
        return 1.0
    if h <= -eps:
        return -1.0
    rp = math.exp(2.0 * eps / (h - eps))
    rm = math.exp(2.0 * eps / (-h - eps))
    return rm ** rp - rp ** rm


def sigmoid_eval(s: Sigmoid, h: float) -> float:
    """``Lambda(h / eps)`` for the chosen kind, a value in ``[-1, 1]``."""
    return float(_sig(int(s.kind), float(h), s.eps))


def tail_error(s: Sigmoid, h: float) -> tuple[float, float]:
    """(predicted, actual) deviation from ``sign(h)`` for ``|h| > eps``.

    ``predicted`` is the leading term of the large-``|h|/eps`` expansion.
    """
    if abs(h) <= s.eps:
        raise ValueError("tail_error needs |h| > eps")
    sg = 1.0 if h > 0 else -1.0
    a = abs(h) / s.eps
    k = s.kind
    # actual computed without cancellation where the closed form allows it
    if k is SigmoidKind.TANH:
        actual = -sg * 2.0 / (math.exp(2 * a) + 1.0)
        predicted = -sg * 2.0 * math.exp(-2 * a)
    elif k is SigmoidKind.ARCTAN:
        actual = -sg * 2.0 / math.pi * math.atan(1.0 / a)
        predicted = -sg * 2.0 / math.pi / a
    elif k is SigmoidKind.HILL:
        actual = -sg * 2.0 / (math.exp(a) + 1.0)
        predicted = -sg * 2.0 * math.exp(-a)
    elif k is SigmoidKind.ALGEBRAIC_SQRT:
        actual = -sg / (math.sqrt(1 + a * a) * (math.sqrt(1 + a * a) + a))
        predicted = -sg / (2 * a * a)
    else:
        actual = sigmoid_eval(s, h) - sg
        predicted = 0.0
    return predicted, actual


# -- generated Euler / Euler-Maruyama kernels ----------------------------------

_KERNELS: dict[str, object] = {}

_KERNEL_TEMPLATE = '''
def kernel(x0, t0, nsteps, step, kind, eps, stride, kappa, seed, band, out_t, out_x, out_lam, out_mode):
    n = x0.shape[0]
    x = x0.copy()
    dx = np.empty(n)
    t = t0
    sq = math.sqrt(step) * kappa
    state = np.uint64(seed)
    spare = 0.0
    have_spare = False
    dwell_start = -1.0
    max_dwell = 0.0
    k = 0
    h = {h}
    lam = _sig(kind, h, eps)
    out_t[0] = t
    for j in range(n):
        out_x[0, j] = x[j]
    out_lam[0] = lam
    out_mode[0] = _mode(h, eps)
    if abs(h) < band:
        dwell_start = t
    for i in range(1, nsteps + 1):
{field}
        for j in range(n):
            x[j] += step * dx[j]
        if kappa > 0.0:
            for j in range(n):
                if have_spare:
                    z = spare
                    have_spare = False
                else:
                    state, u1 = _uniform(state)
                    state, u2 = _uniform(state)
                    r = math.sqrt(-2.0 * math.log(u1))
                    z = r * math.cos(2.0 * math.pi * u2)
                    spare = r * math.sin(2.0 * math.pi * u2)
                    have_spare = True
                x[j] += sq * z
        t = t0 + i * step
        h = {h}
        lam = _sig(kind, h, eps)
        if not math.isfinite(h):
            return -i, max_dwell
        for j in range(n):
            if not math.isfinite(x[j]):
                return -i, max_dwell
        if abs(h) < band:
            if dwell_start < 0.0:
                dwell_start = t
            elif t - dwell_start > max_dwell:
                max_dwell = t - dwell_start
        else:
            dwell_start = -1.0
        if i % stride == 0 or i == nsteps:
            k += 1
            out_t[k] = t
            for j in range(n):
                out_x[k, j] = x[j]
            out_lam[k] = lam
            out_mode[k] = _mode(h, eps)
    return k + 1, max_dwell
'''


@numba.njit(cache=True)
def _uniform(state):
    # splitmix64; returns a double in (0, 1]
    state = state + np.uint64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return state, (float(z >> np.uint64(11)) + 1.0) * (1.0 / 9007199254740992.0)


@numba.njit(cache=True)
def _mode(h, eps):
    if abs(h) <= eps:
        return 2
    return 0 if h > 0 else 1


@numba.njit(cache=True)
def _nsign(v):
    if v > 0:
        return 1.0
    if v < 0:
        return -1.0
    return 0.0


def _kernel(sys: SwitchedSystem):
    h_src = to_source(sys.h)
    f_src = [to_source(e) for e in sys.field_exprs]
    key = h_src + "|" + "|".join(f_src)
    if key not in _KERNELS:
        body = "\n".join(f"        dx[{i}] = {s}" for i, s in enumerate(f_src))
        src = _KERNEL_TEMPLATE.format(h=h_src, field=body)
        ns = {"math": math, "np": np, "_sig": _sig, "_uniform": _uniform, "_mode": _mode,
              "_sign": _nsign, "abs": abs}
        exec(compile(src, "<switchlayer.kernel>", "exec"), ns)
        _KERNELS[key] = numba.njit(error_model="numpy")(ns["kernel"])
    return _KERNELS[key]


def default_stride(span: float, step: float) -> int:
    return max(1, math.ceil((span / step) / MAX_SAMPLES))


_MODES = (Mode.FREE_PLUS, Mode.FREE_MINUS, Mode.TRANSIT)


def _run(sys: SwitchedSystem, x0, t_span, s: Sigmoid, step: float, stride: Optional[int],
         kappa: float, seed: int, band: float = 0.0) -> tuple[Trajectory, float]:
    if not step > 0:
        raise ValueError("step must be positive")
    t0, t1 = float(t_span[0]), float(t_span[1])
    nsteps = int(round((t1 - t0) / step))
    if nsteps < 1:
        raise ValueError("time span shorter than one step")
    stride = default_stride(t1 - t0, step) if stride is None else int(stride)
    if stride < 1:
        raise ValueError("stride must be at least 1")
    m = nsteps // stride + 2
    out_t = np.empty(m)
    out_x = np.empty((m, sys.n))
    out_lam = np.empty(m)
    out_mode = np.empty(m, dtype=np.int8)
    x0 = np.array(x0, dtype=float)
    if x0.shape != (sys.n,):
        raise ValueError(f"x0 must have {sys.n} components")
    count, dwell = _kernel(sys)(x0, t0, nsteps, float(step), int(s.kind), float(s.eps), stride,
                                float(kappa), int(seed) & 0xFFFFFFFFFFFFFFFF, float(band),
                                out_t, out_x, out_lam, out_mode)
    if count < 0:
        raise IntegrationError(f"non-finite state at step {-count} (t={t0 + -count * step:.6g})")
    traj = Trajectory.from_arrays(sys.n, out_t[:count], out_x[:count], out_lam[:count],
                                  [_MODES[c] for c in out_mode[:count]])
    traj.status = "horizon"
    return traj, dwell


def smooth_simulate(sys: SwitchedSystem, x0: Sequence[float], t_span: tuple[float, float], s: Sigmoid,
                    step: float, stride: Optional[int] = None) -> Trajectory:
    """Explicit Euler on ``x' = f(x, t; Lambda(h(x)/eps))`` with a fixed step.

    Samples are kept every ``stride`` steps (default: at most about 10^6
    rows). ``mode`` is ``transit`` inside ``|h| <= eps``, otherwise free+/-.
    ``lam`` holds the sigmoid value.

    Raises:
        IntegrationError: on overflow or NaN.
    """
    return _run(sys, x0, t_span, s, step, stride, 0.0, 0)[0]


def stochastic_simulate(sys: SwitchedSystem, x0: Sequence[float], t_span: tuple[float, float], s: Sigmoid,
                        noise: NoiseConfig, stride: Optional[int] = None) -> Trajectory:
    """Euler-Maruyama with additive noise ``kappa dW`` on every component.

    Gaussians come from Box-Muller over a splitmix64 stream seeded by
    ``noise.seed``. With ``kappa = 0`` the result is bit-identical to
    :func:`smooth_simulate` at the same step.
    """
    return _run(sys, x0, t_span, s, noise.substep, stride, noise.kappa, noise.seed)[0]


def transits(traj: Trajectory) -> list[tuple[int, int]]:
    """Index ranges ``[start, stop)`` of maximal ``transit`` sample runs that
    enter the layer from one side and leave on the other."""
    modes = traj.mode
    out = []
    i = 0
    n = len(modes)
    while i < n:
        if modes[i] is Mode.TRANSIT:
            j = i
            while j < n and modes[j] is Mode.TRANSIT:
                j += 1
            if i > 0 and j < n and modes[i - 1] is not modes[j]:
                out.append((i, j))
            i = j
        else:
            i += 1
    return out


def layer_transit_profile(traj: Trajectory, index: int) -> list[tuple[float, float]]:
    """``(delta_t, lam)`` along the ``index``-th crossing of the layer ``|h| <= eps``
    in a regularized trajectory.

    ``delta_t`` is measured from the last sample before the layer; the curve
    runs to the first sample after it.

    Raises:
        IndexError: if the trajectory has fewer crossings.
    """
    spans = transits(traj)
    if not 0 <= index < len(spans):
        raise IndexError(f"transit {index} does not exist ({len(spans)} found)")
    i, j = spans[index]
    t = traj.t
    lam = traj.lam
    a, b = i - 1, j
    return [(float(t[k] - t[a]), float(lam[k])) for k in range(a, b + 1)]


def r_scale(eps: float) -> float:
    """Reference noise scale ``sqrt(-eps / log eps)`` for ``0 < eps < 1``."""
    return math.sqrt(-eps / math.log(eps))


@dataclass(frozen=True)
class WashoutPoint:
    kappa: float
    stick_fraction: float
    runs: int
    ci_low: float
    ci_high: float


def _wilson(k: int, n: int, z: float = 1.96) -> tuple[float, float]:
    p = k / n
    den = 1 + z * z / n
    c = (p + z * z / (2 * n)) / den
    w = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, c - w), min(1.0, c + w)


def _linear_reduction(sys: SwitchedSystem) -> SwitchedSystem:
    from .model import decompose
    if isinstance(sys.form, Split):
        fp, fm = sys.form.fplus, sys.form.fminus
    else:
        fp, fm, _ = decompose(sys.form.f)
    return SwitchedSystem(sys.n, sys.h, Split(fp, fm, tuple(Num(0.0) for _ in range(sys.n))), name=sys.name + "-filippov")


def has_hidden_sliding(sys: SwitchedSystem, x: Sequence[float], t: float = 0.0) -> bool:
    """True if the layer has an attracting root at ``x`` that the g = 0 reduction lacks."""
    hidden = [r for r in find_sliding_roots(sys, x, t) if r.stability is Stability.ATTRACTING]
    lin = find_sliding_roots(_linear_reduction(sys), x, t)
    lin = [r for r in lin if r.stability is Stability.ATTRACTING]
    return bool(hidden) and not lin


def washout_curve(sys: SwitchedSystem, x0: Sequence[float], s: Sigmoid, kappas: Sequence[float],
                  runs: int, horizon: float, step: float = 1e-4, seed: int = 0,
                  probe: Optional[Sequence[float]] = None) -> list[WashoutPoint]:
    """Fraction of noisy runs that stick near ``h = 0``, for each noise level.

    Run ``i`` at every kappa uses seed ``seed + i``. A run sticks when it
    dwells continuously inside ``|h| < 5 eps`` for longer than ``100 eps``.
    ``probe`` is a surface point used to confirm that ``sys`` has hidden
    sliding absent from its linear (g = 0) reduction.

    Raises:
        ValueError: if the hidden-sliding precondition fails at ``probe``.
    """
    if runs < 1:
        raise ValueError("runs must be positive")
    if probe is not None and not has_hidden_sliding(sys, probe):
        raise ValueError("system shows no hidden sliding at the probe point")
    band = STICK_BAND * s.eps
    need = STICK_DWELL * s.eps
    span = (0.0, float(horizon))
    nsteps = int(round(horizon / step))
    out = []
    for kappa in kappas:
        stuck = 0
        for i in range(runs):
            _, dwell = _run(sys, x0, span, s, step, nsteps, float(kappa), seed + i, band)
            stuck += dwell > need
        lo, hi = _wilson(stuck, runs)
        out.append(WashoutPoint(float(kappa), stuck / runs, runs, lo, hi))
    return out
