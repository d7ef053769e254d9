"""Switched systems and the split into one-sided fields plus a hidden term.

A system is ``x' = f(x, t; lam)`` with ``lam = sign(h(x))`` off the surface
``h = 0`` and ``lam`` in ``[-1, 1]`` on it. The field is given either directly
(``Combined``) or as the triple ``(fplus, fminus, g)`` (``Split``), assembled as

    f = (1+lam)/2 * fplus + (1-lam)/2 * fminus + (lam^2 - 1) * g
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, Union

import numpy as np

from .expr import (
    BinOp, Bindings, Call, Expr, Neg, Num, Var, compile_duals, compile_values,
    depends_on, parse, to_text, walk,
)

__all__ = [
    "Combined", "Split", "SwitchedSystem", "LayerPoint", "ModelError",
    "assemble", "normal_component", "decompose", "surface_tolerance",
]


class ModelError(ValueError):
    """A system definition violates the model's structural rules."""


@dataclass(frozen=True)
class Combined:
    f: tuple[Expr, ...]


@dataclass(frozen=True)
class Split:
    fplus: tuple[Expr, ...]
    fminus: tuple[Expr, ...]
    g: tuple[Expr, ...]


def surface_tolerance(x: Sequence[float]) -> float:
    return 1e-9 * (1.0 + float(np.linalg.norm(x)))


# -- small constant-folding builders ----------------------------------------

def _is(e: Expr, v: float) -> bool:
    return isinstance(e, Num) and e.value == v


def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    return BinOp("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return neg(b)
    return BinOp("-", a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    if _is(a, 0.0) or _is(b, 0.0):
        return Num(0.0)
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    if _is(a, -1.0):
        return neg(b)
    if _is(b, -1.0):
        return neg(a)
    return BinOp("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num) and b.value != 0.0:
        return Num(a.value / b.value)
    if _is(b, 1.0):
        return a
    if _is(a, 0.0):
        return Num(0.0)
    return BinOp("/", a, b)


def power(a: Expr, k: int) -> Expr:
    if k == 0:
        return Num(1.0)
    if k == 1:
        return a
    return BinOp("^", a, Num(float(k)))


# -- systems ------------------------------------------------------------------

@dataclass(frozen=True)
class SwitchedSystem:
    """Piecewise-smooth system with a single switching surface ``h(x) = 0``."""

    n: int
    h: Expr
    form: Union[Combined, Split]
    name: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ModelError("dimension must be positive")
        for v in ("t", "lam"):
            if depends_on(self.h, v):
                raise ModelError(f"h must not depend on {v}")
        if isinstance(self.form, Combined):
            groups = {"f": self.form.f}
        else:
            groups = {"fplus": self.form.fplus, "fminus": self.form.fminus, "g": self.form.g}
            for key in ("fplus", "fminus"):
                if any(depends_on(e, "lam") for e in groups[key]):
                    raise ModelError(f"{key} must not depend on lam")
        for key, exprs in groups.items():
            if len(exprs) != self.n:
                raise ModelError(f"{key} has {len(exprs)} components, expected {self.n}")
        allowed = {f"x{i + 1}" for i in range(self.n)} | {"t", "lam"}
        for e in [self.h, *self.field_exprs]:
            for node in walk(e):
                if isinstance(node, Var) and node.name not in allowed:
                    raise ModelError(f"variable {node.name} outside dimension {self.n}")
        for e in self.field_exprs:
            for node in walk(e):
                if isinstance(node, Call) and node.func in ("sign", "abs") and depends_on(node.arg, "lam"):
                    raise ModelError(f"{node.func}() of an expression in lam makes f non-smooth in lam")

    @classmethod
    def from_text(
        cls,
        n: int,
        h: str,
        f: Sequence[str] | None = None,
        *,
        fplus: Sequence[str] | None = None,
        fminus: Sequence[str] | None = None,
        g: Sequence[str] | None = None,
        name: str = "",
    ) -> "SwitchedSystem":
        if f is not None:
            if fplus is not None or fminus is not None or g is not None:
                raise ModelError("give either f or (fplus, fminus, g), not both")
            form: Union[Combined, Split] = Combined(tuple(parse(s, n) for s in f))
        else:
            if fplus is None or fminus is None:
                raise ModelError("Split form needs fplus and fminus")
            g_exprs = tuple(parse(s, n) for s in g) if g is not None else tuple(Num(0.0) for _ in range(n))
            form = Split(tuple(parse(s, n) for s in fplus), tuple(parse(s, n) for s in fminus), g_exprs)
        return cls(n, parse(h, n), form, name)

    @cached_property
    def field_exprs(self) -> tuple[Expr, ...]:
        """The assembled ``f(x, t; lam)`` as one expression per component."""
        if isinstance(self.form, Combined):
            return self.form.f
        lam = Var("lam")
        wp = BinOp("*", Num(0.5), BinOp("+", Num(1.0), lam))
        wm = BinOp("*", Num(0.5), BinOp("-", Num(1.0), lam))
        ghost = BinOp("-", BinOp("^", lam, Num(2.0)), Num(1.0))
        out = []
        for fp, fm, g in zip(self.form.fplus, self.form.fminus, self.form.g):
            e = add(BinOp("*", wp, fp), BinOp("*", wm, fm))
            if not _is(g, 0.0):
                e = BinOp("+", e, BinOp("*", ghost, g))
            out.append(e)
        return tuple(out)

    @property
    def is_filippov(self) -> bool:
        """True when the hidden term is identically zero (field affine in lam)."""
        if isinstance(self.form, Split):
            return all(_is(g, 0.0) for g in self.form.g)
        try:
            return all(_is(g, 0.0) for g in decompose(self.form.f)[2])
        except ModelError:
            return False

    # compiled evaluators, built lazily and cached on the instance
    @cached_property
    def _f(self):
        return compile_values(self.field_exprs)

    @cached_property
    def _fd(self):
        return compile_duals(self.field_exprs)

    @cached_property
    def _h(self):
        return compile_values((self.h,))

    @cached_property
    def _hd(self):
        return compile_duals((self.h,))

    def field(self, x: Sequence[float], t: float, lam: float) -> np.ndarray:
        return np.array(self._f(x, t, lam), dtype=float)

    def hval(self, x: Sequence[float]) -> float:
        return self._h(x, 0.0, 0.0)[0]

    def grad_h(self, x: Sequence[float]) -> np.ndarray:
        zero = [0.0] * self.n
        out = np.empty(self.n)
        for i in range(self.n):
            dx = list(zero)
            dx[i] = 1.0
            out[i] = self._hd(x, dx, 0.0, 0.0, 0.0, 0.0)[0][1]
        return out

    def f1(self, x: Sequence[float], t: float, lam: float, grad: np.ndarray | None = None) -> float:
        """Normal component ``f . grad h`` (fast layer dynamics)."""
        gh = self.grad_h(x) if grad is None else grad
        return float(np.dot(self._f(x, t, lam), gh))

    def f1_dlam(self, x: Sequence[float], t: float, lam: float, grad: np.ndarray | None = None) -> tuple[float, float]:
        """``(f1, d f1 / d lam)`` in one forward sweep."""
        gh = self.grad_h(x) if grad is None else grad
        pairs = self._fd(x, [0.0] * self.n, t, 0.0, lam, 1.0)
        v = sum(p[0] * g for p, g in zip(pairs, gh))
        d = sum(p[1] * g for p, g in zip(pairs, gh))
        return float(v), float(d)

    def field_tangent(self, x, dx, t, dt, lam, dlam) -> tuple[np.ndarray, np.ndarray]:
        pairs = self._fd(x, dx, t, dt, lam, dlam)
        return np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])


@dataclass(frozen=True)
class LayerPoint:
    """A point ``(x, lam, t)`` of the blown-up switching layer."""

    x: tuple[float, ...]
    lam: float
    t: float = 0.0

    def check(self, sys: SwitchedSystem) -> None:
        if not -1.0 <= self.lam <= 1.0:
            raise ModelError(f"lam={self.lam} outside [-1, 1]")
        if abs(sys.hval(self.x)) > surface_tolerance(self.x):
            raise ModelError(f"x={self.x} is not on the switching surface")


def assemble(sys: SwitchedSystem, x: Sequence[float], t: float, lam: float) -> np.ndarray:
    """Value of ``f(x, t; lam)``."""
    return sys.field(x, t, lam)


def normal_component(sys: SwitchedSystem, x: Sequence[float], t: float, lam: float) -> float:
    """``f(x, t; lam) . grad h(x)``, the right-hand side of the fast layer equation."""
    return sys.f1(x, t, lam)


# -- hidden-term decomposition -------------------------------------------------

def _poly(e: Expr) -> dict[int, Expr]:
    """Coefficients (lam-free expressions) of ``e`` as a polynomial in lam."""
    if not depends_on(e, "lam"):
        return {0: e}
    if isinstance(e, Var):
        return {1: Num(1.0)}
    if isinstance(e, Neg):
        return {k: neg(c) for k, c in _poly(e.arg).items()}
    if isinstance(e, Call):
        raise ModelError(f"lam appears inside {e.func}(); f is not polynomial in lam")
    if e.op in ("+", "-"):
        a, b = _poly(e.left), _poly(e.right)
        out = dict(a)
        for k, c in b.items():
            if e.op == "+":
                out[k] = add(out[k], c) if k in out else c
            else:
                out[k] = sub(out[k], c) if k in out else neg(c)
        return out
    if e.op == "*":
        return _polymul(_poly(e.left), _poly(e.right))
    if e.op == "/":
        if depends_on(e.right, "lam"):
            raise ModelError("division by an expression in lam; f is not polynomial in lam")
        return {k: div(c, e.right) for k, c in _poly(e.left).items()}
    # power: needs a non-negative integer literal exponent
    if not isinstance(e.right, Num) or e.right.value < 0 or e.right.value != int(e.right.value):
        raise ModelError("lam raised to a non-integer or variable power; f is not polynomial in lam")
    base = _poly(e.left)
    out: dict[int, Expr] = {0: Num(1.0)}
    for _ in range(int(e.right.value)):
        out = _polymul(out, base)
    return out


def _polymul(a: dict[int, Expr], b: dict[int, Expr]) -> dict[int, Expr]:
    out: dict[int, Expr] = {}
    for i, ci in a.items():
        for j, cj in b.items():
            term = mul(ci, cj)
            out[i + j] = add(out[i + j], term) if i + j in out else term
    return out


def decompose(f: Sequence[Expr]) -> tuple[tuple[Expr, ...], tuple[Expr, ...], tuple[Expr, ...]]:
    """Split a lam-polynomial field into ``(fplus, fminus, g)``.

    Each component ``p(lam)`` is divided by ``lam^2 - 1``: the remainder
    ``a + b*lam`` gives ``fplus = a + b`` and ``fminus = a - b``, and the
    quotient is the hidden coefficient ``g``.

    Raises:
        ModelError: if some component is not polynomial in lam.
    """
    fplus, fminus, gs = [], [], []
    for e in f:
        coeffs = _poly(e)
        deg = max(coeffs)
        c = [coeffs.get(k, Num(0.0)) for k in range(deg + 1)]
        # synthetic division by lam^2 - 1, highest power first
        q: dict[int, Expr] = {}
        for k in range(deg - 2, -1, -1):
            q[k] = add(c[k + 2], q[k + 2]) if k + 2 in q else c[k + 2]
        r0 = add(c[0], q[0]) if 0 in q else c[0]
        r1 = (add(c[1], q[1]) if 1 in q else c[1]) if deg >= 1 else Num(0.0)
        fplus.append(add(r0, r1))
        fminus.append(sub(r0, r1))
        g: Expr = Num(0.0)
        for k in sorted(q):
            g = add(g, mul(q[k], power(Var("lam"), k)))
        gs.append(g)
    return tuple(fplus), tuple(fminus), tuple(gs)


def describe(exprs: Sequence[Expr]) -> str:
    return "[" + ", ".join(to_text(e) for e in exprs) + "]"


__all__ += ["describe"]
