"""Expression language for vector fields.

Expressions are arithmetic over the state variables ``x1..xn``, time ``t`` and
the switching multiplier ``lam``. They are parsed into immutable trees that can
be evaluated directly, differentiated exactly with dual numbers, printed back to
text, or compiled into straight-line Python source for the hot integration loops.

Grammar::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom ("^" unary)?
    atom   := number | ident | ident "(" expr ")" | "(" expr ")"

so ``-x^2`` is ``-(x^2)`` and ``2^3^2`` is ``2^(3^2)``.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Sequence, Union

__all__ = [
    "Expr", "Num", "Var", "Neg", "BinOp", "Call", "Bindings", "Dual",
    "ExprSyntaxError", "ExprDomainError", "NonSmoothWarning", "FUNCTIONS",
    "parse", "to_text", "eval_expr", "eval_dual", "deriv", "variables",
    "depends_on", "walk", "compile_values", "compile_duals", "to_source",
]

FUNCTIONS = ("sin", "cos", "tan", "tanh", "exp", "log", "sqrt", "abs", "sign", "atan")
CONSTANTS = {"pi": math.pi, "e": math.e}


class ExprSyntaxError(ValueError):
    """Malformed expression text; ``pos`` is the 0-based character offset."""

    def __init__(self, msg: str, pos: int, text: str = ""):
        self.pos = pos
        self.text = text
        super().__init__(f"{msg} at position {pos}")


class ExprDomainError(ArithmeticError):
    """Evaluation left the domain of an operation (x/0, log(x<=0), sqrt(x<0), ...)."""

    def __init__(self, msg: str, pos: int = -1):
        self.pos = pos
        super().__init__(f"{msg} (node at position {pos})" if pos >= 0 else msg)


class NonSmoothWarning(RuntimeWarning):
    """A derivative was taken exactly at the kink of ``abs`` or ``sign``."""


# -- tree -------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float
    pos: int = field(default=-1, compare=False, repr=False)


@dataclass(frozen=True)
class Var:
    name: str
    pos: int = field(default=-1, compare=False, repr=False)


@dataclass(frozen=True)
class Neg:
    arg: "Expr"
    pos: int = field(default=-1, compare=False, repr=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"
    pos: int = field(default=-1, compare=False, repr=False)


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"
    pos: int = field(default=-1, compare=False, repr=False)


Expr = Union[Num, Var, Neg, BinOp, Call]


@dataclass(frozen=True)
class Bindings:
    """Values for one evaluation: the state vector, time and multiplier."""

    x: Sequence[float]
    t: float = 0.0
    lam: float = 0.0

    def lookup(self, name: str) -> float:
        if name == "t":
            return self.t
        if name == "lam":
            return self.lam
        i = int(name[1:]) - 1
        if i >= len(self.x):
            raise KeyError(f"{name} not bound (state has length {len(self.x)})")
        return float(self.x[i])


def walk(e: Expr) -> Iterator[Expr]:
    """Pre-order traversal of all nodes."""
    stack = [e]
    while stack:
        node = stack.pop()
        yield node
        if isinstance(node, BinOp):
            stack.append(node.right)
            stack.append(node.left)
        elif isinstance(node, (Neg, Call)):
            stack.append(node.arg)


def variables(e: Expr) -> set[str]:
    return {node.name for node in walk(e) if isinstance(node, Var)}


def depends_on(e: Expr, name: str) -> bool:
    return name in variables(e)


# -- parsing ----------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, n: int):
        self.text = text
        self.n = n
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def take(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, msg: str, pos: int | None = None) -> ExprSyntaxError:
        return ExprSyntaxError(msg, self.peek()[2] if pos is None else pos, self.text)

    def expect(self, value: str) -> None:
        kind, val, pos = self.peek()
        if val != value or kind != "op":
            shown = val or "end of input"
            raise self.error(f"expected {value!r}, found {shown!r}")
        self.take()

    def parse(self) -> Expr:
        if self.peek()[0] == "end":
            raise self.error("empty expression")
        e = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise self.error(f"unexpected {val!r}")
        return e

    def expr(self) -> Expr:
        left = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            _, op, pos = self.take()
            left = BinOp(op, left, self.term(), pos)
        return left

    def term(self) -> Expr:
        left = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            _, op, pos = self.take()
            left = BinOp(op, left, self.unary(), pos)
        return left

    def unary(self) -> Expr:
        kind, val, pos = self.peek()
        if kind == "op" and val == "-":
            self.take()
            arg = self.unary()
            if isinstance(arg, Num):
                return Num(-arg.value, pos)
            return Neg(arg, pos)
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, val, pos = self.peek()
        if kind == "op" and val == "^":
            self.take()
            return BinOp("^", base, self.unary(), pos)
        return base

    def atom(self) -> Expr:
        kind, val, pos = self.take()
        if kind == "num":
            return Num(float(val), pos)
        if kind == "ident":
            is_call = self.peek()[1] == "(" and self.peek()[0] == "op"
            if val in FUNCTIONS:
                if not is_call:
                    raise ExprSyntaxError(f"function {val!r} needs an argument", pos, self.text)
                self.take()
                arg = self.expr()
                if self.peek()[1] == ",":
                    raise self.error(f"{val}() takes exactly one argument")
                self.expect(")")
                return Call(val, arg, pos)
            if is_call:
                raise ExprSyntaxError(f"{val!r} is not a function", pos, self.text)
            if val in CONSTANTS:
                return Num(CONSTANTS[val], pos)
            if val in ("t", "lam"):
                return Var(val, pos)
            m = re.fullmatch(r"x([1-9]\d*)", val)
            if m and int(m.group(1)) <= self.n:
                return Var(val, pos)
            raise ExprSyntaxError(f"unknown identifier {val!r}", pos, self.text)
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect(")")
            return e
        shown = val or "end of input"
        raise ExprSyntaxError(f"unexpected {shown!r}", pos, self.text)


def parse(text: str, n: int) -> Expr:
    """Parse ``text`` into an expression over ``x1..xn``, ``t`` and ``lam``.

    Raises:
        ExprSyntaxError: on malformed input, unknown identifiers, or a function
            called with the wrong number of arguments.
    """
    return _Parser(text, n).parse()


# -- printing ---------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return 4 if e.op == "^" else _PREC[e.op]
    if isinstance(e, Neg):
        return 3
    return 5  # literals, variables and calls; negative literals print parenthesized


def _num_text(v: float) -> str:
    if math.isinf(v) or math.isnan(v):
        raise ValueError(f"cannot print non-finite literal {v}")
    s = repr(float(v))
    return f"({s})" if s.startswith("-") else s


def to_text(e: Expr) -> str:
    """Render ``e`` so that ``parse(to_text(e))`` rebuilds the same tree."""
    if isinstance(e, Num):
        return _num_text(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({to_text(e.arg)})"
    if isinstance(e, Neg):
        inner = to_text(e.arg)
        return f"-{inner}" if _prec(e.arg) >= 3 else f"-({inner})"
    op = e.op
    lt, rt = to_text(e.left), to_text(e.right)
    if op == "^":
        if _prec(e.left) < 5:
            lt = f"({lt})"
        if _prec(e.right) < 3:
            rt = f"({rt})"
        return f"{lt}^{rt}"
    p = _PREC[op]
    if _prec(e.left) < p:
        lt = f"({lt})"
    if _prec(e.right) <= p:
        rt = f"({rt})"
    return f"{lt} {op} {rt}"


# -- evaluation ---------------------------------------------------------------

def _sign(v: float) -> float:
    return 1.0 if v > 0 else (-1.0 if v < 0 else 0.0)


def _apply(func: str, v: float, pos: int) -> float:
    try:
        if func == "log":
            if v <= 0:
                raise ExprDomainError(f"log of non-positive value {v!r}", pos)
            return math.log(v)
        if func == "sqrt":
            if v < 0:
                raise ExprDomainError(f"sqrt of negative value {v!r}", pos)
            return math.sqrt(v)
        if func == "abs":
            return abs(v)
        if func == "sign":
            return _sign(v)
        return getattr(math, func)(v)
    except (OverflowError, ValueError) as exc:
        raise ExprDomainError(f"{func}({v!r}): {exc}", pos) from None


def _pow(a: float, b: float, pos: int) -> float:
    if a == 0.0 and b < 0:
        raise ExprDomainError("zero raised to a negative power", pos)
    if a < 0 and b != math.floor(b):
        raise ExprDomainError(f"negative base {a!r} with non-integer exponent {b!r}", pos)
    try:
        return math.pow(a, b)
    except OverflowError:
        raise ExprDomainError(f"overflow in {a!r}^{b!r}", pos) from None


def _binop(op: str, a: float, b: float, pos: int) -> float:
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if b == 0.0:
            raise ExprDomainError("division by zero", pos)
        return a / b
    return _pow(a, b, pos)


def eval_expr(e: Expr, b: Bindings) -> float:
    """Evaluate ``e`` in IEEE double precision."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return b.lookup(e.name)
    if isinstance(e, Neg):
        return -eval_expr(e.arg, b)
    if isinstance(e, Call):
        return _apply(e.func, eval_expr(e.arg, b), e.pos)
    return _binop(e.op, eval_expr(e.left, b), eval_expr(e.right, b), e.pos)


# -- forward-mode derivatives --------------------------------------------------

@dataclass(frozen=True)
class Dual:
    """Dual number ``val + dot*eps`` with eps^2 = 0."""

    val: float
    dot: float = 0.0
    kink: bool = False  # derivative taken exactly at an abs/sign kink

    def __add__(self, o: "Dual") -> "Dual":
        return Dual(self.val + o.val, self.dot + o.dot, self.kink or o.kink)

    def __sub__(self, o: "Dual") -> "Dual":
        return Dual(self.val - o.val, self.dot - o.dot, self.kink or o.kink)

    def __mul__(self, o: "Dual") -> "Dual":
        return Dual(self.val * o.val, self.val * o.dot + self.dot * o.val, self.kink or o.kink)

    def __truediv__(self, o: "Dual") -> "Dual":
        q = self.val / o.val
        return Dual(q, (self.dot - q * o.dot) / o.val, self.kink or o.kink)

    def __neg__(self) -> "Dual":
        return Dual(-self.val, -self.dot, self.kink)


def _dual_call(func: str, a: Dual, pos: int) -> Dual:
    v = _apply(func, a.val, pos)
    d, kink = a.dot, a.kink
    if func == "sin":
        return Dual(v, math.cos(a.val) * d, kink)
    if func == "cos":
        return Dual(v, -math.sin(a.val) * d, kink)
    if func == "tan":
        return Dual(v, (1.0 + v * v) * d, kink)
    if func == "tanh":
        return Dual(v, (1.0 - v * v) * d, kink)
    if func == "exp":
        return Dual(v, v * d, kink)
    if func == "log":
        return Dual(v, d / a.val, kink)
    if func == "sqrt":
        if v == 0.0:
            if d == 0.0:
                return Dual(v, 0.0, kink)
            raise ExprDomainError("sqrt is not differentiable at 0", pos)
        return Dual(v, d / (2.0 * v), kink)
    if func == "atan":
        return Dual(v, d / (1.0 + a.val * a.val), kink)
    if func == "abs":
        if a.val == 0.0:
            return Dual(v, d, kink or d != 0.0)  # right-sided slope +1
        return Dual(v, _sign(a.val) * d, kink)
    # sign: flat on both sides, the right-sided derivative at 0 is 0 as well
    return Dual(v, 0.0, kink or (a.val == 0.0 and d != 0.0))


def _dual_pow(a: Dual, b: Dual, pos: int) -> Dual:
    v = _pow(a.val, b.val, pos)
    kink = a.kink or b.kink
    dot = 0.0
    if a.dot != 0.0:
        if b.val == 0.0:
            dot = 0.0
        elif a.val == 0.0 and b.val < 1.0:
            raise ExprDomainError("power not differentiable at zero base", pos)
        else:
            dot = b.val * _pow(a.val, b.val - 1.0, pos) * a.dot
    if b.dot != 0.0:
        if a.val <= 0.0:
            raise ExprDomainError("variable exponent needs a positive base", pos)
        dot += v * math.log(a.val) * b.dot
    return Dual(v, dot, kink)


def eval_dual(e: Expr, b: Bindings, seeds: Mapping[str, float]) -> Dual:
    """Evaluate ``e`` with tangent ``seeds[name]`` on each variable (default 0).

    With a single unit seed this is a partial derivative; with a vector of
    seeds on ``x1..xn`` it is a directional derivative.
    """
    if isinstance(e, Num):
        return Dual(e.value)
    if isinstance(e, Var):
        return Dual(b.lookup(e.name), float(seeds.get(e.name, 0.0)))
    if isinstance(e, Neg):
        return -eval_dual(e.arg, b, seeds)
    if isinstance(e, Call):
        return _dual_call(e.func, eval_dual(e.arg, b, seeds), e.pos)
    left = eval_dual(e.left, b, seeds)
    right = eval_dual(e.right, b, seeds)
    if e.op == "+":
        return left + right
    if e.op == "-":
        return left - right
    if e.op == "*":
        return left * right
    if e.op == "/":
        if right.val == 0.0:
            raise ExprDomainError("division by zero", e.pos)
        return left / right
    return _dual_pow(left, right, e.pos)


def deriv(e: Expr, b: Bindings, var: str) -> float:
    """Exact first derivative of ``e`` with respect to ``var`` at ``b``.

    At the kink of ``abs``/``sign`` the right-sided value is returned and a
    :class:`NonSmoothWarning` is issued.
    """
    d = eval_dual(e, b, {var: 1.0})
    if d.kink:
        warnings.warn(f"derivative in {var} taken at a non-smooth point", NonSmoothWarning, stacklevel=2)
    return d.dot


# -- code generation ----------------------------------------------------------
# Straight-line Python source for fast repeated evaluation. The same text is fed
# to numba by the regularized integrators, so only ``math`` calls and the helper
# names below may appear in it.

def _src_var(name: str, xname: str) -> str:
    if name == "t":
        return "t"
    if name == "lam":
        return "lam"
    return f"{xname}[{int(name[1:]) - 1}]"


def to_source(e: Expr, xname: str = "x", lamname: str = "lam") -> str:
    """Python expression text evaluating ``e`` (``x`` indexed from 0)."""
    if isinstance(e, Num):
        return repr(float(e.value)) if e.value >= 0 else f"({float(e.value)!r})"
    if isinstance(e, Var):
        return lamname if e.name == "lam" else _src_var(e.name, xname)
    if isinstance(e, Neg):
        return f"(-{to_source(e.arg, xname, lamname)})"
    if isinstance(e, Call):
        a = to_source(e.arg, xname, lamname)
        if e.func == "abs":
            return f"abs({a})"
        if e.func == "sign":
            return f"_sign({a})"
        return f"math.{e.func}({a})"
    lt, rt = to_source(e.left, xname, lamname), to_source(e.right, xname, lamname)
    if e.op == "^":
        return f"math.pow({lt}, {rt})"
    return f"({lt} {e.op} {rt})"


_NAMESPACE = {"math": math, "_sign": _sign, "abs": abs}


def compile_values(exprs: Sequence[Expr]) -> Callable[[Sequence[float], float, float], tuple]:
    """Compile expressions into ``fn(x, t, lam) -> tuple`` of their values.

    Domain violations surface as the underlying Python exceptions
    (ZeroDivisionError, ValueError, OverflowError).
    """
    body = ", ".join(to_source(e) for e in exprs)
    src = f"def _fn(x, t, lam):\n    return ({body},)\n"
    ns = dict(_NAMESPACE)
    exec(compile(src, "<switchlayer.expr>", "exec"), ns)
    return ns["_fn"]


class _DualEmitter:
    """Emits SSA lines computing (value, tangent) pairs for a tree."""

    def __init__(self) -> None:
        self.lines: list[str] = []
        self.k = 0

    def fresh(self) -> tuple[str, str]:
        self.k += 1
        return f"v{self.k}", f"d{self.k}"

    def emit(self, e: Expr) -> tuple[str, str]:
        if isinstance(e, Num):
            return repr(float(e.value)) if e.value >= 0 else f"({float(e.value)!r})", "0.0"
        if isinstance(e, Var):
            if e.name == "t":
                return "t", "dt"
            if e.name == "lam":
                return "lam", "dlam"
            i = int(e.name[1:]) - 1
            return f"x[{i}]", f"dx[{i}]"
        v, d = self.fresh()
        L = self.lines
        if isinstance(e, Neg):
            a, da = self.emit(e.arg)
            L += [f"{v} = -{a}", f"{d} = -{da}"]
            return v, d
        if isinstance(e, Call):
            a, da = self.emit(e.arg)
            f = e.func
            if f == "sin":
                L += [f"{v} = math.sin({a})", f"{d} = math.cos({a}) * {da}"]
            elif f == "cos":
                L += [f"{v} = math.cos({a})", f"{d} = -math.sin({a}) * {da}"]
            elif f == "tan":
                L += [f"{v} = math.tan({a})", f"{d} = (1.0 + {v} * {v}) * {da}"]
            elif f == "tanh":
                L += [f"{v} = math.tanh({a})", f"{d} = (1.0 - {v} * {v}) * {da}"]
            elif f == "exp":
                L += [f"{v} = math.exp({a})", f"{d} = {v} * {da}"]
            elif f == "log":
                L += [f"{v} = math.log({a})", f"{d} = {da} / {a}"]
            elif f == "sqrt":
                L += [f"{v} = math.sqrt({a})", f"{d} = {da} / (2.0 * {v}) if {da} != 0.0 else 0.0"]
            elif f == "atan":
                L += [f"{v} = math.atan({a})", f"{d} = {da} / (1.0 + {a} * {a})"]
            elif f == "abs":
                L += [f"{v} = abs({a})", f"{d} = (-{da} if {a} < 0 else {da})"]
            else:
                L += [f"{v} = _sign({a})", f"{d} = 0.0"]
            return v, d
        a, da = self.emit(e.left)
        c, dc = self.emit(e.right)
        if e.op == "+":
            L += [f"{v} = {a} + {c}", f"{d} = {da} + {dc}"]
        elif e.op == "-":
            L += [f"{v} = {a} - {c}", f"{d} = {da} - {dc}"]
        elif e.op == "*":
            L += [f"{v} = {a} * {c}", f"{d} = {a} * {dc} + {da} * {c}"]
        elif e.op == "/":
            L += [f"{v} = {a} / {c}", f"{d} = ({da} - {v} * {dc}) / {c}"]
        else:
            exponent_const = isinstance(e.right, Num)
            L.append(f"{v} = math.pow({a}, {c})")
            if exponent_const:
                b = float(e.right.value)
                if b == 0.0:
                    L.append(f"{d} = 0.0")
                else:
                    L.append(f"{d} = ({b!r} * math.pow({a}, {b - 1.0!r}) * {da} if {da} != 0.0 else 0.0)")
            else:
                L.append(
                    f"{d} = ({c} * math.pow({a}, {c} - 1.0) * {da} if {da} != 0.0 else 0.0)"
                    f" + ({v} * math.log({a}) * {dc} if {dc} != 0.0 else 0.0)"
                )
        return v, d


def compile_duals(exprs: Sequence[Expr]) -> Callable[..., tuple]:
    """Compile into ``fn(x, dx, t, dt, lam, dlam) -> ((v, d), ...)``.

    The tangents ``dx``/``dt``/``dlam`` seed a single forward-mode sweep, so
    one call yields every value together with its directional derivative.
    """
    em = _DualEmitter()
    outs = [em.emit(e) for e in exprs]
    body = "".join(f"    {line}\n" for line in em.lines)
    ret = ", ".join(f"({v}, {d})" for v, d in outs)
    src = f"def _fn(x, dx, t, dt, lam, dlam):\n{body}    return ({ret},)\n"
    ns = dict(_NAMESPACE)
    exec(compile(src, "<switchlayer.expr:dual>", "exec"), ns)
    return ns["_fn"]
