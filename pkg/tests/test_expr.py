import math
import warnings

import pytest
from hypothesis import assume, given, settings
import hypothesis.strategies as st

from switchlayer.expr import (
    BinOp, Bindings, Call, ExprDomainError, ExprSyntaxError, Neg, NonSmoothWarning, Num, Var,
    compile_duals, compile_values, deriv, eval_dual, eval_expr, parse, to_text, variables,
)


def ev(text, x=(0.0, 0.0), t=0.0, lam=0.0):
    return eval_expr(parse(text, len(x)), Bindings(tuple(x), t, lam))


@pytest.mark.parametrize("text,value", [
    ("1 + 2*3", 7.0),
    ("2^3^2", 512.0),
    ("-2^2", -4.0),
    ("(-2)^2", 4.0),
    ("2*lam^2 - 1", -1.0),
    ("x1 - (-1)", 4.0),
    ("x2^-1", 0.25),
    ("e", math.e),
    ("pi/2", math.pi / 2),
    ("8/2/2", 2.0),
    ("sign(-3) + abs(-3)", 2.0),
])
def test_values(text, value):
    assert ev(text, x=(3.0, 4.0)) == pytest.approx(value, rel=1e-15)


def test_unary_minus_binds_looser_than_power():
    assert parse("-x1^2", 1) == Neg(BinOp("^", Var("x1"), Num(2.0)))


def test_constants_fold_at_parse_time():
    assert parse("pi", 1) == Num(math.pi)


@pytest.mark.parametrize("text", ["x3", "foo", "sin x1", "sin(x1, x2)", "x1 +", "(x1", "x1)", "2 3", "lam(2)", "", "1..2"])
def test_syntax_errors(text):
    with pytest.raises(ExprSyntaxError):
        parse(text, 2)


def test_syntax_error_position():
    with pytest.raises(ExprSyntaxError) as info:
        parse("x1 + foo", 1)
    assert info.value.pos == 5


@pytest.mark.parametrize("text", ["1/x1", "log(x1)", "sqrt(x1 - 1)", "(x1 - 1)^0.5", "x1^-1"])
def test_domain_errors(text):
    with pytest.raises(ExprDomainError):
        ev(text, x=(0.0,))


def test_domain_error_points_at_operator():
    with pytest.raises(ExprDomainError) as info:
        ev("1 + log(x1)", x=(0.0,))
    assert info.value.pos == 4


def test_overflow_is_domain_error():
    with pytest.raises(ExprDomainError):
        ev("exp(x1)", x=(1000.0,))


def test_deriv_matches_closed_form():
    e = parse("x1^2*sin(t) + lam^3", 1)
    b = Bindings((1.5,), 0.7, 0.4)
    assert deriv(e, b, "x1") == pytest.approx(2 * 1.5 * math.sin(0.7))
    assert deriv(e, b, "t") == pytest.approx(1.5 ** 2 * math.cos(0.7))
    assert deriv(e, b, "lam") == pytest.approx(3 * 0.4 ** 2)


def test_deriv_kink_warns():
    e = parse("abs(x1)", 1)
    with pytest.warns(NonSmoothWarning):
        d = deriv(e, Bindings((0.0,)), "x1")
    assert d == 1.0


def test_sign_derivative_is_zero_off_kink():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert deriv(parse("sign(x1)", 1), Bindings((2.0,)), "x1") == 0.0


def test_variables():
    assert variables(parse("x1*t + lam", 2)) == {"x1", "t", "lam"}


def test_compiled_values_and_duals_agree_with_tree():
    es = [parse(s, 2) for s in ("x1*x2 - sin(lam*t)", "sqrt(1 + x1^2)/exp(x2)")]
    fv = compile_values(es)
    fd = compile_duals(es)
    x, t, lam = [0.3, -1.2], 0.5, 0.25
    b = Bindings(tuple(x), t, lam)
    vals = fv(x, t, lam)
    pairs = fd(x, [1.0, 0.0], t, 0.0, lam, 0.0)
    for e, v, (pv, pd) in zip(es, vals, pairs):
        assert v == eval_expr(e, b)
        assert pv == pytest.approx(v, rel=1e-15)
        assert pd == pytest.approx(deriv(e, b, "x1"), rel=1e-13)


# -- property tests ----------------------------------------------------------

LEAVES = st.one_of(
    st.floats(-5, 5, allow_nan=False).map(lambda v: Num(round(v, 3))),
    st.sampled_from([Var("x1"), Var("x2"), Var("t"), Var("lam")]),
)
SMOOTH = ("sin", "cos", "tanh", "exp", "atan")


def _trees(children):
    return st.one_of(
        children.map(Neg),
        st.tuples(st.sampled_from("+-*"), children, children).map(lambda a: BinOp(*a)),
        st.tuples(st.sampled_from(SMOOTH), children).map(lambda a: Call(*a)),
        children.map(lambda c: BinOp("^", c, Num(2.0))),
    )


TREES = st.recursive(LEAVES, _trees, max_leaves=8)
POINT = st.tuples(*[st.floats(-1.5, 1.5) for _ in range(4)])


@settings(max_examples=300, deadline=None)
@given(TREES)
def test_print_parse_round_trip(e):
    assert parse(to_text(e), 2) == parse(to_text(parse(to_text(e), 2)), 2)
    b = Bindings((0.3, -0.7), 0.2, 0.5)
    try:
        v = eval_expr(e, b)
    except ExprDomainError:
        return
    assert eval_expr(parse(to_text(e), 2), b) == pytest.approx(v, rel=1e-12, abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(TREES, POINT, st.sampled_from(["x1", "x2", "t", "lam"]))
def test_deriv_vs_finite_difference(e, p, var):
    x1, x2, t, lam = p
    b = Bindings((x1, x2), t, lam)

    def at(d):
        vals = {"x1": x1, "x2": x2, "t": t, "lam": lam}
        vals[var] += d
        return eval_expr(e, Bindings((vals["x1"], vals["x2"]), vals["t"], vals["lam"]))

    try:
        d = deriv(e, b, var)
        hstep = 1e-5
        fd = (8 * (at(hstep) - at(-hstep)) - (at(2 * hstep) - at(-2 * hstep))) / (12 * hstep)
    except (ExprDomainError, OverflowError):
        return
    assume(math.isfinite(d) and abs(d) < 1e6 and abs(at(0.0)) < 1e6)
    assert fd == pytest.approx(d, rel=1e-5, abs=1e-5)


@settings(max_examples=200, deadline=None)
@given(TREES, POINT)
def test_compiled_matches_interpreter(e, p):
    x1, x2, t, lam = p
    b = Bindings((x1, x2), t, lam)
    try:
        v = eval_expr(e, b)
        dv = eval_dual(e, b, {"lam": 1.0})
    except ExprDomainError:
        return
    cv = compile_values([e])([x1, x2], t, lam)[0]
    cd = compile_duals([e])([x1, x2], [0.0, 0.0], t, 0.0, lam, 1.0)[0]
    assert cv == pytest.approx(v, rel=1e-13, abs=1e-13)
    assert cd[1] == pytest.approx(dv.dot, rel=1e-12, abs=1e-12)
