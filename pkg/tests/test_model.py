import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from switchlayer.expr import Bindings, eval_expr, parse, to_text
from switchlayer.model import (
    Combined, LayerPoint, ModelError, Split, SwitchedSystem, assemble, decompose, describe,
    normal_component, surface_tolerance,
)

from _strategies import random_lam_system


def texts(es):
    return [to_text(e) for e in es]


@pytest.mark.parametrize("f,fp,fm,g", [
    ("2*lam^2 - 1", "1.0", "1.0", "2.0"),
    ("lam^3", "1.0", "(-1.0)", "lam"),
    ("3", "3.0", "3.0", "0.0"),
    ("-lam", "(-1.0)", "1.0", "0.0"),
])
def test_decompose_examples(f, fp, fm, g):
    p, m, q = decompose([parse(f, 1)])
    assert texts(p) == [fp] and texts(m) == [fm] and texts(q) == [g]


def test_decompose_rejects_non_polynomial():
    with pytest.raises(ModelError):
        decompose([parse("sin(lam*t)", 1)])
    with pytest.raises(ModelError):
        decompose([parse("1/(1 + lam)", 1)])


def test_validation():
    with pytest.raises(ModelError, match="h must not depend on t"):
        SwitchedSystem.from_text(2, "x1 + t", ["1", "1"])
    with pytest.raises(ModelError, match="h must not depend on lam"):
        SwitchedSystem.from_text(2, "x1*lam", ["1", "1"])
    with pytest.raises(ModelError, match="components"):
        SwitchedSystem.from_text(2, "x1", ["1"])
    with pytest.raises(ModelError, match="fplus must not depend on lam"):
        SwitchedSystem.from_text(1, "x1", fplus=["lam"], fminus=["1"])
    with pytest.raises(ModelError, match="either"):
        SwitchedSystem.from_text(1, "x1", ["1"], fplus=["1"], fminus=["1"])
    with pytest.raises(ModelError, match="needs fplus"):
        SwitchedSystem.from_text(1, "x1", g=["1"])
    with pytest.raises(ModelError, match="non-smooth"):
        SwitchedSystem.from_text(1, "x1", ["abs(lam)"])


def test_split_and_combined_agree():
    a = SwitchedSystem.from_text(2, "x1", fplus=["-1", "1"], fminus=["1", "1"], g=["0", "2"])
    b = SwitchedSystem.from_text(2, "x1", ["-lam", "2*lam^2 - 1"])
    for lam in (-1.0, -0.3, 0.0, 0.8, 1.0):
        assert np.allclose(a.field([0.1, 0.2], 0.0, lam), b.field([0.1, 0.2], 0.0, lam), atol=1e-15)


def test_assemble_and_normal_component():
    s = SwitchedSystem.from_text(2, "x1", ["-lam", "2*lam^2 - 1"])
    assert list(assemble(s, [0.0, 0.0], 0.0, 1.0)) == [-1.0, 1.0]
    assert normal_component(s, [0.0, 0.0], 0.0, 0.5) == -0.5
    assert s.f1_dlam([0.0, 0.0], 0.0, 0.5) == (-0.5, -1.0)


def test_grad_h_nonlinear_surface():
    s = SwitchedSystem.from_text(2, "x1^2 + x2^2 - 1", ["1", "lam"])
    assert np.allclose(s.grad_h([0.6, 0.8]), [1.2, 1.6])


def test_layer_point_check():
    s = SwitchedSystem.from_text(1, "x1", ["-lam"])
    LayerPoint((0.0,), 0.5).check(s)
    with pytest.raises(ModelError):
        LayerPoint((0.0,), 1.5).check(s)
    with pytest.raises(ModelError):
        LayerPoint((0.1,), 0.0).check(s)
    assert surface_tolerance([0.0]) == 1e-9


def test_is_filippov():
    assert SwitchedSystem.from_text(1, "x1", ["-lam"]).is_filippov
    assert not SwitchedSystem.from_text(1, "x1", ["lam^2"]).is_filippov
    assert not SwitchedSystem.from_text(1, "x1", ["sin(lam)"]).is_filippov


def test_describe():
    s = SwitchedSystem.from_text(2, "x1", ["-lam", "1"])
    assert describe(s.field_exprs) == "[-lam, 1.0]"


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_decompose_reassemble_identity(seed):
    rng = np.random.default_rng(seed)
    s = random_lam_system(rng)
    fp, fm, g = decompose(s.form.f)
    split = SwitchedSystem(2, s.h, Split(fp, fm, g))
    for _ in range(5):
        x = rng.uniform(-2, 2, 2)
        t = rng.uniform(0, 5)
        lam = rng.uniform(-1.5, 1.5)
        a, b = s.field(x, t, lam), split.field(x, t, lam)
        assert np.all(np.abs(a - b) <= 1e-12 * (1 + np.abs(a)))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_ghost_vanishes_off_layer(seed):
    rng = np.random.default_rng(seed)
    s = random_lam_system(rng)
    fp, fm, _ = decompose(s.form.f)
    x = rng.uniform(-2, 2, 2)
    t = rng.uniform(0, 5)
    b = Bindings(tuple(x), t, 0.0)
    for lam, side in ((1.0, fp), (-1.0, fm)):
        want = np.array([eval_expr(e, b) for e in side])
        got = s.field(x, t, lam)
        assert np.all(np.abs(got - want) <= 1e-12 * (1 + np.abs(want)))
