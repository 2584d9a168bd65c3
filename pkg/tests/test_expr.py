import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracdde.expr import (
    ExprDomainError, ExprSyntaxError, UnboundVariableError, UnknownIdentifierError,
    diff, evaluate, parse, render, substitute,
)


# random polynomial/trig/exp trees in t, kept finite on [0.5, 20]
def _trees():
    leaves = st.one_of(
        st.just("t"),
        st.integers(-5, 5).map(str),
        st.sampled_from(["pi", "e", "0.5", "1.25"]),
    )

    def extend(children):
        return st.one_of(
            st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(lambda x: f"({x[0]} {x[1]} {x[2]})"),
            st.tuples(st.sampled_from(["sin", "cos"]), children).map(lambda x: f"{x[0]}({x[1]})"),
            children.map(lambda c: f"exp(sin({c}))"),
            st.tuples(children, st.integers(0, 3)).map(lambda x: f"({x[0]})^{x[1]}"),
        )

    return st.recursive(leaves, extend, max_leaves=8)


@pytest.mark.parametrize("text, t, expected", [
    ("1/sqrt(t)", 4.0, 0.5),
    ("0", 3.0, 0.0),
    ("sin(ln(t))", 1.0, 0.0),
    ("t^(2/3)/(1+cos(t)^2)", 0.0, 0.0),
    ("exp(2*t)*sqrt(t)", 1.0, math.e**2),
])
def test_evaluate_examples(text, t, expected):
    assert parse(text)(t=t) == pytest.approx(expected, rel=1e-15, abs=0)


def test_precedence_and_associativity():
    assert parse("-2^2")() == -4
    assert parse("2^3^2")() == 512
    assert parse("2**3")() == 8
    assert parse("1 - 2 - 3")() == -4
    assert parse("8/4/2")() == 1


def test_real_root_for_odd_denominators():
    assert parse("(-8)^(1/3)")() == pytest.approx(-2.0)
    assert parse("(-8)^(2/3)")() == pytest.approx(4.0)
    assert parse("cbrt(-27)")() == pytest.approx(-3.0)
    with pytest.raises(ExprDomainError):
        parse("(-8)^0.5")()
    with pytest.raises(ExprDomainError):
        parse("(-8)^(1/2)")()


@given(st.floats(-50, 50, allow_nan=False), st.sampled_from([(1, 3), (2, 3), (5, 3), (-1, 3), (4, 5), (7, 9)]))
def test_real_root_rule(x, kq):
    k, q = kq
    if x == 0 and k < 0:
        return
    got = parse(f"u^({k}/{q})", ("u",))(u=x)
    want = math.copysign(1.0, x) ** k * abs(x) ** (k / q)
    assert got == pytest.approx(want, rel=1e-13, abs=1e-300)


def test_cbrt_power_matches_real_power():
    g = parse("v*(1+(3/4)*cbrt(v)^5)", ("v",))
    for v in np.linspace(-1.5, 1.5, 100):
        direct = v * (1 + 0.75 * np.sign(v) * abs(v) ** (5 / 3))
        assert g(v=v) == pytest.approx(direct, rel=1e-13, abs=1e-15)


def test_slot_restriction():
    with pytest.raises(UnknownIdentifierError) as info:
        parse("u*t", ("t",))
    assert info.value.offset == 0
    assert "u" in str(info.value)


@pytest.mark.parametrize("text", ["", "1 +", "sin 2", "(t", "t)", "2..3", "foo(t)", "t $ 2"])
def test_syntax_errors(text):
    with pytest.raises(ExprSyntaxError):
        parse(text)


def test_unbound_variable():
    with pytest.raises(UnboundVariableError):
        evaluate(parse("t + s"), t=1.0)


@settings(max_examples=150, deadline=None)
@given(_trees())
def test_render_round_trip(text):
    e = parse(text)
    again = parse(render(e))
    assert again == e
    assert render(again) == render(e)


@settings(max_examples=150, deadline=None)
@given(_trees(), st.floats(0.5, 20.0))
def test_diff_matches_central_difference(text, t):
    e = parse(text)
    f = e.function("t", backend="mpmath")
    # central difference carried out in 50-digit arithmetic
    with mpmath.workdps(50):
        fd = float(mpmath.diff(f, mpmath.mpf(t), h=mpmath.mpf("1e-15"), method="step", direction=0))
    d = diff(e, "t")(t=t)
    assert abs(d - fd) <= 1e-5 * max(1.0, abs(fd))


def test_diff_examples():
    assert diff(parse("t^2"))(t=3.0) == pytest.approx(6.0)
    assert diff(parse("16/0.2579"))(t=5.0) == 0.0
    rho = parse("1/(t^(7/2)*exp(2*t))")
    h = 1e-6
    fd = (rho(t=2 + h) - rho(t=2 - h)) / (2 * h)
    assert diff(rho)(t=2.0) == pytest.approx(fd, rel=1e-6)


def test_substitute_and_vectorized():
    e = substitute(parse("sin(u)^2", ("u",)), {"u": parse("2*t")})
    x = np.linspace(0.1, 3, 7)
    np.testing.assert_allclose(e.vectorized("t")(x), np.sin(2 * x) ** 2, rtol=1e-15)


def test_vectorized_survives_intermediate_overflow():
    # e^{2t} e^{-2t} overflows in double for large t, the product does not
    e = parse("exp(2*t)*exp(-2*t)*t")
    x = np.array([10.0, 400.0, 600.0])
    np.testing.assert_allclose(e.vectorized("t")(x), x, rtol=1e-12)
