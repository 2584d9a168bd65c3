import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracdde.expr import parse
from fracdde.fraccalc import (
    InconclusiveLimitError, check_alpha, check_properties, frac_deriv, frac_deriv_at_zero,
    frac_deriv_limit, frac_integral,
)

SMOOTH = ["t^2", "sin(t)", "exp(t/10)", "ln(t)", "sqrt(t)", "t*cos(t)", "1/(1+t)", "cbrt(t)", "2 + sin(t)"]


@pytest.mark.parametrize("f, t, alpha, expected", [
    ("t^2", 4.0, 0.5, 16.0),
    ("7", 3.0, 0.3, 0.0),
    ("sin(ln(t))", 1.0, 0.5, 1.0),
    ("t^(-2)", 1.5, 0.25, -2 * 1.5 ** (-2.25)),
])
def test_frac_deriv_examples(f, t, alpha, expected):
    assert frac_deriv(f, t, alpha) == pytest.approx(expected, rel=1e-12, abs=1e-15)


def test_alpha_range():
    with pytest.raises(ValueError):
        check_alpha(0.0)
    with pytest.raises(ValueError):
        check_alpha(1.5)
    assert check_alpha(1) == 1.0


@pytest.mark.parametrize("f", SMOOTH)
def test_alpha_one_is_classical(f):
    e = parse(f)
    d = parse(f).diff("t")
    for t in (0.5, 2.0, 17.0):
        assert abs(frac_deriv(e, t, 1.0) - d(t=t)) <= 1e-8


def test_callable_input_uses_finite_differences():
    assert frac_deriv(math.sin, 2.0, 0.5) == pytest.approx(math.sqrt(2.0) * math.cos(2.0), rel=1e-8)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(SMOOTH), st.sampled_from(SMOOTH), st.floats(-3, 3), st.floats(-3, 3),
       st.floats(0.5, 50), st.sampled_from([0.25, 0.5, 0.9, 1.0]))
def test_linearity(f, g, a, b, t, alpha):
    lhs = frac_deriv(parse(f"({a!r})*({f}) + ({b!r})*({g})"), t, alpha)
    fa, gb = a * frac_deriv(f, t, alpha), b * frac_deriv(g, t, alpha)
    assert abs(lhs - (fa + gb)) <= 1e-8 * max(abs(fa) + abs(gb), 1e-300) + 1e-300


def test_composition_against_direct_differentiation():
    outer, inner = "sin(u)", "t^2 + 1"
    comp = parse("sin(t^2 + 1)")
    for t, alpha in [(0.7, 0.5), (3.0, 0.25), (9.0, 0.9)]:
        chain = math.cos(t * t + 1) * frac_deriv(inner, t, alpha)
        assert frac_deriv(comp, t, alpha) == pytest.approx(chain, rel=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(SMOOTH), st.floats(0.5, 50), st.sampled_from([0.25, 0.5, 0.9, 1.0]))
def test_limit_definition_agrees(f, t, alpha):
    ref = frac_deriv(f, t, alpha)
    assert frac_deriv_limit(f, t, alpha) == pytest.approx(ref, rel=1e-4, abs=1e-10)


@pytest.mark.parametrize("f, t, alpha, expected", [
    ("t^3", 1.0, 0.5, 3.0),
    ("5", 2.0, 0.5, 0.0),
    ("exp(t)", 2.0, 1 / 3, 2 ** (2 / 3) * math.e**2),
])
def test_limit_definition_examples(f, t, alpha, expected):
    assert frac_deriv_limit(f, t, alpha) == pytest.approx(expected, rel=1e-4, abs=1e-10)


def test_limit_rejects_bad_sequence():
    with pytest.raises(ValueError):
        frac_deriv_limit("t", 1.0, 0.5, eps_sequence=[1e-3, 1e-2])


def test_limit_inconclusive_on_noise():
    rng = np.random.default_rng(0)
    with pytest.raises(InconclusiveLimitError):
        frac_deriv_limit(lambda x: float(rng.normal()), 1.0, 0.5)


def test_derivative_at_zero():
    # D^a t^2 = 2 t^(2-a) -> 0, and D^1 t = 1
    assert frac_deriv_at_zero("t^2", 0.5) == pytest.approx(0.0, abs=1e-6)
    assert frac_deriv_at_zero("t", 1.0) == pytest.approx(1.0)
    with pytest.raises(InconclusiveLimitError):
        frac_deriv_at_zero("sin(1/t)", 1.0)


@pytest.mark.parametrize("f, a, t, alpha, expected", [
    ("t^(1/2)", 1.0, 5.0, 0.5, 4.0),
    ("1", 0.0, 9.0, 0.5, 6.0),
])
def test_frac_integral_examples(f, a, t, alpha, expected):
    assert frac_integral(f, a, t, alpha) == pytest.approx(expected, rel=1e-8)


def test_fundamental_theorem():
    alpha = 0.7
    F = lambda t: frac_integral("cos(t)", 1.0, t, alpha)
    assert frac_deriv(F, 3.0, alpha) == pytest.approx(math.cos(3.0), rel=1e-6)


@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.9, 1.0])
def test_property_suite(alpha):
    rep = check_properties(alpha, np.linspace(0.5, 50, 100), n_cases=50, seed=1)
    assert rep.passed(1e-6), rep.failures[:3]
    assert rep.max_rel_error["p2"] == 0.0


def test_property_suite_skips_unrepresentable_compositions():
    # seed 3 draws exp(u/4) with u = t^3 - 2t near t = 50
    rep = check_properties(0.5, np.linspace(0.5, 50, 100), n_cases=200, seed=3)
    assert rep.passed(1e-6)
