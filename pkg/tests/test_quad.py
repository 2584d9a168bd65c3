import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracdde.expr import parse
from fracdde.quad import (
    CALIBRATION_CATALOG, Classification, QuadratureError, calibrate, classify_growth, integrate,
    integrate_with_error, probe_improper, tail_constant,
)


def test_basic_integrals():
    assert integrate("1/s", 1, 2) == pytest.approx(math.log(2), abs=1e-10)
    assert integrate(lambda x: x**-0.5, 0, 1, tol=1e-10) == pytest.approx(2.0, abs=1e-8)
    assert integrate("s", 3, 3) == 0.0
    with pytest.raises(ValueError):
        integrate("s", 2, 1)


def test_polynomial_weight_against_antiderivative():
    T, t2, c = 5.0, 10.0, 1.5 * math.pi
    f = parse(f"s^(2/3)*(s - {T!r})*(s - {c!r})", ("s",))

    def F(s):
        # expand (s - T)(s - c) s^(2/3) and integrate term by term
        return (3 / 11) * s ** (11 / 3) - (T + c) * (3 / 8) * s ** (8 / 3) + T * c * (3 / 5) * s ** (5 / 3)

    assert integrate(f, t2, 100.0, tol=1e-12, rtol=1e-12) == pytest.approx(F(100.0) - F(t2), rel=1e-8)


def test_error_estimate_is_honest():
    val, err = integrate_with_error(np.cos, 0, 10, tol=1e-12)
    assert abs(val - math.sin(10)) <= max(err, 1e-12) * 10


def test_nonconvergence_raises():
    with pytest.raises(QuadratureError):
        integrate(lambda x: np.sin(1 / x) / x**2, 1e-9, 1, tol=1e-14, max_panels=64)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 5), st.floats(0.1, 5), st.floats(0.1, 5), st.sampled_from(["sin(s)*exp(-s/3)", "1/(1+s^2)", "sqrt(s)"]))
def test_additivity(w1, w2, a, text):
    b, c = a + w1, a + w1 + w2
    tol = 1e-10
    f = parse(text, ("s",))
    split = integrate(f, a, b, tol=tol) + integrate(f, b, c, tol=tol)
    assert abs(split - integrate(f, a, c, tol=tol)) <= 2 * tol


@pytest.mark.parametrize("text, expected", CALIBRATION_CATALOG)
def test_calibration_catalog(text, expected):
    v = probe_improper(parse(text, ("s",)), 2.0)
    assert v.classification is expected
    if expected is Classification.DIVERGES:
        assert v.direction == 1


def test_extending_horizons_never_flips_divergence():
    short = calibrate()
    longer = calibrate(horizons=[2.0 * 10**k for k in range(1, 7)])
    for (text, _, a), (_, _, b) in zip(short, longer):
        if a.classification is Classification.DIVERGES:
            assert b.classification is Classification.DIVERGES, text


def test_probe_examples():
    assert probe_improper("1/s", 1.0).classification is Classification.DIVERGES
    v = probe_improper("s^(-2)", 1.0)
    assert v.classification is Classification.CONVERGES
    assert v.limit == pytest.approx(1.0, rel=1e-4)
    assert probe_improper("-s", 1.0).direction == -1


def test_probe_oscillating_integrand_is_not_divergent():
    v = probe_improper("sin(s)*s", 1.0)
    assert v.classification is not Classification.DIVERGES


def test_probe_rejects_bad_horizons():
    with pytest.raises(ValueError):
        probe_improper("1/s", 1.0, [10, 100, 1000])
    with pytest.raises(ValueError):
        probe_improper("1/s", 1.0, [10, 100, 50, 1000])


def test_probe_overflowing_positive_integrand_diverges():
    v = probe_improper("exp(s)", 1.0, [10, 100, 1000, 10000])
    assert v.classification is Classification.DIVERGES and v.direction == 1


def test_classify_growth_logarithmic():
    h = [10.0**k for k in range(1, 6)]
    cls, info = classify_growth(h, [math.log(x) for x in h])
    assert cls is Classification.DIVERGES
    assert info["note"] == "logarithmic growth"


def test_tail_constant_liminf_of_decaying_perturbation():
    t = np.geomspace(10, 1e5, 400)
    tc = tail_constant(lambda x: 3.0 + 1.0 / x, "liminf", t)
    assert tc.confident
    assert tc.value == pytest.approx(3.0, abs=1e-3)


def test_tail_constant_sine_is_low_confidence():
    t = np.geomspace(10, 1e5, 4000)
    tc = tail_constant(np.sin, "liminf", t)
    assert not tc.confident


def test_tail_constant_growth():
    t = np.geomspace(10, 1e5, 400)
    tc = tail_constant(np.sqrt, "liminf", t)
    assert tc.value == math.inf


def test_tail_constant_monotone_geometric_approach():
    # block spreads shrink by 10^-0.4 per half decade
    t = np.geomspace(10, 1e5, 400)
    tc = tail_constant(lambda x: -0.2 + 0.1 * x**-0.8, "limsup", t)
    assert tc.confident
    assert tc.value == pytest.approx(-0.2, abs=2e-3)
