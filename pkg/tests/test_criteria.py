import json
import math

import numpy as np
import pytest

from fracdde.criteria import (
    KernelError, KernelSpec, Verdict, check_A4, check_lemma33, check_thm31, check_thm32, check_thm33,
    check_thm34, check_thm35, delta_refinement, nested_tail, reports_to_json, riccati_from_series,
    tail_constants_A_B,
)
from fracdde.dde import SystemSpec, solve
from fracdde.scenarios import SCENARIO_IDS, load

HORIZONS = [1e2, 1e3, 1e4, 1e5]


def spec_of(**kw):
    base = dict(alpha=0.5, p="1", q="1", r="1", f="u", g="v", h="w", sigma="t/2", tau="t/2", t0=1.0)
    base.update(kw)
    return SystemSpec.from_strings(**base)


@pytest.fixture(scope="module")
def scenarios():
    return {sid: load(sid) for sid in SCENARIO_IDS}


@pytest.mark.parametrize("sid, expected", [
    ("example1", Verdict.SATISFIED),
    ("example2", Verdict.SATISFIED),
    ("example3", Verdict.NOT_SATISFIED),
    ("example3-corrected", Verdict.NOT_SATISFIED),
])
def test_thm31_golden(scenarios, sid, expected):
    sc = scenarios[sid]
    rep = check_thm31(sc.spec, sc.rho, horizons=HORIZONS)
    assert rep.verdict is expected
    assert rep.conclusion == ("every solution oscillatory" if expected is Verdict.SATISFIED else "criterion silent")
    assert [h for h, _ in rep.evidence] == HORIZONS


@pytest.mark.parametrize("scale", [1e-3, 0.5, 7.0, 1e4])
def test_thm31_invariant_under_rho_scaling(scenarios, scale):
    for sid in ("example1", "example3"):
        sc = scenarios[sid]
        base = check_thm31(sc.spec, sc.rho, horizons=HORIZONS).verdict
        scaled = check_thm31(sc.spec, f"{scale!r}*({sc.rho})", horizons=HORIZONS).verdict
        assert scaled is base, sid


def test_thm31_rejects_nonpositive_rho(scenarios):
    sc = scenarios["example2"]
    with pytest.raises(ValueError, match="positive"):
        check_thm31(sc.spec, "sin(t)", horizons=HORIZONS)


@pytest.mark.parametrize("sid", SCENARIO_IDS)
def test_thm31_stable_under_extra_decade(scenarios, sid):
    sc = scenarios[sid]
    short = check_thm31(sc.spec, sc.rho, horizons=HORIZONS).verdict
    longer = check_thm31(sc.spec, sc.rho, horizons=HORIZONS + [1e6]).verdict
    assert short is longer is sc.expected["Thm3.1"]


@pytest.mark.parametrize("sid", SCENARIO_IDS)
def test_verdicts_do_not_depend_on_anchor(scenarios, sid):
    sc = scenarios[sid]
    t0 = sc.spec.t0
    assert check_thm31(sc.spec, sc.rho, T=t0).verdict is check_thm31(sc.spec, sc.rho, T=2 * t0).verdict
    assert check_A4(sc.spec.with_T(t0)).verdict is check_A4(sc.spec.with_T(2 * t0)).verdict


def test_A4_example3_not_satisfied(scenarios):
    rep = check_A4(scenarios["example3"].spec, HORIZONS)
    # s^(-1/2) / b = exp(-2s) is integrable
    assert rep.conditions["int_1_over_b"]["classification"] == "Converges"
    assert rep.verdict is Verdict.NOT_SATISFIED
    assert rep.conclusion == "criterion silent"


def test_A4_side_condition_reported(scenarios):
    rep = check_A4(scenarios["example1"].spec, HORIZONS)
    assert rep.verdict is Verdict.NOT_SATISFIED
    assert not rep.conditions["side_condition"]["holds"]
    assert any("b(t) t^(1-alpha) < 1" in f for f in rep.flags)


def test_A4_linear_weights_diverge_but_side_fails():
    # a = b = t^(1/2) gives integrands 1, so both integrals grow linearly; b t^(1/2) = t >= 1
    rep = check_A4(spec_of(p="t^(-1/2)", q="t^(-1/2)"), HORIZONS)
    assert rep.conditions["int_1_over_b"]["classification"] == "Diverges"
    assert rep.conditions["int_1_over_a"]["classification"] == "Diverges"
    assert rep.verdict is Verdict.NOT_SATISFIED
    assert rep.flags


def test_kernel_validation():
    with pytest.raises(KernelError, match="H\\(t,t\\)"):
        KernelSpec.from_strings("1").validate(10.0)
    with pytest.raises(KernelError):
        KernelSpec.from_strings("s - t").validate(10.0)
    with pytest.raises(KernelError, match="nonpositive"):
        KernelSpec.from_strings("(t-s)^2*s").validate(10.0)
    KernelSpec.from_strings("(t-s)^2").validate(10.0)
    KernelSpec.preset("log-square").validate(10.0)
    with pytest.raises(KernelError, match="unknown kernel"):
        KernelSpec.preset("cubic")


def test_kernel_h_is_formed_symbolically():
    k = KernelSpec.from_strings("(t-s)^2", "s^2")
    t, s = 5.0, 2.0
    assert k.h(t=t, s=s) == pytest.approx(-2 * (t - s) + (t - s) ** 2 * 2 / s)


@pytest.mark.parametrize("check", [check_thm32, check_thm33])
def test_kernel_criteria_golden(scenarios, check):
    e1 = scenarios["example1"]
    assert check(e1.spec, e1.rho).verdict is Verdict.SATISFIED
    e3 = scenarios["example3-corrected"]
    assert check(e3.spec, e3.rho).verdict is Verdict.NOT_SATISFIED


def test_delta_refinement_shrinks_geometrically(scenarios):
    sc = scenarios["example1"]
    seq = delta_refinement(sc.spec, sc.rho, KernelSpec.preset("square"), 1e3)
    d1, d2 = abs(seq[1] - seq[0]), abs(seq[2] - seq[1])
    # cutting a regular integrand at t - delta leaves an O(delta) error
    assert d2 / d1 == pytest.approx(0.1, rel=0.05)
    rep = check_thm32(sc.spec, sc.rho, t_grid=np.geomspace(100, 1e4, 9))
    refs = rep.conditions["delta_refinement"]
    assert all(r["converged"] and r["method"] == "extrapolated" for r in refs)


@pytest.mark.parametrize("c", [0.1, 0.5, 0.9])
def test_riccati_constants_on_synthetic_series(scenarios, c):
    t = np.geomspace(10, 1e4, 400)
    rs = riccati_from_series(scenarios["example1"].spec, t, c / t)
    assert rs.d.value == pytest.approx(c, abs=1e-6)
    assert rs.D.value == pytest.approx(c, abs=1e-6)
    assert rs.d.confident and rs.D.confident


def test_tail_constants_example1_diverge(scenarios):
    # s^(a-1) A_alpha ~ 1/s, so the tail integral behind (A_alpha)_* diverges
    A, B = tail_constants_A_B(scenarios["example1"].spec, np.geomspace(20, 1e4, 200))
    assert A.value == math.inf
    assert B.value == math.inf


def test_thm34_example3_is_inconclusive(scenarios):
    sc = scenarios["example3-corrected"]
    tr = solve(sc.spec, sc.history, 7.0, 1e-2)
    rep = check_thm34(tr, sc.spec, (2.5, 7.0))
    assert rep.verdict is Verdict.INCONCLUSIVE
    assert "not in Case I" in rep.conditions["error"]


def test_nested_tail_against_closed_form():
    # c = s^-3, alpha = 1/2: I1 = mu^-2.5 / 2.5 and I2 = eta^-1.5 / 3.75
    sp = spec_of(r="t^(-3)", sigma="t", tau="t")
    nt = nested_tail(sp, np.array([1.0]), 1e5)
    assert nt["status"] == "ok"
    np.testing.assert_allclose(nt["I1"], nt["mu"] ** -2.5 / 2.5, rtol=1e-9, atol=1e-16)
    np.testing.assert_allclose(nt["I2"], nt["mu"] ** -1.5 / 3.75, rtol=1e-8, atol=1e-12)


def test_lemma33_hand_case_not_satisfied():
    # outer integrand eta^(-1/2) * eta^(-3/2) / 3.75 is integrable
    rep = check_lemma33(spec_of(r="t^(-3)", sigma="t", tau="t"))
    assert rep.verdict is Verdict.NOT_SATISFIED
    assert rep.conditions["status"] == "ok"


@pytest.mark.parametrize("sid", ["example1", "example2"])
def test_lemma33_divergent_inner_integral(scenarios, sid):
    # s^(a-1) c(s) decays like 1/s or slower, so the condition holds trivially
    rep = check_lemma33(scenarios[sid].spec)
    assert rep.verdict is Verdict.SATISFIED
    assert rep.conditions["status"] == "inner-diverges"


def test_zero_coefficient_silences_every_criterion():
    z = spec_of(r="0")
    assert check_thm31(z, "1", horizons=HORIZONS).verdict is Verdict.NOT_SATISFIED
    assert check_thm33(z, "1").verdict is Verdict.NOT_SATISFIED
    assert check_thm35(z).verdict is Verdict.NOT_SATISFIED
    assert check_lemma33(z).verdict is Verdict.NOT_SATISFIED


def test_thm35_delay_variant_example2(scenarios):
    sc = scenarios["example2"]
    rep = check_thm35(sc.spec)
    assert rep.verdict is Verdict.SATISFIED
    assert rep.id == "Thm3.5[delay]"


def test_thm35_state_variant_example3(scenarios):
    sc = scenarios["example3"]
    tr = solve(sc.spec, sc.history, 45.0, 1e-2)
    rep = check_thm35(sc.spec, tr, variant="state", t_grid=np.geomspace(4, 40, 9))
    assert rep.conditions["start"] > sc.spec.t0
    assert any("history start" in f for f in rep.flags)
    assert rep.verdict is Verdict.INCONCLUSIVE


def test_thm35_state_variant_needs_trajectory(scenarios):
    with pytest.raises(ValueError):
        check_thm35(scenarios["example2"].spec, variant="state")


def test_report_json_round_trip(scenarios):
    sc = scenarios["example1"]
    reps = [check_A4(sc.spec, HORIZONS), check_thm31(sc.spec, sc.rho, horizons=HORIZONS)]
    text = reports_to_json(reps)
    assert json.dumps(json.loads(text), indent=2) == text
    data = json.loads(text)
    assert [d["id"] for d in data] == ["A4", "Thm3.1"]
    assert data[1]["evidence"][0]["horizon"] == 1e2
