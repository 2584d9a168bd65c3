import math

import pytest

from fracdde.criteria import Verdict
from fracdde.dde import classify, solve
from fracdde.scenarios import SCENARIO_IDS, UnknownScenarioError, load, verify


def test_load_known_scenarios():
    e1 = load("example1")
    assert e1.spec.alpha == 0.5
    assert e1.spec.k == pytest.approx(0.2579)
    assert e1.rho(t=3.0) == pytest.approx(16 / 0.2579)
    e2 = load("example2")
    assert e2.reference[0](t=1.0) == pytest.approx(math.sin(1.0))
    assert e2.expected["Thm3.1"] is Verdict.SATISFIED
    p = load("example3-corrected").spec.p
    assert p(t=3.0) == pytest.approx(math.exp(5.0) * math.sqrt(3.0))


def test_unknown_scenario():
    with pytest.raises(UnknownScenarioError, match="example1"):
        load("example4")


def test_history_covers_delays():
    for sid in SCENARIO_IDS:
        sc = load(sid)
        t0 = sc.spec.t0
        assert sc.history.T1 <= min(sc.spec.sigma(t=t0), sc.spec.tau(t=t0))


@pytest.mark.parametrize("sid", ["example2", "example3", "example3-corrected"])
def test_verify_passes(sid):
    rep = verify(sid)
    assert rep.passed, "\n" + rep.table()


def test_verify_example1_fails_only_on_oscillation():
    # the principal square-root branch of f leaves the reference once cos(ln(t/2)) < 0
    rep = verify("example1")
    failed = [r[0] for r in rep.rows if not r[3]]
    assert failed == ["oscillation"]


def test_report_table_lists_every_check():
    rep = verify("example3-corrected")
    lines = rep.table().splitlines()
    assert len(lines) == len(rep.rows) + 1
    assert all(line.endswith("PASS") for line in lines[1:])


@pytest.mark.parametrize("sid", ["example2", "example3-corrected"])
def test_oscillation_class_stable_under_dt(sid):
    sc = load(sid)
    verdicts = [classify(solve(sc.spec, sc.history, sc.window[1], dt), sc.window, 10).system
                for dt in (1e-2, 5e-3)]
    assert verdicts[0] == verdicts[1] == sc.expected["oscillation"]
