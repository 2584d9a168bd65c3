"""End-to-end acceptance checks, one test per numbered criterion.

Each test records a ``criterion N: PASS|FAIL`` line that is repeated in the
terminal summary.  Criteria that the mathematics does not support are left
failing rather than relaxed.
"""

import math
import time

import numpy as np
import pytest

from fracdde.criteria import (
    DELTA_FACTORS, KernelError, KernelSpec, Verdict, check_A4, check_thm31, delta_refinement,
    riccati_diagnostics, riccati_from_series,
)
from fracdde.dde import classify, residual, residual_series, solve
from fracdde.expr import parse
from fracdde.fraccalc import check_properties, frac_deriv, frac_deriv_limit
from fracdde.quad import calibrate
from fracdde.scenarios import load

ALPHAS = (0.25, 0.5, 0.9, 1.0)
HORIZONS = [1e2, 1e3, 1e4, 1e5]
SMOOTH = ["t^2", "sin(t)", "exp(t/10)", "ln(t)", "sqrt(t)", "t*cos(t)", "1/(1+t)", "cbrt(t)",
          "2 + sin(t)", "t^3 - t", "cos(t/3)*t"]


def test_criterion_01_calculus_properties(verdict_line):
    start = time.perf_counter()
    samples = np.linspace(0.5, 50.0, 100)
    reports = [check_properties(a, samples, n_cases=50, seed=11) for a in ALPHAS]
    worst = max(max(r.max_rel_error.values()) for r in reports)
    classical = 0.0
    for f in SMOOTH:
        d = parse(f).diff("t")
        for t in np.linspace(0.5, 50.0, 25):
            classical = max(classical, abs(frac_deriv(f, t, 1.0) - d(t=t)))
    elapsed = time.perf_counter() - start
    ok = all(r.passed(1e-6) for r in reports) and classical <= 1e-8 and elapsed < 5.0
    assert verdict_line(1, ok, f"200 cases, max rel {worst:.2g}; alpha=1 abs {classical:.2g}; {elapsed:.2f} s")


def test_criterion_02_limit_definition(verdict_line):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(50):
        f = SMOOTH[rng.integers(len(SMOOTH))]
        t = float(rng.uniform(0.5, 50.0))
        a = float(rng.choice(ALPHAS))
        ref = frac_deriv(f, t, a)
        worst = max(worst, abs(frac_deriv_limit(f, t, a) - ref) / max(abs(ref), 1e-10))
    assert verdict_line(2, worst <= 1e-4, f"50 cases, max rel {worst:.2g}")


def test_criterion_03_example1_residuals(verdict_line):
    sc = load("example1")
    grid = np.linspace(10.0, 200.0, 500)
    kept = grid[np.cos(np.log(grid / 2)) >= 0.1]
    if len(kept) == 0:
        # ln(t/2) runs over [1.61, 4.61], where cos(ln(t/2)) < 0.1 throughout
        verdict_line(3, False, "restricted grid on [10, 200] is empty; nothing to evaluate")
        pytest.fail("restricted grid is empty")
    worst = max(residual(sc.spec, sc.reference, kept))
    assert verdict_line(3, worst <= 1e-6, f"{len(kept)} points, max residual {worst:.2g}")


def test_criterion_04_example2(verdict_line):
    start = time.perf_counter()
    sc = load("example2")
    res = max(residual(sc.spec, sc.reference, np.linspace(10.0, 150.0, 500)))
    ref = lambda t: np.stack([np.sin(t), np.cos(t), np.sin(t)], axis=-1)
    errs, at60 = [], math.nan
    for dt in (1e-2, 5e-3):
        tr = solve(sc.spec, sc.history, 60.0, dt)
        errs.append(float(np.max(np.abs(tr.y - ref(tr.t)))))
        if dt == 1e-2:
            at60 = float(np.max(np.abs(tr(60.0) - ref(60.0))))
    ratio = errs[0] / errs[1]
    elapsed = time.perf_counter() - start
    ok = res <= 1e-8 and at60 <= 1e-4 and 3.5 <= math.log2(ratio) <= 4.5 and elapsed < 10.0
    assert verdict_line(4, ok, f"residual {res:.2g}; error at 60 {at60:.2g}; ratio {ratio:.1f}; {elapsed:.1f} s")


def test_criterion_05_example3_residuals(verdict_line):
    grid = np.linspace(2.0, 7.0, 500)
    sc = load("example3")
    series = residual_series(sc.spec, sc.reference, grid)
    eq23 = float(np.max(np.abs(series[:, 1:])))
    expected = (math.e - 1) * np.sqrt(grid) * np.exp(grid)
    # the first equation is u' - t^(a-1) p g(v(sigma)), so the excess shows with a minus sign
    eq1 = float(np.max(np.abs(-series[:, 0] / expected - 1)))
    fixed = max(residual(load("example3-corrected").spec, sc.reference, grid))
    ok = eq23 <= 1e-8 and eq1 <= 1e-6 and fixed <= 1e-8
    assert verdict_line(5, ok, f"eq2-3 {eq23:.2g}; eq1 rel {eq1:.2g}; corrected {fixed:.2g}")


def test_criterion_06_oscillation(verdict_line):
    counts, parts = {}, []
    for sid in ("example1", "example2", "example3", "example3-corrected"):
        sc = load(sid)
        tr = solve(sc.spec, sc.history, sc.window[1], sc.dt)
        oc = classify(tr, sc.window, 10)
        counts[sid] = [len(oc.crossings[c]) for c in "uvw"]
        parts.append(f"{sid} {oc.system} {counts[sid]}")
    ok = (all(n >= 10 for n in counts["example1"] + counts["example2"])
          and counts["example3"] == [0, 0, 0])
    assert verdict_line(6, ok, "; ".join(parts))


def test_criterion_07_criteria_golden(verdict_line):
    start = time.perf_counter()
    got = {}
    for sid in ("example1", "example2", "example3"):
        sc = load(sid)
        got[sid] = check_thm31(sc.spec, sc.rho, horizons=HORIZONS).verdict
    a4 = check_A4(load("example3").spec, HORIZONS).verdict
    elapsed = time.perf_counter() - start
    ok = (got == {"example1": Verdict.SATISFIED, "example2": Verdict.SATISFIED,
                  "example3": Verdict.NOT_SATISFIED}
          and a4 is Verdict.NOT_SATISFIED and elapsed < 30.0)
    detail = ", ".join(f"{k} {v.value}" for k, v in got.items())
    assert verdict_line(7, ok, f"{detail}; example3 A4 {a4.value}; {elapsed:.1f} s")


def test_criterion_08_calibration(verdict_line):
    results = calibrate()
    wrong = [text for text, expected, v in results if v.classification is not expected]
    ok = len(results) == 8 and not wrong
    assert verdict_line(8, ok, f"{len(results) - len(wrong)}/{len(results)} correct" + (f"; wrong: {wrong}" if wrong else ""))


def test_criterion_09_riccati(verdict_line):
    t = np.geomspace(10.0, 1e4, 400)
    spec = load("example1").spec
    synth = 0.0
    for c in (0.1, 0.5, 0.9):
        rs = riccati_from_series(spec, t, c / t)
        synth = max(synth, abs(rs.d.value - c), abs(rs.D.value - c))
    sc = load("example3-corrected")
    tr = solve(sc.spec, sc.history, sc.window[1], sc.dt)
    try:
        rs = riccati_diagnostics(tr, sc.spec, (2.5, sc.window[1]))
        bounds = all(-1e-3 < v < 1 + 1e-3 for v in (rs.d.value, rs.D.value))
        traj_ok, traj_detail = rs.holds and bounds, f"inequalities {rs.checks}"
    except ValueError as exc:
        traj_ok, traj_detail = False, f"Example 3 trajectory: {exc}"
    ok = synth <= 1e-6 and traj_ok
    assert verdict_line(9, ok, f"synthetic max error {synth:.2g}; {traj_detail}")


def test_criterion_10_kernel_machinery(verdict_line):
    try:
        KernelSpec.from_strings("1").validate(10.0)
        rejects = False
    except KernelError:
        rejects = True
    try:
        KernelSpec.from_strings("(t-s)^2").validate(10.0)
        accepts = True
    except KernelError:
        accepts = False
    sc = load("example1")
    seq = delta_refinement(sc.spec, sc.rho, KernelSpec.preset("square"), 1e3)
    scale = max(abs(v) for v in seq)
    spread = max(abs(a - b) for a in seq for b in seq) / scale
    ok = rejects and accepts and spread <= 1e-3
    assert verdict_line(10, ok, f"H=1 rejected {rejects}; (t-s)^2 accepted {accepts}; "
                                f"delta factors {DELTA_FACTORS} give rel spread {spread:.2g} at t = 1e3")
