"""Built-in worked examples with closed-form reference solutions and expected verdicts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .criteria import Verdict, check_A4, check_thm31
from .dde import History, SystemSpec, classify, residual, residual_series, solve
from .expr import Expr, parse

__all__ = ["Scenario", "ScenarioReport", "SCENARIO_IDS", "load", "verify", "UnknownScenarioError"]

SCENARIO_IDS = ("example1", "example2", "example3", "example3-corrected")

C1, C2 = math.cos(math.log(2)), math.sin(math.log(2))
A1, A2 = math.cos(math.log(4)), math.sin(math.log(4))


class UnknownScenarioError(KeyError):
    pass


@dataclass(frozen=True)
class Scenario:
    """A system with its reference solution, residual grid and expected outcomes."""

    id: str
    spec: SystemSpec
    reference: tuple[Expr, Expr, Expr]
    rho: Expr
    history: History
    grid: np.ndarray
    valid: Callable[[np.ndarray], np.ndarray]
    window: tuple[float, float]
    dt: float
    expected: dict = field(default_factory=dict)
    residual_tol: float = 1e-6
    # equations whose residual is not expected to vanish (0-based)
    residual_exempt: tuple[int, ...] = ()
    notes: str = ""

    @property
    def residual_grid(self) -> np.ndarray:
        return self.grid[self.valid(self.grid)]


def _ref(*texts: str) -> tuple[Expr, Expr, Expr]:
    return tuple(parse(t, ("t",)) for t in texts)  # type: ignore[return-value]


def _always(t):
    return np.ones(np.shape(t), dtype=bool)


def _example1() -> Scenario:
    spec = SystemSpec.from_strings(
        alpha=0.5, p="1/sqrt(t)", q="1/sqrt(t)", r="1/sqrt(t)",
        f=f"{A1!r}*sqrt(1-u^2) - {A2!r}*u", g="v", h="w",
        sigma="t/2", tau="t/2",
        k=0.2579, l=0.5, l_prime=C1 + C2, m_prime=C1 - C2, t0=10.0,
        clamp={"f": (-1 + 1e-12, 1 - 1e-12)}, name="example1",
    )
    ref = _ref("sin(ln(t))", f"{C1!r}*cos(ln(t)) - {C2!r}*sin(ln(t))",
               f"{C1!r}*sin(ln(t)) + {C2!r}*cos(ln(t))")
    return Scenario(
        "example1", spec, ref, parse(f"16/{spec.k!r}", ("t",)),
        History.for_spec(spec, *ref), np.geomspace(0.5, 5000.0, 500),
        lambda t: np.cos(np.log(np.asarray(t) / 2)) >= 0.1,
        (10.0, 10.0 + 40 * math.pi), 1e-2,
        {"oscillation": "oscillatory", "Thm3.1": Verdict.SATISFIED},
        notes="square-root branch of f matches the reference only where cos(ln(t/2)) >= 0",
    )


def _example2() -> Scenario:
    spec = SystemSpec.from_strings(
        alpha=1 / 3, p="t^(2/3)/(1 + (3/4)*cbrt(cos(t))^5)", q="t^(2/3)",
        r="t^(2/3)/(1 + cos(t)^2)", f="u*(1 + u^2)", g="v*(1 + (3/4)*cbrt(v)^5)", h="w",
        sigma="t - 2*pi", tau="t - 3*pi/2", k=1.0, l=1.0, l_prime=1.0, m_prime=1.0, t0=10.0,
        name="example2",
    )
    ref = _ref("sin(t)", "cos(t)", "sin(t)")
    hist = History.for_spec(spec, *ref, T1=10.0 - 2 * math.pi)
    return Scenario(
        "example2", spec, ref, parse("1", ("t",)), hist, np.linspace(10.0, 150.0, 500), _always,
        (10.0, 10.0 + 40 * math.pi), 1e-2,
        {"oscillation": "oscillatory", "Thm3.1": Verdict.SATISFIED},
        residual_tol=1e-8,
    )


def _example3(corrected: bool) -> Scenario:
    p = "exp(2*t - 1)*sqrt(t)" if corrected else "exp(2*t)*sqrt(t)"
    sid = "example3-corrected" if corrected else "example3"
    spec = SystemSpec.from_strings(
        alpha=0.5, p=p, q="exp(-2*t)*sqrt(t)", r="sqrt(e*t)", f="u", g="v", h="w",
        sigma="t - 1", tau="t - 1/2", k=1.0, l=1.0, l_prime=1.0, m_prime=1.0, t0=2.0, name=sid,
    )
    ref = _ref("exp(t)", "exp(-t)", "exp(t)")
    return Scenario(
        sid, spec, ref, parse("1/(t^(7/2)*exp(2*t))", ("t",)), History.for_spec(spec, *ref),
        np.linspace(2.0, 7.0, 500), _always, (2.0, 7.0), 1e-2,
        {"oscillation": "nonoscillatory", "Thm3.1": Verdict.NOT_SATISFIED, "A4": Verdict.NOT_SATISFIED},
        residual_tol=1e-8,
        residual_exempt=() if corrected else (0,),
        notes="" if corrected else "first equation carries the residual (e - 1) sqrt(t) e^t",
    )


_BUILDERS = {
    "example1": _example1,
    "example2": _example2,
    "example3": lambda: _example3(False),
    "example3-corrected": lambda: _example3(True),
}


def load(sid: str) -> Scenario:
    """Return the scenario called ``sid`` (one of :data:`SCENARIO_IDS`)."""
    try:
        return _BUILDERS[sid]()
    except KeyError:
        raise UnknownScenarioError(f"unknown scenario {sid!r}; known: {', '.join(SCENARIO_IDS)}") from None


@dataclass
class ScenarioReport:
    id: str
    rows: list = field(default_factory=list)  # (check, expected, observed, passed)

    @property
    def passed(self) -> bool:
        return all(r[3] for r in self.rows)

    def add(self, check: str, expected, observed, passed: bool) -> None:
        self.rows.append((check, str(expected), str(observed), bool(passed)))

    def table(self) -> str:
        w = max(len(r[0]) for r in self.rows) if self.rows else 5
        lines = [f"{'check':<{w}}  {'expected':<16}  {'observed':<28}  result"]
        for c, e, o, p in self.rows:
            lines.append(f"{c:<{w}}  {e:<16}  {o:<28}  {'PASS' if p else 'FAIL'}")
        return "\n".join(lines)


def verify(sid: str, dt: float | None = None, horizons=None) -> ScenarioReport:
    """Residuals, simulation, oscillation class, (A4) and the first criterion vs expectations."""
    sc = load(sid)
    rep = ScenarioReport(sid)
    grid = sc.residual_grid
    res = residual(sc.spec, sc.reference, grid)
    for i, r in enumerate(res):
        if i in sc.residual_exempt:
            series = residual_series(sc.spec, sc.reference, grid)[:, i]
            expect = -(math.e - 1) * np.sqrt(grid) * np.exp(grid)
            rel = float(np.max(np.abs(series / expect - 1)))
            rep.add(f"residual eq{i + 1} = -(e-1) sqrt(t) e^t", "rel <= 1e-6", f"{rel:.3g}", rel <= 1e-6)
        else:
            rep.add(f"residual eq{i + 1}", f"<= {sc.residual_tol:g}", f"{r:.3g}", r <= sc.residual_tol)
    traj = solve(sc.spec, sc.history, sc.window[1], sc.dt if dt is None else dt)
    oc = classify(traj, sc.window, 10)
    counts = ",".join(str(len(oc.crossings[c])) for c in ("u", "v", "w"))
    rep.add("oscillation", sc.expected["oscillation"], f"{oc.system} (changes {counts})",
            oc.system == sc.expected["oscillation"])
    a4 = check_A4(sc.spec, horizons)
    exp_a4 = sc.expected.get("A4")
    rep.add("A4", exp_a4.value if exp_a4 else "(recorded)", a4.verdict.value,
            exp_a4 is None or a4.verdict is exp_a4)
    t31 = check_thm31(sc.spec, sc.rho, horizons=horizons)
    rep.add("Thm3.1", sc.expected["Thm3.1"].value, t31.verdict.value, t31.verdict is sc.expected["Thm3.1"])
    return rep
