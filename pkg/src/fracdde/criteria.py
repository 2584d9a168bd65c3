"""Numerical evaluation of the oscillation criteria for the delay system.

Each check returns a :class:`CriterionReport` whose verdict is backed by the
partial integrals (or running functionals) it was decided from.  Divergence
is never asserted symbolically: every "= infinity" condition goes through
:func:`fracdde.quad.probe_improper` or :func:`fracdde.quad.tail_constant`, and
anything that cannot be told apart is reported as Inconclusive.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import mpmath
import numpy as np

from .dde import SystemSpec, Trajectory, _Chain, _frac_layers, classify_case
from .expr import Expr, ExprError, Num, Var, diff, parse, rational_value, substitute
from .fraccalc import alpha_expr
from .quad import (
    Classification, DivergenceVerdict, QuadratureError, QuadratureOverflow, TailConstant,
    integrate, probe_improper, tail_constant,
)

__all__ = [
    "Verdict", "KernelSpec", "KernelError", "CriterionReport", "RiccatiSeries",
    "check_A4", "check_thm31", "check_thm32", "check_thm33", "check_thm34",
    "riccati_diagnostics", "riccati_from_series", "check_lemma33", "check_thm35",
    "default_criteria_horizons", "default_kernel_grid", "KERNEL_PRESETS", "reports_to_json",
    "tail_constants_A_B", "nested_tail", "delta_refinement", "thm31_integrands",
]

OSCILLATORY = "every solution oscillatory"
SILENT = "criterion silent"


class Verdict(str, enum.Enum):
    SATISFIED = "Satisfied"
    NOT_SATISFIED = "NotSatisfied"
    INCONCLUSIVE = "Inconclusive"


def _finite_or_str(x):
    if isinstance(x, float) and not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def _clean(obj):
    """Make a nested structure JSON-safe (non-finite floats become strings)."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return _finite_or_str(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, enum.Enum):
        return obj.value
    return obj


@dataclass
class CriterionReport:
    """Verdict of one criterion plus the evidence behind it."""

    id: str
    verdict: Verdict
    conclusion: str
    evidence: list = field(default_factory=list)
    conditions: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    @property
    def satisfied(self) -> bool:
        return self.verdict is Verdict.SATISFIED

    def to_dict(self) -> dict:
        return _clean({
            "id": self.id,
            "verdict": self.verdict.value,
            "conclusion": self.conclusion,
            "evidence": [{"horizon": h, "partial_value": v} for h, v in self.evidence],
            "conditions": self.conditions,
            "flags": self.flags,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def reports_to_json(reports: Iterable[CriterionReport]) -> str:
    """Serialize a list of reports; parsing and re-dumping gives identical text."""
    return json.dumps([r.to_dict() for r in reports], indent=2)


def _combine(subs: Sequence[DivergenceVerdict]) -> Verdict:
    if any(v.classification is Classification.INCONCLUSIVE for v in subs):
        return Verdict.INCONCLUSIVE
    if all(v.diverges_to_infinity for v in subs):
        return Verdict.SATISFIED
    return Verdict.NOT_SATISFIED


def default_criteria_horizons(a: float) -> list[float]:
    """``10^2 .. 10^5`` when the lower limit is below 10, else ``a * 10^(1..4)``."""
    if a < 10:
        return [1e2, 1e3, 1e4, 1e5]
    return [a * 10.0**k for k in range(1, 5)]


def _t_to(e: Expr, var: str) -> Expr:
    return substitute(e, {"t": Var(var)}) if var != "t" else e


def _rho_expr(rho) -> Expr:
    """Accept ``rho`` in ``t`` or ``s``; return it as an expression in ``t``."""
    e = rho if isinstance(rho, Expr) else parse(str(rho), ("t", "s"))
    if "s" in e.variables and "t" in e.variables:
        raise ValueError("rho must depend on a single variable")
    return substitute(e, {"s": Var("t")})


def _check_rho(rho: Expr, lo: float, hi: float) -> None:
    x = np.geomspace(lo, hi, 400)
    vals = rho.vectorized("t")(x)
    mp = rho.function("t", backend="mpmath")
    for xi in x[~(vals > 0)]:
        # values below the floating-point range are rechecked in arbitrary precision
        if not mp(mpmath.mpf(float(xi))) > 0:
            raise ValueError(f"rho must be positive; rho({xi:.6g}) <= 0")


# ---------------------------------------------------------------------------
# standing assumption (A4) and the first theorem
# ---------------------------------------------------------------------------

def check_A4(spec: SystemSpec, horizons: Sequence[float] | None = None,
             beta_min: float = 0.05, n_side: int = 2000) -> CriterionReport:
    """Divergence of ``int s^(a-1)/b`` and ``int s^(a-1)/a`` plus ``b t^(1-a) < 1``."""
    dc = spec.derived()
    t0 = spec.t0
    hz = list(horizons) if horizons is not None else default_criteria_horizons(t0)
    am1 = alpha_expr(spec.alpha - 1)
    s = Var("t")
    vb = probe_improper(s**am1 / dc.b, t0, hz, beta_min)
    va = probe_improper(s**am1 / dc.a, t0, hz, beta_min)
    x = np.geomspace(t0, hz[-1], n_side)
    flags = []
    try:
        side_vals = (dc.b * s ** alpha_expr(1 - spec.alpha)).vectorized("t")(x)
        bad = np.nonzero(~(side_vals < 1))[0]
        side_ok = len(bad) == 0
        side = {"holds": side_ok, "max": float(np.max(side_vals)),
                "first_violation": float(x[bad[0]]) if len(bad) else None}
        if not side_ok:
            flags.append(f"b(t) t^(1-alpha) < 1 fails from t = {x[bad[0]]:.6g}")
    except ExprError as exc:
        side_ok, side = False, {"holds": False, "error": str(exc)}
    verdict = _combine([vb, va])
    if verdict is Verdict.SATISFIED and not side_ok:
        verdict = Verdict.NOT_SATISFIED
    return CriterionReport(
        "A4", verdict,
        "standing assumption holds" if verdict is Verdict.SATISFIED else SILENT,
        vb.partials,
        {"int_1_over_b": vb.to_dict(), "int_1_over_a": va.to_dict(), "side_condition": side},
        flags,
    )


def thm31_integrands(spec: SystemSpec, rho) -> tuple[Expr, Expr]:
    """Integrands of the two divergence conditions of the first criterion."""
    dc = spec.derived()
    rho = _rho_expr(rho)
    t = Var("t")
    i37 = dc.c * (t - spec.anchor) * dc.tau_sigma
    drho = diff(rho, "t")
    i38 = (t ** alpha_expr(spec.alpha - 1) * rho * dc.A_alpha
           - Num(0.25) * drho**2 / rho * t ** alpha_expr(1 - spec.alpha) * dc.b)
    return i37, i38


def check_thm31(spec: SystemSpec, rho, T: float | None = None,
                horizons: Sequence[float] | None = None, beta_min: float = 0.05) -> CriterionReport:
    """Probe ``int c(s)(s-T) tau(sigma(s)) ds`` and the rho-weighted ``A_alpha`` integral."""
    if T is not None:
        spec = spec.with_T(T)
    a = spec.anchor
    hz = list(horizons) if horizons is not None else default_criteria_horizons(a)
    rho_e = _rho_expr(rho)
    _check_rho(rho_e, a, hz[-1])
    i37, i38 = thm31_integrands(spec, rho_e)
    v37 = probe_improper(i37, a, hz, beta_min)
    v38 = probe_improper(i38, a, hz, beta_min)
    verdict = _combine([v37, v38])
    return CriterionReport(
        "Thm3.1", verdict, OSCILLATORY if verdict is Verdict.SATISFIED else SILENT,
        v38.partials,
        {"delay_weight_integral": v37.to_dict(), "rho_weighted_integral": v38.to_dict(),
         "T": a, "rho": str(rho_e)},
    )


# ---------------------------------------------------------------------------
# Philos-kernel averaging criteria
# ---------------------------------------------------------------------------

class KernelError(ValueError):
    """Kernel outside the admissible class."""


@dataclass(frozen=True)
class KernelSpec:
    """Averaging kernel ``H(t, s)`` with weight ``rho(s)``.

    ``h = dH/ds + H rho'/rho`` is formed symbolically.  :meth:`validate`
    samples ``H(t,t) = 0``, ``H > 0`` for ``t > s`` and ``dH/ds <= 0``.
    """

    H: Expr
    rho: Expr

    @classmethod
    def from_strings(cls, H: str | Expr, rho: str | Expr = "1") -> "KernelSpec":
        He = H if isinstance(H, Expr) else parse(str(H), ("t", "s"))
        extra = He.variables - {"t", "s"}
        if extra:
            raise KernelError(f"H may only depend on t and s, found {sorted(extra)}")
        r = _rho_expr(rho)
        return cls(He, substitute(r, {"t": Var("s")}))

    @classmethod
    def preset(cls, name: str, rho: str | Expr = "1") -> "KernelSpec":
        try:
            return cls.from_strings(KERNEL_PRESETS[name], rho)
        except KeyError:
            raise KernelError(f"unknown kernel preset {name!r}; choose from {sorted(KERNEL_PRESETS)}") from None

    @property
    def dH_ds(self) -> Expr:
        return diff(self.H, "s")

    @property
    def h(self) -> Expr:
        return self.dH_ds + self.H * diff(self.rho, "s") / self.rho

    def _eval2(self, e: Expr, t, s) -> np.ndarray:
        t, s = np.broadcast_arrays(np.asarray(t, float), np.asarray(s, float))
        out = np.empty(t.shape)
        for idx in np.ndindex(t.shape):
            out[idx] = e(t=float(t[idx]), s=float(s[idx])) if e.variables else e(0.0)
        return out

    def validate(self, t0: float, t_max: float | None = None, n: int = 25) -> "KernelSpec":
        t_max = 100 * t0 if t_max is None else t_max
        ts = np.geomspace(t0 * 1.01, t_max, n)
        diag = self._eval2(self.H, ts, ts)
        if np.any(np.abs(diag) > 1e-12 * np.maximum(1.0, ts)):
            i = int(np.argmax(np.abs(diag) > 1e-12))
            raise KernelError(f"H(t,t) = {diag[i]:.6g} != 0 at t = {ts[i]:.6g}")
        for t in ts:
            s = np.linspace(t0, t, n + 1)[:-1]
            Hv = self._eval2(self.H, t, s)
            if not np.all(Hv > 0):
                raise KernelError(f"H(t,s) must be positive for t > s (t = {t:.6g})")
            dv = self._eval2(self.dH_ds, t, s)
            if np.any(dv > 1e-12 * np.maximum(1.0, np.abs(Hv))):
                raise KernelError(f"dH/ds must be nonpositive (t = {t:.6g})")
        try:
            _check_rho(substitute(self.rho, {"s": Var("t")}), t0, t_max)
        except ValueError as exc:
            raise KernelError(str(exc)) from None
        return self


KERNEL_PRESETS = {
    "square": "(t-s)^2",
    "linear": "t-s",
    "log-square": "ln(t/s)^2",
}

DELTA_FACTORS = (1e-2, 1e-3, 1e-4)


def default_kernel_grid(t1: float, decades: int = 3, per_decade: int = 8) -> np.ndarray:
    return np.geomspace(10 * t1, 10 * t1 * 10**decades, decades * per_decade + 1)


def _kernel_integrands(spec: SystemSpec, kernel: KernelSpec, which: str) -> Expr:
    dc = spec.derived()
    A = _t_to(dc.A_alpha, "s")
    b = _t_to(dc.b, "s")
    s = Var("s")
    rho = kernel.rho
    H = kernel.H
    pos = H * s ** alpha_expr(spec.alpha - 1) * rho * A
    if which == "thm32":
        neg = Num(0.25) * rho * b / H * s ** alpha_expr(1 - spec.alpha) * kernel.h**2
    else:
        drho = diff(rho, "s")
        neg = Num(0.25) * H * drho**2 / rho * s ** alpha_expr(1 - spec.alpha) * b
    return pos - neg


def _functional(integrand: Expr, H: Expr, t: float, t1: float, delta: float) -> float:
    f = substitute(integrand, {"t": Num(t)})
    val = integrate(f.vectorized("s"), t1, t - delta, tol=1e-12, rtol=1e-10)
    return val / H(t=t, s=t1)


def _refine(values: Sequence[float], rtol: float) -> dict:
    """Cauchy test of a delta-refinement sequence, with a Richardson fallback."""
    v = np.asarray(values, dtype=float)
    d = np.abs(np.diff(v))
    scale = max(float(np.max(np.abs(v))), 1e-300)
    cauchy = bool(np.all(d <= rtol * scale))
    out = {"values": v.tolist(), "cauchy": cauchy, "value": float(v[-1]), "converged": cauchy,
           "method": "cauchy" if cauchy else ""}
    if not cauchy and len(d) >= 2 and d[-2] > 0:
        ratio = d[-1] / d[-2]
        if ratio < 0.5:
            # geometric error decay: extrapolate delta -> 0
            extra = float(v[-1] + (v[-1] - v[-2]) * ratio / (1 - ratio))
            err = abs(extra - v[-1])
            out.update(extrapolated=extra, error_estimate=err, contraction=float(ratio))
            if err <= rtol * max(abs(extra), 1e-300):
                out.update(converged=True, value=extra, method="extrapolated")
    return out


def _kernel_check(cid: str, spec: SystemSpec, rho, kernel: KernelSpec | None, T: float | None,
                  t_grid: Sequence[float] | None, singular: bool, rtol: float = 1e-3,
                  validate: bool = True) -> CriterionReport:
    if T is not None:
        spec = spec.with_T(T)
    t1 = spec.anchor
    rho_t = _rho_expr(rho)
    if kernel is None:
        kernel = KernelSpec.from_strings(KERNEL_PRESETS["square"], rho_t)
    else:
        kernel = KernelSpec(kernel.H, substitute(rho_t, {"t": Var("s")}))
    grid = np.asarray(default_kernel_grid(t1) if t_grid is None else t_grid, dtype=float)
    if validate:
        kernel.validate(t1, float(grid[-1]))
    integrand = _kernel_integrands(spec, kernel, "thm32" if singular else "thm33")
    values, refinements, flags = [], [], []
    try:
        for t in grid:
            if singular:
                seq = [_functional(integrand, kernel.H, t, t1, f * (t - t1)) for f in DELTA_FACTORS]
                ref = _refine(seq, rtol)
                refinements.append({"t": float(t), **ref})
                values.append(ref["value"])
                if not ref["converged"]:
                    flags.append(f"delta refinement not converged at t = {t:.6g}")
            else:
                values.append(_functional(integrand, kernel.H, t, t1, 0.0))
    except (ExprError, QuadratureError) as exc:
        return CriterionReport(cid, Verdict.INCONCLUSIVE, SILENT, [],
                               {"error": str(exc), "kernel": str(kernel.H)}, [f"evaluation failed: {exc}"])
    tc = tail_constant(np.asarray(values), "limsup", grid)
    evidence = list(zip(grid.tolist(), values))
    if flags:
        verdict = Verdict.INCONCLUSIVE
    elif tc.value == math.inf and tc.confident:
        verdict = Verdict.SATISFIED
    elif math.isfinite(tc.value) and tc.confident or tc.value == -math.inf:
        verdict = Verdict.NOT_SATISFIED
    else:
        verdict = Verdict.INCONCLUSIVE
    cond = {"kernel": str(kernel.H), "rho": str(kernel.rho), "t1": t1,
            "limsup": tc.to_dict()}
    if singular:
        cond["delta_refinement"] = refinements
    return CriterionReport(cid, verdict, OSCILLATORY if verdict is Verdict.SATISFIED else SILENT,
                           evidence, cond, flags)


def check_thm32(spec: SystemSpec, rho, kernel: KernelSpec | None = None, T: float | None = None,
                t_grid: Sequence[float] | None = None, rtol: float = 1e-3) -> CriterionReport:
    """Normalized kernel average with the ``h^2/H`` penalty; limsup must be infinite.

    The ``1/H`` factor is handled by integrating up to ``t - delta`` for
    ``delta = (1e-2, 1e-3, 1e-4) * (t - t1)``; the sequence must agree to
    ``rtol`` directly or after geometric extrapolation in ``delta``.
    """
    return _kernel_check("Thm3.2", spec, rho, kernel, T, t_grid, True, rtol)


def check_thm33(spec: SystemSpec, rho, kernel: KernelSpec | None = None, T: float | None = None,
                t_grid: Sequence[float] | None = None) -> CriterionReport:
    """Normalized kernel average with the ``H rho'^2/rho`` penalty (no singular factor)."""
    return _kernel_check("Thm3.3", spec, rho, kernel, T, t_grid, False)


def delta_refinement(spec: SystemSpec, rho, kernel: KernelSpec, t: float, T: float | None = None) -> list[float]:
    """Raw functional values at ``t`` for the three cutoffs, largest cutoff first."""
    if T is not None:
        spec = spec.with_T(T)
    t1 = spec.anchor
    kernel = KernelSpec(kernel.H, substitute(_rho_expr(rho), {"t": Var("s")}))
    integrand = _kernel_integrands(spec, kernel, "thm32")
    return [_functional(integrand, kernel.H, t, t1, f * (t - t1)) for f in DELTA_FACTORS]


# ---------------------------------------------------------------------------
# Riccati diagnostics (Nehari-type inequalities)
# ---------------------------------------------------------------------------

@dataclass
class RiccatiSeries:
    """``W = b D^a(a D^a u) / (a D^a u)`` on a grid with its tail constants."""

    t: np.ndarray
    W: np.ndarray
    excluded: int
    d: TailConstant
    D: TailConstant
    A_star: float
    B_star: float
    checks: dict
    flags: list = field(default_factory=list)

    @property
    def tW(self) -> np.ndarray:
        return self.t * self.W

    @property
    def holds(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        return _clean({
            "d": self.d.value, "D": self.D.value,
            "d_confident": self.d.confident, "D_confident": self.D.confident,
            "A_star": self.A_star, "B_star": self.B_star,
            "excluded": self.excluded, "checks": self.checks, "flags": self.flags,
        })


def _tail_integral_series(f: Expr, t: np.ndarray, beta_min: float = 0.05) -> np.ndarray:
    """``int_t^inf f`` on an increasing grid; ``inf`` where the tail diverges."""
    fn = f.vectorized("t")
    verdict = probe_improper(fn, float(t[-1]), [float(t[-1]) * 10.0**k for k in range(1, 5)], beta_min)
    if verdict.classification is Classification.DIVERGES:
        return np.full(t.shape, math.inf if verdict.direction > 0 else -math.inf)
    if verdict.classification is not Classification.CONVERGES:
        return np.full(t.shape, math.nan)
    out = np.empty(t.shape)
    acc = verdict.limit
    out[-1] = acc
    for i in range(len(t) - 2, -1, -1):
        acc += integrate(fn, float(t[i]), float(t[i + 1]), tol=1e-14, rtol=1e-11)
        out[i] = acc
    return out


def tail_constants_A_B(spec: SystemSpec, t_grid: Sequence[float]) -> tuple[TailConstant, TailConstant]:
    """``(A_alpha)_*`` and ``(B_alpha)_*`` estimated on ``t_grid``."""
    t = np.asarray(t_grid, dtype=float)
    dc = spec.derived()
    x = Var("t")
    fa = x ** alpha_expr(spec.alpha - 1) * dc.A_alpha
    tail = _tail_integral_series(fa, t)
    A = tail_constant(t * tail, "liminf", t) if np.all(np.isfinite(tail)) else TailConstant(
        "liminf", [], float(tail[0]), bool(np.isinf(tail[0])), note="tail integral diverges"
        if np.isinf(tail[0]) else "tail integral inconclusive")
    fb = (x ** alpha_expr(spec.alpha + 1) * dc.A_alpha).vectorized("t")
    cum = np.empty(t.shape)
    acc = integrate(fb, spec.t0, float(t[0]), tol=1e-12, rtol=1e-10) if t[0] > spec.t0 else 0.0
    cum[0] = acc
    for i in range(1, len(t)):
        acc += integrate(fb, float(t[i - 1]), float(t[i]), tol=1e-12, rtol=1e-10)
        cum[i] = acc
    B = tail_constant(cum / t, "liminf", t)
    return A, B


def riccati_from_series(spec: SystemSpec, t, W, excluded: int = 0, tol: float = 1e-3,
                        constants_grid: Sequence[float] | None = None) -> RiccatiSeries:
    """Tail constants and inequality checks for a given ``W`` series.

    ``d``/``D`` are the liminf/limsup of ``t W``.  The first inequality's
    ``t^(a-1)/b`` factor is evaluated at the largest grid time (flagged).
    """
    t = np.asarray(t, dtype=float)
    W = np.asarray(W, dtype=float)
    ok = np.isfinite(W)
    tW = t[ok] * W[ok]
    d = tail_constant(tW, "liminf", t[ok])
    D = tail_constant(tW, "limsup", t[ok])
    flags = ["first inequality evaluates t^(alpha-1)/b at the largest window time"]
    try:
        A, B = tail_constants_A_B(spec, t if constants_grid is None else constants_grid)
        A_star, B_star = A.value, B.value
    except (ExprError, QuadratureError, ValueError) as exc:
        A_star = B_star = math.nan
        flags.append(f"tail constants unavailable: {exc}")
    tmax = float(t[-1])
    with np.errstate(divide="ignore"):
        factor = float(tmax ** (spec.alpha - 1) / spec.derived().b.vectorized("t")(np.array([tmax]))[0])
    dv, Dv = d.value, D.value
    with np.errstate(invalid="ignore"):
        checks = {
            "A_star_le_d_minus_factor_d2": bool(A_star <= dv - factor * dv**2 + tol),
            "B_star_le_D_minus_D2": bool(B_star <= Dv - Dv**2 + tol),
            "d_in_unit_interval": bool(-tol < dv < 1 + tol),
            "D_in_unit_interval": bool(-tol < Dv < 1 + tol),
            "D_le_1_minus_B_star": bool(Dv <= 1 - B_star + tol),
        }
    return RiccatiSeries(t, W, excluded, d, D, float(A_star), float(B_star), checks, flags)


def riccati_diagnostics(traj: Trajectory, spec: SystemSpec, window: Sequence[float], n: int = 2000,
                        tol: float = 1e-3) -> RiccatiSeries:
    """Riccati variable along a Case I trajectory and the resulting inequalities.

    Raises ``ValueError`` when the trajectory is not in Case I on the window
    or the denominator vanishes on more than 5% of the grid.
    """
    case = classify_case(traj, spec, window, n=min(n, 2000))
    if case.case != "CaseI":
        raise ValueError(f"trajectory is not in Case I on the window ({case.case}, first violation at "
                         f"t = {case.first_violation})")
    x = np.geomspace(float(window[0]), float(window[1]), n)
    chain = _Chain(traj, spec)
    _, phi1, frac_phi1, _ = _frac_layers(chain, spec, x)
    b = spec.derived().b.vectorized("t")(x)
    small = np.abs(phi1) < 1e-12
    if small.mean() > 0.05:
        raise ValueError("a D^alpha u vanishes on more than 5% of the grid")
    W = np.where(small, np.nan, b * frac_phi1 / np.where(small, 1.0, phi1))
    return riccati_from_series(spec, x, W, int(small.sum()), tol)


def check_thm34(traj: Trajectory, spec: SystemSpec, window: Sequence[float]) -> CriterionReport:
    """Report form of :func:`riccati_diagnostics`."""
    try:
        rs = riccati_diagnostics(traj, spec, window)
    except ValueError as exc:
        return CriterionReport("Thm3.4", Verdict.INCONCLUSIVE, SILENT, [], {"error": str(exc)},
                               [str(exc)])
    verdict = Verdict.SATISFIED if rs.holds else Verdict.NOT_SATISFIED
    return CriterionReport("Thm3.4", verdict,
                           "inequalities hold along the trajectory" if rs.holds else SILENT,
                           [], rs.to_dict(), rs.flags)


# ---------------------------------------------------------------------------
# decay condition for Case II and the Nehari-type criterion
# ---------------------------------------------------------------------------

def nested_tail(spec: SystemSpec, eta: np.ndarray, mu_end: float, per_decade: int = 40,
                inner_horizons: Sequence[float] | None = None) -> dict:
    """``I2(eta) = int_eta^inf int_mu^inf s^(a-1) c(s) ds dmu`` on a grid.

    Returns ``{"status": "ok" | "inner-diverges" | "middle-diverges" |
    "inconclusive", "I1": ..., "I2": ...}``.
    """
    dc = spec.derived()
    g = (Var("t") ** alpha_expr(spec.alpha - 1) * dc.c).vectorized("t")
    lo = float(np.min(eta))
    n = max(int(per_decade * math.log10(mu_end / lo)) + 1, 8)
    mu = np.geomspace(lo, mu_end, n)
    inner = probe_improper(g, lo, [lo * 10.0**k for k in range(1, 5)] if inner_horizons is None
                           else inner_horizons)
    if inner.classification is Classification.DIVERGES:
        return {"status": "inner-diverges", "probe": inner}
    if inner.classification is not Classification.CONVERGES:
        return {"status": "inconclusive", "probe": inner}
    tail = probe_improper(g, mu_end, [mu_end * 10.0**k for k in range(1, 5)])
    if tail.classification is not Classification.CONVERGES:
        return {"status": "inconclusive", "probe": tail}
    I1 = np.empty(n)
    acc = tail.limit
    I1[-1] = acc
    for i in range(n - 2, -1, -1):
        acc += integrate(g, float(mu[i]), float(mu[i + 1]), tol=1e-300, rtol=1e-12)
        I1[i] = acc
    # tail of the middle integral from a power-law fit of the last decade
    if I1[-1] > 0 and I1[-per_decade] > 0:
        gamma = -math.log(I1[-1] / I1[-per_decade]) / math.log(mu[-1] / mu[-per_decade])
        if gamma <= 1.0 + 1e-3:
            return {"status": "middle-diverges", "probe": tail, "gamma": gamma}
        mid_tail = I1[-1] * mu[-1] / (gamma - 1)
    else:
        gamma, mid_tail = math.inf, 0.0
    seg = _powerlaw_segments(mu, I1)
    I2 = mid_tail + np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    return {"status": "ok", "probe": tail, "mu": mu, "I1": I1, "I2": I2, "gamma": gamma}


def _powerlaw_segments(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Segment integrals of ``y``, exact when ``y`` is a power of ``x`` on each segment.

    Falls back to the trapezoid rule where ``y`` changes sign or vanishes.
    """
    trap = 0.5 * (y[1:] + y[:-1]) * np.diff(x)
    y0, y1 = y[:-1], y[1:]
    pos = (y0 > 0) & (y1 > 0) | (y0 < 0) & (y1 < 0)
    with np.errstate(all="ignore"):
        r = x[1:] / x[:-1]
        e = np.log(y1 / y0) / np.log(r) + 1.0  # exponent of the antiderivative
        exact = np.where(np.abs(e) < 1e-9, y0 * x[:-1] * np.log(r), y0 * x[:-1] * (r**e - 1.0) / e)
    return np.where(pos & np.isfinite(exact), exact, trap)


def _loglog_interp(x: np.ndarray, xp: np.ndarray, fp: np.ndarray) -> np.ndarray:
    if np.all(fp > 0):
        return np.exp(np.interp(np.log(x), np.log(xp), np.log(fp)))
    return np.interp(np.log(x), np.log(xp), fp)


def check_lemma33(spec: SystemSpec, horizons: Sequence[float] | None = None,
                  T: float | None = None, beta_min: float = 0.05) -> CriterionReport:
    """Divergence of ``int eta^(a-1)/a(eta) * I2(eta) d eta`` (Case II decay condition)."""
    if T is not None:
        spec = spec.with_T(T)
    t2 = spec.anchor
    hz = list(horizons) if horizons is not None else default_criteria_horizons(t2)
    try:
        nt = nested_tail(spec, np.array([t2]), hz[-1] * 10, inner_horizons=hz)
    except (ExprError, QuadratureError) as exc:
        return CriterionReport("Lem3.3", Verdict.INCONCLUSIVE, SILENT, [], {"error": str(exc)},
                               [f"evaluation failed: {exc}"])
    status = nt["status"]
    decay = "Case II solutions satisfy lim u(t) = 0"
    if status in ("inner-diverges", "middle-diverges"):
        which = "inner" if status == "inner-diverges" else "middle"
        return CriterionReport("Lem3.3", Verdict.SATISFIED, decay, nt["probe"].partials,
                               {"inner_tail": nt["probe"].to_dict(), "status": status},
                               [f"{which} improper integral diverges; condition holds trivially"])
    if status != "ok":
        return CriterionReport("Lem3.3", Verdict.INCONCLUSIVE, SILENT, nt["probe"].partials,
                               {"inner_tail": nt["probe"].to_dict(), "status": status},
                               ["inner tail integral inconclusive"])
    mu, I2 = nt["mu"], nt["I2"]
    weight = (Var("t") ** alpha_expr(spec.alpha - 1) / spec.derived().a).vectorized("t")

    def outer(x):
        x = np.asarray(x, dtype=float)
        return weight(x) * _loglog_interp(x, mu, I2)

    v = probe_improper(outer, t2, hz, beta_min)
    verdict = _combine([v])
    return CriterionReport("Lem3.3", verdict, decay if verdict is Verdict.SATISFIED else SILENT,
                           v.partials, {"outer": v.to_dict(), "inner_tail": nt["probe"].to_dict(),
                                        "status": status})


def thm35_integrand(spec: SystemSpec, traj: Trajectory | None, variant: str):
    """Integrand of the Nehari-type average as an array function of ``s``."""
    dc = spec.derived()
    al = spec.alpha
    T = spec.anchor
    coef = (spec.k * Var("t") ** alpha_expr(al + 1) * dc.c / dc.a / Var("t")).vectorized("t")
    ts = dc.tau_sigma.vectorized("t")
    if variant == "delay":
        def X(s):
            return ts(s)
    elif variant == "state":
        if traj is None:
            raise ValueError("variant 'state' needs a trajectory")

        def X(s):
            return traj(ts(s))[..., 0]
    else:
        raise ValueError("variant must be 'delay' or 'state'")
    q = alpha_expr(al)
    r = rational_value(q)

    def power(x):
        if r is not None and r.denominator % 2 == 1:
            return np.sign(x) ** r.numerator * np.abs(x) ** float(r)
        with np.errstate(invalid="ignore"):
            return np.where(x >= 0, np.abs(x) ** al, np.nan)

    def f(s):
        s = np.asarray(s, dtype=float)
        x = X(s)
        with np.errstate(over="ignore"):
            return coef(s) * (x - T) * power(x)

    return f


def check_thm35(spec: SystemSpec, traj: Trajectory | None = None, T: float | None = None,
                t_grid: Sequence[float] | None = None, variant: str = "delay") -> CriterionReport:
    """``liminf (1/t) int_t0^t k s^(a+1) (c/a) (X - T)/s X^a ds > 1/2``.

    ``X = tau(sigma(s))`` for ``variant="delay"`` and ``u(tau(sigma(s)))`` for
    ``variant="state"`` (which requires a trajectory).
    """
    if T is not None:
        spec = spec.with_T(T)
    if variant == "state" and traj is None:
        raise ValueError("variant 'state' needs a trajectory")
    t0 = spec.t0
    grid = np.asarray(default_kernel_grid(t0) if t_grid is None else t_grid, dtype=float)
    f = thm35_integrand(spec, traj, variant)
    cid = f"Thm3.5[{variant}]"
    flags = []
    start = t0
    if variant == "state":
        # u(tau(sigma(s))) is only known once tau(sigma(s)) reaches the history start
        start = _first_covered(spec.derived().tau_sigma, traj.T1, t0, float(grid[-1]))
        if start > t0:
            flags.append(f"integral starts at {start:.6g}, where tau(sigma(s)) reaches the history start")
    vals = []
    try:
        acc, lo = 0.0, start
        for t in grid:
            acc += integrate(f, lo, float(t), tol=1e-12, rtol=1e-10) if t > lo else 0.0
            lo = max(lo, float(t))
            vals.append(acc / t)
    except QuadratureOverflow as exc:
        rising = len(vals) >= 2 and exc.sign > 0 and all(b > a for a, b in zip(vals, vals[1:]))
        if rising:
            return CriterionReport(cid, Verdict.SATISFIED, "u(t) is oscillatory or lim u(t) = 0",
                                   list(zip(grid.tolist(), vals)),
                                   {"variant": variant, "threshold": 0.5, "liminf": "inf", "start": start},
                                   flags + [f"running average leaves the floating-point range ({exc})"])
        return CriterionReport(cid, Verdict.INCONCLUSIVE, SILENT, list(zip(grid.tolist(), vals)),
                               {"variant": variant, "error": str(exc), "start": start}, flags + [f"evaluation failed: {exc}"])
    except (ExprError, QuadratureError, ValueError) as exc:
        return CriterionReport(cid, Verdict.INCONCLUSIVE, SILENT, list(zip(grid.tolist(), vals)),
                               {"variant": variant, "error": str(exc), "start": start}, flags + [f"evaluation failed: {exc}"])
    tc = tail_constant(np.asarray(vals), "liminf", grid)
    if tc.value > 0.5 and (tc.confident or tc.value == math.inf):
        verdict = Verdict.SATISFIED
    elif tc.confident and tc.value <= 0.5:
        verdict = Verdict.NOT_SATISFIED
    else:
        verdict = Verdict.INCONCLUSIVE
    return CriterionReport(cid, verdict,
                           "u(t) is oscillatory or lim u(t) = 0" if verdict is Verdict.SATISFIED else SILENT,
                           list(zip(grid.tolist(), vals)),
                           {"variant": variant, "liminf": tc.to_dict(), "threshold": 0.5, "start": start},
                           flags)


def _first_covered(ts: Expr, T1: float, lo: float, hi: float) -> float:
    """Smallest ``s`` in ``[lo, hi]`` with ``ts(s) >= T1`` (``ts`` nondecreasing)."""
    f = ts.function("t")
    if f(lo) >= T1:
        return lo
    if f(hi) < T1:
        raise ValueError("delayed argument never reaches the history start")
    a, b = lo, hi
    while b - a > 1e-12 * max(1.0, b):
        m = 0.5 * (a + b)
        a, b = (a, m) if f(m) >= T1 else (m, b)
    return b
