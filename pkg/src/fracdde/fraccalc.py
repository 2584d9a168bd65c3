"""The alpha-derivative and the matching alpha-integral.

For differentiable ``f`` the derivative is ``D^a f(t) = t^(1-a) f'(t)``;
that rescaling is the production path.  The limit form
``lim (f(t exp(eps t^-a)) - f(t)) / eps`` is kept as an independent check.
"""

from __future__ import annotations

import math
import random
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .expr import Expr, ExprError, as_expr, diff, substitute, Var
from .quad import integrate

__all__ = [
    "check_alpha", "frac_deriv", "frac_deriv_at_zero", "frac_deriv_limit", "frac_integral",
    "check_properties", "PropertyReport", "alpha_expr", "InconclusiveLimitError",
]

ScalarFunction = Callable[[float], float] | Expr


class InconclusiveLimitError(ArithmeticError):
    pass


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    return alpha


def _scalar(f) -> Callable[[float], float]:
    if isinstance(f, str):
        f = as_expr(f)
    if isinstance(f, Expr):
        return f.function()
    return f


def _var_of(e: Expr) -> str:
    names = sorted(e.variables)
    return names[0] if names else "t"


def classical_derivative(f, t: float) -> float:
    """``f'(t)``: symbolic for expressions, central difference otherwise."""
    if isinstance(f, str):
        f = as_expr(f)
    if isinstance(f, Expr):
        return float(diff(f, _var_of(f)).function(_var_of(f))(t)) if f.variables else 0.0
    h = max(1e-6, 1e-8 * abs(t))
    return (f(t + h) - f(t - h)) / (2.0 * h)


def frac_deriv(f: ScalarFunction, t: float, alpha: float) -> float:
    """alpha-fractional derivative ``t^(1-alpha) f'(t)`` at ``t > 0``.

    >>> frac_deriv("t^2", 4.0, 0.5)
    16.0
    """
    alpha = check_alpha(alpha)
    if t <= 0:
        raise ValueError("fractional derivative needs t > 0")
    return t ** (1.0 - alpha) * classical_derivative(f, t)


def frac_deriv_at_zero(f: ScalarFunction, alpha: float, tol: float = 1e-6) -> float:
    """One-sided limit of ``D^alpha f(t)`` as ``t -> 0+``.

    Evaluated on ``t = 10^-k`` for ``k = 2..12``; raises
    :class:`InconclusiveLimitError` unless the last values agree to ``tol``.
    """
    alpha = check_alpha(alpha)
    vals = [frac_deriv(f, 10.0**-k, alpha) for k in range(2, 13)]
    tail = vals[-3:]
    if not all(math.isfinite(v) for v in tail) or max(tail) - min(tail) > tol * max(1.0, abs(tail[-1])):
        raise InconclusiveLimitError(f"no limit at 0+ (last values {tail})")
    return float(tail[-1])


def default_eps_sequence(t: float, alpha: float, n: int = 8) -> list[float]:
    # first perturbation moves t by about 0.05*min(t, 1)
    dt0 = 0.05 * min(t, 1.0)
    eps0 = math.log1p(dt0 / t) * t**alpha
    return [eps0 / 2**k for k in range(n)]


def frac_deriv_limit(
    f: ScalarFunction,
    t: float,
    alpha: float,
    eps_sequence: Sequence[float] | None = None,
    cauchy_tol: float = 1e-3,
) -> float:
    """Evaluate the limit definition by polynomial (Neville) extrapolation to eps = 0.

    Raises :class:`InconclusiveLimitError` if successive extrapolants are not
    Cauchy within ``cauchy_tol`` (relative to ``max(1, |estimate|)``).
    """
    alpha = check_alpha(alpha)
    if t <= 0:
        raise ValueError("fractional derivative needs t > 0")
    eps = list(default_eps_sequence(t, alpha) if eps_sequence is None else eps_sequence)
    if len(eps) < 2 or any(e2 >= e1 for e1, e2 in zip(eps, eps[1:])) or eps[-1] <= 0:
        raise ValueError("eps_sequence must be positive and strictly decreasing")
    fn = _scalar(f)
    ft = fn(t)
    q = [(fn(t * math.exp(e * t ** (-alpha))) - ft) / e for e in eps]
    # Neville table evaluated at eps = 0
    table = list(q)
    diag = [table[0]]
    n = len(eps)
    for m in range(1, n):
        for i in range(n - m):
            table[i] = (eps[i + m] * table[i] - eps[i] * table[i + 1]) / (eps[i + m] - eps[i])
        diag.append(table[0])
    best = diag[-1]
    steps = [abs(b - a) for a, b in zip(diag, diag[1:])]
    if not steps or min(steps[-3:]) > cauchy_tol * max(1.0, abs(best)):
        raise InconclusiveLimitError(
            f"difference quotients do not settle (last change {steps[-1] if steps else math.nan:.3g})"
        )
    # report the extrapolant with the smallest successive change
    k = int(np.argmin(steps[-3:])) + len(steps) - min(3, len(steps))
    return float(diag[k + 1])


def frac_integral(f: ScalarFunction, a: float, t: float, alpha: float) -> float:
    """``I^alpha_a f(t) = int_a^t f(x) x^(alpha-1) dx`` by adaptive quadrature."""
    alpha = check_alpha(alpha)
    if not 0.0 <= a <= t:
        raise ValueError("need 0 <= a <= t")
    if isinstance(f, str):
        f = as_expr(f)
    if isinstance(f, Expr):
        var = _var_of(f)
        g = f.subs(var, Var("t")) * Var("t") ** alpha_expr(alpha - 1.0)
        return integrate(g, a, t, tol=1e-10, rtol=1e-8)
    return integrate(lambda x: np.array([f(float(xi)) for xi in np.atleast_1d(x)]) * np.atleast_1d(x) ** (alpha - 1.0),
                     a, t, tol=1e-10, rtol=1e-8)


def alpha_expr(x: float) -> Expr:
    """Exponent as an expression, exact when ``x`` is a small-denominator rational.

    Keeping ``1/3`` rational lets negative bases take the real root.
    """
    fr = Fraction(x).limit_denominator(1000)
    return as_expr(fr if abs(float(fr) - x) < 1e-12 else float(x))


# ---------------------------------------------------------------------------
# property suite
# ---------------------------------------------------------------------------

@dataclass
class PropertyReport:
    alpha: float
    cases: int
    max_rel_error: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def passed(self, tol: float = 1e-6) -> bool:
        return all(v <= tol for v in self.max_rel_error.values())


# catalogue of smooth building blocks, all defined for t > 0
_BLOCKS = [
    "t^2", "t^3 - 2*t", "sin(t)", "cos(t)", "exp(t/10)", "ln(t)", "sqrt(t)",
    "1/(1+t)", "t*cos(t)", "exp(-t/5)*sin(t)", "cbrt(t)", "2 + sin(t)",
    "t^(5/3)", "ln(1+t^2)", "3 + cos(t/2)",
]
# denominators for the quotient rule must stay away from zero
_NONZERO = ["2 + sin(t)", "1/(1+t)", "exp(t/10)", "3 + cos(t/2)", "sqrt(t)", "t^2"]
# outer functions for the chain rule, in variable u
_OUTER = ["sin(u)", "u^2", "exp(u/4)", "ln(1+u^2)", "cos(2*u)", "u^3 - u"]


def _finite_at(text: str, u: float) -> bool:
    e = as_expr(text)
    try:
        return math.isfinite(e(u=u)) and math.isfinite(diff(e, "u")(u=u))
    except (OverflowError, ExprError):
        return False


def _num(x: float) -> Expr:
    return as_expr(float(x))


def _rel(lhs: float, rhs: float, scale: float) -> float:
    s = max(abs(lhs), abs(rhs), scale, 1e-300)
    return abs(lhs - rhs) / s


def check_properties(
    alpha: float,
    samples: Sequence[float],
    n_cases: int = 200,
    seed: int = 0,
) -> PropertyReport:
    """Check the algebraic rules of the alpha-derivative on randomised cases.

    Rules checked: power rule (p1), constants (p2), product (p3),
    quotient (p4), chain (p5) and the rescaling identity against the limit
    definition (p6).  Errors are relative to the magnitude of the terms on
    the right-hand side.
    """
    alpha = check_alpha(alpha)
    samples = [float(s) for s in samples]
    if any(s <= 0 for s in samples):
        raise ValueError("samples must be positive")
    rng = random.Random(seed)
    report = PropertyReport(alpha, n_cases)
    errs = {k: 0.0 for k in ("p1", "p2", "p3", "p4", "p5", "p6")}

    def record(key, err, case):
        if err > errs[key]:
            errs[key] = err
        if err > 1e-6:
            report.failures.append((key, case, err))

    for i in range(n_cases):
        t = rng.choice(samples)
        # p1: power rule for real n
        n = rng.uniform(-3.0, 3.0)
        lhs = frac_deriv(Var("t") ** _num(n), t, alpha)
        rhs = n * t ** (n - alpha)
        record("p1", _rel(lhs, rhs, 0.0), (n, t))
        # p2: constants
        c = rng.uniform(-10, 10)
        record("p2", abs(frac_deriv(_num(c), t, alpha)), (c, t))
        f = as_expr(rng.choice(_BLOCKS))
        g = as_expr(rng.choice(_NONZERO))
        df, dg = frac_deriv(f, t, alpha), frac_deriv(g, t, alpha)
        fv, gv = f(t), g(t)
        # p3: product rule
        lhs = frac_deriv(f * g, t, alpha)
        record("p3", _rel(lhs, fv * dg + gv * df, abs(fv * dg) + abs(gv * df)), (str(f), str(g), t))
        # p4: quotient rule
        lhs = frac_deriv(f / g, t, alpha)
        rhs = (gv * df - fv * dg) / gv**2
        record("p4", _rel(lhs, rhs, (abs(gv * df) + abs(fv * dg)) / gv**2), (str(f), str(g), t))
        # p5: chain rule with outer function in u
        # only outer functions that stay representable at f(t), e.g. not exp(u/4) at u ~ 1e5
        outer = as_expr(rng.choice([o for o in _OUTER if _finite_at(o, fv)]))
        comp = substitute(outer, {"u": f})
        lhs = frac_deriv(comp, t, alpha)
        rhs = float(diff(outer, "u").function("u")(fv)) * df
        record("p5", _rel(lhs, rhs, abs(rhs)), (str(outer), str(f), t))
        # p6: rescaling identity vs the limit definition
        try:
            lim = frac_deriv_limit(f, t, alpha)
            record("p6", _rel(lim, df, abs(df)), (str(f), t))
        except InconclusiveLimitError as exc:
            report.failures.append(("p6", (str(f), t), str(exc)))
            errs["p6"] = math.inf
    report.max_rel_error = errs
    return report
