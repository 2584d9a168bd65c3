"""Adaptive quadrature and asymptotic probes for improper integrals.

`integrate` is a globally adaptive Gauss-Kronrod (7/15) rule evaluated in
vectorised batches.  `probe_improper` turns "does this integral diverge?"
into partial integrals over geometric horizons plus a growth fit, and
`tail_constant` estimates liminf/limsup constants from sampled values.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .expr import Expr, ExprError, as_expr

__all__ = [
    "Classification", "DivergenceVerdict", "TailConstant", "QuadratureError",
    "integrate", "integrate_with_error", "probe_improper", "tail_constant",
    "classify_growth", "as_array_function", "CALIBRATION_CATALOG", "calibrate",
]

# Gauss-Kronrod 7/15 abscissae and weights (QUADPACK qk15)
_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])

_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_WK = np.concatenate([_WGK[:-1], _WGK[::-1]])
_WG15 = np.zeros(15)
# Gauss nodes are the odd-indexed Kronrod abscissae (1, 3, 5, 7 in _XGK)
for _i, _w in zip((1, 3, 5), _WG[:3]):
    _WG15[_i] = _w
    _WG15[14 - _i] = _w
_WG15[7] = _WG[3]

_EPS = np.finfo(float).eps


COARSE_RTOL = 1e-2


class QuadratureError(ArithmeticError):
    def __init__(self, message: str, value: float = math.nan, error: float = math.nan):
        self.value = value
        self.error = error
        super().__init__(message)


class QuadratureOverflow(QuadratureError):
    """Integrand values of one sign beyond the floating-point range."""

    def __init__(self, message: str, sign: int):
        super().__init__(message)
        self.sign = sign


class Classification(str, enum.Enum):
    DIVERGES = "Diverges"
    CONVERGES = "Converges"
    INCONCLUSIVE = "Inconclusive"


def as_array_function(f) -> Callable[[np.ndarray], np.ndarray]:
    """Wrap an Expr, expression string or Python callable as an array function."""
    if isinstance(f, str):
        f = as_expr(f)
    if isinstance(f, Expr):
        return f.vectorized()
    if not callable(f):
        raise TypeError("integrand must be callable or an expression")

    def wrapped(x):
        x = np.asarray(x, dtype=float)
        try:
            y = np.asarray(f(x), dtype=float)
            if y.shape == x.shape:
                return y
        except (TypeError, ValueError):
            pass
        return np.array([float(f(float(xi))) for xi in x.ravel()]).reshape(x.shape)

    return wrapped


def _gk15(fn, lo, hi):
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    x = mid[:, None] + half[:, None] * _NODES[None, :]
    fx = fn(x.ravel()).reshape(x.shape)
    if not np.all(np.isfinite(fx)):
        bad_mask = ~np.isfinite(fx)
        bad = float(x[bad_mask][0])
        vals = fx[bad_mask]
        if not np.any(np.isnan(vals)) and (np.all(vals > 0) or np.all(vals < 0)):
            raise QuadratureOverflow(f"integrand exceeds floating-point range at x={bad!r}",
                                     1 if vals[0] > 0 else -1)
        raise QuadratureError(f"integrand not finite at x={bad!r}")
    resk = fx @ _WK
    resg = fx @ _WG15
    reskh = 0.5 * resk
    resasc = np.abs(fx - reskh[:, None]) @ _WK
    resabs = np.abs(fx) @ _WK
    absh = np.abs(half)
    resk, resasc, resabs = resk * half, resasc * absh, resabs * absh
    err = np.abs((resk - resg * half))
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = resasc * np.minimum(1.0, (200.0 * err / resasc) ** 1.5)
    err = np.where(resasc > 0, scaled, err)
    floor = 50.0 * _EPS * resabs
    err = np.where(resabs > np.finfo(float).tiny / (50 * _EPS), np.maximum(err, floor), err)
    return resk, err


def integrate_with_error(
    f,
    a: float,
    b: float,
    tol: float = 1e-10,
    rtol: float | None = None,
    points: Sequence[float] = (),
    max_panels: int = 2**20,
) -> tuple[float, float]:
    """Integrate ``f`` over ``[a, b]``; return ``(value, error_estimate)``.

    The target is ``max(tol, rtol * |value|)`` with ``rtol`` defaulting to
    ``tol``.  ``points`` lists interior breakpoints (e.g. integrable
    singularities) that become panel edges.
    """
    if b < a:
        raise ValueError("need a <= b")
    if a == b:
        return 0.0, 0.0
    rtol = tol if rtol is None else rtol
    fn = as_array_function(f)
    edges = np.unique(np.concatenate([[a, b], [p for p in points if a < p < b]]))
    lo, hi = edges[:-1].copy(), edges[1:].copy()
    val, err = _gk15(fn, lo, hi)
    done_val = 0.0
    done_err = 0.0
    while True:
        total = done_val + val.sum()
        total_err = done_err + err.sum()
        target = max(tol, rtol * abs(total))
        if total_err <= target:
            return float(total), float(total_err)
        if len(lo) + 1 > max_panels:
            raise QuadratureError(
                f"no convergence after {max_panels} panels (error {total_err:.3g})", total, total_err
            )
        # panels too narrow to split are retired with their error
        width = hi - lo
        tiny = width <= 64 * _EPS * np.maximum(np.abs(lo), np.abs(hi))
        if tiny.any():
            done_val += val[tiny].sum()
            done_err += err[tiny].sum()
            lo, hi, val, err = lo[~tiny], hi[~tiny], val[~tiny], err[~tiny]
            if done_err > target:
                raise QuadratureError(
                    "error estimate stalled at unresolvable panels", total, total_err
                )
            if len(lo) == 0:
                raise QuadratureError("no splittable panels left", total, total_err)
            continue
        order = np.argsort(err)[::-1]
        need = err.sum() - 0.5 * (target - done_err)
        csum = np.cumsum(err[order])
        k = int(np.searchsorted(csum, need)) + 1
        k = min(max(k, 1), len(order), max_panels - len(lo))
        pick = np.zeros(len(lo), dtype=bool)
        pick[order[:k]] = True
        mid = 0.5 * (lo[pick] + hi[pick])
        new_lo = np.concatenate([lo[pick], mid])
        new_hi = np.concatenate([mid, hi[pick]])
        nv, ne = _gk15(fn, new_lo, new_hi)
        lo = np.concatenate([lo[~pick], new_lo])
        hi = np.concatenate([hi[~pick], new_hi])
        val = np.concatenate([val[~pick], nv])
        err = np.concatenate([err[~pick], ne])


def integrate(f, a: float, b: float, tol: float = 1e-10, rtol: float | None = None,
              points: Sequence[float] = (), max_panels: int = 2**20) -> float:
    """Adaptive Gauss-Kronrod integral of ``f`` over ``[a, b]``.

    >>> round(integrate("1/s", 1, 2), 12)
    0.693147180560
    """
    return integrate_with_error(f, a, b, tol, rtol, points, max_panels)[0]


# ---------------------------------------------------------------------------
# Divergence probing
# ---------------------------------------------------------------------------

@dataclass
class DivergenceVerdict:
    """Outcome of probing an improper integral over geometric horizons."""

    classification: Classification
    partials: list[tuple[float, float]]
    beta: float = math.nan
    log_slope: float = math.nan
    limit: float = math.nan
    direction: int = 0
    note: str = ""

    @property
    def diverges_to_infinity(self) -> bool:
        return self.classification is Classification.DIVERGES and self.direction > 0

    def to_dict(self) -> dict:
        return {
            "classification": self.classification.value,
            "partials": [{"horizon": h, "partial_value": v} for h, v in self.partials],
            "beta": self.beta,
            "log_slope": self.log_slope,
            "limit": self.limit,
            "direction": self.direction,
            "note": self.note,
        }


def _fit_slope(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2 or np.ptp(x) == 0:
        return math.nan
    return float(np.polyfit(x, y, 1)[0])


def classify_growth(
    horizons: Sequence[float],
    values: Sequence[float],
    beta_min: float = 0.05,
    cauchy_rtol: float = 1e-4,
    log_ratio: float = 0.5,
) -> tuple[Classification, dict]:
    """Classify a sequence sampled at geometric horizons as growing or settling.

    Converges: the last three values, or the last geometric-tail
    extrapolations of the increments, agree within ``cauchy_rtol``.
    Diverges: monotone over the last three horizons and either a power fit
    exponent above ``beta_min`` or increments that do not decay faster than
    ``log_ratio`` per horizon (logarithmic growth).
    """
    T = np.asarray(horizons, dtype=float)
    V = np.asarray(values, dtype=float)
    info = {"beta": math.nan, "log_slope": math.nan, "limit": math.nan, "direction": 0, "note": ""}
    if len(V) < 3 or not np.all(np.isfinite(V)):
        info["note"] = "non-finite or too few values"
        return Classification.INCONCLUSIVE, info
    last = V[-3:]
    scale = float(np.max(np.abs(last)))
    lnT = np.log(T[-3:])
    info["log_slope"] = _fit_slope(lnT, last)
    if np.all(last > 0):
        info["beta"] = _fit_slope(lnT, np.log(last))
    elif np.all(last < 0):
        info["beta"] = _fit_slope(lnT, np.log(-last))

    if np.ptp(last) <= cauchy_rtol * scale or scale == 0.0:
        info["limit"] = float(V[-1])
        info["note"] = "partial values Cauchy"
        return Classification.CONVERGES, info

    d = np.diff(V)
    if len(d) >= 3:
        with np.errstate(divide="ignore", invalid="ignore"):
            r = d[1:] / d[:-1]
        est = []
        for i in range(1, len(d)):
            ri = r[i - 1]
            if np.isfinite(ri) and -1.0 < ri < 1.0:
                est.append(V[i + 1] + d[i] * ri / (1.0 - ri))
            else:
                est.append(math.nan)
        tail = np.asarray(est[-3:], dtype=float)
        if len(tail) >= 2 and np.all(np.isfinite(tail)):
            if np.ptp(tail) <= cauchy_rtol * max(float(np.max(np.abs(tail))), 1e-300):
                info["limit"] = float(tail[-1])
                info["note"] = "geometric tail extrapolation Cauchy"
                return Classification.CONVERGES, info

    d_last = d[-2:]
    for sign in (1, -1):
        if np.all(sign * d_last > 0):
            beta = info["beta"]
            grows_power = (
                np.isfinite(beta) and beta > beta_min and np.sign(last[-1]) == sign
            )
            ratio = d[-1] / d[-2]
            # comparable increments per decade mean logarithmic growth, even
            # though a power fit over a few decades then reports a small beta
            grows_log = log_ratio <= ratio <= 1.0 / log_ratio
            if grows_power or ratio >= log_ratio:
                info["direction"] = sign
                info["note"] = "logarithmic growth" if grows_log else "power growth"
                return Classification.DIVERGES, info
    info["note"] = "neither settled nor growing monotonically"
    return Classification.INCONCLUSIVE, info


def default_horizons(a: float) -> list[float]:
    base = a if a > 0 else 1.0
    return [base * 10.0**k for k in range(1, 5)]


def probe_improper(
    f,
    a: float,
    horizons: Sequence[float] | None = None,
    beta_min: float = 0.05,
    tol: float = 1e-10,
    rtol: float = 1e-10,
) -> DivergenceVerdict:
    """Decide whether ``int_a^inf f`` diverges, converges, or cannot be told apart.

    Partial integrals are accumulated segment by segment over ``horizons``
    (default ``a * 10**k`` for k = 1..4).
    """
    horizons = list(default_horizons(a) if horizons is None else horizons)
    if len(horizons) < 4:
        raise ValueError("need at least 4 horizons")
    if any(h2 <= h1 for h1, h2 in zip(horizons, horizons[1:])) or horizons[0] <= a:
        raise ValueError("horizons must be strictly increasing and beyond a")
    partials: list[tuple[float, float]] = []
    coarse: list[float] = []
    acc = 0.0
    lo = a
    try:
        fn = as_array_function(f)
        for h in horizons:
            try:
                seg = integrate(fn, lo, h, tol=tol, rtol=rtol)
            except QuadratureOverflow:
                raise
            except QuadratureError as exc:
                # panel budget spent on a rough integrand: keep the estimate if
                # it is good to 1%, which can still separate decades of growth
                if not (math.isfinite(exc.value) and exc.error <= COARSE_RTOL * abs(exc.value)):
                    raise
                seg = exc.value
                coarse.append(float(h))
            acc += seg
            partials.append((float(h), float(acc)))
            lo = h
    except QuadratureOverflow as exc:
        # an integrand of one sign beyond ~1e308 on a whole panel; count it as
        # divergence only if the recorded partials already move the same way
        vals = [v for _, v in partials]
        steps = np.diff([0.0, *vals])
        if np.all(exc.sign * steps > 0):
            return DivergenceVerdict(
                Classification.DIVERGES, partials, direction=exc.sign,
                note=f"partial integrals leave the floating-point range ({exc})",
            )
        return DivergenceVerdict(
            Classification.INCONCLUSIVE, partials, note=f"integrand failure: {exc}"
        )
    except (ExprError, QuadratureError, OverflowError) as exc:
        return DivergenceVerdict(
            Classification.INCONCLUSIVE, partials, note=f"integrand failure: {exc}"
        )
    cls, info = classify_growth(
        [h for h, _ in partials], [v for _, v in partials], beta_min=beta_min
    )
    if coarse:
        where = ", ".join(f"{h:g}" for h in coarse)
        if cls is Classification.CONVERGES:
            cls = Classification.INCONCLUSIVE
            info["limit"] = math.nan
        info["note"] = f"{info.get('note', '')}; segments ending at {where} only accurate to 1%".lstrip("; ")
    return DivergenceVerdict(cls, partials, **info)


# ---------------------------------------------------------------------------
# liminf / limsup tail constants
# ---------------------------------------------------------------------------

@dataclass
class TailConstant:
    """Estimate of a liminf or limsup as ``t`` grows."""

    kind: str
    windows: list[tuple[float, float]]
    value: float
    confident: bool
    growth: Classification = Classification.INCONCLUSIVE
    blocks: list[tuple[float, float]] = field(default_factory=list)
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "value": self.value,
            "confident": self.confident,
            "growth": self.growth.value,
            "blocks": [{"t": t, "extremum": m} for t, m in self.blocks],
            "note": self.note,
        }


def tail_constant(
    F,
    kind: str,
    t_grid: Sequence[float],
    blocks_per_decade: int = 2,
    beta_min: float = 0.05,
    atol: float = 1e-9,
) -> TailConstant:
    """Estimate ``liminf`` or ``limsup`` of ``F(t)`` as ``t`` grows.

    ``F`` is a function or the values of ``F`` on ``t_grid``.  The grid is cut
    into geometric blocks; the sequence of block extrema is checked for
    unbounded growth, else extrapolated linearly in ``1/t`` at the abscissae
    where the extrema occur.  The estimate is flagged low-confidence when
    ``F`` keeps oscillating with non-shrinking amplitude.
    """
    if kind not in ("liminf", "limsup"):
        raise ValueError("kind must be 'liminf' or 'limsup'")
    t = np.asarray(t_grid, dtype=float)
    order = np.argsort(t)
    t = t[order]
    if t[0] <= 0 or math.log10(t[-1] / t[0]) < 2 - 1e-9:
        raise ValueError("t_grid must be positive and span at least 2 decades")
    if callable(F) or isinstance(F, (Expr, str)):
        y = as_array_function(F)(t)
    else:
        y = np.asarray(F, dtype=float)[order]
    if y.shape != t.shape:
        raise ValueError("values must match t_grid")
    pick = np.nanargmin if kind == "liminf" else np.nanargmax
    ext = np.minimum.accumulate if kind == "liminf" else np.maximum.accumulate
    running = ext(y[::-1])[::-1]
    windows = list(zip(t.tolist(), running.tolist()))

    decades = math.log10(t[-1] / t[0])
    nb = max(4, int(round(blocks_per_decade * decades)))
    edges = np.geomspace(t[0], t[-1], nb + 1)
    idx = np.clip(np.searchsorted(edges, t, side="right") - 1, 0, nb - 1)
    block_t, block_m, spread = [], [], []
    for j in range(nb):
        sel = np.nonzero(idx == j)[0]
        if len(sel) == 0 or not np.any(np.isfinite(y[sel])):
            continue
        k = sel[pick(y[sel])]
        block_t.append(float(t[k]))
        block_m.append(float(y[k]))
        spread.append(float(np.nanmax(y[sel]) - np.nanmin(y[sel])))
    blocks = list(zip(block_t, block_m))
    if len(block_m) < 3:
        return TailConstant(kind, windows, math.nan, False, Classification.INCONCLUSIVE,
                            blocks, "too few populated blocks")

    growth, info = classify_growth(block_t, block_m, beta_min=beta_min)
    if growth is Classification.DIVERGES:
        value = math.inf if info["direction"] > 0 else -math.inf
        return TailConstant(kind, windows, value, True, growth, blocks,
                            f"extrema grow without bound ({info['note']})")

    x = 1.0 / np.asarray(block_t[-3:])
    m = np.asarray(block_m[-3:])
    if np.ptp(x) > 0:
        slope, value = np.polyfit(x, m, 1)
        value = float(value)
    else:
        value = float(m[-1])
    s_last, s_prev = spread[-1], spread[-2]
    settled = s_last <= max(atol, 1e-6 * abs(value)) or s_last <= 0.5 * s_prev
    confident = bool(settled) or s_last <= atol
    note = "tail settled" if confident else "tail keeps oscillating; low confidence"
    return TailConstant(kind, windows, value, confident, growth, blocks, note)


# integrands in s on [2, inf) with their known behaviour; the last entry is
# the weight integrand s^(-1/2) / b(s) of the exponential system
CALIBRATION_CATALOG = (
    ("s^(-1/2)", Classification.DIVERGES),
    ("s^(-1)", Classification.DIVERGES),
    ("s^(-3/2)", Classification.CONVERGES),
    ("s^(-2)", Classification.CONVERGES),
    ("1/(s*ln(s))", Classification.DIVERGES),
    ("exp(-s)", Classification.CONVERGES),
    ("ln(s)/s", Classification.DIVERGES),
    ("s^(-1/2)/(exp(2*s)*s^(-1/2))", Classification.CONVERGES),
)


def calibrate(a: float = 2.0, horizons: Sequence[float] | None = None) -> list[tuple[str, Classification, DivergenceVerdict]]:
    """Run :func:`probe_improper` on :data:`CALIBRATION_CATALOG`.

    Returns ``(integrand, expected, verdict)`` triples.
    """
    from .expr import parse

    return [(text, expected, probe_improper(parse(text, ("s",)), a, horizons))
            for text, expected in CALIBRATION_CATALOG]
