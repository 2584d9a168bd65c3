"""Three-dimensional alpha-fractional delay system: definition, simulation and diagnostics.

The system is

    D^a u = p(t) g(v(sigma(t)))
    D^a v = -q(t) h(w(t))
    D^a w = r(t) f(u(tau(t)))

and, since ``D^a y = t^(1-a) y'`` for differentiable ``y``, it is integrated
as the classical delay system ``y' = t^(a-1) * RHS`` by fixed-step RK4 with
cubic Hermite dense output (method of steps).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .expr import Expr, ExprError, ExprOverflowError, Var, as_expr, diff, parse, substitute
from .fraccalc import alpha_expr, check_alpha

__all__ = [
    "SpecError", "SolverError", "DelayError", "CasePreconditionError",
    "SystemSpec", "DerivedCoeffs", "History", "Trajectory", "OscillationClass",
    "CaseResult", "solve", "residual", "residual_series", "classify",
    "classify_case", "third_order_form",
]

COMPONENTS = ("u", "v", "w")
OVERFLOW_GUARD = 1e300


class SpecError(ValueError):
    """Invalid system definition (positivity, delay or constant constraints)."""


class SolverError(ArithmeticError):
    """Simulation could not proceed."""


class DelayError(SolverError):
    """A delayed argument fell below the start of the history."""


class CasePreconditionError(ValueError):
    """The first component is not positive on the requested window."""


def _grid(lo: float, hi: float, n: int) -> np.ndarray:
    return np.linspace(lo, hi, n)


# ---------------------------------------------------------------------------
# system definition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SystemSpec:
    """Full description of the delay system.

    Coefficients ``p, q, r`` and delays ``sigma, tau`` are expressions in ``t``;
    nonlinearities ``f, g, h`` are expressions in ``u``, ``v`` and ``w``
    respectively.  ``clamp`` optionally bounds the argument of a nonlinearity
    during simulation, e.g. ``{"f": (-1 + 1e-12, 1 - 1e-12)}`` for a square
    root that is only real on ``|u| <= 1``.
    """

    alpha: float
    p: Expr
    q: Expr
    r: Expr
    f: Expr
    g: Expr
    h: Expr
    sigma: Expr
    tau: Expr
    k: float = 1.0
    l: float = 1.0
    l_prime: float = 1.0
    m_prime: float = 1.0
    t0: float = 1.0
    T: float | None = None
    clamp: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    name: str = ""

    @classmethod
    def from_strings(cls, *, alpha, p, q, r, f, g, h, sigma, tau, **kw) -> "SystemSpec":
        """Parse expression strings, restricting each slot to its own variable."""
        def ex(text, var):
            return text if isinstance(text, Expr) else parse(str(text), (var,))

        spec = cls(
            alpha=float(alpha),
            p=ex(p, "t"), q=ex(q, "t"), r=ex(r, "t"),
            f=ex(f, "u"), g=ex(g, "v"), h=ex(h, "w"),
            sigma=ex(sigma, "t"), tau=ex(tau, "t"),
            **kw,
        )
        return spec

    @property
    def anchor(self) -> float:
        """Anchor ``T`` used in the weight ``A_alpha``; defaults to ``t0``."""
        return self.t0 if self.T is None else float(self.T)

    def with_T(self, T: float) -> "SystemSpec":
        return replace(self, T=float(T))

    def validate(self, span: float = 50.0, n: int = 1001) -> "SystemSpec":
        """Check the sampled structural assumptions; raise :class:`SpecError`.

        Positivity of ``p, q, r`` and of the constants, ``sigma(t) <= t`` and
        ``tau(t) <= t`` with both delays nondecreasing, on ``n`` points of
        ``[t0, t0 + span]``.
        """
        check_alpha(self.alpha)
        if self.t0 <= 0:
            raise SpecError("t0 must be positive")
        for name in ("k", "l", "l_prime", "m_prime"):
            if not getattr(self, name) > 0:
                raise SpecError(f"constant {name} must be positive")
        for name, e, var in (("p", self.p, "t"), ("q", self.q, "t"), ("r", self.r, "t"),
                             ("sigma", self.sigma, "t"), ("tau", self.tau, "t"),
                             ("f", self.f, "u"), ("g", self.g, "v"), ("h", self.h, "w")):
            extra = e.variables - {var}
            if extra:
                raise SpecError(f"{name} may only depend on {var}, found {sorted(extra)}")
        t = _grid(self.t0, self.t0 + span, n)
        for name in ("p", "q", "r"):
            vals = getattr(self, name).vectorized("t")(t)
            bad = np.nonzero(~(vals > 0))[0]
            if len(bad):
                raise SpecError(f"A1 violated: {name}(t) = {vals[bad[0]]:.6g} is not positive at t = {t[bad[0]]:.6g}")
        for name in ("sigma", "tau"):
            vals = getattr(self, name).vectorized("t")(t)
            over = np.nonzero(vals > t * (1 + 1e-14))[0]
            if len(over):
                raise SpecError(f"A3 violated: {name}(t) = {vals[over[0]]:.6g} exceeds t = {t[over[0]]:.6g}")
            if np.any(np.diff(vals) < -1e-12 * np.maximum(1.0, np.abs(vals[1:]))):
                raise SpecError(f"{name} must be nondecreasing")
            if not vals[-1] > vals[0]:
                raise SpecError(f"{name} must grow without bound")
        return self

    def check_A2(self, u_grid: Iterable[float]) -> dict:
        """Sample ``f(u)/u`` on ``u_grid`` (zero excluded) and compare with ``k``."""
        u = np.array([x for x in u_grid if x != 0], dtype=float)
        fn = self.f.vectorized("u")
        with np.errstate(all="ignore"):
            ratio = fn(u) / u
        i = int(np.nanargmin(ratio))
        return {"min_ratio": float(ratio[i]), "at_u": float(u[i]), "k": self.k,
                "holds": bool(np.nanmin(ratio) >= self.k)}

    def estimate_k(self, u_lo: float, u_hi: float, n: int = 2001) -> float:
        """Sampled infimum of ``f(u)/u`` over a declared range of ``u``."""
        return self.check_A2(np.linspace(u_lo, u_hi, n))["min_ratio"]

    def derived(self) -> "DerivedCoeffs":
        return DerivedCoeffs.from_spec(self)

    def to_strings(self) -> dict:
        return {n: str(getattr(self, n)) for n in ("p", "q", "r", "f", "g", "h", "sigma", "tau")}


@dataclass(frozen=True)
class DerivedCoeffs:
    """``a = 1/p``, ``b = 1/q``, ``c = l^2 l' m' r`` and the weight ``A_alpha``.

    ``A_alpha(t) = (k/2) (c/a) ((tau(sigma(t)) - T)/t) tau(sigma(t))^alpha``.
    """

    a: Expr
    b: Expr
    c: Expr
    A_alpha: Expr
    tau_sigma: Expr

    @classmethod
    def from_spec(cls, spec: SystemSpec) -> "DerivedCoeffs":
        a = 1 / spec.p
        b = 1 / spec.q
        c = (spec.l**2 * spec.l_prime * spec.m_prime) * spec.r
        ts = substitute(spec.tau, {"t": spec.sigma})
        A = (spec.k / 2) * (c / a) * ((ts - spec.anchor) / Var("t")) * ts ** alpha_expr(spec.alpha)
        return cls(a, b, c, A, ts)


# ---------------------------------------------------------------------------
# history and trajectory
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class History:
    """Prescribed ``(u, v, w)`` on ``[T1, t0]``."""

    u0: Expr
    v0: Expr
    w0: Expr
    T1: float

    @classmethod
    def from_strings(cls, u0, v0, w0, T1: float) -> "History":
        return cls(*(as_expr(x) if isinstance(x, Expr) else parse(str(x), ("t",)) for x in (u0, v0, w0)),
                   float(T1))

    @classmethod
    def for_spec(cls, spec: SystemSpec, u0, v0, w0, T1: float | None = None) -> "History":
        """History with ``T1 = min(tau(t0), sigma(t0))`` unless given."""
        if T1 is None:
            T1 = min(spec.tau(spec.t0), spec.sigma(spec.t0))
        return cls.from_strings(u0, v0, w0, T1)

    @property
    def exprs(self) -> tuple[Expr, Expr, Expr]:
        return (self.u0, self.v0, self.w0)

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.stack([e.vectorized("t")(t) if e.variables else np.full(t.shape, e(0.0))
                         for e in self.exprs], axis=-1)


def _hermite(t0, t1, y0, y1, f0, f1, x, deriv=False):
    h = t1 - t0
    th = (x - t0) / h
    if not deriv:
        h00 = (1 + 2 * th) * (1 - th) ** 2
        h10 = th * (1 - th) ** 2
        h01 = th * th * (3 - 2 * th)
        h11 = th * th * (th - 1)
        return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1
    d00 = 6 * th * th - 6 * th
    d10 = 3 * th * th - 4 * th + 1
    d11 = 3 * th * th - 2 * th
    return (d00 * (y0 - y1)) / h + d10 * f0 + d11 * f1


@dataclass
class Trajectory:
    """Dense solution: nodes, states and slopes, with the history below ``t0``.

    ``truncated`` is set when the overflow guard stopped the integration;
    ``flags`` counts events such as clamped nonlinearity arguments.
    """

    t: np.ndarray
    y: np.ndarray
    dy: np.ndarray
    history: History
    truncated: bool = False
    flags: dict = field(default_factory=dict)
    note: str = ""

    @property
    def t0(self) -> float:
        return float(self.t[0])

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    @property
    def T1(self) -> float:
        return self.history.T1

    def _locate(self, x: np.ndarray) -> np.ndarray:
        i = np.searchsorted(self.t, x, side="right") - 1
        return np.clip(i, 0, max(len(self.t) - 2, 0))

    def _check_domain(self, x: np.ndarray):
        if x.size and (np.min(x) < self.T1 - 1e-12 or np.max(x) > self.t_end * (1 + 1e-14) + 1e-14):
            raise ValueError(
                f"t outside trajectory coverage [{self.T1:.6g}, {self.t_end:.6g}]"
            )

    def __call__(self, x, deriv: bool = False) -> np.ndarray:
        """State (or classical derivative) at ``x``; shape ``x.shape + (3,)``."""
        x = np.asarray(x, dtype=float)
        self._check_domain(x)
        out = np.empty(x.shape + (3,))
        below = x < self.t0
        if np.any(below):
            xb = x[below]
            if deriv:
                out[below] = np.stack(
                    [diff(e, "t").vectorized("t")(xb) if e.variables else np.zeros_like(xb)
                     for e in self.history.exprs], axis=-1)
            else:
                out[below] = self.history(xb)
        above = ~below
        if np.any(above):
            xa = x[above]
            if len(self.t) == 1:
                out[above] = self.dy[0] if deriv else self.y[0]
            else:
                i = self._locate(xa)
                out[above] = _hermite(self.t[i, None], self.t[i + 1, None], self.y[i], self.y[i + 1],
                                      self.dy[i], self.dy[i + 1], xa[:, None], deriv)
        return out

    def eval(self, x) -> np.ndarray:
        return self(x)

    def derivative(self, x) -> np.ndarray:
        return self(x, deriv=True)

    def component(self, name: str) -> Callable:
        """Scalar/array accessor for one component, usable as a function of ``t``."""
        j = COMPONENTS.index(name)

        def acc(x):
            val = self(x)[..., j]
            return float(val) if np.ndim(val) == 0 else val

        acc.__name__ = name
        return acc

    @property
    def u(self):
        return self.component("u")

    @property
    def v(self):
        return self.component("v")

    @property
    def w(self):
        return self.component("w")

    def scaled(self, c: float) -> "Trajectory":
        """Trajectory multiplied by a constant (history scaled alike)."""
        h = self.history
        hist = History(c * h.u0, c * h.v0, c * h.w0, h.T1)
        return Trajectory(self.t.copy(), c * self.y, c * self.dy, hist, self.truncated, dict(self.flags))

    def to_csv(self, fh=None) -> str | None:
        """Write nodes as CSV with header ``t,u,v,w`` and 17 significant digits."""
        buf = io.StringIO() if fh is None else fh
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["t", *COMPONENTS])
        for ti, yi in zip(self.t, self.y):
            wr.writerow([f"{ti:.17g}", *(f"{v:.17g}" for v in yi)])
        return buf.getvalue() if fh is None else None


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------

class _Rhs:
    """Compiled right-hand side ``y' = t^(a-1) * (p g(v(sigma)), -q h(w), r f(u(tau)))``."""

    def __init__(self, spec: SystemSpec):
        self.am1 = spec.alpha - 1.0
        self.p = spec.p.function("t")
        self.q = spec.q.function("t")
        self.r = spec.r.function("t")
        self.sigma = spec.sigma.function("t")
        self.tau = spec.tau.function("t")
        self.f = spec.f.function("u")
        self.g = spec.g.function("v")
        self.h = spec.h.function("w")
        self.clamp = {k: (float(lo), float(hi)) for k, (lo, hi) in spec.clamp.items()}
        unknown = set(self.clamp) - {"f", "g", "h"}
        if unknown:
            raise SpecError(f"clamp keys must be among f, g, h, got {sorted(unknown)}")
        self.clamp_count = {k: 0 for k in self.clamp}

    def _arg(self, name, x):
        bounds = self.clamp.get(name)
        if bounds is None:
            return x
        lo, hi = bounds
        if x < lo or x > hi:
            self.clamp_count[name] += 1
            return min(max(x, lo), hi)
        return x

    def __call__(self, t, w, v_del, u_del):
        s = t**self.am1
        return (
            s * self.p(t) * self.g(self._arg("g", v_del)),
            -s * self.q(t) * self.h(self._arg("h", w)),
            s * self.r(t) * self.f(self._arg("f", u_del)),
        )


def solve(spec: SystemSpec, hist: History, t_end: float, dt: float,
          max_sweeps: int = 5, sweep_tol: float = 1e-12) -> Trajectory:
    """Integrate from ``spec.t0`` to ``t_end`` with fixed step ``dt``.

    Delayed values come from the dense output built so far or from ``hist``.
    When a delayed argument lands inside the step being taken, the step is
    repeated with the tentative Hermite segment (at most ``max_sweeps``
    sweeps, stopping when the end state changes by less than ``sweep_tol``).

    Raises :class:`DelayError` if a delayed argument drops below ``hist.T1``
    and :class:`SolverError` on expression domain errors.  Growth beyond
    ``1e300`` stops the run and marks the trajectory truncated.
    """
    t0 = float(spec.t0)
    if not t_end >= t0:
        raise ValueError("t_end must not precede t0")
    if not dt > 0:
        raise ValueError("dt must be positive")
    if hist.T1 > t0:
        raise ValueError("history must start at or before t0")
    rhs = _Rhs(spec)
    hfun = [e.function("t") if e.variables else (lambda _t, c=e(0.0): c) for e in hist.exprs]
    T1 = hist.T1

    ts = [t0]
    ys = [tuple(float(f(t0)) for f in hfun)]
    dys: list[tuple] = []
    # slot for a tentative segment covering the current step
    pending: list = [None]

    def state(x: float, j: int) -> float:
        if x < t0:
            if x < T1 - 1e-12 * max(1.0, abs(T1)):
                raise DelayError(f"delayed argument {x:.12g} below history start {T1:.12g}")
            return hfun[j](x)
        n = len(dys)  # completed nodes with slopes are 0..n-1
        last = ts[n - 1] if n else t0
        if n and x <= last:
            i = min(int((x - t0) / dt), n - 2) if n > 1 else 0
            while i > 0 and ts[i] > x:
                i -= 1
            while i < n - 2 and ts[i + 1] < x:
                i += 1
            if n == 1:
                return ys[0][j]
            return _hermite(ts[i], ts[i + 1], ys[i][j], ys[i + 1][j], dys[i][j], dys[i + 1][j], x)
        seg = pending[0]
        if seg is None:
            # first guess: linear extrapolation from the last node
            tl = ts[len(dys) - 1] if dys else t0
            return ys[len(dys) - 1][j] + (x - tl) * (dys[-1][j] if dys else 0.0)
        ta, tb, ya, yb, fa, fb = seg
        return _hermite(ta, tb, ya[j], yb[j], fa[j], fb[j], x)

    inside = [False]

    def F(t: float, y: tuple) -> tuple:
        sg, ta = rhs.sigma(t), rhs.tau(t)
        cur = ts[len(dys) - 1] if dys else t0
        if sg > cur or ta > cur:
            inside[0] = True
        return rhs(t, y[2], state(sg, 1), state(ta, 0))

    def step(tn, tn1, h, yn, fn):
        # RK4 step, repeated while a delayed argument falls inside it
        prev_end = None
        for _ in range(max_sweeps):
            inside[0] = False
            k1 = fn
            y2 = tuple(yn[j] + 0.5 * h * k1[j] for j in range(3))
            k2 = F(tn + 0.5 * h, y2)
            y3 = tuple(yn[j] + 0.5 * h * k2[j] for j in range(3))
            k3 = F(tn + 0.5 * h, y3)
            y4 = tuple(yn[j] + h * k3[j] for j in range(3))
            k4 = F(tn1, y4)
            yend = tuple(yn[j] + h / 6.0 * (k1[j] + 2 * k2[j] + 2 * k3[j] + k4[j]) for j in range(3))
            # slope at the new node; its delayed lookups may also fall in this step
            pending[0] = (tn, tn1, yn, yend, fn, k4)
            fend = F(tn1, yend)
            pending[0] = (tn, tn1, yn, yend, fn, fend)
            if not inside[0]:
                break
            if prev_end is not None and max(abs(a - b) for a, b in zip(yend, prev_end)) <= sweep_tol * max(1.0, max(abs(a) for a in yend)):
                break
            prev_end = yend
        return yend, fend

    try:
        dys.append(F(t0, ys[0]))
        truncated = False
        note = ""
        n_steps = int(math.ceil((t_end - t0) / dt - 1e-9))
        for n in range(n_steps):
            tn = ts[-1]
            tn1 = min(t0 + (n + 1) * dt, t_end)
            h = tn1 - tn
            if h <= 0:
                break
            yn, fn = ys[-1], dys[-1]
            pending[0] = None
            try:
                yend, fend = step(tn, tn1, h, yn, fn)
            except (OverflowError, ExprOverflowError):
                # a stage left the floating-point range before the node check
                truncated = True
                note = f"overflow guard triggered at t = {tn1:.6g}"
                break
            if not all(math.isfinite(v) and abs(v) <= OVERFLOW_GUARD for v in yend + fend):
                truncated = True
                note = f"overflow guard triggered at t = {tn1:.6g}"
                break
            ts.append(tn1)
            ys.append(yend)
            dys.append(fend)
    except DelayError:
        raise
    except (ExprError, ValueError, ZeroDivisionError, OverflowError) as exc:
        raise SolverError(f"evaluation failed near t = {ts[-1]:.6g}: {exc}") from exc

    flags = {f"clamp_{k}": c for k, c in rhs.clamp_count.items()}
    return Trajectory(np.array(ts), np.array(ys), np.array(dys), hist, truncated, flags, note)


# ---------------------------------------------------------------------------
# residual of a candidate solution
# ---------------------------------------------------------------------------

def residual_series(spec: SystemSpec, candidate: Sequence, grid: Iterable[float]) -> np.ndarray:
    """Pointwise ``D^alpha y_i - RHS_i`` for a closed-form candidate; shape ``(n, 3)``."""
    cu, cv, cw = (c if isinstance(c, Expr) else parse(str(c), ("t",)) for c in candidate)
    al = spec.alpha
    fns = {
        "du": diff(cu, "t").function("t"), "dv": diff(cv, "t").function("t"),
        "dw": diff(cw, "t").function("t"),
        "u": cu.function("t"), "v": cv.function("t"), "w": cw.function("t"),
    }
    p, q, r = (e.function("t") for e in (spec.p, spec.q, spec.r))
    sg, ta = spec.sigma.function("t"), spec.tau.function("t")
    f, g, h = spec.f.function("u"), spec.g.function("v"), spec.h.function("w")
    out = []
    for t in grid:
        t = float(t)
        if t <= 0:
            raise ValueError(f"residual grid must be positive, got t = {t}")
        try:
            s = t ** (1 - al)
            out.append((
                s * fns["du"](t) - p(t) * g(fns["v"](sg(t))),
                s * fns["dv"](t) + q(t) * h(fns["w"](t)),
                s * fns["dw"](t) - r(t) * f(fns["u"](ta(t))),
            ))
        except (ValueError, ZeroDivisionError, OverflowError) as exc:
            raise ExprError(f"residual evaluation failed at t = {t!r}: {exc}") from exc
    return np.array(out, dtype=float).reshape(-1, 3)


def residual(spec: SystemSpec, candidate: Sequence, grid: Iterable[float]) -> list[float]:
    """Max absolute residual per equation over ``grid``."""
    res = residual_series(spec, candidate, grid)
    if res.size == 0:
        return [0.0, 0.0, 0.0]
    return [float(x) for x in np.max(np.abs(res), axis=0)]


# ---------------------------------------------------------------------------
# oscillation classification
# ---------------------------------------------------------------------------

OSCILLATORY = "oscillatory"
NONOSC_POS = "nonoscillatory-positive"
NONOSC_NEG = "nonoscillatory-negative"
UNDETERMINED = "undetermined"


@dataclass
class OscillationClass:
    """Sign changes and verdicts per component plus the system verdict."""

    window: tuple[float, float]
    crossings: dict
    verdicts: dict
    system: str
    samples: int
    flags: list = field(default_factory=list)

    @property
    def oscillatory(self) -> bool:
        return self.system == OSCILLATORY

    def to_dict(self) -> dict:
        return {
            "window": list(self.window),
            "system": self.system,
            "samples": self.samples,
            "components": {
                c: {"verdict": self.verdicts[c], "sign_changes": len(self.crossings[c]),
                    "crossing_times": self.crossings[c]}
                for c in COMPONENTS
            },
            "flags": list(self.flags),
        }


def _bisect(fn, a: float, b: float, fa: float, tol: float = 1e-10) -> float:
    while b - a > tol:
        m = 0.5 * (a + b)
        fm = fn(m)
        if fm == 0:
            return m
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def classify(traj: Trajectory, window: Sequence[float], min_crossings: int = 10,
             samples: int | None = None) -> OscillationClass:
    """Count sign changes per component on ``window`` and classify.

    A component is oscillatory iff it has at least ``min_crossings`` sign
    changes and its final sign-constant stretch is no longer than half the
    window.  Crossings are located by dense sampling and refined by
    bisection on the dense output to ``1e-10``.
    """
    lo, hi = float(window[0]), float(window[1])
    if not hi > lo:
        raise ValueError("window must have positive length")
    flags = []
    if hi > traj.t_end:
        flags.append(f"window clipped to trajectory end {traj.t_end:.6g}")
        hi = traj.t_end
    if traj.truncated:
        flags.append("trajectory truncated by overflow guard")
    lo = max(lo, traj.T1)
    nodes_in = int(np.count_nonzero((traj.t >= lo) & (traj.t <= hi)))
    n = samples if samples is not None else max(1000, 4 * nodes_in)
    if n < 1000:
        flags.append(f"low sample density ({n} < 1000)")
    x = np.linspace(lo, hi, n)
    Y = traj(x)
    crossings, verdicts = {}, {}
    for j, c in enumerate(COMPONENTS):
        y = Y[:, j]
        fn = lambda s, j=j: float(traj(np.array([s]))[0, j])
        sg = np.sign(y)
        times = []
        # carry the last nonzero sign across exact zeros
        last_i = None
        for i in range(n):
            if sg[i] == 0:
                continue
            if last_i is not None and sg[i] != sg[last_i]:
                if i == last_i + 1:
                    times.append(float(_bisect(fn, float(x[last_i]), float(x[i]), float(y[last_i]))))
                else:
                    times.append(float(0.5 * (x[last_i + 1] + x[i - 1])))
            last_i = i
        crossings[c] = times
        if last_i is None:
            verdicts[c] = UNDETERMINED
            continue
        terminal = hi - (times[-1] if times else lo)
        final = NONOSC_POS if sg[last_i] > 0 else NONOSC_NEG
        if terminal > 0.5 * (hi - lo):
            verdicts[c] = final
        elif len(times) >= min_crossings:
            verdicts[c] = OSCILLATORY
        else:
            verdicts[c] = UNDETERMINED
    vals = list(verdicts.values())
    if all(v == OSCILLATORY for v in vals):
        system = OSCILLATORY
    elif any(v in (NONOSC_POS, NONOSC_NEG) for v in vals):
        system = "nonoscillatory"
    else:
        system = UNDETERMINED
    return OscillationClass((lo, hi), crossings, verdicts, system, n, flags)


# ---------------------------------------------------------------------------
# derivative chains along a trajectory
# ---------------------------------------------------------------------------

class _Chain:
    """Exact first and second derivatives of the dense state via the right-hand side.

    Above ``t0`` the slopes come from the equations evaluated on dense state
    values; below ``t0`` from the symbolic derivatives of the history.
    """

    def __init__(self, traj: Trajectory, spec: SystemSpec):
        self.traj, self.spec = traj, spec
        al = spec.alpha
        t = Var("t")
        self.al = al
        self.fn = {n: getattr(spec, n).vectorized("t") for n in ("p", "q", "r", "sigma", "tau")}
        self.dfn = {n: diff(getattr(spec, n), "t").vectorized("t") for n in ("p", "q", "r", "sigma", "tau")}
        self.nl = {n: getattr(spec, n).vectorized(var) for n, var in (("f", "u"), ("g", "v"), ("h", "w"))}
        self.dnl = {n: diff(getattr(spec, n), var).vectorized(var) for n, var in (("f", "u"), ("g", "v"), ("h", "w"))}
        self.hd1 = [diff(e, "t") for e in traj.history.exprs]
        self.hd2 = [diff(e, "t") for e in self.hd1]
        self._t = t

    def _hist(self, exprs, x):
        return np.stack([e.vectorized("t")(x) if e.variables else np.full(x.shape, e(0.0)) for e in exprs], -1)

    def y(self, x):
        return self.traj(x)

    def d1(self, x):
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape + (3,))
        below = x < self.traj.t0
        if below.any():
            out[below] = self._hist(self.hd1, x[below])
        if (~below).any():
            xa = x[~below]
            s = xa ** (self.al - 1)
            vs = self.traj(self.fn["sigma"](xa))[..., 1]
            ut = self.traj(self.fn["tau"](xa))[..., 0]
            w = self.traj(xa)[..., 2]
            out[~below] = np.stack([
                s * self.fn["p"](xa) * self.nl["g"](vs),
                -s * self.fn["q"](xa) * self.nl["h"](w),
                s * self.fn["r"](xa) * self.nl["f"](ut),
            ], -1)
        return out

    def d2(self, x):
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape + (3,))
        below = x < self.traj.t0
        if below.any():
            out[below] = self._hist(self.hd2, x[below])
        if (~below).any():
            xa = x[~below]
            al = self.al
            s = xa ** (al - 1)
            ds = (al - 1) * xa ** (al - 2)
            sg, ta = self.fn["sigma"](xa), self.fn["tau"](xa)
            vs, ut = self.traj(sg)[..., 1], self.traj(ta)[..., 0]
            dvs, dut = self.d1(sg)[..., 1], self.d1(ta)[..., 0]
            w = self.traj(xa)[..., 2]
            dw = self.d1(xa)[..., 2]
            P, Q, R = self.fn["p"](xa), self.fn["q"](xa), self.fn["r"](xa)
            dP, dQ, dR = self.dfn["p"](xa), self.dfn["q"](xa), self.dfn["r"](xa)
            out[~below] = np.stack([
                (ds * P + s * dP) * self.nl["g"](vs) + s * P * self.dnl["g"](vs) * dvs * self.dfn["sigma"](xa),
                -(ds * Q + s * dQ) * self.nl["h"](w) - s * Q * self.dnl["h"](w) * dw,
                (ds * R + s * dR) * self.nl["f"](ut) + s * R * self.dnl["f"](ut) * dut * self.dfn["tau"](xa),
            ], -1)
        return out


@dataclass
class CaseResult:
    """Sign-pattern classification of a positive first component."""

    case: str  # "CaseI" | "CaseII" | "Mixed"
    first_violation: float | None
    grid: np.ndarray
    u: np.ndarray
    frac_u: np.ndarray
    frac_a_frac_u: np.ndarray

    def __str__(self) -> str:
        return self.case


def _frac_layers(chain: _Chain, spec: SystemSpec, x: np.ndarray):
    """``D^a u``, ``phi1 = a D^a u`` and ``D^a phi1`` along ``x``."""
    al = spec.alpha
    dc = spec.derived()
    a = dc.a.vectorized("t")(x)
    da = diff(dc.a, "t").vectorized("t")(x)
    u1 = chain.d1(x)[..., 0]
    u2 = chain.d2(x)[..., 0]
    s = x ** (1 - al)
    ds = (1 - al) * x ** (-al)
    frac_u = s * u1
    # phi1 = m u' with m = a t^(1-a)
    m, dm = a * s, da * s + a * ds
    phi1 = m * u1
    dphi1 = dm * u1 + m * u2
    return frac_u, phi1, s * dphi1, (m, dm, u1, u2)


def classify_case(traj: Trajectory, spec: SystemSpec, window: Sequence[float], n: int = 2000) -> CaseResult:
    """Match the signs of ``u``, ``D^a u`` and ``D^a(a D^a u)`` to a case.

    Case I: all three positive.  Case II: ``u > 0`` and ``D^a u < 0``.
    Otherwise Mixed, with the first grid time that breaks the pattern
    established at the left end of the window.
    """
    x = np.linspace(float(window[0]), float(window[1]), n)
    chain = _Chain(traj, spec)
    u = traj(x)[..., 0]
    if np.any(u <= 0):
        bad = x[np.argmax(u <= 0)]
        raise CasePreconditionError(f"u is not positive on the window (first at t = {bad:.6g})")
    frac_u, _, frac_phi, _ = _frac_layers(chain, spec, x)
    case1 = (frac_u > 0) & (frac_phi > 0)
    case2 = frac_u < 0
    if case1.all():
        return CaseResult("CaseI", None, x, u, frac_u, frac_phi)
    if case2.all():
        return CaseResult("CaseII", None, x, u, frac_u, frac_phi)
    ref = case1 if case1[0] else case2 if case2[0] else None
    first = float(x[0]) if ref is None else float(x[np.argmin(ref)])
    return CaseResult("Mixed", first, x, u, frac_u, frac_phi)


def third_order_form(traj: Trajectory, spec: SystemSpec, grid: Iterable[float], rel_step: float = 1e-5) -> np.ndarray:
    """``D^a(b D^a(a D^a u)) + c f(u(tau(sigma(t))))`` along the trajectory.

    The inner two layers are exact in the dense state; the outermost
    derivative is a central difference with step ``rel_step * max(1, t)``.
    """
    x = np.asarray(list(grid), dtype=float)
    dc = spec.derived()
    ts = dc.tau_sigma.vectorized("t")(x) if x.size else x
    if x.size and (np.min(ts) < traj.T1 or np.max(x) * (1 + 2 * rel_step) > traj.t_end):
        raise ValueError("grid point outside trajectory coverage")
    chain = _Chain(traj, spec)
    al = spec.alpha
    b = dc.b.vectorized("t")

    def phi2(z):
        return b(z) * _frac_layers(chain, spec, z)[2]

    hstep = rel_step * np.maximum(1.0, x)
    dphi2 = (phi2(x + hstep) - phi2(x - hstep)) / (2 * hstep)
    lhs = x ** (1 - al) * dphi2
    fu = spec.f.vectorized("u")(traj(ts)[..., 0])
    return lhs + dc.c.vectorized("t")(x) * fu
