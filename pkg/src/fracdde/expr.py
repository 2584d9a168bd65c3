"""Scalar expression language: parse, evaluate, differentiate.

Grammar (EBNF)::

    expr   = term , { ("+" | "-") , term } ;
    term   = unary , { ("*" | "/") , unary } ;
    unary  = ("-" | "+") , unary | power ;
    power  = atom , [ ("^" | "**") , unary ] ;          (* right-associative *)
    atom   = number | name | func , "(" , expr , ")" | "(" , expr , ")" ;
    func   = "sin" | "cos" | "exp" | "ln" | "sqrt" | "abs" | "cbrt" ;
    name   = variable | "pi" | "e" ;
    variable = "t" | "s" | "u" | "v" | "w" ;             (* each slot allows a subset *)
    number = ( digit , { digit } , [ "." , { digit } ] | "." , digit , { digit } ) ,
             [ ( "e" | "E" ) , [ "+" | "-" ] , digit , { digit } ] ;

Exponentiation binds tighter than unary minus, so ``-2^2 == -4``.

A power whose exponent is a literal rational ``k/q`` with ``q`` odd is
evaluated with the real root, ``x^(k/q) = sign(x)^k |x|^(k/q)``.  Any other
non-integer exponent applied to a negative base is a domain error.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Mapping

import mpmath
import numpy as np

__all__ = [
    "Expr", "Num", "Const", "Var", "Neg", "BinOp", "Pow", "Call",
    "ExprError", "ExprSyntaxError", "UnknownIdentifierError",
    "UnboundVariableError", "ExprDomainError", "ExprOverflowError",
    "parse", "evaluate", "diff", "render", "as_expr",
    "VARIABLES", "FUNCTIONS",
]

VARIABLES = ("t", "s", "u", "v", "w")
FUNCTIONS = ("sin", "cos", "exp", "ln", "sqrt", "abs", "cbrt")
CONSTANTS = {"pi": math.pi, "e": math.e}


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int, text: str = ""):
        self.offset = offset
        self.text = text
        super().__init__(f"{message} at offset {offset}")


class UnknownIdentifierError(ExprSyntaxError):
    def __init__(self, name: str, offset: int, allowed: Iterable[str], text: str = ""):
        self.name = name
        self.allowed = tuple(sorted(allowed))
        ExprError.__init__(
            self,
            f"unknown identifier {name!r} at offset {offset}; allowed: "
            + ", ".join(self.allowed),
        )
        self.offset = offset
        self.text = text


class UnboundVariableError(ExprError):
    pass


class ExprDomainError(ExprError):
    def __init__(self, message: str, subexpr: str = ""):
        self.subexpr = subexpr
        super().__init__(f"{message} in '{subexpr}'" if subexpr else message)


class ExprOverflowError(ExprError):
    pass


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

class Expr:
    """Immutable expression tree node."""

    __slots__ = ()

    # precedence used by render(); atoms bind tightest
    prec = 100

    @property
    def variables(self) -> frozenset:
        return frozenset(_free_vars(self))

    def __call__(self, *args: float, **bindings: float) -> float:
        if args:
            names = sorted(self.variables)
            if len(args) != 1 or len(names) > 1:
                raise TypeError("positional call needs an expression in at most one variable")
            bindings = {names[0] if names else "t": args[0]}
        return evaluate(self, bindings)

    def __str__(self) -> str:
        return render(self)

    def diff(self, var: str = "t") -> "Expr":
        return diff(self, var)

    def subs(self, var: str, value: "Expr | float") -> "Expr":
        return substitute(self, {var: as_expr(value)})

    def function(self, var: str | None = None, backend: str = "math") -> Callable:
        """Compiled single-argument function of ``var``.

        ``backend`` is ``"math"`` (scalar floats), ``"numpy"`` (arrays, invalid
        points become nan/inf) or ``"mpmath"``.
        """
        names = sorted(self.variables)
        if var is None:
            var = names[0] if names else "t"
        extra = set(names) - {var}
        if extra:
            raise UnboundVariableError(f"variables {sorted(extra)} not bound")
        return _compiled(self, (var,), backend)

    def vectorized(self, var: str | None = None) -> Callable[[np.ndarray], np.ndarray]:
        """Array function that falls back to mpmath at non-finite points.

        Overflowing intermediates such as ``exp(2*t)/exp(2*t)`` at large
        ``t`` are recomputed in extended range; genuine domain errors raise
        :class:`ExprDomainError`.
        """
        return _RobustArrayFunction(self, var)

    # operator sugar for building integrands programmatically
    def __add__(self, other): return BinOp("+", self, as_expr(other))
    def __radd__(self, other): return BinOp("+", as_expr(other), self)
    def __sub__(self, other): return BinOp("-", self, as_expr(other))
    def __rsub__(self, other): return BinOp("-", as_expr(other), self)
    def __mul__(self, other): return BinOp("*", self, as_expr(other))
    def __rmul__(self, other): return BinOp("*", as_expr(other), self)
    def __truediv__(self, other): return BinOp("/", self, as_expr(other))
    def __rtruediv__(self, other): return BinOp("/", as_expr(other), self)
    def __pow__(self, other): return Pow(self, as_expr(other))
    def __neg__(self): return Neg(self)


@dataclass(frozen=True, eq=True)
class Num(Expr):
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))


@dataclass(frozen=True, eq=True)
class Const(Expr):
    name: str

    @property
    def value(self) -> float:
        return CONSTANTS[self.name]


@dataclass(frozen=True, eq=True)
class Var(Expr):
    name: str


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    arg: Expr
    prec = 30


@dataclass(frozen=True, eq=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    @property
    def prec(self) -> int:  # type: ignore[override]
        return 10 if self.op in "+-" else 20


@dataclass(frozen=True, eq=True)
class Pow(Expr):
    base: Expr
    exponent: Expr
    prec = 40


@dataclass(frozen=True, eq=True)
class Call(Expr):
    func: str
    arg: Expr


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, Fraction):
        if x.denominator == 1:
            return Num(x.numerator)
        return BinOp("/", Num(x.numerator), Num(x.denominator))
    if isinstance(x, (int, float, np.floating, np.integer)):
        return Num(float(x))
    if isinstance(x, str):
        return parse(x)
    raise TypeError(f"cannot convert {type(x).__name__} to Expr")


def _free_vars(e: Expr):
    if isinstance(e, Var):
        yield e.name
    elif isinstance(e, Neg):
        yield from _free_vars(e.arg)
    elif isinstance(e, BinOp):
        yield from _free_vars(e.left)
        yield from _free_vars(e.right)
    elif isinstance(e, Pow):
        yield from _free_vars(e.base)
        yield from _free_vars(e.exponent)
    elif isinstance(e, Call):
        yield from _free_vars(e.arg)


def rational_value(e: Expr) -> Fraction | None:
    """Exact rational value of a literal exponent such as ``5/3`` or ``-2``."""
    if isinstance(e, Num):
        if e.value.is_integer():
            return Fraction(int(e.value))
        return None
    if isinstance(e, Neg):
        r = rational_value(e.arg)
        return None if r is None else -r
    if isinstance(e, BinOp) and e.op == "/":
        a, b = rational_value(e.left), rational_value(e.right)
        if a is not None and b is not None and b != 0 and a.denominator == 1 and b.denominator == 1:
            return a / b
    return None


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^(),]))"
)


def _tokenize(text: str):
    pos = 0
    tokens = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            bad = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {text[bad]!r}", bad, text)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, allowed: frozenset):
        self.text = text
        self.allowed = allowed
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, pos = self.take()
        if val != value:
            found = "end of input" if kind == "end" else repr(val)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", pos, self.text)

    def parse(self) -> Expr:
        e = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {val!r}", pos, self.text)
        return e

    def expr(self) -> Expr:
        left = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            left = BinOp(op, left, self.term())
        return left

    def term(self) -> Expr:
        left = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            left = BinOp(op, left, self.unary())
        return left

    def unary(self) -> Expr:
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return Neg(self.unary())
        if kind == "op" and val == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, val, _ = self.peek()
        if kind == "op" and val in ("^", "**"):
            self.take()
            return Pow(base, self.unary())
        return base

    def atom(self) -> Expr:
        kind, val, pos = self.take()
        if kind == "num":
            return Num(float(val))
        if kind == "name":
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(val, arg)
            if val in CONSTANTS:
                return Const(val)
            if val in self.allowed:
                return Var(val)
            raise UnknownIdentifierError(
                val, pos, set(self.allowed) | set(CONSTANTS) | set(FUNCTIONS), self.text
            )
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect(")")
            return e
        found = "end of input" if kind == "end" else repr(val)
        raise ExprSyntaxError(f"unexpected {found}", pos, self.text)


def parse(text: str, variables: Iterable[str] = VARIABLES) -> Expr:
    """Parse ``text`` into an :class:`Expr`.

    Only names in ``variables`` (plus ``pi``, ``e`` and the built-in
    functions) are accepted, so ``parse("u*t", variables=("t",))`` fails.
    """
    if not isinstance(text, str) or not text.strip():
        raise ExprSyntaxError("empty expression", 0, text if isinstance(text, str) else "")
    return _Parser(text, frozenset(variables)).parse()


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def _num_str(x: float) -> str:
    if x.is_integer() and abs(x) < 1e15:
        s = str(int(x))
    else:
        s = repr(x)
    return f"({s})" if x < 0 or s.startswith("-") else s


def render(e: Expr) -> str:
    """Text form that parses back to an equivalent tree."""
    if isinstance(e, Num):
        return _num_str(e.value)
    if isinstance(e, Const):
        return e.name
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({render(e.arg)})"
    if isinstance(e, Neg):
        inner = render(e.arg)
        if e.arg.prec <= Neg.prec:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, Pow):
        b = render(e.base)
        if e.base.prec <= Pow.prec:
            b = f"({b})"
        x = render(e.exponent)
        if e.exponent.prec < 100:
            x = f"({x})"
        return f"{b}^{x}"
    if isinstance(e, BinOp):
        left = render(e.left)
        if e.left.prec < e.prec:
            left = f"({left})"
        right = render(e.right)
        # parenthesise equal precedence on the right so the tree shape round-trips
        if e.right.prec <= e.prec:
            right = f"({right})"
        return f"{left} {e.op} {right}" if e.op in "+-" else f"{left}{e.op}{right}"
    raise TypeError(type(e).__name__)


# ---------------------------------------------------------------------------
# Compilation / evaluation
# ---------------------------------------------------------------------------

def _is_int(x: float) -> bool:
    return float(x).is_integer()


def _m_pow(a, b):
    if a < 0 and not _is_int(b):
        raise ValueError("negative base with non-integer exponent")
    return float(a) ** b


def _m_rpow(a, k, q):
    if q % 2 == 1 and a < 0:
        mag = (-a) ** (k / q)
        return -mag if k % 2 else mag
    if a < 0:
        raise ValueError("negative base with even-root exponent")
    return float(a) ** (k / q)


def _m_cbrt(x):
    if x < 0:
        return -((-x) ** (1.0 / 3.0))
    return x ** (1.0 / 3.0)


def _m_div(a, b):
    return a / b


_MATH_NS = {
    "_sin": math.sin, "_cos": math.cos, "_exp": math.exp, "_ln": math.log,
    "_sqrt": math.sqrt, "_abs": abs, "_cbrt": _m_cbrt,
    "_pow": _m_pow, "_rpow": _m_rpow, "_pi": math.pi, "_e": math.e,
}


def _n_float(a):
    a = np.asarray(a)
    return a if a.dtype.kind == "f" else a.astype(float)


def _n_ipow(a, n: int):
    """Integer power by repeated squaring (much faster than np.power on floats)."""
    if n < 0:
        return 1.0 / _n_ipow(a, -n)
    result = None
    base = a
    while n:
        if n & 1:
            result = base if result is None else result * base
        n >>= 1
        if n:
            base = base * base
    return np.ones_like(a) if result is None else result


def _n_rpow(a, k, q):
    a = _n_float(a)
    root = {2: np.sqrt, 3: np.cbrt}.get(q)
    if root is not None and abs(k) <= 16:
        mag = _n_ipow(root(np.abs(a)), k)
    else:
        mag = np.abs(a) ** (k / q)
    if q % 2 == 1:
        return np.where(a < 0, -mag if k % 2 else mag, mag)
    return np.where(a < 0, np.nan, mag)


def _n_ln(x):
    x = _n_float(x)
    return np.where(x > 0, np.log(np.where(x > 0, x, 1.0)), np.nan)


def _n_pow(a, b):
    a = _n_float(a)
    if np.ndim(b) == 0 and float(b).is_integer() and abs(b) <= 16:
        return _n_ipow(a, int(b))
    return np.power(a, b)


_NUMPY_NS = {
    "_sin": np.sin, "_cos": np.cos, "_exp": np.exp,
    "_ln": lambda x: _n_ln(x),
    "_sqrt": np.sqrt, "_abs": np.abs, "_cbrt": np.cbrt,
    "_pow": _n_pow, "_rpow": _n_rpow, "_pi": math.pi, "_e": math.e,
}


def _mp_guard_pos(fn, strict):
    def wrapped(x):
        if x < 0 or (strict and x == 0):
            raise ValueError("math domain error")
        return fn(x)
    return wrapped


def _mp_pow(a, b):
    a, b = mpmath.mpf(a), mpmath.mpf(b)
    if a < 0 and b != mpmath.floor(b):
        raise ValueError("negative base with non-integer exponent")
    if a == 0 and b < 0:
        raise ZeroDivisionError("zero to a negative power")
    return a ** b


def _mp_rpow(a, k, q):
    a = mpmath.mpf(a)
    if a == 0 and k < 0:
        raise ZeroDivisionError("zero to a negative power")
    if a < 0:
        if q % 2 == 0:
            raise ValueError("negative base with even-root exponent")
        mag = (-a) ** (mpmath.mpf(k) / q)
        return -mag if k % 2 else mag
    return a ** (mpmath.mpf(k) / q)


def _mp_div(a, b):
    if b == 0:
        raise ZeroDivisionError("division by zero")
    return mpmath.mpf(a) / b


_MPMATH_NS = {
    "_sin": mpmath.sin, "_cos": mpmath.cos, "_exp": mpmath.exp,
    "_ln": _mp_guard_pos(mpmath.log, True),
    "_sqrt": _mp_guard_pos(mpmath.sqrt, False),
    "_abs": abs,
    "_cbrt": lambda x: mpmath.sign(x) * mpmath.cbrt(abs(mpmath.mpf(x))),
    "_pow": _mp_pow, "_rpow": _mp_rpow, "_pi": mpmath.pi, "_e": mpmath.e,
    "_div": _mp_div,
}

_BACKENDS = {"math": _MATH_NS, "numpy": _NUMPY_NS, "mpmath": _MPMATH_NS}


def _codegen(e: Expr, backend: str) -> str:
    if isinstance(e, Num):
        if backend == "mpmath":
            return f"_mpf({e.value!r})"
        return repr(e.value)
    if isinstance(e, Const):
        return f"_{e.name}"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{_codegen(e.arg, backend)})"
    if isinstance(e, Call):
        return f"_{e.func}({_codegen(e.arg, backend)})"
    if isinstance(e, Pow):
        r = rational_value(e.exponent)
        b = _codegen(e.base, backend)
        if r is not None and r.denominator != 1:
            return f"_rpow({b}, {r.numerator}, {r.denominator})"
        if r is not None and backend == "math":
            return f"({b} ** {float(r)!r})"
        return f"_pow({b}, {_codegen(e.exponent, backend)})"
    if isinstance(e, BinOp):
        a, b = _codegen(e.left, backend), _codegen(e.right, backend)
        if e.op == "/" and backend == "mpmath":
            return f"_div({a}, {b})"
        return f"({a} {e.op} {b})"
    raise TypeError(type(e).__name__)


_CACHE: dict = {}


def _compiled(e: Expr, args: tuple, backend: str) -> Callable:
    key = (e, args, backend)
    fn = _CACHE.get(key)
    if fn is None:
        src = f"lambda {', '.join(args) or '_unused=None'}: {_codegen(e, backend)}"
        ns = dict(_BACKENDS[backend])
        ns["_mpf"] = mpmath.mpf
        fn = eval(compile(src, "<expr>", "eval"), ns)  # noqa: S307 - source is generated from the AST
        if len(_CACHE) > 4096:
            _CACHE.clear()
        _CACHE[key] = fn
    return fn


def _walk(e: Expr, env: Mapping[str, float]) -> float:
    """Node-by-node evaluation that pinpoints the failing subexpression."""
    try:
        if isinstance(e, Num):
            return e.value
        if isinstance(e, Const):
            return e.value
        if isinstance(e, Var):
            return float(env[e.name])
        if isinstance(e, Neg):
            return -_walk(e.arg, env)
        if isinstance(e, Call):
            x = _walk(e.arg, env)
            return _MATH_NS["_" + e.func](x)
        if isinstance(e, Pow):
            b = _walk(e.base, env)
            r = rational_value(e.exponent)
            if r is not None and r.denominator != 1:
                return _m_rpow(b, r.numerator, r.denominator)
            return _m_pow(b, _walk(e.exponent, env))
        if isinstance(e, BinOp):
            a, b = _walk(e.left, env), _walk(e.right, env)
            return {"+": a + b, "-": a - b, "*": a * b}[e.op] if e.op != "/" else a / b
    except ExprError:
        raise
    except ZeroDivisionError:
        raise ExprDomainError("division by zero", render(e)) from None
    except OverflowError:
        raise ExprOverflowError(f"overflow in '{render(e)}'") from None
    except ValueError as exc:
        raise ExprDomainError(str(exc), render(e)) from None
    raise TypeError(type(e).__name__)


def evaluate(e: Expr | str, bindings: Mapping[str, float] | None = None, **kw: float) -> float:
    """Evaluate ``e`` in IEEE double precision.

    >>> evaluate("sin(ln(t))", t=1.0)
    0.0
    """
    e = as_expr(e)
    env = dict(bindings or {})
    env.update(kw)
    names = tuple(sorted(e.variables))
    missing = [n for n in names if n not in env]
    if missing:
        raise UnboundVariableError(f"unbound variable(s): {', '.join(missing)}")
    fn = _compiled(e, names, "math")
    try:
        return float(fn(*(env[n] for n in names)))
    except (ValueError, ZeroDivisionError, OverflowError, TypeError):
        return float(_walk(e, env))


class _RobustArrayFunction:
    def __init__(self, e: Expr, var: str | None):
        names = sorted(e.variables)
        if var is None:
            var = names[0] if names else "t"
        if set(names) - {var}:
            raise UnboundVariableError(f"variables {sorted(set(names) - {var})} not bound")
        self.expr = e
        self.var = var
        self._np = _compiled(e, (var,), "numpy")
        self._mp = _compiled(e, (var,), "mpmath")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        try:
            with np.errstate(all="ignore", under="raise", over="raise"):
                y = np.asarray(self._np(x), dtype=float)
        except FloatingPointError:
            # an intermediate overflowed or went subnormal: redo in extended precision, which keeps
            # exp(2t)*exp(-2t)-style products accurate well past the double range
            with np.errstate(all="ignore"):
                y = np.asarray(self._np(x.astype(np.longdouble)), dtype=float)
        y = np.broadcast_to(y, x.shape).copy()
        bad = ~np.isfinite(y)
        if bad.any():
            for idx in zip(*np.nonzero(bad)) if y.ndim else [()]:
                y[idx] = self.scalar_mp(float(x[idx]))
        return y if y.ndim else float(y)

    def scalar_mp(self, x: float) -> float:
        try:
            return float(self._mp(mpmath.mpf(x)))
        except (ValueError, ZeroDivisionError, TypeError):
            _walk(self.expr, {self.var: x})  # raises with the offending subexpression
            raise ExprDomainError("evaluation failed", render(self.expr)) from None


# ---------------------------------------------------------------------------
# Substitution and differentiation
# ---------------------------------------------------------------------------

def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, (Num, Const)):
        return e
    if isinstance(e, Neg):
        return Neg(substitute(e.arg, mapping))
    if isinstance(e, BinOp):
        return BinOp(e.op, substitute(e.left, mapping), substitute(e.right, mapping))
    if isinstance(e, Pow):
        return Pow(substitute(e.base, mapping), substitute(e.exponent, mapping))
    if isinstance(e, Call):
        return Call(e.func, substitute(e.arg, mapping))
    raise TypeError(type(e).__name__)


def _is_num(e: Expr, value: float | None = None) -> bool:
    return isinstance(e, Num) and (value is None or e.value == value)


def _add(a: Expr, b: Expr) -> Expr:
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    return BinOp("+", a, b)


def _sub(a: Expr, b: Expr) -> Expr:
    if _is_num(b, 0.0):
        return a
    if _is_num(a, 0.0):
        return Neg(b)
    return BinOp("-", a, b)


def _mul(a: Expr, b: Expr) -> Expr:
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return Num(0.0)
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    return BinOp("*", a, b)


def _div(a: Expr, b: Expr) -> Expr:
    if _is_num(a, 0.0):
        return Num(0.0)
    if _is_num(b, 1.0):
        return a
    return BinOp("/", a, b)


def _neg(a: Expr) -> Expr:
    if _is_num(a):
        return Num(-a.value)
    return Neg(a)


def diff(e: Expr | str, var: str = "t") -> Expr:
    """Exact symbolic derivative of ``e`` with respect to ``var``.

    Only trivial constant folding is applied; tests compare values.
    """
    e = as_expr(e)
    if var not in e.variables:
        return Num(0.0)
    if isinstance(e, Var):
        return Num(1.0)
    if isinstance(e, Neg):
        return _neg(diff(e.arg, var))
    if isinstance(e, BinOp):
        da, db = diff(e.left, var), diff(e.right, var)
        if e.op == "+":
            return _add(da, db)
        if e.op == "-":
            return _sub(da, db)
        if e.op == "*":
            return _add(_mul(da, e.right), _mul(e.left, db))
        # quotient rule
        num = _sub(_mul(da, e.right), _mul(e.left, db))
        return _div(num, Pow(e.right, Num(2.0)))
    if isinstance(e, Pow):
        base, ex = e.base, e.exponent
        if var not in ex.variables:
            r = rational_value(ex)
            db = diff(base, var)
            if r is not None:
                r1 = r - 1
                if r1 == 0:
                    return _mul(as_expr(r), db)
                return _mul(_mul(as_expr(r), Pow(base, as_expr(r1))), db)
            return _mul(_mul(ex, Pow(base, _sub(ex, Num(1.0)))), db)
        # general case: d(b^x) = b^x (x' ln b + x b'/b)
        term = _add(_mul(diff(ex, var), Call("ln", base)), _div(_mul(ex, diff(base, var)), base))
        return _mul(e, term)
    if isinstance(e, Call):
        x = e.arg
        dx = diff(x, var)
        f = e.func
        if f == "sin":
            outer = Call("cos", x)
        elif f == "cos":
            outer = Neg(Call("sin", x))
        elif f == "exp":
            outer = e
        elif f == "ln":
            return _div(dx, x)
        elif f == "sqrt":
            return _div(dx, _mul(Num(2.0), e))
        elif f == "abs":
            # x/|x| is undefined at 0, which surfaces as a domain error on evaluation
            outer = BinOp("/", x, e)
        elif f == "cbrt":
            return _div(dx, _mul(Num(3.0), Pow(e, Num(2.0))))
        else:  # pragma: no cover - parser forbids other names
            raise ExprError(f"unknown function {f}")
        return _mul(outer, dx)
    raise TypeError(type(e).__name__)
