"""Scalar expressions over state variables ``x1 ... xn``.

Expressions are immutable trees built from the node classes below.  They
can be parsed from text, printed back (``parse(str(e))`` reproduces ``e``
node for node), evaluated with domain checking, evaluated in bulk through
a compiled numpy fast path, and differentiated symbolically.

Grammar (loosest to tightest binding)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?
    atom   := number | name | func '(' expr ')' | '(' expr ')'

so ``-x1^2`` is ``-(x1^2)`` and ``2^3^2`` is ``2^(3^2)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DomainError, ExprSyntaxError, UnknownSymbol, VarOutOfRange

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "tanh", "abs")


class Expr:
    """Base class of all expression nodes."""

    def __str__(self):
        return to_string(self)

    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return sub(self, _coerce(other))

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        return mul(self, _coerce(other))

    def __rmul__(self, other):
        return mul(_coerce(other), self)

    def __truediv__(self, other):
        return div(self, _coerce(other))

    def __rtruediv__(self, other):
        return div(_coerce(other), self)

    def __pow__(self, other):
        return Pow(self, _coerce(other))

    def __neg__(self):
        return neg(self)


@dataclass(frozen=True)
class Const(Expr):
    value: float

    def __post_init__(self):
        v = float(self.value)
        if not math.isfinite(v):
            raise ValueError("constants must be finite")
        if v < 0:
            raise ValueError("negative constants are written Neg(Const(...)); use const()")
        object.__setattr__(self, "value", v + 0.0)  # drops the sign of -0.0


@dataclass(frozen=True)
class Var(Expr):
    index: int

    def __post_init__(self):
        if self.index < 1:
            raise ValueError("variable indices are 1-based")


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class Add(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Sub(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Mul(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Div(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: Expr


@dataclass(frozen=True)
class Call(Expr):
    func: str
    arg: Expr

    def __post_init__(self):
        if self.func not in FUNCTIONS:
            raise ValueError(f"unknown function {self.func!r}")


ZERO = Const(0.0)
ONE = Const(1.0)


def _coerce(value) -> Expr:
    if isinstance(value, Expr):
        return value
    return const(value)


def _is_const(e: Expr, value: float) -> bool:
    return isinstance(e, Const) and e.value == value


# -- smart constructors (identity / zero folding only) ----------------------

def const(value: float) -> Expr:
    value = float(value)
    if value < 0:
        return Neg(Const(-value))
    return Const(value)


def neg(a: Expr) -> Expr:
    if _is_const(a, 0.0):
        return ZERO
    return Neg(a)


def add(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    return Sub(a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return Mul(a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0):
        return ZERO
    if _is_const(b, 1.0):
        return a
    return Div(a, b)


def call(func: str, a: Expr) -> Expr:
    return Call(func, a)


# -- parsing -----------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<id>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),])"
    r")"
)


def _tokenize(text: str):
    pos = 0
    tokens = []
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str, dimension: int, names: Sequence[str] | None):
        self.text = text
        self.dimension = dimension
        self.names = list(names) if names is not None else None
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, op: str):
        kind, value, pos = self.peek()
        if kind != "op" or value != op:
            found = "end of input" if kind == "end" else repr(value)
            raise ExprSyntaxError(f"expected {op!r}, found {found}", pos, self.text)
        self.advance()

    def parse(self) -> Expr:
        e = self.expr()
        kind, value, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {value!r}", pos, self.text)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "+-":
                self.advance()
                rhs = self.term()
                e = Add(e, rhs) if value == "+" else Sub(e, rhs)
            else:
                return e

    def term(self) -> Expr:
        e = self.unary()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "*/":
                self.advance()
                rhs = self.unary()
                e = Mul(e, rhs) if value == "*" else Div(e, rhs)
            else:
                return e

    def unary(self) -> Expr:
        kind, value, _ = self.peek()
        if kind == "op" and value == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, value, _ = self.peek()
        if kind == "op" and value == "^":
            self.advance()
            return Pow(base, self.unary())
        return base

    def atom(self) -> Expr:
        kind, value, pos = self.advance()
        if kind == "num":
            return Const(float(value))
        if kind == "id":
            return self.identifier(value, pos)
        if kind == "op" and value == "(":
            e = self.expr()
            self.expect(")")
            return e
        found = "end of input" if kind == "end" else repr(value)
        raise ExprSyntaxError(f"unexpected {found}", pos, self.text)

    def identifier(self, name: str, pos: int) -> Expr:
        if name in FUNCTIONS:
            self.expect("(")
            arg = self.expr()
            self.expect(")")
            return Call(name, arg)
        if self.names is not None:
            if name in self.names:
                return Var(self.names.index(name) + 1)
            raise UnknownSymbol(f"unknown symbol {name!r}", pos, self.text)
        m = re.fullmatch(r"x(\d+)", name)
        if m is None:
            raise UnknownSymbol(f"unknown symbol {name!r}", pos, self.text)
        index = int(m.group(1))
        if index < 1 or index > self.dimension:
            raise VarOutOfRange(
                f"variable {name} out of range for dimension {self.dimension}", pos, self.text
            )
        return Var(index)


def parse(text: str, dimension: int, names: Sequence[str] | None = None) -> Expr:
    """Parse ``text`` into an expression over ``x1 ... x<dimension>``.

    Parameters
    ----------
    text
        Expression source, e.g. ``"-x1*(1 + x1^2) + x2"``.
    dimension
        Number of state variables; ``x<k>`` with ``k > dimension`` raises
        :class:`VarOutOfRange`.
    names
        Optional explicit variable names (``names[k-1]`` maps to ``Var(k)``).
        Used for univariate profile functions written in ``t``.
    """
    if not isinstance(text, str) or not text.strip():
        raise ExprSyntaxError("empty expression", 0, text)
    if names is not None:
        dimension = len(names)
    if dimension < 1:
        raise ValueError("dimension must be positive")
    return _Parser(text, dimension, names).parse()


# -- printing ----------------------------------------------------------------

_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, Pow: 4}
_SYMBOL = {Add: "+", Sub: "-", Mul: "*", Div: "/"}


def _prec(e: Expr) -> int:
    return _PREC.get(type(e), 5)


def _format_number(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_string(e: Expr, names: Sequence[str] | None = None) -> str:
    """Print ``e`` with the minimum parentheses needed to re-parse it exactly."""

    def name_of(index: int) -> str:
        if names is not None:
            return names[index - 1]
        return f"x{index}"

    def wrap(child: Expr, needs: bool) -> str:
        s = go(child)
        return f"({s})" if needs else s

    def go(e: Expr) -> str:
        if isinstance(e, Const):
            return _format_number(e.value)
        if isinstance(e, Var):
            return name_of(e.index)
        if isinstance(e, Call):
            return f"{e.func}({go(e.arg)})"
        if isinstance(e, Neg):
            return "-" + wrap(e.arg, _prec(e.arg) < 3)
        if isinstance(e, Pow):
            return wrap(e.base, _prec(e.base) <= 4) + "^" + wrap(e.exponent, _prec(e.exponent) < 3)
        p = _PREC[type(e)]
        left = wrap(e.left, _prec(e.left) < p)
        right = wrap(e.right, _prec(e.right) <= p)
        return f"{left} {_SYMBOL[type(e)]} {right}"

    return go(e)


# -- traversal ---------------------------------------------------------------

def variables(e: Expr) -> set[int]:
    """Indices of all variables occurring in ``e``."""
    out: set[int] = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            out.add(node.index)
        elif isinstance(node, (Neg, Call)):
            stack.append(node.arg)
        elif isinstance(node, Pow):
            stack.extend((node.base, node.exponent))
        elif not isinstance(node, Const):
            stack.extend((node.left, node.right))
    return out


def substitute(e: Expr, mapping: Mapping[int, Expr]) -> Expr:
    """Replace ``Var(k)`` by ``mapping[k]`` throughout ``e``."""
    if isinstance(e, Const):
        return e
    if isinstance(e, Var):
        return mapping.get(e.index, e)
    if isinstance(e, Neg):
        return Neg(substitute(e.arg, mapping))
    if isinstance(e, Call):
        return Call(e.func, substitute(e.arg, mapping))
    if isinstance(e, Pow):
        return Pow(substitute(e.base, mapping), substitute(e.exponent, mapping))
    return type(e)(substitute(e.left, mapping), substitute(e.right, mapping))


# -- checked scalar evaluation -----------------------------------------------

def evaluate(e: Expr, point: Sequence[float]) -> float:
    """Evaluate ``e`` at ``point`` (``point[k-1]`` is the value of ``x<k>``).

    Raises :class:`DomainError` carrying the offending subexpression for
    division by zero, ``log`` of a non-positive number, ``sqrt`` of a negative
    number, non-real powers and overflow.
    """
    p = [float(v) for v in point]
    for index in variables(e):
        if index > len(p):
            raise ValueError(f"point of length {len(p)} does not cover x{index}")
    try:
        return _eval(e, p)
    except OverflowError as exc:
        raise DomainError(f"overflow: {exc}", e, tuple(p)) from None


def _eval(e: Expr, p: list[float]) -> float:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return p[e.index - 1]
    if isinstance(e, Neg):
        return -_eval(e.arg, p)
    if isinstance(e, Add):
        return _eval(e.left, p) + _eval(e.right, p)
    if isinstance(e, Sub):
        return _eval(e.left, p) - _eval(e.right, p)
    if isinstance(e, Mul):
        return _eval(e.left, p) * _eval(e.right, p)
    if isinstance(e, Div):
        den = _eval(e.right, p)
        if den == 0.0:
            raise DomainError(f"division by zero in {to_string(e)}", e, tuple(p))
        return _eval(e.left, p) / den
    if isinstance(e, Pow):
        b = _eval(e.base, p)
        x = _eval(e.exponent, p)
        if b == 0.0 and x < 0:
            raise DomainError(f"zero raised to a negative power in {to_string(e)}", e, tuple(p))
        if b < 0.0 and not float(x).is_integer():
            raise DomainError(f"negative base with non-integer exponent in {to_string(e)}", e, tuple(p))
        return math.pow(b, x)
    if isinstance(e, Call):
        a = _eval(e.arg, p)
        f = e.func
        if f == "log":
            if a <= 0.0:
                raise DomainError(f"log of non-positive value in {to_string(e)}", e, tuple(p))
            return math.log(a)
        if f == "sqrt":
            if a < 0.0:
                raise DomainError(f"sqrt of negative value in {to_string(e)}", e, tuple(p))
            return math.sqrt(a)
        if f == "abs":
            return abs(a)
        return getattr(math, f)(a)
    raise TypeError(f"not an expression node: {e!r}")


# -- compiled bulk evaluation ------------------------------------------------

def _codegen(e: Expr) -> str:
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Var):
        return f"x[{e.index - 1}]"
    if isinstance(e, Neg):
        return f"(-{_codegen(e.arg)})"
    if isinstance(e, Call):
        return f"np.{'abs' if e.func == 'abs' else e.func}({_codegen(e.arg)})"
    if isinstance(e, Pow):
        if isinstance(e.exponent, Const) and e.exponent.value == 2.0:
            b = _codegen(e.base)
            return f"({b}*{b})"
        return f"np.power({_codegen(e.base)}, {_codegen(e.exponent)})"
    op = _SYMBOL[type(e)]
    return f"({_codegen(e.left)} {op} {_codegen(e.right)})"


def compile_expr(e: Expr) -> Callable[[np.ndarray], np.ndarray]:
    """Compile ``e`` to a numpy function of ``x`` with ``x[k-1]`` the k-th coordinate.

    The compiled function performs no domain checking; non-finite results
    signal a domain problem.  The function is cached on the node.
    """
    fn = getattr(e, "_compiled", None)
    if fn is None:
        src = f"lambda x: {_codegen(e)}"
        fn = eval(compile(src, "<expr>", "eval"), {"np": np})
        object.__setattr__(e, "_compiled", fn)
    return fn


def evaluate_many(e: Expr, points: np.ndarray, check: bool = True) -> np.ndarray:
    """Evaluate ``e`` at every row of ``points`` (shape ``(m, n)``).

    Uses the compiled fast path.  With ``check`` (the default) a non-finite
    result makes the first bad row be re-evaluated with :func:`evaluate` to
    raise a precise :class:`DomainError`; otherwise non-finite values are
    returned as they are.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    fn = compile_expr(e)
    with np.errstate(all="ignore"):
        out = np.broadcast_to(np.asarray(fn(pts.T), dtype=float), (pts.shape[0],)).copy()
    if check and not np.all(np.isfinite(out)):
        k = int(np.flatnonzero(~np.isfinite(out))[0])
        evaluate(e, pts[k])
        raise DomainError(f"non-finite value of {to_string(e)}", e, tuple(pts[k]))
    return out


# -- symbolic differentiation ------------------------------------------------

def differentiate(e: Expr, var: int) -> Expr:
    """Partial derivative of ``e`` with respect to ``x<var>``.

    Only identity and zero folding is applied to the result.  Powers with an
    exponent depending on ``x<var>`` are differentiated as
    ``exp(b*log(a))``, which is valid for ``a > 0``.
    """
    if var < 1:
        raise ValueError("variable indices are 1-based")
    return _diff(e, var)


def _diff(e: Expr, k: int) -> Expr:
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.index == k else ZERO
    if isinstance(e, Neg):
        return neg(_diff(e.arg, k))
    if isinstance(e, Add):
        return add(_diff(e.left, k), _diff(e.right, k))
    if isinstance(e, Sub):
        return sub(_diff(e.left, k), _diff(e.right, k))
    if isinstance(e, Mul):
        return add(mul(_diff(e.left, k), e.right), mul(e.left, _diff(e.right, k)))
    if isinstance(e, Div):
        da, db = _diff(e.left, k), _diff(e.right, k)
        if _is_const(db, 0.0):
            return div(da, e.right)
        return div(sub(mul(da, e.right), mul(e.left, db)), Pow(e.right, Const(2.0)))
    if isinstance(e, Pow):
        a, b = e.base, e.exponent
        da = _diff(a, k)
        if k not in variables(b):
            if isinstance(b, Const):
                lowered = const(b.value - 1.0)
            else:
                lowered = Sub(b, ONE)
            power = a if _is_const(lowered, 1.0) else (ONE if _is_const(lowered, 0.0) else Pow(a, lowered))
            return mul(mul(b, power), da)
        db = _diff(b, k)
        inner = add(mul(db, Call("log", a)), div(mul(b, da), a))
        return mul(e, inner)
    if isinstance(e, Call):
        a = e.arg
        da = _diff(a, k)
        if _is_const(da, 0.0):
            return ZERO
        f = e.func
        if f == "sin":
            outer = Call("cos", a)
        elif f == "cos":
            outer = Neg(Call("sin", a))
        elif f == "exp":
            outer = e
        elif f == "log":
            return div(da, a)
        elif f == "sqrt":
            return div(da, Mul(Const(2.0), e))
        elif f == "tanh":
            outer = Sub(ONE, Pow(e, Const(2.0)))
        elif f == "abs":
            outer = Div(a, e)
        else:  # pragma: no cover - guarded by Call.__post_init__
            raise ValueError(f)
        return mul(outer, da)
    raise TypeError(f"not an expression node: {e!r}")


def gradient(e: Expr, dimension: int) -> list[Expr]:
    return [differentiate(e, k) for k in range(1, dimension + 1)]
