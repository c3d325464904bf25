"""Expression trees over numbers, named constants and state variables.

Supported operators: ``+ - * /``, unary minus, squaring (``x^2``) and ``sqrt``.
:func:`canonical_key` gives a normal form used for structural deduplication.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Union

import numpy as np


class ExprError(ValueError):
    pass


@dataclass(frozen=True)
class Num:
    value: Fraction

    def __post_init__(self) -> None:
        object.__setattr__(self, "value", Fraction(self.value))


@dataclass(frozen=True)
class Sym:
    name: str


@dataclass(frozen=True)
class Neg:
    a: "Expr"


@dataclass(frozen=True)
class Add:
    a: "Expr"
    b: "Expr"


@dataclass(frozen=True)
class Sub:
    a: "Expr"
    b: "Expr"


@dataclass(frozen=True)
class Mul:
    a: "Expr"
    b: "Expr"


@dataclass(frozen=True)
class Div:
    a: "Expr"
    b: "Expr"


@dataclass(frozen=True)
class Square:
    a: "Expr"


@dataclass(frozen=True)
class Sqrt:
    a: "Expr"


Expr = Union[Num, Sym, Neg, Add, Sub, Mul, Div, Square, Sqrt]
_BINARY = {Add: "+", Sub: "-", Mul: "*", Div: "/"}
_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, Square: 4}


# Evaluation ------------------------------------------------------------------


def evaluate(e: Expr, env: Mapping[str, object]):
    """Evaluate with numpy semantics; ``env`` maps every symbol to a float or array."""
    if isinstance(e, Num):
        return float(e.value)
    if isinstance(e, Sym):
        try:
            return env[e.name]
        except KeyError:
            raise ExprError(f"unbound symbol {e.name!r}") from None
    if isinstance(e, Neg):
        return -evaluate(e.a, env)
    if isinstance(e, Square):
        x = evaluate(e.a, env)
        return x * x
    if isinstance(e, Sqrt):
        return np.sqrt(evaluate(e.a, env))
    a = evaluate(e.a, env)
    b = evaluate(e.b, env)
    if isinstance(e, Add):
        return a + b
    if isinstance(e, Sub):
        return a - b
    if isinstance(e, Mul):
        return a * b
    if isinstance(e, Div):
        return np.divide(a, b)
    raise TypeError(f"not an expression: {e!r}")


def symbols(e: Expr) -> frozenset[str]:
    if isinstance(e, Num):
        return frozenset()
    if isinstance(e, Sym):
        return frozenset([e.name])
    if isinstance(e, (Neg, Square, Sqrt)):
        return symbols(e.a)
    return symbols(e.a) | symbols(e.b)


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    if isinstance(e, Sym):
        return mapping.get(e.name, e)
    if isinstance(e, Num):
        return e
    if isinstance(e, (Neg, Square, Sqrt)):
        return type(e)(substitute(e.a, mapping))
    return type(e)(substitute(e.a, mapping), substitute(e.b, mapping))


def size(e: Expr) -> int:
    if isinstance(e, (Num, Sym)):
        return 1
    if isinstance(e, (Neg, Square, Sqrt)):
        return 1 + size(e.a)
    return 1 + size(e.a) + size(e.b)


# Rendering -------------------------------------------------------------------


def _prec(e: Expr) -> int:
    if isinstance(e, Num) and e.value < 0:
        return 3
    return _PREC.get(type(e), 5)


def format_fraction(q: Fraction) -> str:
    if q.denominator == 1:
        return str(q.numerator)
    f = float(q)
    if Fraction(f) == q:
        return repr(f)
    return f"({q.numerator}/{q.denominator})"


def _render(e: Expr, leaf) -> str:
    if isinstance(e, (Num, Sym)):
        return leaf(e)
    if isinstance(e, Sqrt):
        return f"sqrt({_render(e.a, leaf)})"
    if isinstance(e, Neg):
        inner = _render(e.a, leaf)
        return f"-{inner}" if _prec(e.a) >= 3 else f"-({inner})"
    if isinstance(e, Square):
        inner = _render(e.a, leaf)
        return f"{inner}^2" if _prec(e.a) >= 5 else f"({inner})^2"
    p = _PREC[type(e)]
    left = _render(e.a, leaf)
    right = _render(e.b, leaf)
    if _prec(e.a) < p:
        left = f"({left})"
    if _prec(e.b) <= p:
        right = f"({right})"
    return f"{left} {_BINARY[type(e)]} {right}"


def _leaf_text(e: Expr) -> str:
    return e.name if isinstance(e, Sym) else format_fraction(e.value)


def render(e: Expr) -> str:
    return _render(e, _leaf_text)


def c_literal(x: float) -> str:
    text = repr(float(x))
    if not any(ch in text for ch in ".en"):
        text += ".0"
    return f"({text})" if x < 0 else text


def to_c(e: Expr, names: Mapping[str, str], constants: Mapping[str, float]) -> str:
    """C source evaluating ``e`` with the same operation order as :func:`evaluate`."""

    def c(e: Expr) -> str:
        if isinstance(e, Num):
            return c_literal(float(e.value))
        if isinstance(e, Sym):
            if e.name in names:
                return names[e.name]
            return c_literal(constants[e.name])
        if isinstance(e, Neg):
            return f"(-{c(e.a)})"
        if isinstance(e, Square):
            x = c(e.a)
            return f"({x} * {x})"
        if isinstance(e, Sqrt):
            return f"sqrt({c(e.a)})"
        return f"({c(e.a)} {_BINARY[type(e)]} {c(e.b)})"

    return c(e)


# Parsing ---------------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(\d+(?:\.\d*)?(?:[eE][+-]?\d+)?)|([A-Za-z_]\w*)|(\S))")


def _tokenize(text: str) -> list[tuple[str, str]]:
    pos = 0
    out = []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ExprError(f"cannot tokenize {text[pos:]!r}")
        if m.group(1):
            out.append(("num", m.group(1)))
        elif m.group(2):
            out.append(("name", m.group(2)))
        else:
            out.append(("op", m.group(3)))
        pos = m.end()
    return out


class _Parser:
    def __init__(self, text: str) -> None:
        self.toks = _tokenize(text)
        self.i = 0
        self.text = text

    def peek(self) -> tuple[str, str] | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self, value: str | None = None) -> tuple[str, str]:
        tok = self.peek()
        if tok is None or (value is not None and tok[1] != value):
            raise ExprError(f"expected {value or 'token'} in {self.text!r}")
        self.i += 1
        return tok

    def expr(self) -> Expr:
        e = self.term()
        while (tok := self.peek()) and tok[1] in "+-" and tok[0] == "op":
            self.take()
            e = (Add if tok[1] == "+" else Sub)(e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary()
        while (tok := self.peek()) and tok[1] in "*/" and tok[0] == "op":
            self.take()
            e = (Mul if tok[1] == "*" else Div)(e, self.unary())
        return e

    def unary(self) -> Expr:
        tok = self.peek()
        if tok and tok == ("op", "-"):
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        e = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            if self.take()[1] != "2":
                raise ExprError("only squares (^2) are supported")
            e = Square(e)
        return e

    def atom(self) -> Expr:
        kind, val = self.take()
        if kind == "num":
            return Num(Fraction(val))
        if kind == "name":
            if val == "sqrt" and self.peek() == ("op", "("):
                self.take("(")
                e = self.expr()
                self.take(")")
                return Sqrt(e)
            return Sym(val)
        if val == "(":
            e = self.expr()
            self.take(")")
            return e
        raise ExprError(f"unexpected {val!r} in {self.text!r}")


def parse_expr(text: str) -> Expr:
    p = _Parser(text)
    e = p.expr()
    if p.peek() is not None:
        raise ExprError(f"trailing input in {text!r}")
    return e


# Canonical form --------------------------------------------------------------
#
# A linear combination is (constant, {term key: coefficient}); a product is
# (coefficient, {factor key: integer power}).  Keys are strings, so sorting
# them gives a deterministic normal form.


class _DivByZero(Exception):
    pass


def _lc_key(const: Fraction, terms: dict[str, Fraction]) -> str:
    if not terms:
        return f"#{const}"
    if const == 0 and len(terms) == 1:
        ((k, c),) = terms.items()
        if c == 1:
            return k
    body = ",".join(f"{c}:{k}" for k, c in sorted(terms.items()))
    return f"+[{const};{body}]"


def _prod_of_lc(lc) -> tuple[Fraction, dict[str, int]]:
    const, terms = lc
    if not terms:
        return const, {}
    if const == 0 and len(terms) == 1:
        ((k, c),) = terms.items()
        if k.startswith("*["):
            return c, dict(_PROD_FACTORS[k])
        return c, {k: 1}
    # Pull out the first coefficient so x+y and 2x+2y share a factor.
    first = terms[min(terms)]
    scaled = {k: c / first for k, c in terms.items()}
    return first, {_register_sum(const / first, scaled): 1}


_PROD_FACTORS: dict[str, tuple] = {}
_SUM_PARTS: dict[str, tuple] = {}


def _lc_of_prod(coef: Fraction, factors: dict[str, int]):
    factors = {k: p for k, p in factors.items() if p != 0}
    if coef == 0:
        return Fraction(0), {}
    if not factors:
        return coef, {}
    if len(factors) == 1:
        ((k, p),) = factors.items()
        if p == 1:
            if k in _SUM_PARTS:
                const, terms = _SUM_PARTS[k]
                return const * coef, {t: c * coef for t, c in terms}
            return Fraction(0), {k: coef}
    items = tuple(sorted(factors.items()))
    key = "*[" + ",".join(f"{k}^{p}" for k, p in items) + "]"
    _PROD_FACTORS[key] = items
    return Fraction(0), {key: coef}


def _register_sum(const: Fraction, terms: dict[str, Fraction]) -> str:
    key = _lc_key(const, terms)
    if key.startswith("+["):
        _SUM_PARTS[key] = (const, tuple(sorted(terms.items())))
    return key


def _mul(a, b):
    ca, fa = _prod_of_lc(a)
    cb, fb = _prod_of_lc(b)
    f = dict(fa)
    for k, p in fb.items():
        f[k] = f.get(k, 0) + p
    return _lc_of_prod(ca * cb, f)


def _norm(e: Expr):
    if isinstance(e, Num):
        return e.value, {}
    if isinstance(e, Sym):
        return Fraction(0), {e.name: Fraction(1)}
    if isinstance(e, Neg):
        c, t = _norm(e.a)
        return -c, {k: -v for k, v in t.items()}
    if isinstance(e, (Add, Sub)):
        ca, ta = _norm(e.a)
        cb, tb = _norm(e.b)
        sign = 1 if isinstance(e, Add) else -1
        terms = dict(ta)
        for k, v in tb.items():
            terms[k] = terms.get(k, 0) + sign * v
        return ca + sign * cb, {k: v for k, v in terms.items() if v != 0}
    if isinstance(e, Mul):
        return _mul(_norm(e.a), _norm(e.b))
    if isinstance(e, Square):
        a = _norm(e.a)
        return _mul(a, a)
    if isinstance(e, Div):
        cb, fb = _prod_of_lc(_norm(e.b))
        if cb == 0:
            raise _DivByZero
        return _mul(_norm(e.a), _lc_of_prod(1 / cb, {k: -p for k, p in fb.items()}))
    if isinstance(e, Sqrt):
        c, t = _norm(e.a)
        if not t and c >= 0:
            r = _exact_sqrt(c)
            if r is not None:
                return r, {}
        return Fraction(0), {f"sqrt({_register_sum(c, t)})": Fraction(1)}
    raise TypeError(f"not an expression: {e!r}")


def _exact_sqrt(q: Fraction) -> Fraction | None:
    n, d = math.isqrt(q.numerator), math.isqrt(q.denominator)
    if n * n == q.numerator and d * d == q.denominator:
        return Fraction(n, d)
    return None


def canonical_key(e: Expr) -> str | None:
    """Normal form string; ``None`` when ``e`` divides by a structural zero.

    Plus/minus chains are flattened and like terms merged, products are
    flattened with sorted factors and summed integer powers, and numeric
    constants are folded.  ``x - x`` therefore normalizes to ``#0``.
    """
    try:
        const, terms = _norm(e)
    except _DivByZero:
        return None
    # Re-register nested sums under their keys so factors compare equal.
    return _register_sum(const, terms)


def is_structural_zero(e: Expr) -> bool:
    return canonical_key(e) == "#0"
