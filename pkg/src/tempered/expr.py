"""A small expression language for composite generalized functions.

Grammar::

    expr  := term (('+' | '-') term)*
    term  := unary (('*' | 'conv') unary)*
    unary := '-' unary | atom
    atom  := NUMBER | IDENT[':' PARAM] | 'D' '(' expr ')' | 'F' '(' expr ')'
           | 'Finv' '(' expr ')' | '(' expr ')'

Identifiers: delta, delta:a, one, heaviside, xplus:p, dprime, hermite:k,
abs:a, sgn:a, zero, x.  Classical distributions enter through their
embedding; ``x`` is the polynomial multiplier.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

from .algebra import (
    seq_add, seq_convolve, seq_derive, seq_fourier, seq_mul, seq_mul_poly, seq_scale,
)
from .dist import CoefficientStream, embed, hermite_stream, stream_classic, stream_general
from .gauss import GaussianPolySum
from .precision import to_fraction
from .sequences import RepSequence

_TOKEN = re.compile(r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][-+]?\d+)?)"
                    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*(?::[-+]?[0-9./]+)?)"
                    r"|(?P<op>[-+*()]))")


class ExprError(ValueError):
    pass


def tokenize(text: str) -> list[tuple[str, str]]:
    pos, out = 0, []
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ExprError(f"unexpected character at {pos}: {text[pos:pos + 10]!r}")
        kind = m.lastgroup
        out.append((kind, m.group(kind)))
        pos = m.end()
    return out


@dataclass
class Value:
    """Sequence, plain polynomial (x-multiplier) or number."""

    kind: str  # "seq" | "poly" | "num"
    obj: object
    text: str


def _param(ident: str, name: str) -> Fraction | None:
    if ":" not in ident:
        return None
    try:
        return to_fraction(ident.split(":", 1)[1])
    except (ValueError, ZeroDivisionError) as exc:
        raise ExprError(f"bad parameter in {ident!r}") from exc


def stream_for(ident: str) -> CoefficientStream:
    """Coefficient stream named by an identifier (delta, xplus:1, ...)."""
    name = ident.split(":", 1)[0]
    p = _param(ident, name)
    if name == "delta":
        return stream_classic("delta", a=p or 0)
    if name == "one":
        return stream_classic("one")
    if name == "heaviside":
        return stream_classic("heaviside")
    if name == "xplus":
        if p is None:
            raise ExprError("xplus needs a parameter, e.g. xplus:1")
        return stream_classic("xplus", p=p)
    if name == "dprime":
        return stream_classic("delta_prime")
    if name == "hermite":
        if p is None or p.denominator != 1 or p < 0:
            raise ExprError("hermite needs a non-negative integer, e.g. hermite:3")
        return hermite_stream(int(p))
    if name == "abs":
        return stream_general("abs", a=p or 0)
    if name == "sgn":
        return stream_general("sgn", a=p or 0)
    raise ExprError(f"unknown identifier {ident!r}")


class _Parser:
    def __init__(self, text: str, backend: str):
        self.toks = tokenize(text)
        self.i = 0
        self.backend = backend

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None)

    def take(self, want: str | None = None):
        tok = self.peek()
        if tok[0] is None:
            raise ExprError("unexpected end of expression")
        if want is not None and tok[1] != want:
            raise ExprError(f"expected {want!r}, got {tok[1]!r}")
        self.i += 1
        return tok

    def parse(self) -> Value:
        v = self.expr()
        if self.i != len(self.toks):
            raise ExprError(f"trailing input at token {self.peek()[1]!r}")
        return v

    def expr(self) -> Value:
        v = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            w = self.term()
            v = _add(v, w if op == "+" else _neg(w))
        return v

    def term(self) -> Value:
        v = self.unary()
        while True:
            tok = self.peek()
            if tok[1] == "*":
                self.take()
                v = _mul(v, self.unary())
            elif tok == ("ident", "conv"):
                self.take()
                w = self.unary()
                if v.kind != "seq" or w.kind != "seq":
                    raise ExprError("conv needs two generalized functions")
                v = Value("seq", seq_convolve(v.obj, w.obj), f"conv({v.text},{w.text})")
            else:
                return v

    def unary(self) -> Value:
        if self.peek()[1] == "-":
            self.take()
            return _neg(self.unary())
        return self.atom()

    def atom(self) -> Value:
        kind, text = self.take()
        if kind == "num":
            return Value("num", to_fraction(text), text)
        if text == "(":
            v = self.expr()
            self.take(")")
            return v
        if kind == "ident" and text in ("D", "F", "Finv") and self.peek()[1] == "(":
            self.take("(")
            v = self.expr()
            self.take(")")
            if v.kind != "seq":
                raise ExprError(f"{text}(...) needs a generalized function")
            if text == "D":
                return Value("seq", seq_derive(v.obj), f"D({v.text})")
            direction = "forward" if text == "F" else "inverse"
            return Value("seq", seq_fourier(v.obj, self.backend, direction), f"{text}({v.text})")
        if kind == "ident":
            if text == "x":
                return Value("poly", [Fraction(0), Fraction(1)], "x")
            if text == "zero":
                return Value("seq", zero_sequence(), "zero")
            return Value("seq", embed(stream_for(text)), text)
        raise ExprError(f"unexpected token {text!r}")


def zero_sequence() -> RepSequence:
    return RepSequence(lambda n: GaussianPolySum.zero(), "zero", coeffs=lambda n: [])


def _poly_mul(p: list, q: list) -> list:
    out = [Fraction(0)] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        for j, b in enumerate(q):
            out[i + j] += a * b
    return out


def _poly_add(p: list, q: list) -> list:
    n = max(len(p), len(q))
    return [(p[i] if i < len(p) else 0) + (q[i] if i < len(q) else 0) for i in range(n)]


def _neg(v: Value) -> Value:
    if v.kind == "num":
        return Value("num", -v.obj, f"-{v.text}")
    if v.kind == "poly":
        return Value("poly", [-c for c in v.obj], f"-{v.text}")
    return Value("seq", seq_scale(v.obj, -1), f"-{v.text}")


def _add(v: Value, w: Value) -> Value:
    if v.kind == "seq" and w.kind == "seq":
        return Value("seq", seq_add(v.obj, w.obj), f"({v.text}+{w.text})")
    if v.kind != "seq" and w.kind != "seq":
        p = [v.obj] if v.kind == "num" else v.obj
        q = [w.obj] if w.kind == "num" else w.obj
        return Value("poly", _poly_add(p, q), f"({v.text}+{w.text})")
    raise ExprError("cannot add a polynomial or number to a generalized function")


def _mul(v: Value, w: Value) -> Value:
    text = f"{v.text}*{w.text}"
    if v.kind == "seq" and w.kind == "seq":
        return Value("seq", seq_mul(v.obj, w.obj), text)
    if v.kind == "seq":
        v, w = w, v
    if w.kind == "seq":
        if v.kind == "num":
            return Value("seq", seq_scale(w.obj, v.obj), text)
        return Value("seq", seq_mul_poly(w.obj, v.obj), text)
    if v.kind == "num" and w.kind == "num":
        return Value("num", v.obj * w.obj, text)
    p = [v.obj] if v.kind == "num" else v.obj
    q = [w.obj] if w.kind == "num" else w.obj
    return Value("poly", _poly_mul(p, q), text)


def parse_expr(text: str, backend: str = "analytic") -> RepSequence:
    """Parse an expression into a representative sequence."""
    v = _Parser(text, backend).parse()
    if v.kind != "seq":
        raise ExprError("expression must denote a generalized function")
    seq = v.obj
    seq.provenance = v.text
    return seq
