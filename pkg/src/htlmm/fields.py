"""Separable (sum-of-products) coefficient fields and their text syntax.

A field is a sum of terms ``weight * f_1(a_1 x_m1 + b_1) * f_2(...) * ...``
where each ``f`` is ``sin`` or ``cos`` of an affine function of a single
variable.  The parser accepts ordinary arithmetic over such factors and
expands products and integer powers, so ``5*cos(x6)^2 + 6`` and
``1/(4*pi^2) * (1 - cos(2x1)*cos(2x2))`` are both valid.  Variables are
written ``x1 .. xd`` (1-based); internally modes are 0-based.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True, order=True)
class Factor:
    mode: int
    kind: str  # "sin" | "cos"
    a: float = 1.0
    b: float = 0.0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        fn = np.sin if self.kind == "sin" else np.cos
        return fn(self.a * x + self.b)

    def __str__(self) -> str:
        arg = f"x{self.mode + 1}" if self.a == 1.0 else f"{self.a:g}*x{self.mode + 1}"
        if self.b:
            arg += f"{self.b:+g}"
        return f"{self.kind}({arg})"


@dataclass(frozen=True)
class FieldTerm:
    weight: float
    factors: tuple[Factor, ...] = ()

    @property
    def modes(self) -> tuple[int, ...]:
        return tuple(sorted({f.mode for f in self.factors}))

    def mode_vector(self, mode: int, x: np.ndarray) -> np.ndarray | None:
        """Product of this term's factors on ``mode``; ``None`` if it has none."""
        fs = [f for f in self.factors if f.mode == mode]
        if not fs:
            return None
        out = np.ones_like(x, dtype=float)
        for f in fs:
            out = out * f(x)
        return out

    def __str__(self) -> str:
        parts = [f"{self.weight:.17g}"] + [str(f) for f in self.factors]
        return "*".join(parts)


class SeparableField:
    """Immutable sum of :class:`FieldTerm`; terms with identical factors merge."""

    def __init__(self, terms: Iterable[FieldTerm] = ()):
        merged: dict[tuple[Factor, ...], float] = {}
        for term in terms:
            key = tuple(sorted(term.factors))
            merged[key] = merged.get(key, 0.0) + float(term.weight)
        self.terms: tuple[FieldTerm, ...] = tuple(
            FieldTerm(w, k) for k, w in merged.items() if w != 0.0
        )

    @classmethod
    def constant(cls, c: float) -> "SeparableField":
        return cls([FieldTerm(float(c))])

    @classmethod
    def parse(cls, text: str) -> "SeparableField":
        return _Parser(text).parse()

    @property
    def is_constant(self) -> bool:
        return all(not t.factors for t in self.terms)

    @property
    def constant_value(self) -> float:
        if not self.is_constant:
            raise ValueError("field is not constant")
        return sum(t.weight for t in self.terms)

    @property
    def max_mode(self) -> int:
        return max((f.mode for t in self.terms for f in t.factors), default=-1)

    def __add__(self, other: "SeparableField") -> "SeparableField":
        return SeparableField(self.terms + other.terms)

    def __neg__(self) -> "SeparableField":
        return self.scaled(-1.0)

    def __sub__(self, other: "SeparableField") -> "SeparableField":
        return self + (-other)

    def __mul__(self, other: "SeparableField") -> "SeparableField":
        return SeparableField(
            FieldTerm(s.weight * o.weight, s.factors + o.factors)
            for s in self.terms
            for o in other.terms
        )

    def scaled(self, alpha: float) -> "SeparableField":
        return SeparableField(FieldTerm(alpha * t.weight, t.factors) for t in self.terms)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SeparableField):
            return NotImplemented
        mine = {t.factors: t.weight for t in self.terms}
        theirs = {t.factors: t.weight for t in other.terms}
        return mine == theirs

    def __hash__(self) -> int:
        return hash(frozenset((t.factors, t.weight) for t in self.terms))

    def __repr__(self) -> str:
        return f"SeparableField({str(self)!r})"

    def __str__(self) -> str:
        return " + ".join(str(t) for t in self.terms) if self.terms else "0"

    def evaluate(self, nodes: Sequence[np.ndarray]) -> np.ndarray:
        """Dense samples on the tensor grid spanned by per-mode ``nodes``."""
        shape = tuple(len(x) for x in nodes)
        out = np.zeros(shape)
        for term in self.terms:
            vecs = [
                v if (v := term.mode_vector(m, x)) is not None else np.ones(len(x))
                for m, x in enumerate(nodes)
            ]
            t = term.weight * vecs[0]
            for v in vecs[1:]:
                t = np.multiply.outer(t, v)
            out = out + t.reshape(shape)
        return out


# ---------------------------------------------------------------------------
# parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)
_ARG = re.compile(
    r"^\s*(?P<a>[+-]?\s*(?:\d+\.?\d*|\.\d+)?(?:[eE][+-]?\d+)?)\s*\*?\s*x(?P<m>\d+)"
    r"\s*(?:(?P<sign>[+-])\s*(?P<b>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?))?\s*$"
)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, msg: str) -> ValueError:
        return ValueError(f"{msg} at column {self.pos + 1} in {self.text!r}")

    def peek(self) -> tuple[str, str] | None:
        m = _TOKEN.match(self.text, self.pos)
        if m is None or m.end() == self.pos:
            if self.text[self.pos :].strip():
                raise self.error("unexpected character")
            return None
        kind = m.lastgroup
        return kind, m.group(kind)

    def take(self) -> tuple[str, str]:
        m = _TOKEN.match(self.text, self.pos)
        if m is None:
            raise self.error("unexpected end of expression")
        self.pos = m.end()
        return m.lastgroup, m.group(m.lastgroup)

    def parse(self) -> SeparableField:
        out = self.expr()
        if self.peek() is not None:
            raise self.error("trailing input")
        return out

    def expr(self) -> SeparableField:
        out = self.term()
        while (tok := self.peek()) is not None and tok in (("op", "+"), ("op", "-")):
            self.take()
            rhs = self.term()
            out = out + rhs if tok[1] == "+" else out - rhs
        return out

    def term(self) -> SeparableField:
        out = self.unary()
        while (tok := self.peek()) is not None and tok in (("op", "*"), ("op", "/")):
            self.take()
            rhs = self.unary()
            if tok[1] == "*":
                out = out * rhs
            else:
                if not rhs.is_constant or rhs.constant_value == 0.0:
                    raise self.error("can only divide by a nonzero constant")
                out = out.scaled(1.0 / rhs.constant_value)
        return out

    def unary(self) -> SeparableField:
        tok = self.peek()
        if tok == ("op", "-"):
            self.take()
            return -self.unary()
        if tok == ("op", "+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> SeparableField:
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            kind, val = self.take()
            if kind != "num" or not float(val).is_integer() or float(val) < 0:
                raise self.error("exponent must be a non-negative integer")
            out = SeparableField.constant(1.0)
            for _ in range(int(float(val))):
                out = out * base
            return out
        return base

    def atom(self) -> SeparableField:
        kind, val = self.take()
        if kind == "num":
            return SeparableField.constant(float(val))
        if kind == "op" and val == "(":
            inner = self.expr()
            self.expect(")")
            return inner
        if kind == "name":
            if val == "pi":
                return SeparableField.constant(math.pi)
            if val == "const":
                return SeparableField.constant(1.0)
            if val in ("sin", "cos"):
                self.expect("(")
                close = self.text.find(")", self.pos)
                if close < 0:
                    raise self.error("unclosed argument")
                arg = self.text[self.pos : close]
                m = _ARG.match(arg)
                if m is None:
                    raise self.error(f"argument {arg!r} is not of the form a*xk+b (non-separable)")
                a_txt = m.group("a").replace(" ", "")
                a = float(a_txt) if a_txt not in ("", "+", "-") else (-1.0 if a_txt == "-" else 1.0)
                b = float(m.group("b")) if m.group("b") else 0.0
                if m.group("sign") == "-":
                    b = -b
                mode = int(m.group("m")) - 1
                if mode < 0:
                    raise self.error("variables are numbered from x1")
                self.pos = close + 1
                return SeparableField([FieldTerm(1.0, (Factor(mode, val, a, b),))])
            raise self.error(f"unknown name {val!r}")
        raise self.error(f"unexpected token {val!r}")

    def expect(self, op: str) -> None:
        kind, val = self.take()
        if (kind, val) != ("op", op):
            raise self.error(f"expected {op!r}")
