"""Expression trees, their parser, and the problem-file loader.

The expression language is intentionally small::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom ("^" INTEGER)*
    atom   := NUMBER | NAME | FUNC "(" expr ")" | "(" expr ")"

with ``FUNC`` one of ``sin cos exp log sqrt``. Binding strength is
``^`` > unary minus > ``* /`` > ``+ -``; operators of equal strength
associate to the left (including ``^``).

Evaluation is generic: variables may be floats or any object implementing
the arithmetic operators plus ``sin``/``cos``/``exp``/``log``/``sqrt``
methods (see :class:`nlpcanon.autodiff.Jet`).
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ActivityError, DomainError, NonFiniteError, ParseError, UnknownVariable

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")
ACTIVITY_TOL = 1e-10


class Expr:
    """Base class of expression nodes. Nodes are immutable and hashable."""

    def __call__(self, x):
        return evaluate(self, x)

    def __str__(self):
        return pretty(self)


@dataclass(frozen=True)
class Const(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    index: int  # 1-based


@dataclass(frozen=True)
class Unary(Expr):
    op: str  # "neg" or one of FUNCTIONS
    arg: Expr


@dataclass(frozen=True)
class Binary(Expr):
    op: str  # one of "+-*/"
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int


# --------------------------------------------------------------------------
# evaluation


def _is_real(v):
    return isinstance(v, (int, float, np.floating, np.integer))


def _real_function(op, v):
    v = float(v)
    if op == "log":
        if v <= 0.0:
            raise DomainError(f"log of non-positive argument {v!r}")
        return math.log(v)
    if op == "sqrt":
        if v < 0.0:
            raise DomainError(f"sqrt of negative argument {v!r}")
        return math.sqrt(v)
    if op == "exp":
        try:
            return math.exp(v)
        except OverflowError as exc:
            raise NonFiniteError(f"exp overflow at {v!r}") from exc
    return getattr(math, op)(v)


def evaluate(e: Expr, x: Sequence):
    """Evaluate ``e`` at the point ``x`` (indexable, 0-based storage)."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return x[e.index - 1]
    if isinstance(e, Unary):
        v = evaluate(e.arg, x)
        if e.op == "neg":
            return -v
        if _is_real(v):
            return _real_function(e.op, v)
        return getattr(v, e.op)()
    if isinstance(e, Binary):
        a = evaluate(e.left, x)
        b = evaluate(e.right, x)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if _is_real(b) and b == 0:
            raise DomainError("division by zero")
        return a / b
    if isinstance(e, Pow):
        v = evaluate(e.base, x)
        if _is_real(v):
            try:
                return float(v) ** e.exponent
            except OverflowError as exc:
                raise NonFiniteError("power overflow") from exc
        return v ** e.exponent
    raise TypeError(f"not an expression node: {e!r}")


def max_variable(e: Expr) -> int:
    """Largest variable index used in ``e`` (0 for constants)."""
    if isinstance(e, Var):
        return e.index
    if isinstance(e, Unary):
        return max_variable(e.arg)
    if isinstance(e, Binary):
        return max(max_variable(e.left), max_variable(e.right))
    if isinstance(e, Pow):
        return max_variable(e.base)
    return 0


# --------------------------------------------------------------------------
# printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def pretty(e: Expr, names: Sequence[str] | None = None) -> str:
    """Render ``e`` as text that parses back to the same tree."""
    return _pretty(e, names)[0]


def _pretty(e, names):
    # returns (text, precedence); atoms are 5, powers 4, unary minus 3
    if isinstance(e, Const):
        text = repr(float(e.value))
        return (f"({text})", 5) if e.value < 0 or not math.isfinite(e.value) else (text, 5)
    if isinstance(e, Var):
        return (names[e.index - 1] if names else f"x{e.index}"), 5
    if isinstance(e, Unary):
        arg, prec = _pretty(e.arg, names)
        if e.op == "neg":
            return ("-" + (arg if prec >= 3 else f"({arg})")), 3
        return f"{e.op}({arg})", 5
    if isinstance(e, Pow):
        base, prec = _pretty(e.base, names)
        # left associative: a nested power on the left needs no parentheses
        if prec < 4:
            base = f"({base})"
        return f"{base}^{e.exponent}", 4
    if isinstance(e, Binary):
        p = _PREC[e.op]
        left, lp = _pretty(e.left, names)
        right, rp = _pretty(e.right, names)
        if lp < p:
            left = f"({left})"
        if rp <= p:
            right = f"({right})"
        return f"{left} {e.op} {right}", p
    raise TypeError(f"not an expression node: {e!r}")


# --------------------------------------------------------------------------
# tokenizer and parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)
_INTEGER = re.compile(r"\d+$")


@dataclass
class _Token:
    kind: str  # num, name, op, end
    text: str
    pos: int  # character offset


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


def _tokenize(text: str, base: int = 0) -> list[_Token]:
    tokens = []
    pos = 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ParseError(
                f"unexpected character {text[pos]!r}",
                base + _byte_offset(text, pos),
                {"number", "name", "operator"},
            )
        kind = m.lastgroup
        tokens.append(_Token(kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text, names, base):
        self.text = text
        self.names = {name: i + 1 for i, name in enumerate(names)}
        self.base = base
        self.tokens = _tokenize(text, base)
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def error(self, message, expected, cls=ParseError):
        return cls(message, self.base + _byte_offset(self.text, self.tok.pos), expected)

    def take(self):
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect(self, text):
        if self.tok.text != text or self.tok.kind != "op":
            raise self.error(f"expected {text!r}", {text})
        self.take()

    def parse(self):
        e = self.expr()
        if self.tok.kind != "end":
            raise self.error(f"unexpected token {self.tok.text!r}", {"+", "-", "*", "/", "^", "end of input"})
        return e

    def expr(self):
        e = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.take().text
            e = Binary(op, e, self.term())
        return e

    def term(self):
        e = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.take().text
            e = Binary(op, e, self.unary())
        return e

    def unary(self):
        if self.tok.kind == "op" and self.tok.text == "-":
            self.take()
            return Unary("neg", self.unary())
        return self.power()

    def power(self):
        e = self.atom()
        while self.tok.kind == "op" and self.tok.text == "^":
            self.take()
            if self.tok.kind != "num" or not _INTEGER.match(self.tok.text):
                raise self.error("exponent must be a non-negative integer literal", {"integer"})
            e = Pow(e, int(self.take().text))
        return e

    def atom(self):
        t = self.tok
        if t.kind == "num":
            self.take()
            return Const(float(t.text))
        if t.kind == "name":
            if t.text in FUNCTIONS:
                self.take()
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Unary(t.text, arg)
            if t.text not in self.names:
                raise self.error(f"unknown variable {t.text!r}", set(self.names), UnknownVariable)
            self.take()
            return Var(self.names[t.text])
        if t.kind == "op" and t.text == "(":
            self.take()
            e = self.expr()
            self.expect(")")
            return e
        raise self.error(
            "unexpected end of input" if t.kind == "end" else f"unexpected token {t.text!r}",
            {"number", "variable", "function", "(", "-"},
        )


def default_names(n: int) -> list[str]:
    return [f"x{i + 1}" for i in range(n)]


def parse_expr(text: str, n: int | None = None, names: Sequence[str] | None = None, *, _base: int = 0) -> Expr:
    """Parse ``text`` into an expression over ``n`` variables.

    Variables are written ``x1 .. xn`` unless explicit ``names`` are given.

    >>> parse_expr("x1^2 + 2*x2", 2)((1.0, 1.0))
    3.0
    """
    if names is None:
        if n is None:
            raise TypeError("parse_expr needs the dimension n or explicit names")
        names = default_names(n)
    if not text or not text.strip():
        raise ParseError("empty expression", _base, {"number", "variable", "function", "(", "-"})
    return _Parser(text, list(names), _base).parse()


# --------------------------------------------------------------------------
# problem documents


@dataclass(frozen=True)
class ProblemDoc:
    """A parsed problem file.

    Inequalities keep the order in which they were written; that order is
    significant for the canonical reduction.
    """

    variables: tuple[str, ...]
    objective: Expr
    equalities: tuple[tuple[str, Expr], ...]
    inequalities: tuple[tuple[str, Expr], ...]
    radius: float
    point: tuple[float, ...]
    source: str = field(default="", compare=False, repr=False)

    @property
    def n(self) -> int:
        return len(self.variables)

    @property
    def m(self) -> int:
        return len(self.equalities)


def _split_comment(line):
    i = line.find("#")
    return line if i < 0 else line[:i]


def parse_problem(document: str, activity_tol: float = ACTIVITY_TOL) -> ProblemDoc:
    """Parse a line-oriented problem document.

    Raises :class:`ParseError` on malformed input and :class:`ActivityError`
    when an equality or inequality is not zero at the base point.
    """
    variables = None
    radius = None
    point = None
    objective = None
    eqs: list = []
    ineqs: list = []
    seen_names: set = set()
    pending: list = []  # (kind, name, text, byte offset), parsed once vars are known

    offset = 0
    for raw in document.splitlines(keepends=True):
        line_offset = offset
        offset += len(raw.encode("utf-8"))
        line = _split_comment(raw.rstrip("\r\n"))
        stripped = line.strip()
        if not stripped:
            continue
        m = re.match(r"\s*(\S+)\s*", line)
        keyword = m.group(1)
        rest = line[m.end():].rstrip()
        rest_start = line_offset + _byte_offset(line, m.end())
        here = line_offset + _byte_offset(line, m.start(1))
        if keyword == "vars":
            if variables is not None:
                raise ParseError("duplicate 'vars' line", here)
            variables = rest.split()
            if not variables:
                raise ParseError("'vars' needs at least one variable", here, {"name"})
            for v in variables:
                if not re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", v) or v in FUNCTIONS:
                    raise ParseError(f"invalid variable name {v!r}", here)
            if len(set(variables)) != len(variables):
                raise ParseError("variable names must be unique", here)
        elif keyword == "radius":
            try:
                radius = float(rest)
            except ValueError:
                raise ParseError("radius must be a number", rest_start, {"number"}) from None
            if not (radius > 0 and math.isfinite(radius)):
                raise ParseError("radius must be positive", rest_start)
        elif keyword == "point":
            try:
                point = tuple(float(t) for t in rest.split())
            except ValueError:
                raise ParseError("point coordinates must be numbers", rest_start, {"number"}) from None
        elif keyword == "objective":
            if objective is not None:
                raise ParseError("duplicate 'objective' line", here)
            objective = rest
            pending.append(("objective", None, rest, rest_start))
        elif keyword in ("eq", "ineq"):
            name, colon, body = rest.partition(":")
            name = name.strip()
            if not colon or not name:
                raise ParseError(f"'{keyword}' lines read '{keyword} <name>: <expr>'", rest_start, {":"})
            if name in seen_names:
                raise ParseError(f"duplicate constraint name {name!r}", rest_start)
            seen_names.add(name)
            body_start = line_offset + _byte_offset(line, line.index(":", m.end()) + 1)
            pending.append((keyword, name, body, body_start))
        else:
            raise ParseError(f"unknown keyword {keyword!r}", here, {"vars", "radius", "objective", "eq", "ineq", "point"})

    if variables is None:
        raise ParseError("missing 'vars' line", offset, {"vars"})
    if objective is None:
        raise ParseError("missing 'objective' line", offset, {"objective"})
    if radius is None:
        raise ParseError("missing 'radius' line", offset, {"radius"})
    if point is None:
        point = (0.0,) * len(variables)
    if len(point) != len(variables):
        raise ParseError(f"point has {len(point)} coordinates, expected {len(variables)}", offset)

    obj_expr = None
    for kind, name, text, start in pending:
        lead = len(text) - len(text.lstrip())
        e = parse_expr(text.strip(), names=variables, _base=start + lead)
        if kind == "objective":
            obj_expr = e
        elif kind == "eq":
            eqs.append((name, e))
        else:
            ineqs.append((name, e))

    doc = ProblemDoc(tuple(variables), obj_expr, tuple(eqs), tuple(ineqs), radius, point, document)
    for kind, group in (("equality", doc.equalities), ("inequality", doc.inequalities)):
        for name, e in group:
            try:
                value = evaluate(e, point)
            except (DomainError, NonFiniteError) as exc:
                raise ActivityError(f"{kind} {name!r} cannot be evaluated at the base point: {exc}") from exc
            if abs(value) > activity_tol:
                raise ActivityError(f"{kind} {name!r} is not active at the base point (value {value!r})")
    return doc


def load_problem(path) -> ProblemDoc:
    with open(path, encoding="utf-8") as fh:
        return parse_problem(fh.read())
