"""Scalar analytic expressions over the state variables x1..xn.

The grammar is ordinary infix arithmetic::

    sum     := product (('+' | '-') product)*
    product := unary (('*' | '/') unary)*
    unary   := '-' unary | '+' unary | power
    power   := atom ('^' unary)?          # right associative
    atom    := number | name | name '(' sum ')' | '(' sum ')'

Exponents must fold to a non-negative integer. Names are ``x<k>``
variables, ``pi``, caller-supplied constants/aliases, or one of the
functions in ``FUNCTIONS``.

Expressions are immutable trees. ``evaluate`` is vectorised: pass an
``(K, n)`` array to evaluate at K points at once.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Union

import numpy as np

__all__ = [
    "Const", "Var", "Unary", "Binary", "Pow", "Expr",
    "ParseError", "EvaluationError",
    "parse_expr", "evaluate", "eval_expr", "to_source", "variables",
    "central_difference", "partial_derivative",
]

FUNCTIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
}


@dataclass(frozen=True)
class Const:
    value: float
    name: str | None = None


@dataclass(frozen=True)
class Var:
    index: int  # 1-based, as written in the source


@dataclass(frozen=True)
class Unary:
    op: str  # 'neg' or a key of FUNCTIONS
    arg: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str  # one of + - * /
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int


Expr = Union[Const, Var, Unary, Binary, Pow]


class ParseError(ValueError):
    """Syntax or name error at a byte offset of the source text."""

    def __init__(self, offset: int, expected: str, found: str, source: str = ""):
        self.offset = offset
        self.expected = expected
        self.found = found
        self.source = source
        super().__init__(f"at offset {offset}: expected {expected}, found {found}")


class EvaluationError(ArithmeticError):
    """An expression produced a non-finite value from finite operands."""

    def __init__(self, node: Expr, message: str):
        self.node = node
        super().__init__(f"{message} in '{to_source(node)}'")


# -- tokenizer ---------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # num, name, op, end
    text: str
    offset: int


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError(pos, "a number, name or operator", repr(source[pos]), source)
        if m.lastgroup != "ws":
            tokens.append(_Token(m.lastgroup, m.group(), pos))
        pos = m.end()
    tokens.append(_Token("end", "", len(source)))
    return tokens


def _describe(tok: _Token) -> str:
    return "end of input" if tok.kind == "end" else repr(tok.text)


class _Parser:
    def __init__(self, source: str, n_vars: int, names: Mapping[str, float | Expr]):
        self.source = source
        self.n_vars = n_vars
        self.names = names
        self.tokens = _tokenize(source)
        self.pos = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.pos]

    def error(self, expected: str, tok: _Token | None = None) -> ParseError:
        tok = tok or self.tok
        return ParseError(tok.offset, expected, _describe(tok), self.source)

    def accept(self, text: str) -> bool:
        if self.tok.kind == "op" and self.tok.text == text:
            self.pos += 1
            return True
        return False

    def expect(self, text: str) -> None:
        if not self.accept(text):
            raise self.error(repr(text))

    def parse(self) -> Expr:
        if self.tok.kind == "end":
            raise self.error("an expression")
        e = self.sum()
        if self.tok.kind != "end":
            raise self.error("an operator or end of input")
        return e

    def sum(self) -> Expr:
        e = self.product()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.pos += 1
            e = Binary(op, e, self.product())
        return e

    def product(self) -> Expr:
        e = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.pos += 1
            e = Binary(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.accept("-"):
            return Unary("neg", self.unary())
        if self.accept("+"):
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if not self.accept("^"):
            return base
        start = self.tok
        exponent = self.unary()
        if variables(exponent):
            raise self.error("a constant integer exponent", start)
        value = float(evaluate(exponent, np.zeros(max(self.n_vars, 1))))
        if value < 0 or value != int(value):
            raise ParseError(start.offset, "a non-negative integer exponent",
                             repr(value), self.source)
        return Pow(base, int(value))

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.pos += 1
            return Const(float(tok.text))
        if tok.kind == "name":
            self.pos += 1
            return self.named(tok)
        if self.accept("("):
            e = self.sum()
            self.expect(")")
            return e
        raise self.error("a number, name or '('")

    def named(self, tok: _Token) -> Expr:
        name = tok.text
        if name in FUNCTIONS:
            self.expect("(")
            arg = self.sum()
            self.expect(")")
            return Unary(name, arg)
        m = re.fullmatch(r"x(\d+)", name)
        if m:
            index = int(m.group(1))
            if not 1 <= index <= self.n_vars:
                raise ParseError(tok.offset, f"a variable x1..x{self.n_vars}",
                                 repr(name), self.source)
            return Var(index)
        if name in self.names:
            value = self.names[name]
            if isinstance(value, (int, float)):
                return Const(float(value), name)
            return value
        if name == "pi":
            return Const(math.pi, "pi")
        raise ParseError(tok.offset, "a known name", repr(name), self.source)


def parse_expr(source: str, n_vars: int,
               names: Mapping[str, float | Expr] | None = None) -> Expr:
    """Parse ``source`` into an expression over ``x1..x{n_vars}``.

    ``names`` maps extra identifiers either to numbers (named constants) or
    to already-parsed expressions, which are spliced in as subtrees.
    Raises ParseError on malformed syntax, unknown names and variable
    indices outside ``1..n_vars``.
    """
    return _Parser(source, n_vars, names or {}).parse()


# -- evaluation --------------------------------------------------------------

def _check(node: Expr, value, *operands):
    if np.all(np.isfinite(value)):
        return value
    # only blame this node if its operands were finite
    if all(np.all(np.isfinite(v)) for v in operands):
        raise EvaluationError(node, "non-finite value")
    return value


def _ev(node: Expr, cols: np.ndarray):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return cols[node.index - 1]
    if isinstance(node, Unary):
        a = _ev(node.arg, cols)
        out = -a if node.op == "neg" else FUNCTIONS[node.op](a)
        return _check(node, out, a)
    if isinstance(node, Pow):
        a = _ev(node.base, cols)
        return _check(node, a ** node.exponent, a)
    a = _ev(node.left, cols)
    b = _ev(node.right, cols)
    if node.op == "+":
        out = a + b
    elif node.op == "-":
        out = a - b
    elif node.op == "*":
        out = a * b
    else:
        out = np.divide(a, b)
    return _check(node, out, a, b)


def evaluate(e: Expr, x) -> np.ndarray | float:
    """Evaluate at one point (1-D ``x``) or at each row of a 2-D ``x``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    with np.errstate(all="ignore"):
        out = _ev(e, X.T)
    out = np.broadcast_to(np.asarray(out, dtype=float), (X.shape[0],)).copy()
    return float(out[0]) if single else out


def eval_expr(e: Expr, x) -> float:
    return float(evaluate(e, np.asarray(x, dtype=float).reshape(-1)))


def variables(e: Expr) -> set[int]:
    """1-based indices of the variables referenced by ``e``."""
    if isinstance(e, Var):
        return {e.index}
    if isinstance(e, Const):
        return set()
    if isinstance(e, Unary):
        return variables(e.arg)
    if isinstance(e, Pow):
        return variables(e.base)
    return variables(e.left) | variables(e.right)


# -- printing ----------------------------------------------------------------

_PREC_SUM, _PREC_PRODUCT, _PREC_UNARY, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _prec(e: Expr) -> int:
    if isinstance(e, Binary):
        return _PREC_SUM if e.op in "+-" else _PREC_PRODUCT
    if isinstance(e, Unary):
        return _PREC_UNARY if e.op == "neg" else _PREC_ATOM
    if isinstance(e, Pow):
        return _PREC_POW
    if isinstance(e, Const) and (e.value < 0 or math.copysign(1.0, e.value) < 0):
        return _PREC_UNARY
    return _PREC_ATOM


def _wrap(e: Expr, min_prec: int) -> str:
    s = to_source(e)
    return s if _prec(e) >= min_prec else f"({s})"


def to_source(e: Expr) -> str:
    """Render ``e`` as text that parses back to the same tree.

    Named constants other than ``pi`` are written by value, so the output
    needs no constant table to be re-parsed.
    """
    if isinstance(e, Const):
        return "pi" if e.name == "pi" else repr(e.value)
    if isinstance(e, Var):
        return f"x{e.index}"
    if isinstance(e, Unary):
        if e.op == "neg":
            return "-" + _wrap(e.arg, _PREC_UNARY)
        return f"{e.op}({to_source(e.arg)})"
    if isinstance(e, Pow):
        return f"{_wrap(e.base, _PREC_ATOM)}^{e.exponent}"
    level = _prec(e)
    return f"{_wrap(e.left, level)} {e.op} {_wrap(e.right, level + 1)}"


# -- differentiation ---------------------------------------------------------

def default_step(xk) -> np.ndarray:
    return 1e-6 * np.maximum(1.0, np.abs(xk))


def central_difference(fn: Callable[[np.ndarray], np.ndarray], X, k: int,
                       h=None) -> np.ndarray:
    """Central difference of a vectorised ``fn`` along axis ``k`` (0-based).

    ``X`` is ``(K, n)``; ``h`` defaults to ``1e-6 * max(1, |x_k|)`` per row.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    h = default_step(X[:, k]) if h is None else np.broadcast_to(h, X.shape[:1])
    Xp = X.copy()
    Xm = X.copy()
    Xp[:, k] += h
    Xm[:, k] -= h
    return (fn(Xp) - fn(Xm)) / (2.0 * h)


def partial_derivative(e: Expr, x, k: int, h: float | None = None) -> float:
    """d e / d x_k at the point ``x``; ``k`` is the 0-based coordinate axis."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    d = central_difference(lambda X: evaluate(e, X), x, k, h)
    return float(d[0])
