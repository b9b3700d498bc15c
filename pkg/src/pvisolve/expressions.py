"""Tiny arithmetic expression language for user-supplied coefficients.

Grammar (``^`` is right-associative and binds tighter than unary minus, so
``-y^2`` means ``-(y^2)`` and ``2^-1`` means ``2^(-1)``)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := ("-" | "+") unary | power
    power  := atom ("^" unary)?
    atom   := NUMBER | NAME | FUNC "(" expr ("," expr)* ")" | "(" expr ")"

Variables are ``t``, ``x1..xd``, ``y`` and ``z1..zd``.  Functions are
``sin cos exp sqrt abs tanh`` (one argument) and ``min max`` (two or more).
Evaluation is vectorised over numpy float64 arrays.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .exceptions import EvalError, ParseError

__all__ = ["Expression", "parse_expression", "ParseError", "EvalError"]

_UNARY_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "tanh": np.tanh,
}
_NARY_FUNCS = {"min": np.minimum, "max": np.maximum}
_VAR_RE = re.compile(r"^(t|y|x[1-9][0-9]*|z[1-9][0-9]*)$")
_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = self._tokenize(text)
        self.pos = 0

    def _offset(self, char_index):
        return len(self.text[:char_index].encode("utf-8"))

    def _tokenize(self, text):
        tokens = []
        i = 0
        while i < len(text):
            if text[i].isspace():
                i += 1
                continue
            m = _TOKEN_RE.match(text, i)
            if m is None or m.end() == i:
                raise ParseError(f"unexpected character {text[i]!r}", self._offset(i),
                                 {"number", "name", "operator"})
            kind = m.lastgroup
            start = m.start(kind)
            tokens.append((kind, m.group(kind), start))
            i = m.end()
        tokens.append(("end", "", len(text)))
        return tokens

    def peek(self):
        return self.tokens[self.pos]

    def take(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def fail(self, tok, expected):
        what = "end of input" if tok[0] == "end" else repr(tok[1])
        raise ParseError(f"unexpected {what}", self._offset(tok[2]), expected)

    def expect(self, value):
        tok = self.take()
        if tok[0] != "op" or tok[1] != value:
            self.fail(tok, {repr(value)})

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            self.fail(tok, {"'+'", "'-'", "'*'", "'/'", "'^'", "end of input"})
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "-":
            self.take()
            return Neg(self.unary())
        if tok[0] == "op" and tok[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        tok = self.take()
        kind, text, _ = tok
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if text in _UNARY_FUNCS or text in _NARY_FUNCS:
                self.expect("(")
                args = [self.expr()]
                while self.peek()[0] == "op" and self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                closing = self.peek()
                if closing[0] != "op" or closing[1] != ")":
                    self.fail(closing, {"')'", "','"})
                self.take()
                if text in _UNARY_FUNCS and len(args) != 1:
                    raise ParseError(f"{text} takes one argument", self._offset(tok[2]))
                if text in _NARY_FUNCS and len(args) < 2:
                    raise ParseError(f"{text} takes at least two arguments", self._offset(tok[2]))
                return Call(text, tuple(args))
            if _VAR_RE.match(text):
                return Var(text)
            raise ParseError(f"unknown name {text!r}", self._offset(tok[2]), {"variable", "function"})
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        self.fail(tok, {"number", "variable", "function", "'('", "'-'"})


def _eval(node, env):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        try:
            return env[node.name]
        except KeyError:
            raise EvalError(f"variable {node.name!r} is not bound") from None
    if isinstance(node, Neg):
        return -_eval(node.operand, env)
    if isinstance(node, BinOp):
        a = _eval(node.left, env)
        b = _eval(node.right, env)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            return np.divide(a, b)
        return np.power(a, b)
    if isinstance(node, Call):
        args = [_eval(a, env) for a in node.args]
        if node.func in _UNARY_FUNCS:
            return _UNARY_FUNCS[node.func](args[0])
        out = args[0]
        for a in args[1:]:
            out = _NARY_FUNCS[node.func](out, a)
        return out
    raise TypeError(node)


def _format(node):
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{_format(node.operand)})"
    if isinstance(node, BinOp):
        return f"({_format(node.left)} {node.op} {_format(node.right)})"
    return f"{node.func}({', '.join(_format(a) for a in node.args)})"


def _names(node, acc):
    if isinstance(node, Var):
        acc.add(node.name)
    elif isinstance(node, Neg):
        _names(node.operand, acc)
    elif isinstance(node, BinOp):
        _names(node.left, acc)
        _names(node.right, acc)
    elif isinstance(node, Call):
        for a in node.args:
            _names(a, acc)
    return acc


@dataclass(frozen=True)
class Expression:
    """A parsed expression; call it with keyword arrays for the variables."""

    text: str
    tree: object

    @property
    def variables(self) -> frozenset:
        return frozenset(_names(self.tree, set()))

    def depends_on(self, *names) -> bool:
        return bool(self.variables.intersection(names))

    def __call__(self, **env):
        with np.errstate(all="ignore"):
            return np.asarray(_eval(self.tree, env), dtype=float)

    def evaluate_checked(self, **env):
        """Evaluate and raise :class:`EvalError` on NaN or infinite results."""
        out = self(**env)
        if not np.all(np.isfinite(out)):
            raise EvalError(f"expression {self.text!r} produced a non-finite value")
        return out

    def pretty(self) -> str:
        """Fully parenthesised source that re-parses to the same tree."""
        return _format(self.tree)

    def __str__(self):
        return self.text


def parse_expression(text: str) -> Expression:
    if not isinstance(text, str):
        raise ParseError(f"expression must be a string, got {type(text).__name__}", 0)
    return Expression(text, _Parser(text).parse())
