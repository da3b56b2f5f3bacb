"""Strategy expression language.

Grammar::

    expr := cond | sum
    cond := "if" bool "then" expr "else" expr
    bool := sum [cmp sum]              (a bare sum is true when non-zero)
    cmp  := "<" | "<=" | ">" | ">=" | "==" | "!="
    sum  := term (("+" | "-") term)*
    term := atom (("*" | "/") atom)*
    atom := number | variable | "share" "(" int ")" | "(" expr ")" | "-" atom

Variables: ``s`` successes, ``f`` failures, ``c`` consumption, ``d`` depth,
``last1``..``lastK`` (K-th most recent digest outcome, 1 for S, 0 for F or
absent), ``share(i)`` (1-based product index), ``myshare``, ``maxothershare``,
``isleader`` (1 when own share strictly exceeds every other).
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass
from typing import Union

from .errors import ExpressionEvalError, ExpressionSyntaxError

HISTORY_VARS = frozenset({"s", "f", "c", "d"})
SHARE_VARS = frozenset({"myshare", "maxothershare", "isleader"})
_LAST_RE = re.compile(r"last([1-9][0-9]*)$")

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op><=|>=|==|!=|[-+*/()<>−×÷])
    """,
    re.VERBOSE,
)
_OP_ALIASES = {"−": "-", "×": "*", "÷": "/"}
_KEYWORDS = {"if", "then", "else", "share"}


class DivisionByZeroWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Share:
    index: int  # 1-based


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Compare:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Cond:
    test: Union["Node", Compare]
    then: "Node"
    orelse: "Node"


Node = Union[Num, Var, Share, Neg, BinOp, Cond]


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    offset: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExpressionSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tok = m.group()
            if kind == "op":
                tok = _OP_ALIASES.get(tok, tok)
            elif kind == "name" and tok in _KEYWORDS:
                kind = "kw"
            tokens.append(Token(kind, tok, pos))
        pos = m.end()
    tokens.append(Token("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str, text: str | None = None) -> Token:
        tok = self.tok
        if tok.kind != kind or (text is not None and tok.text != text):
            want = text or kind
            got = tok.text or "end of input"
            raise ExpressionSyntaxError(f"expected {want!r}, got {got!r}", tok.offset)
        return self.advance()

    def parse(self) -> Node:
        node = self.expr()
        if self.tok.kind != "end":
            raise ExpressionSyntaxError(f"unexpected {self.tok.text!r}", self.tok.offset)
        return node

    def expr(self) -> Node:
        if self.tok.kind == "kw" and self.tok.text == "if":
            self.advance()
            test = self.boolean()
            self.expect("kw", "then")
            then = self.expr()
            self.expect("kw", "else")
            return Cond(test, then, self.expr())
        return self.sum()

    def boolean(self):
        left = self.sum()
        if self.tok.kind == "op" and self.tok.text in ("<", "<=", ">", ">=", "==", "!="):
            op = self.advance().text
            return Compare(op, left, self.sum())
        return left

    def sum(self) -> Node:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.atom()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.advance().text
            node = BinOp(op, node, self.atom())
        return node

    def atom(self) -> Node:
        tok = self.tok
        if tok.kind == "num":
            self.advance()
            return Num(float(tok.text))
        if tok.kind == "name":
            self.advance()
            if tok.text in HISTORY_VARS or tok.text in SHARE_VARS or _LAST_RE.match(tok.text):
                return Var(tok.text)
            raise ExpressionSyntaxError(f"unknown variable {tok.text!r}", tok.offset)
        if tok.kind == "kw" and tok.text == "share":
            self.advance()
            self.expect("op", "(")
            idx = self.expect("num")
            if not idx.text.isdigit() or int(idx.text) < 1:
                raise ExpressionSyntaxError("share index must be a positive integer", idx.offset)
            self.expect("op", ")")
            return Share(int(idx.text))
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            node = self.expr()
            self.expect("op", ")")
            return node
        if tok.kind == "op" and tok.text == "-":
            self.advance()
            return Neg(self.atom())
        got = tok.text or "end of input"
        raise ExpressionSyntaxError(f"unexpected {got!r}", tok.offset)


def parse_strategy_expr(text: str) -> Node:
    if not text or not text.strip():
        raise ExpressionSyntaxError("empty expression", 0)
    return _Parser(text).parse()


# -- printing ----------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _fmt_num(v: float) -> str:
    return repr(v)


def to_text(node, prec: int = 0) -> str:
    """Render a tree so that ``parse_strategy_expr(to_text(t)) == t``."""
    if isinstance(node, Num):
        return _fmt_num(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Share):
        return f"share({node.index})"
    if isinstance(node, Neg):
        return "-" + to_text(node.operand, 3)
    if isinstance(node, BinOp):
        p = _PREC[node.op]
        out = f"{to_text(node.left, p)} {node.op} {to_text(node.right, p + 1)}"
        return f"({out})" if p < prec else out
    if isinstance(node, Compare):
        return f"{to_text(node.left, 1)} {node.op} {to_text(node.right, 1)}"
    if isinstance(node, Cond):
        out = f"if {to_text(node.test, 1)} then {to_text(node.then)} else {to_text(node.orelse)}"
        return f"({out})" if prec > 0 else out
    raise TypeError(f"not an expression node: {node!r}")


# -- analysis & evaluation ---------------------------------------------------

def variables(node) -> set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Share):
        return {f"share({node.index})"}
    if isinstance(node, Num):
        return set()
    if isinstance(node, Neg):
        return variables(node.operand)
    if isinstance(node, (BinOp, Compare)):
        return variables(node.left) | variables(node.right)
    if isinstance(node, Cond):
        return variables(node.test) | variables(node.then) | variables(node.orelse)
    raise TypeError(node)


def uses_shares(node) -> bool:
    return any(v in SHARE_VARS or v.startswith("share(") for v in variables(node))


def max_lag(node) -> int:
    """Largest K among the ``lastK`` variables used (0 if none)."""
    lags = [int(m.group(1)) for v in variables(node) if (m := _LAST_RE.match(v))]
    return max(lags, default=0)


def _compare(op: str, a: float, b: float) -> bool:
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    if op == ">=":
        return a >= b
    if op == "==":
        return a == b
    return a != b


def evaluate_node(node, env: dict, strict: bool = False) -> float:
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Share):
        shares = env["shares"]
        if node.index > len(shares):
            raise ExpressionEvalError(f"share({node.index}) with only {len(shares)} products")
        return float(shares[node.index - 1])
    if isinstance(node, Neg):
        return -evaluate_node(node.operand, env, strict)
    if isinstance(node, BinOp):
        a = evaluate_node(node.left, env, strict)
        b = evaluate_node(node.right, env, strict)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if b == 0:
            if strict:
                raise ExpressionEvalError("division by zero")
            warnings.warn("division by zero in strategy expression evaluated as 0", DivisionByZeroWarning, stacklevel=2)
            return 0.0
        return a / b
    if isinstance(node, Compare):
        return 1.0 if _compare(node.op, evaluate_node(node.left, env, strict), evaluate_node(node.right, env, strict)) else 0.0
    if isinstance(node, Cond):
        branch = node.then if evaluate_node(node.test, env, strict) != 0 else node.orelse
        return evaluate_node(branch, env, strict)
    raise TypeError(node)
