"""
Small arithmetic expression language for model files.

Expressions describe speeds ``a_j(x, t)``, dampings ``b_j(x, t)``, boundary
maps ``h_j(t, xi1, ..., xin)`` and initial data. Grammar (EBNF)::

    expr     = term { ("+" | "-") term } ;
    term     = unary { ("*" | "/") unary } ;
    unary    = "-" unary | power ;
    power    = atom { "^" exponent } ;
    exponent = "-" exponent | atom ;
    atom     = number | name | call | "(" expr ")" ;
    call     = func "(" expr { "," expr } ")"
             | "if" "(" expr cmp expr "," expr "," expr ")" ;
    cmp      = "<" | "<=" | ">" | ">=" | "==" | "!=" ;
    func     = "sin" | "cos" | "exp" | "log" | "abs" | "sqrt"
             | "min" | "max" | "bump" ;

All binary operators are left associative, ``^`` included. ``bump(s, rho, v)``
is ``v * exp(1 - 1/(1 - (s/rho)^2))`` for ``|s| < rho`` and 0 otherwise, where
``s`` is the offset from the bump center (e.g. ``bump(x - 0.3, 0.1, 1)``).

Evaluation accepts scalars or numpy arrays for the bindings. Branches of
``if`` are evaluated only where they are selected, so ``if(x > 0, log(x), 0)``
is safe on arrays containing zeros.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "ExprError",
    "ExprSyntaxError",
    "UnknownIdentifierError",
    "ArityError",
    "DomainError",
    "Expr",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Compare",
    "Call",
    "If",
    "parse",
    "evaluate",
    "pretty",
    "bump_profile",
]


class ExprError(ValueError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message, offset):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class UnknownIdentifierError(ExprError):
    def __init__(self, name, offset):
        super().__init__(f"unknown identifier `{name}` at byte offset {offset}")
        self.name = name
        self.offset = offset


class ArityError(ExprError):
    pass


class DomainError(ExprError, ArithmeticError):
    pass


# --- AST ----------------------------------------------------------------------


class Expr:
    """Base class of expression nodes. Nodes are immutable."""

    def variables(self) -> frozenset:
        out = set()
        stack = [self]
        while stack:
            node = stack.pop()
            if isinstance(node, Var):
                out.add(node.name)
            stack.extend(node.children())
        return frozenset(out)

    def children(self):
        return ()

    def is_constant(self) -> bool:
        return not self.variables()

    def __str__(self):
        return pretty(self)


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr

    def children(self):
        return (self.operand,)


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Compare(Expr):
    op: str
    left: Expr
    right: Expr

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Call(Expr):
    func: str
    args: tuple

    def children(self):
        return self.args


@dataclass(frozen=True)
class If(Expr):
    cond: Compare
    then: Expr
    orelse: Expr

    def children(self):
        return (self.cond, self.then, self.orelse)


FUNCTIONS = {
    "sin": 1,
    "cos": 1,
    "exp": 1,
    "log": 1,
    "abs": 1,
    "sqrt": 1,
    "min": 2,
    "max": 2,
    "bump": 3,
}

COMPARISONS = ("<=", ">=", "==", "!=", "<", ">")


# --- tokenizer ----------------------------------------------------------------


@dataclass(frozen=True)
class _Token:
    kind: str  # num, name, op, end
    text: str
    offset: int  # byte offset into the UTF-8 source


_DIGITS = frozenset(string.digits)
_NAME_START = frozenset(string.ascii_letters + "_")
_NAME_CHARS = _NAME_START | _DIGITS


def _tokenize(source: str) -> list:
    tokens = []
    i = 0
    n = len(source)
    byte = 0

    def boff(k):
        return byte + len(source[i:k].encode("utf-8"))

    while i < n:
        ch = source[i]
        if ch.isspace():
            byte += len(ch.encode("utf-8"))
            i += 1
            continue
        start = i
        if ch in _DIGITS or (ch == "." and i + 1 < n and source[i + 1] in _DIGITS):
            while i < n and (source[i] in _DIGITS or source[i] == "."):
                i += 1
            if i < n and source[i] in "eE":
                k = i + 1
                if k < n and source[k] in "+-":
                    k += 1
                if k < n and source[k] in _DIGITS:
                    i = k
                    while i < n and source[i] in _DIGITS:
                        i += 1
            text = source[start:i]
            try:
                float(text)
            except ValueError:
                raise ExprSyntaxError(f"malformed number {text!r}", byte) from None
            tokens.append(_Token("num", text, byte))
        elif ch in _NAME_START:
            while i < n and source[i] in _NAME_CHARS:
                i += 1
            tokens.append(_Token("name", source[start:i], byte))
        else:
            two = source[i : i + 2]
            if two in ("<=", ">=", "==", "!="):
                i += 2
            elif ch in "+-*/^(),<>":
                i += 1
            else:
                raise ExprSyntaxError(f"unexpected character {ch!r}", byte)
            tokens.append(_Token("op", source[start:i], byte))
        byte += len(source[start:i].encode("utf-8"))
    tokens.append(_Token("end", "", byte))
    return tokens


# --- parser -------------------------------------------------------------------


class _Parser:
    def __init__(self, source, env):
        self.tokens = _tokenize(source)
        self.pos = 0
        self.env = frozenset(env)

    @property
    def tok(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, text):
        tok = self.tok
        if tok.kind != "op" or tok.text != text:
            found = tok.text or "end of input"
            raise ExprSyntaxError(f"expected {text!r}, found {found!r}", tok.offset)
        return self.advance()

    def at(self, *texts):
        return self.tok.kind == "op" and self.tok.text in texts

    def parse(self):
        node = self.expr()
        if self.tok.kind != "end":
            if self.at(*COMPARISONS):
                raise ExprSyntaxError(
                    "comparisons are only allowed as the first argument of if",
                    self.tok.offset,
                )
            raise ExprSyntaxError(f"unexpected token {self.tok.text!r}", self.tok.offset)
        return node

    def expr(self):
        node = self.term()
        while self.at("+", "-"):
            op = self.advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.at("*", "/"):
            op = self.advance().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.at("-"):
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        node = self.atom()
        while self.at("^"):
            self.advance()
            node = BinOp("^", node, self.exponent())
        return node

    def exponent(self):
        if self.at("-"):
            self.advance()
            return Neg(self.exponent())
        return self.atom()

    def atom(self):
        tok = self.tok
        if tok.kind == "num":
            self.advance()
            return Num(float(tok.text))
        if tok.kind == "name":
            self.advance()
            if self.at("("):
                return self.call(tok)
            if tok.text not in self.env:
                raise UnknownIdentifierError(tok.text, tok.offset)
            return Var(tok.text)
        if self.at("("):
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        found = tok.text or "end of input"
        raise ExprSyntaxError(f"unexpected {found!r}", tok.offset)

    def call(self, name_tok):
        name = name_tok.text
        if name != "if" and name not in FUNCTIONS:
            raise UnknownIdentifierError(name, name_tok.offset)
        self.expect("(")
        args = []
        if name == "if":
            left = self.expr()
            if not self.at(*COMPARISONS):
                raise ExprSyntaxError(
                    "if() expects a comparison as first argument", self.tok.offset
                )
            op = self.advance().text
            args.append(Compare(op, left, self.expr()))
        else:
            args.append(self.expr())
        while self.at(","):
            self.advance()
            args.append(self.expr())
        self.expect(")")
        arity = 3 if name == "if" else FUNCTIONS[name]
        if len(args) != arity:
            raise ArityError(
                f"{name}() takes {arity} argument(s), got {len(args)} "
                f"(byte offset {name_tok.offset})"
            )
        if name == "if":
            return If(args[0], args[1], args[2])
        return Call(name, tuple(args))


def parse(source: str, env: Sequence[str]) -> Expr:
    """Parse `source` against the declared variable names `env`."""
    return _Parser(source, env).parse()


# --- pretty printer -------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_ATOM = 5


def _prec(node):
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return 3
    if isinstance(node, Compare):
        return 0
    return _ATOM


def _fmt_num(value):
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def pretty(node: Expr) -> str:
    """Canonical text with the minimum of parentheses."""
    if isinstance(node, Num):
        return _fmt_num(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        inner = pretty(node.operand)
        if _prec(node.operand) < 3:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, BinOp):
        p = _PREC[node.op]
        left = pretty(node.left)
        right = pretty(node.right)
        if _prec(node.left) < p:
            left = f"({left})"
        if node.op == "^":
            if _prec(node.right) < _ATOM:
                right = f"({right})"
        elif _prec(node.right) <= p:
            right = f"({right})"
        sep = "^" if node.op == "^" else f" {node.op} "
        return f"{left}{sep}{right}"
    if isinstance(node, Compare):
        return f"{pretty(node.left)} {node.op} {pretty(node.right)}"
    if isinstance(node, If):
        return f"if({pretty(node.cond)}, {pretty(node.then)}, {pretty(node.orelse)})"
    if isinstance(node, Call):
        return f"{node.func}({', '.join(pretty(a) for a in node.args)})"
    raise TypeError(f"not an expression node: {node!r}")


# --- evaluation ---------------------------------------------------------------


@lru_cache(maxsize=512)
def _variables(expr):
    return expr.variables()


def bump_profile(s, rho, v):
    """v * exp(1 - 1/(1 - (s/rho)^2)) inside |s| < rho, zero outside."""
    s = np.asarray(s, dtype=float)
    d2 = (s / rho) ** 2
    inside = d2 < 1.0
    out = np.zeros(np.broadcast(s, v).shape)
    with np.errstate(divide="ignore", over="ignore"):
        prof = np.exp(1.0 - 1.0 / (1.0 - np.where(inside, d2, 0.0)))
    out[...] = np.where(inside, prof, 0.0) * v
    return out


def _check_domain(cond, message):
    if np.any(cond):
        raise DomainError(message)


_COMPARE = {
    "<": np.less,
    "<=": np.less_equal,
    ">": np.greater,
    ">=": np.greater_equal,
    "==": np.equal,
    "!=": np.not_equal,
}


def _div(left, right):
    _check_domain(np.asarray(right) == 0, "division by zero")
    return np.true_divide(left, right)


def _pow(left, right):
    with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        out = np.power(np.asarray(left, dtype=float), right)
    bad = np.isnan(out) | (np.isinf(out) & (np.asarray(left) == 0))
    _check_domain(bad, "power outside its real domain")
    return out


def _exp(v):
    with np.errstate(over="ignore"):
        return np.exp(v)


def _log(v):
    _check_domain(np.asarray(v) <= 0, "log of a non-positive number")
    return np.log(v)


def _sqrt(v):
    _check_domain(np.asarray(v) < 0, "sqrt of a negative number")
    return np.sqrt(v)


def _bump(s, rho, v):
    _check_domain(np.asarray(rho) <= 0, "bump radius must be positive")
    return bump_profile(s, rho, v)


_BINARY = {"+": np.add, "-": np.subtract, "*": np.multiply, "/": _div, "^": _pow}
_CALLS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": _exp,
    "log": _log,
    "sqrt": _sqrt,
    "abs": np.abs,
    "min": np.minimum,
    "max": np.maximum,
    "bump": _bump,
}


@lru_cache(maxsize=512)
def _compile(node):
    """Closure b -> value for an expression tree (b maps names to values)."""
    if isinstance(node, Num):
        value = node.value
        return lambda b: value
    if isinstance(node, Var):
        name = node.name
        return lambda b: b[name]
    if isinstance(node, Neg):
        inner = _compile(node.operand)
        return lambda b: -inner(b)
    if isinstance(node, (BinOp, Compare)):
        op = _BINARY[node.op] if isinstance(node, BinOp) else _COMPARE[node.op]
        left, right = _compile(node.left), _compile(node.right)
        return lambda b: op(left(b), right(b))
    if isinstance(node, If):
        return lambda b: _eval_if(node, b)
    if isinstance(node, Call):
        fn = _CALLS[node.func]
        args = [_compile(a) for a in node.args]
        if len(args) == 1:
            (arg,) = args
            return lambda b: fn(arg(b))
        return lambda b: fn(*(a(b) for a in args))
    raise TypeError(f"not an expression node: {node!r}")


def _eval(node, b):
    return _compile(node)(b)


def _eval_if(node, b):
    cond = np.asarray(_eval(node.cond, b))
    if cond.ndim == 0:
        return _eval(node.then if bool(cond) else node.orelse, b)
    size = cond.shape[0]
    cond = np.broadcast_to(cond, (size,))
    out = np.empty(size)
    for mask, branch in ((cond, node.then), (~cond, node.orelse)):
        if mask.any():
            sub = {k: (v[mask] if np.ndim(v) else v) for k, v in b.items()}
            out[mask] = _eval(branch, sub)
    return out


def evaluate(expr: Expr, bindings: Mapping[str, object]):
    """Evaluate `expr` under `bindings` (scalars or broadcastable arrays).

    Returns a float when every binding is scalar and an array of the common
    broadcast shape otherwise.

    Raises
    ------
    DomainError
        On division by zero, log of a non-positive number, sqrt of a
        negative number or a power without a real value.
    """
    missing = _variables(expr) - set(bindings)
    if missing:
        raise ExprError(f"missing bindings for {sorted(missing)}")
    arrays = {k: np.asarray(v, dtype=float) for k, v in bindings.items()}
    shape = np.broadcast_shapes(*(a.shape for a in arrays.values())) if arrays else ()
    if shape == ():
        b = {k: float(a) for k, a in arrays.items()}
        return float(_eval(expr, b))
    if len(shape) == 1 and all(a.shape == shape for a in arrays.values()):
        out = _eval(expr, arrays)
        return np.array(np.broadcast_to(out, shape), dtype=float)
    flat = {k: np.broadcast_to(a, shape).ravel() for k, a in arrays.items()}
    out = _eval(expr, flat)
    return np.broadcast_to(np.asarray(out, dtype=float), (int(np.prod(shape)),)).reshape(shape).copy()
