"""A small expression language for user-defined detuning and Rabi functions.

Grammar (``^`` binds tighter than unary minus, which binds tighter than
``*`` and ``/``)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?          # right associative
    atom   := NUMBER | NAME | FUNC '(' expr ')' | '(' expr ')'

Names are case sensitive.  ``t`` is the time variable, ``pi`` and ``e`` are
reserved constants and every other name is a parameter.  Evaluation uses
forward-mode dual numbers, so each call returns the value and the exact
derivative with respect to ``t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Union

import numpy as np

from .errors import AdiacurveError, SpecError

FUNCTIONS = ("sin", "cos", "tan", "exp", "sqrt", "abs")
CONSTANTS = {"pi": math.pi, "e": math.e}
VARIABLE = "t"
MAX_NESTING = 100
MAX_TREE_DEPTH = 300


class ExprSyntaxError(SpecError):
    """Parse failure at a byte offset, with the set of tokens that would fit."""

    def __init__(self, offset: int, expected: Iterable[str], found: str = ""):
        self.offset = offset
        self.expected = frozenset(expected)
        self.found = found
        exp = ", ".join(sorted(self.expected))
        got = f", found {found!r}" if found else ""
        super().__init__(f"syntax error at offset {offset}: expected one of {{{exp}}}{got}")


class UnknownSymbol(SpecError):
    def __init__(self, name: str, offset: int):
        self.name = name
        self.offset = offset
        super().__init__(f"unknown symbol {name!r} at offset {offset}")


class DomainError(AdiacurveError, ValueError):
    """Evaluation left the real domain (or the derivative does not exist)."""

    def __init__(self, message: str, subexpr: "Expr"):
        self.subexpr = subexpr
        super().__init__(f"{message} in {format_expr(subexpr)!r}")


# --------------------------------------------------------------------------
# tree


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    pass


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # 'neg' or a name from FUNCTIONS
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str  # one of + - * / ^
    left: "Expr"
    right: "Expr"


Expr = Union[Const, Var, Param, Unary, Binary]


def free_parameters(node: Expr) -> set[str]:
    """Parameter names the tree needs bound (reserved constants excluded)."""
    if isinstance(node, Param):
        return set() if node.name in CONSTANTS else {node.name}
    if isinstance(node, Unary):
        return free_parameters(node.operand)
    if isinstance(node, Binary):
        return free_parameters(node.left) | free_parameters(node.right)
    return set()


def tree_depth(node: Expr) -> int:
    depth = 0
    stack = [(node, 1)]
    while stack:
        n, d = stack.pop()
        depth = max(depth, d)
        if isinstance(n, Unary):
            stack.append((n.operand, d + 1))
        elif isinstance(n, Binary):
            stack.extend([(n.left, d + 1), (n.right, d + 1)])
    return depth


def depends_on_t(node: Expr) -> bool:
    if isinstance(node, Var):
        return True
    if isinstance(node, Unary):
        return depends_on_t(node.operand)
    if isinstance(node, Binary):
        return depends_on_t(node.left) or depends_on_t(node.right)
    return False


# --------------------------------------------------------------------------
# lexer / parser

_NUM, _NAME, _OP, _END = "number", "identifier", "op", "end"


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    offset: int


def _tokenize(data: bytes) -> list[_Token]:
    tokens = []
    i, n = 0, len(data)
    while i < n:
        c = data[i]
        if c in b" \t\r\n":
            i += 1
            continue
        start = i
        if 48 <= c <= 57 or (c == 46 and i + 1 < n and 48 <= data[i + 1] <= 57):
            while i < n and 48 <= data[i] <= 57:
                i += 1
            if i < n and data[i] == 46:
                i += 1
                while i < n and 48 <= data[i] <= 57:
                    i += 1
            if i < n and data[i] in b"eE":
                j = i + 1
                if j < n and data[j] in b"+-":
                    j += 1
                if j < n and 48 <= data[j] <= 57:
                    while j < n and 48 <= data[j] <= 57:
                        j += 1
                    i = j
            text = data[start:i].decode("ascii")
            if not math.isfinite(float(text)):
                raise ExprSyntaxError(start, {"finite number"}, text)
            tokens.append(_Token(_NUM, text, start))
        elif c == 95 or 65 <= c <= 90 or 97 <= c <= 122:
            while i < n and (data[i] == 95 or 48 <= data[i] <= 57 or 65 <= data[i] <= 90 or 97 <= data[i] <= 122):
                i += 1
            tokens.append(_Token(_NAME, data[start:i].decode("ascii"), start))
        elif c in b"+-*/^()":
            tokens.append(_Token(_OP, chr(c), start))
            i += 1
        else:
            raise ExprSyntaxError(start, {"number", "identifier", "operator"}, repr(bytes([c]))[2:-1])
    tokens.append(_Token(_END, "", n))
    return tokens


_ATOM_START = {"number", "identifier", "(", "-"}


class _Parser:
    def __init__(self, tokens: list[_Token], parameters: frozenset[str] | None):
        self.tokens = tokens
        self.pos = 0
        self.parameters = parameters
        self.depth = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def fail(self, expected: Iterable[str]):
        tok = self.peek()
        raise ExprSyntaxError(tok.offset, expected, tok.text or "end of input")

    def expect_op(self, op: str) -> None:
        tok = self.peek()
        if tok.kind != _OP or tok.text != op:
            self.fail({op})
        self.pos += 1

    def parse(self) -> Expr:
        node = self.expr()
        if self.peek().kind != _END:
            self.fail({"+", "-", "*", "/", "^", "end of input"})
        return node

    def _enter(self):
        self.depth += 1
        if self.depth > MAX_NESTING:
            raise ExprSyntaxError(self.peek().offset, {"shallower nesting"}, "nesting too deep")

    def expr(self) -> Expr:
        self._enter()
        node = self.term()
        while self.peek().kind == _OP and self.peek().text in "+-":
            op = self.next().text
            node = Binary(op, node, self.term())
        self.depth -= 1
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.peek().kind == _OP and self.peek().text in "*/":
            op = self.next().text
            node = Binary(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        tok = self.peek()
        if tok.kind == _OP and tok.text == "-":
            self.pos += 1
            self._enter()
            node = Unary("neg", self.unary())
            self.depth -= 1
            return node
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        tok = self.peek()
        if tok.kind == _OP and tok.text == "^":
            self.pos += 1
            self._enter()
            exponent = self.unary()
            self.depth -= 1
            return Binary("^", base, exponent)
        return base

    def atom(self) -> Expr:
        tok = self.peek()
        if tok.kind == _NUM:
            self.pos += 1
            return Const(float(tok.text))
        if tok.kind == _NAME:
            self.pos += 1
            name = tok.text
            nxt = self.peek()
            if nxt.kind == _OP and nxt.text == "(":
                if name not in FUNCTIONS:
                    raise UnknownSymbol(name, tok.offset)
                self.pos += 1
                arg = self.expr()
                self.expect_op(")")
                return Unary(name, arg)
            if name in FUNCTIONS:
                self.fail({"("})
            if name == VARIABLE:
                return Var()
            if name in CONSTANTS:
                return Param(name)
            if self.parameters is not None and name not in self.parameters:
                raise UnknownSymbol(name, tok.offset)
            return Param(name)
        if tok.kind == _OP and tok.text == "(":
            self.pos += 1
            node = self.expr()
            self.expect_op(")")
            return node
        self.fail(_ATOM_START)


def parse_expression(text: str | bytes, parameters: Iterable[str] | None = None) -> Expr:
    """Parse ``text`` into an expression tree.

    With ``parameters`` given, any other free name raises UnknownSymbol;
    with ``None`` every non-reserved name is accepted as a parameter.
    Offsets in errors are byte offsets into the UTF-8 encoding.
    """
    data = text.encode("utf-8", "surrogatepass") if isinstance(text, str) else bytes(text)
    if not data.strip():
        raise ExprSyntaxError(len(data), _ATOM_START, "end of input")
    params = None if parameters is None else frozenset(parameters)
    node = _Parser(_tokenize(data), params).parse()
    if tree_depth(node) > MAX_TREE_DEPTH:
        raise ExprSyntaxError(0, {"shorter expression"}, "expression tree too deep")
    return node


# --------------------------------------------------------------------------
# pretty printer

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}
_ATOM_PREC = 5


def _prec(node: Expr) -> int:
    if isinstance(node, Binary):
        return _PREC[node.op]
    if isinstance(node, Unary) and node.op == "neg":
        return _PREC["neg"]
    if isinstance(node, Const) and (node.value < 0 or math.copysign(1.0, node.value) < 0):
        return _PREC["neg"]
    return _ATOM_PREC


def _fmt_number(value: float) -> str:
    if value == int(value) and abs(value) < 1e16:
        return str(int(value)) if math.copysign(1.0, value) > 0 else "-" + str(int(-value))
    return repr(value)


def format_expr(node: Expr) -> str:
    """Canonical text form with the minimum parentheses needed to re-parse."""
    if isinstance(node, Const):
        return _fmt_number(node.value)
    if isinstance(node, Var):
        return VARIABLE
    if isinstance(node, Param):
        return node.name
    if isinstance(node, Unary):
        if node.op == "neg":
            inner = format_expr(node.operand)
            if _prec(node.operand) < _PREC["neg"]:
                inner = f"({inner})"
            return "-" + inner
        return f"{node.op}({format_expr(node.operand)})"
    left, right = format_expr(node.left), format_expr(node.right)
    p = _PREC[node.op]
    if node.op == "^":
        if _prec(node.left) <= p:
            left = f"({left})"
        if _prec(node.right) < _PREC["neg"]:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(node.left) < p:
        left = f"({left})"
    if _prec(node.right) <= p:
        right = f"({right})"
    if node.op in "+-":
        return f"{left} {node.op} {right}"
    return f"{left}{node.op}{right}"


# --------------------------------------------------------------------------
# dual-number evaluation

DualFn = Callable[[object], tuple]


def _check_finite(node: Expr, *values) -> None:
    for v in values:
        if not np.all(np.isfinite(v)):
            raise DomainError("non-finite result", node)


def _is_integer(x) -> bool:
    return bool(np.all(np.asarray(x) == np.round(np.asarray(x))))


def compile_dual(node: Expr, params: Mapping[str, float]) -> DualFn:
    """Turn ``node`` into ``f(t) -> (value, d value/dt)`` with parameters bound.

    ``t`` may be a float or a numpy array.  Raises SpecError for unbound
    parameters; evaluation raises DomainError.
    """
    if isinstance(node, Const):
        v = node.value
        return lambda t: (v + 0.0 * t, 0.0 * t)
    if isinstance(node, Var):
        return lambda t: (t + 0.0, 1.0 + 0.0 * t)
    if isinstance(node, Param):
        if node.name in params:
            v = float(params[node.name])
        elif node.name in CONSTANTS:
            v = CONSTANTS[node.name]
        else:
            raise SpecError(f"unbound parameter {node.name!r}")
        return lambda t: (v + 0.0 * t, 0.0 * t)
    if isinstance(node, Unary):
        return _compile_unary(node, compile_dual(node.operand, params))
    return _compile_binary(node, compile_dual(node.left, params), compile_dual(node.right, params))


def _compile_unary(node: Unary, f: DualFn) -> DualFn:
    op = node.op
    if op == "neg":
        def g(t):
            v, d = f(t)
            return -v, -d
    elif op == "sin":
        def g(t):
            v, d = f(t)
            return np.sin(v), np.cos(v) * d
    elif op == "cos":
        def g(t):
            v, d = f(t)
            return np.cos(v), -np.sin(v) * d
    elif op == "tan":
        def g(t):
            v, d = f(t)
            c = np.cos(v)
            if np.any(np.abs(c) < 1e-300):
                raise DomainError("tan pole", node)
            return np.tan(v), d / (c * c)
    elif op == "exp":
        def g(t):
            v, d = f(t)
            with np.errstate(over="ignore"):
                ev = np.exp(v)
            _check_finite(node, ev)
            return ev, ev * d
    elif op == "sqrt":
        def g(t):
            v, d = f(t)
            if np.any(v < 0):
                raise DomainError("sqrt of negative value", node)
            r = np.sqrt(v)
            if np.any((r == 0) & (d != 0)):
                raise DomainError("sqrt not differentiable at 0", node)
            with np.errstate(divide="ignore", invalid="ignore"):
                dr = np.where(r == 0, 0.0, d / (2.0 * np.where(r == 0, 1.0, r)))
            return r, dr if np.ndim(dr) else float(dr)
    elif op == "abs":
        # derivative taken as 0 at the kink
        def g(t):
            v, d = f(t)
            return np.abs(v), np.sign(v) * d
    else:  # pragma: no cover - parser guarantees the op set
        raise ValueError(op)
    return g


def _compile_binary(node: Binary, f: DualFn, g: DualFn) -> DualFn:
    op = node.op
    if op == "+":
        def h(t):
            a, da = f(t)
            b, db = g(t)
            return a + b, da + db
    elif op == "-":
        def h(t):
            a, da = f(t)
            b, db = g(t)
            return a - b, da - db
    elif op == "*":
        def h(t):
            a, da = f(t)
            b, db = g(t)
            return a * b, da * b + a * db
    elif op == "/":
        def h(t):
            a, da = f(t)
            b, db = g(t)
            if np.any(b == 0):
                raise DomainError("division by zero", node)
            return a / b, (da * b - a * db) / (b * b)
    elif op == "^":
        h = _compile_power(node, f, g, depends_on_t(node.right))
    else:  # pragma: no cover
        raise ValueError(op)

    def checked(t):
        v, d = h(t)
        _check_finite(node, v, d)
        return v, d

    return checked


def _compile_power(node: Binary, f: DualFn, g: DualFn, variable_exponent: bool) -> DualFn:
    if not variable_exponent:
        def h(t):
            a, da = f(t)
            p, _ = g(t)
            if np.any(a < 0) and not _is_integer(p):
                raise DomainError("non-integer power of negative base", node)
            if np.any((a == 0) & (np.asarray(p) < 0)):
                raise DomainError("division by zero", node)
            with np.errstate(all="ignore"):
                value = np.power(a, p)
                dpow = np.where(p == 0, 0.0, p * np.power(a, p - 1.0))
            if np.any(~np.isfinite(dpow) & (np.asarray(da) != 0)):
                raise DomainError("power not differentiable at 0", node)
            deriv = np.where(np.asarray(da) == 0, 0.0, dpow * da)
            if np.ndim(deriv) == 0:
                deriv = float(deriv)
            return value, deriv
        return h

    def h(t):
        a, da = f(t)
        p, dp = g(t)
        if np.any(a <= 0):
            raise DomainError("variable exponent needs a positive base", node)
        value = np.power(a, p)
        return value, value * (dp * np.log(a) + p * da / a)

    return h


def eval_dual(node: Expr, t, params: Mapping[str, float] | None = None) -> tuple:
    """Value and exact d/dt of ``node`` at ``t``."""
    v, d = compile_dual(node, params or {})(t)
    if np.ndim(v) == 0:
        return float(v), float(d)
    return v, d
