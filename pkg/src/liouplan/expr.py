"""Scalar expressions: parsing, printing, evaluation, differentiation.

Grammar (whitespace is insignificant)::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := '-'? power
    power  := atom ('^' signed-integer)?
    atom   := number | ident "'"* | func '(' expr ')' | '(' expr ')'

Primes on an identifier encode time-derivative order, so ``y''`` is the
second derivative of the flat output ``y``.  A minus sign applied directly to
a bare number literal is folded into a negative constant; ``-(3)`` keeps the
explicit negation node.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Mapping

from .errors import DomainError, ParseError, UnboundVariable, UnknownFunction

__all__ = [
    "Expr", "Constant", "Variable", "Unary", "Binary",
    "FUNCTIONS", "NAME_RE",
    "parse_expression", "to_string", "evaluate", "compile_expr",
    "partial_derivative", "simplify", "substitute", "variables",
    "as_expr", "is_constant", "prime_name", "split_primes",
]

NAME_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*'*\Z")

# ``sign`` is not meant for user input but is accepted so that derivatives of
# ``abs`` print and re-parse.
FUNCTIONS = frozenset(
    ["sin", "cos", "tan", "atan", "asin", "acos", "exp", "ln", "sqrt", "abs", "tanh", "sign"])

BINARY_OPS = ("+", "-", "*", "/", "^")


class Expr:
    """Base class of the expression tree.  Nodes are immutable and hashable."""

    __slots__ = ()

    def __str__(self):
        return to_string(self)

    # Building expressions in code reads better with operators.
    def __add__(self, other):
        return Binary("+", self, as_expr(other))

    def __radd__(self, other):
        return Binary("+", as_expr(other), self)

    def __sub__(self, other):
        return Binary("-", self, as_expr(other))

    def __rsub__(self, other):
        return Binary("-", as_expr(other), self)

    def __mul__(self, other):
        return Binary("*", self, as_expr(other))

    def __rmul__(self, other):
        return Binary("*", as_expr(other), self)

    def __truediv__(self, other):
        return Binary("/", self, as_expr(other))

    def __rtruediv__(self, other):
        return Binary("/", as_expr(other), self)

    def __pow__(self, n):
        return Binary("^", self, Constant(float(n)))

    def __neg__(self):
        return Unary("neg", self)


@dataclass(frozen=True, eq=True, slots=True)
class Constant(Expr):
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))


@dataclass(frozen=True, eq=True, slots=True)
class Variable(Expr):
    name: str

    def __post_init__(self):
        if not NAME_RE.match(self.name):
            raise ValueError(f"illegal variable name {self.name!r}")


@dataclass(frozen=True, eq=True, slots=True)
class Unary(Expr):
    func: str
    child: Expr

    def __post_init__(self):
        if self.func != "neg" and self.func not in FUNCTIONS:
            raise ValueError(f"unknown function {self.func!r}")


@dataclass(frozen=True, eq=True, slots=True)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr

    def __post_init__(self):
        if self.op not in BINARY_OPS:
            raise ValueError(f"unknown operator {self.op!r}")
        if self.op == "^":
            r = self.right
            if not isinstance(r, Constant) or not r.value.is_integer():
                raise ValueError("exponent must be an integer constant")


def as_expr(value) -> Expr:
    """Coerce numbers and strings to expressions."""
    if isinstance(value, Expr):
        return value
    if isinstance(value, str):
        return parse_expression(value)
    if isinstance(value, (int, float)):
        return Constant(float(value))
    raise TypeError(f"cannot convert {type(value).__name__} to Expr")


def is_constant(e: Expr, value: float | None = None) -> bool:
    if not isinstance(e, Constant):
        return False
    return value is None or e.value == value


def prime_name(base: str, order: int) -> str:
    return base + "'" * order


def split_primes(name: str) -> tuple[str, int]:
    stripped = name.rstrip("'")
    return stripped, len(name) - len(stripped)


# -- parsing ---------------------------------------------------------------------

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z][A-Za-z0-9_]*'*)
  | (?P<op>[-+*/^()])
""", re.VERBOSE)

_ATOM_START = frozenset(["number", "identifier", "'('"])


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = self._tokenize(text)
        self.pos = 0

    def _tokenize(self, text):
        tokens = []
        i = 0
        while i < len(text):
            m = _TOKEN_RE.match(text, i)
            if m is None:
                raise ParseError(f"unexpected character {text[i]!r}", text, i,
                                 _ATOM_START | {"operator"})
            kind = m.lastgroup
            if kind != "ws":
                value = m.group()
                tokens.append((kind if kind != "op" else value, value, i))
            i = m.end()
        tokens.append(("end", "", len(text)))
        return tokens

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def fail(self, expected):
        kind, value, offset = self.peek()
        what = "end of input" if kind == "end" else f"token {value!r}"
        raise ParseError(f"unexpected {what}", self.text, offset, expected)

    def expect(self, kind):
        if self.peek()[0] != kind:
            self.fail({f"'{kind}'"})
        return self.advance()

    def parse(self):
        e = self.expr()
        if self.peek()[0] != "end":
            self.fail({"operator", "end of input"})
        return e

    def expr(self):
        left = self.term()
        while self.peek()[0] in ("+", "-"):
            op = self.advance()[0]
            left = Binary(op, left, self.term())
        return left

    def term(self):
        left = self.factor()
        while self.peek()[0] in ("*", "/"):
            op = self.advance()[0]
            left = Binary(op, left, self.factor())
        return left

    def factor(self):
        if self.peek()[0] == "-":
            self.advance()
            start = self.pos
            inner = self.power()
            if (self.pos == start + 1 and self.tokens[start][0] == "number"):
                return Constant(-inner.value)
            return Unary("neg", inner)
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] != "^":
            return base
        self.advance()
        sign = 1
        if self.peek()[0] in ("+", "-"):
            sign = -1 if self.advance()[0] == "-" else 1
        kind, value, _ = self.peek()
        if kind != "number" or not value.isdigit():
            self.fail({"integer"})
        self.advance()
        return Binary("^", base, Constant(sign * int(value)))

    def atom(self):
        kind, value, offset = self.peek()
        if kind == "number":
            self.advance()
            return Constant(float(value))
        if kind == "ident":
            self.advance()
            if self.peek()[0] == "(":
                if value not in FUNCTIONS:
                    raise UnknownFunction(value, self.text, offset)
                self.advance()
                arg = self.expr()
                self.expect(")")
                return Unary(value, arg)
            return Variable(value)
        if kind == "(":
            self.advance()
            inner = self.expr()
            self.expect(")")
            return inner
        self.fail(_ATOM_START)


def parse_expression(text: str) -> Expr:
    """Parse ``text`` into an expression tree.

    Raises
    ------
    ParseError
        With the byte offset of the failure and the set of tokens that would
        have been accepted there.
    UnknownFunction
        If a call names a function outside ``FUNCTIONS``.
    """
    if not isinstance(text, str):
        raise TypeError("expression text must be a string")
    try:
        text.encode("ascii")
    except UnicodeEncodeError as exc:
        raise ParseError("non-ASCII character", text, exc.start, ()) from None
    if not text.strip():
        raise ParseError("empty expression", text, len(text), _ATOM_START)
    return _Parser(text).parse()


# -- printing --------------------------------------------------------------------

# Binding strength of what a node prints as: 1 sum, 2 product, 3 signed
# factor, 4 power, 5 atom.
def _level(e: Expr) -> int:
    if isinstance(e, Constant):
        return 3 if math.copysign(1.0, e.value) < 0 and e.value != 0 else 5
    if isinstance(e, Variable):
        return 5
    if isinstance(e, Unary):
        return 3 if e.func == "neg" else 5
    if e.op in ("+", "-"):
        return 1
    if e.op in ("*", "/"):
        return 2
    return 4


def _fmt_number(v: float) -> str:
    if not math.isfinite(v):
        raise ValueError(f"cannot print non-finite constant {v!r}")
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _wrap(e: Expr, min_level: int) -> str:
    s = to_string(e)
    return f"({s})" if _level(e) < min_level else s


def to_string(e: Expr) -> str:
    """Print ``e`` in the grammar accepted by :func:`parse_expression`."""
    if isinstance(e, Constant):
        return _fmt_number(e.value)
    if isinstance(e, Variable):
        return e.name
    if isinstance(e, Unary):
        if e.func == "neg":
            child = e.child
            # A bare literal after '-' would re-parse as a negative constant.
            if isinstance(child, Constant) or _level(child) < 4:
                return f"-({to_string(child)})"
            return "-" + to_string(child)
        return f"{e.func}({to_string(e.child)})"
    if e.op in ("+", "-"):
        return f"{_wrap(e.left, 1)} {e.op} {_wrap(e.right, 2)}"
    if e.op in ("*", "/"):
        return f"{_wrap(e.left, 2)}{e.op}{_wrap(e.right, 3)}"
    return f"{_wrap(e.left, 5)}^{int(e.right.value)}"


# -- evaluation ------------------------------------------------------------------

def _check(node, value):
    if not math.isfinite(value):
        raise DomainError(node, value)
    return value


def _ln(x):
    if x <= 0:
        raise ValueError
    return math.log(x)


def _sqrt(x):
    if x < 0:
        raise ValueError
    return math.sqrt(x)


def _asin(x):
    if abs(x) > 1:
        raise ValueError
    return math.asin(x)


def _acos(x):
    if abs(x) > 1:
        raise ValueError
    return math.acos(x)


def _sign(x):
    return 0.0 if x == 0 else math.copysign(1.0, x)


_UNARY = {
    "neg": lambda x: -x,
    "sin": math.sin, "cos": math.cos, "tan": math.tan, "atan": math.atan,
    "asin": _asin, "acos": _acos, "exp": math.exp, "ln": _ln, "sqrt": _sqrt,
    "abs": abs, "tanh": math.tanh, "sign": _sign,
}


def _apply_unary(node, x):
    try:
        return _check(node, _UNARY[node.func](x))
    except (ValueError, OverflowError):
        raise DomainError(node, x) from None


def _apply_binary(node, a, b):
    op = node.op
    try:
        if op == "+":
            r = a + b
        elif op == "-":
            r = a - b
        elif op == "*":
            r = a * b
        elif op == "/":
            if b == 0:
                raise DomainError(node, b)
            r = a / b
        else:
            if a == 0 and b < 0:
                raise DomainError(node, a)
            r = a ** int(b)
    except OverflowError:
        raise DomainError(node, (a, b)) from None
    return _check(node, r)


def evaluate(e: Expr, env: Mapping[str, float]) -> float:
    """Evaluate ``e`` with variables bound by ``env``.

    Division by zero, logarithms of non-positive values, square roots of
    negative values and overflow raise :class:`DomainError` rather than
    producing inf or NaN.
    """
    if isinstance(e, Constant):
        return e.value
    if isinstance(e, Variable):
        try:
            return float(env[e.name])
        except KeyError:
            raise UnboundVariable(e.name) from None
    if isinstance(e, Unary):
        return _apply_unary(e, evaluate(e.child, env))
    return _apply_binary(e, evaluate(e.left, env), evaluate(e.right, env))


_PY_UNARY = {
    "sin": "_m.sin", "cos": "_m.cos", "tan": "_m.tan", "atan": "_m.atan",
    "asin": "_m.asin", "acos": "_m.acos", "exp": "_m.exp", "ln": "_m.log",
    "sqrt": "_m.sqrt", "abs": "abs", "tanh": "_m.tanh", "sign": "_sign",
}


def _codegen(e: Expr) -> str:
    """Straight-line Python for ``e``; shared subtrees are computed once.

    Every arithmetic result is tested for finiteness.  Domain violations
    surface as Python exceptions (``ValueError``, ``ZeroDivisionError``,
    ``OverflowError``) or a failed finiteness test; the caller then reruns
    the reference evaluator, which raises the precise error.
    """
    lines: list[str] = []
    names: dict[Expr, str] = {}
    loads: dict[str, str] = {}

    def emit(node: Expr) -> str:
        if node in names:
            return names[node]
        if isinstance(node, Constant):
            v = node.value
            if math.isnan(v):
                return "_m.nan"
            if math.isinf(v):
                return "_m.inf" if v > 0 else "(-_m.inf)"
            return f"({v!r})"
        if isinstance(node, Variable):
            if node.name not in loads:
                loads[node.name] = f"v{len(loads)}"
            return loads[node.name]
        if isinstance(node, Unary):
            arg = emit(node.child)
            code = f"-{arg}" if node.func == "neg" else f"{_PY_UNARY[node.func]}({arg})"
        else:
            left = emit(node.left)
            if node.op == "^":
                code = f"{left} ** {int(node.right.value)}"
            else:
                code = f"{left} {node.op} {emit(node.right)}"
        target = f"r{len(names)}"
        names[node] = target
        lines.append(f"{target} = {code}")
        if not (isinstance(node, Unary) and node.func in ("neg", "sign", "abs")):
            lines.append(f"if not _fin({target}): return _slow(env)")
        return target

    result = emit(e)
    head = [f"{v} = float(env[{name!r}])" for name, v in loads.items()]
    body = "\n        ".join(head + lines + [f"return {result}"])
    return (
        "def _compiled(env):\n"
        "    try:\n"
        f"        {body}\n"
        "    except (KeyError, ValueError, ZeroDivisionError, OverflowError):\n"
        "        return _slow(env)\n"
    )


@lru_cache(maxsize=4096)
def compile_expr(e: Expr) -> Callable[[Mapping[str, float]], float]:
    """Return a fast function with the same semantics as :func:`evaluate`.

    The expression is translated once into straight-line Python.  Results
    are bit-identical to :func:`evaluate`, and so are the exceptions, since
    every failing evaluation is delegated to the reference walker.
    """
    namespace = {"_m": math, "_fin": math.isfinite, "_sign": _sign,
                 "_slow": lambda env: evaluate(e, env)}
    exec(compile(_codegen(e), "<liouplan-expr>", "exec"), namespace)
    return namespace["_compiled"]


# -- structure queries -----------------------------------------------------------

def variables(e: Expr) -> frozenset[str]:
    if isinstance(e, Variable):
        return frozenset([e.name])
    if isinstance(e, Constant):
        return frozenset()
    if isinstance(e, Unary):
        return variables(e.child)
    return variables(e.left) | variables(e.right)


def substitute(e: Expr, mapping: Mapping[str, Expr | float]) -> Expr:
    """Replace variables by expressions (not simplified)."""
    if isinstance(e, Variable):
        if e.name in mapping:
            return as_expr(mapping[e.name])
        return e
    if isinstance(e, Constant):
        return e
    if isinstance(e, Unary):
        return Unary(e.func, substitute(e.child, mapping))
    if e.op == "^":
        return Binary("^", substitute(e.left, mapping), e.right)
    return Binary(e.op, substitute(e.left, mapping), substitute(e.right, mapping))


# -- simplification --------------------------------------------------------------

ZERO = Constant(0.0)
ONE = Constant(1.0)


def _fold(node: Expr) -> Expr:
    try:
        return Constant(evaluate(node, {}))
    except DomainError:
        return node


def _simp_node(e: Expr) -> Expr:
    """Apply local rules to a node whose children are already simplified."""
    if isinstance(e, Unary):
        c = e.child
        if isinstance(c, Constant):
            return _fold(e)
        if e.func == "neg" and isinstance(c, Unary) and c.func == "neg":
            return c.child
        return e
    if not isinstance(e, Binary):
        return e
    op, a, b = e.op, e.left, e.right
    if isinstance(a, Constant) and isinstance(b, Constant):
        return _fold(e)
    if op == "+":
        if is_constant(a, 0):
            return b
        if is_constant(b, 0):
            return a
    elif op == "-":
        if is_constant(b, 0):
            return a
        if is_constant(a, 0):
            return _simp_node(Unary("neg", b))
    elif op == "*":
        if is_constant(a, 0) or is_constant(b, 0):
            return ZERO
        if is_constant(a, 1):
            return b
        if is_constant(b, 1):
            return a
    elif op == "/":
        if is_constant(b, 1):
            return a
        if is_constant(a, 0):
            return ZERO
    else:
        if b.value == 1:
            return a
        if b.value == 0:
            return ONE
    return e


def simplify(e: Expr) -> Expr:
    """Constant folding plus the identities 0+e, 1*e, 0*e, e^1, e^0.

    Deliberately local: no reassociation, no trigonometric rewriting.
    Idempotent.
    """
    if isinstance(e, Unary):
        return _simp_node(Unary(e.func, simplify(e.child)))
    if isinstance(e, Binary):
        if e.op == "^":
            return _simp_node(Binary("^", simplify(e.left), e.right))
        return _simp_node(Binary(e.op, simplify(e.left), simplify(e.right)))
    return e


# -- differentiation -------------------------------------------------------------

def _d_unary(func: str, u: Expr, du: Expr) -> Expr:
    if func == "neg":
        return -du
    if func == "sin":
        return Unary("cos", u) * du
    if func == "cos":
        return -(Unary("sin", u) * du)
    if func == "tan":
        return (ONE + Unary("tan", u) ** 2) * du
    if func == "atan":
        return du / (ONE + u ** 2)
    if func == "asin":
        return du / Unary("sqrt", ONE - u ** 2)
    if func == "acos":
        return -(du / Unary("sqrt", ONE - u ** 2))
    if func == "exp":
        return Unary("exp", u) * du
    if func == "ln":
        return du / u
    if func == "sqrt":
        return du / (Constant(2.0) * Unary("sqrt", u))
    if func == "abs":
        # sign(0) = 0 by convention
        return Unary("sign", u) * du
    if func == "tanh":
        return (ONE - Unary("tanh", u) ** 2) * du
    if func == "sign":
        return ZERO
    raise ValueError(func)


def _diff(e: Expr, var: str) -> Expr:
    if isinstance(e, Constant):
        return ZERO
    if isinstance(e, Variable):
        return ONE if e.name == var else ZERO
    if isinstance(e, Unary):
        return _d_unary(e.func, e.child, _diff(e.child, var))
    a, b = e.left, e.right
    if e.op == "+":
        return _diff(a, var) + _diff(b, var)
    if e.op == "-":
        return _diff(a, var) - _diff(b, var)
    if e.op == "*":
        return _diff(a, var) * b + a * _diff(b, var)
    if e.op == "/":
        return (_diff(a, var) * b - a * _diff(b, var)) / b ** 2
    n = b.value
    if n == 0:
        return ZERO
    return Constant(n) * a ** (n - 1) * _diff(a, var)


def partial_derivative(e: Expr, var: str) -> Expr:
    """Exact symbolic partial derivative of ``e`` with respect to ``var``, simplified.

    ``d abs(u)`` is written ``sign(u) * du`` with ``sign(0) = 0``.
    """
    if not NAME_RE.match(var):
        raise ValueError(f"illegal variable name {var!r}")
    return simplify(_diff(e, var))


def sum_exprs(terms: Iterable[Expr]) -> Expr:
    total: Expr = ZERO
    for t in terms:
        total = total + t
    return simplify(total)
