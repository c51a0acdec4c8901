"""Closed-form scalar functions of base (and fiber) coordinates.

Expressions are parsed from an infix surface syntax into an immutable AST and
compiled to a Python closure.  The closure is generic over the numeric type,
so evaluating it on :class:`Dual` inputs yields exact forward-mode derivatives;
nesting duals gives exact mixed second derivatives.

Grammar (whitespace-insensitive)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := ('-' | '+') unary | power
    power   := atom [('^' | '**') exponent]
    exponent:= ['-' | '+'] INTEGER | '(' ['-' | '+'] INTEGER ')'
    atom    := NUMBER | VARIABLE | 'pi' | FUNC '(' expr ')' | '(' expr ')'
    VARIABLE:= 'x' INTEGER | 'y' INTEGER          (1-based)
    FUNC    := sin | cos | tan | exp | log | sqrt | abs
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "Expr", "ExprGrid", "CoordPoint", "Dual", "ExprError", "ExprSyntaxError",
    "UnknownIdentifierError", "VariableRangeError", "DomainError",
    "parse_expr", "evaluate", "partial", "constant", "FUNCTIONS",
]


class ExprError(ValueError):
    """Base class for expression parsing errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}")


class UnknownIdentifierError(ExprSyntaxError):
    pass


class VariableRangeError(ExprSyntaxError):
    pass


class DomainError(ArithmeticError):
    """Raised when an expression is evaluated outside its domain."""


# ---------------------------------------------------------------------------
# dual numbers


def _real(v):
    while isinstance(v, Dual):
        v = v.re
    return v


class Dual:
    """Forward-mode dual number ``re + eps * e`` with ``e**2 = 0``.

    Both parts may themselves be duals, which is how second derivatives
    are obtained.
    """

    __slots__ = ("re", "eps")

    def __init__(self, re, eps=0.0):
        self.re = re
        self.eps = eps

    def __repr__(self):
        return f"Dual({self.re!r}, {self.eps!r})"

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.re + other.re, self.eps + other.eps)
        return Dual(self.re + other, self.eps)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.re - other.re, self.eps - other.eps)
        return Dual(self.re - other, self.eps)

    def __rsub__(self, other):
        return Dual(other - self.re, -self.eps)

    def __neg__(self):
        return Dual(-self.re, -self.eps)

    def __pos__(self):
        return self

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.re * other.re, self.re * other.eps + self.eps * other.re)
        return Dual(self.re * other, self.eps * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            if _real(other.re) == 0:
                raise DomainError("division by zero")
            inv = 1.0 / other.re
            q = self.re * inv
            return Dual(q, (self.eps - q * other.eps) * inv)
        if _real(other) == 0:
            raise DomainError("division by zero")
        return Dual(self.re / other, self.eps / other)

    def __rtruediv__(self, other):
        if _real(self.re) == 0:
            raise DomainError("division by zero")
        inv = 1.0 / self.re
        q = other * inv
        return Dual(q, -q * inv * self.eps)

    def __pow__(self, n):
        if not isinstance(n, int):
            raise TypeError("dual numbers only support integer powers")
        if n == 0:
            return Dual(_one_like(self.re), 0.0 * self.eps)
        if n < 0:
            if _real(self.re) == 0:
                raise DomainError("division by zero in negative power")
            return 1.0 / self ** (-n)
        return Dual(self.re ** n, n * self.re ** (n - 1) * self.eps)


def _one_like(v):
    return Dual(1.0, 0.0 * v.eps) if isinstance(v, Dual) else 1.0


def _sin(v):
    if isinstance(v, Dual):
        return Dual(_sin(v.re), _cos(v.re) * v.eps)
    return math.sin(v)


def _cos(v):
    if isinstance(v, Dual):
        return Dual(_cos(v.re), -_sin(v.re) * v.eps)
    return math.cos(v)


def _tan(v):
    if isinstance(v, Dual):
        t = _tan(v.re)
        return Dual(t, (1.0 + t * t) * v.eps)
    if math.cos(v) == 0.0:
        raise DomainError("tan pole")
    return math.tan(v)


def _exp(v):
    if isinstance(v, Dual):
        e = _exp(v.re)
        return Dual(e, e * v.eps)
    try:
        return math.exp(v)
    except OverflowError:
        raise DomainError(f"exp overflow at {v!r}") from None


def _log(v):
    if isinstance(v, Dual):
        if _real(v.re) <= 0:
            raise DomainError(f"log of non-positive value {_real(v.re)!r}")
        return Dual(_log(v.re), v.eps / v.re)
    if v <= 0:
        raise DomainError(f"log of non-positive value {v!r}")
    return math.log(v)


def _sqrt(v):
    if isinstance(v, Dual):
        r = _real(v.re)
        if r <= 0:
            # derivative is unbounded at 0
            raise DomainError(f"sqrt derivative undefined at {r!r}")
        s = _sqrt(v.re)
        return Dual(s, v.eps / (2.0 * s))
    if v < 0:
        raise DomainError(f"sqrt of negative value {v!r}")
    return math.sqrt(v)


def _abs(v):
    if isinstance(v, Dual):
        r = _real(v.re)
        sign = 1.0 if r > 0 else (-1.0 if r < 0 else 0.0)
        return Dual(_abs(v.re), sign * v.eps)
    return abs(v)


def _div(a, b):
    if not isinstance(b, Dual) and b == 0:
        raise DomainError("division by zero")
    return a / b


def _pow(a, n):
    if not isinstance(a, Dual) and a == 0 and n < 0:
        raise DomainError("division by zero in negative power")
    return a ** n


FUNCTIONS = {
    "sin": _sin, "cos": _cos, "tan": _tan, "exp": _exp,
    "log": _log, "sqrt": _sqrt, "abs": _abs,
}

_CONSTANTS = {"pi": math.pi}


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    kind: str  # "x" or "y"
    index: int  # 0-based


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Pow:
    base: object
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: object


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^(),]))"
)
_VAR = re.compile(r"([xy])([1-9]\d*)$")


def _tokenize(text):
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExprSyntaxError(f"unexpected character {text[bad]!r}", bad, text)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text, n_x, n_y):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.n_x = n_x
        self.n_y = n_y

    @property
    def tok(self):
        return self.tokens[self.i]

    def error(self, message, cls=ExprSyntaxError, pos=None):
        if pos is None:
            pos = self.tok[2]
        if self.tok[0] == "end" and cls is ExprSyntaxError and "end of input" not in message:
            message = f"{message} (end of input)"
        raise cls(message, pos, self.text)

    def accept(self, *values):
        kind, value, _ = self.tok
        if kind == "op" and value in values:
            self.i += 1
            return value
        return None

    def expect(self, value):
        if self.accept(value) is None:
            self.error(f"expected {value!r}")

    def parse(self):
        node = self.expr()
        if self.tok[0] != "end":
            self.error(f"unexpected token {self.tok[1]!r}")
        return node

    def expr(self):
        node = self.term()
        while (op := self.accept("+", "-")) is not None:
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while (op := self.accept("*", "/")) is not None:
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.accept("-") is not None:
            return Neg(self.unary())
        if self.accept("+") is not None:
            return self.unary()
        return self.power()

    def power(self):
        node = self.atom()
        if self.accept("^", "**") is not None:
            node = Pow(node, self.exponent())
            if self.tok[0] == "op" and self.tok[1] in ("^", "**"):
                self.error("chained powers must be parenthesized")
        return node

    def exponent(self):
        paren = self.accept("(") is not None
        sign = -1 if self.accept("-") == "-" else 1
        if sign == 1:
            self.accept("+")
        kind, value, pos = self.tok
        if kind != "num" or not value.isdigit():
            self.error("exponent must be an integer literal")
        self.i += 1
        if paren:
            self.expect(")")
        return sign * int(value)

    def atom(self):
        kind, value, pos = self.tok
        if kind == "num":
            self.i += 1
            return Num(float(value))
        if kind == "name":
            self.i += 1
            if value in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(value, arg)
            if value in _CONSTANTS:
                return Num(_CONSTANTS[value])
            m = _VAR.match(value)
            if m is None:
                self.error(f"unknown identifier {value!r}", UnknownIdentifierError, pos)
            kind_v, idx = m.group(1), int(m.group(2))
            limit = self.n_x if kind_v == "x" else self.n_y
            if idx > limit:
                self.error(
                    f"variable {value} out of range ({kind_v}1..{kind_v}{limit})",
                    VariableRangeError, pos,
                )
            return Var(kind_v, idx - 1)
        if self.accept("(") is not None:
            node = self.expr()
            self.expect(")")
            return node
        if kind == "end":
            self.error("unexpected end of input")
        self.error(f"unexpected token {value!r}")


def _to_source(node) -> str:
    """Python source for a node; operands may be floats or duals."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return f"{node.kind}[{node.index}]"
    if isinstance(node, Neg):
        return f"(-{_to_source(node.arg)})"
    if isinstance(node, BinOp):
        lhs, rhs = _to_source(node.left), _to_source(node.right)
        if node.op == "/":
            return f"_div({lhs}, {rhs})"
        return f"({lhs} {node.op} {rhs})"
    if isinstance(node, Pow):
        return f"_pow({_to_source(node.base)}, {node.exponent})"
    if isinstance(node, Call):
        return f"_{node.func}({_to_source(node.arg)})"
    raise TypeError(node)


def _to_text(node) -> str:
    if isinstance(node, Num):
        r = repr(node.value)
        return f"({r})" if node.value < 0 else r
    if isinstance(node, Var):
        return f"{node.kind}{node.index + 1}"
    if isinstance(node, Neg):
        return f"(-{_to_text(node.arg)})"
    if isinstance(node, BinOp):
        return f"({_to_text(node.left)} {node.op} {_to_text(node.right)})"
    if isinstance(node, Pow):
        return f"{_to_text_atom(node.base)}^{node.exponent}"
    if isinstance(node, Call):
        return f"{node.func}({_to_text(node.arg)})"
    raise TypeError(node)


def _to_text_atom(node):
    s = _to_text(node)
    if isinstance(node, (Var, Call)) or (isinstance(node, Num) and node.value >= 0):
        return s
    # BinOp, Neg and negative Num print fully wrapped; "(a^2)^3" starts with "(" but is not
    return f"({s})" if isinstance(node, Pow) or not s.startswith("(") else s


_NAMESPACE = {f"_{k}": v for k, v in FUNCTIONS.items()}
_NAMESPACE.update(_div=_div, _pow=_pow)


def _compile(node):
    return eval(f"lambda x, y: {_to_source(node)}", dict(_NAMESPACE))  # noqa: S307


def _tree_eval(node, x, y):
    """Reference tree-walking evaluator; slower than the compiled closure."""
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return (x if node.kind == "x" else y)[node.index]
    if isinstance(node, Neg):
        return -_tree_eval(node.arg, x, y)
    if isinstance(node, BinOp):
        a, b = _tree_eval(node.left, x, y), _tree_eval(node.right, x, y)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        return _div(a, b)
    if isinstance(node, Pow):
        return _pow(_tree_eval(node.base, x, y), node.exponent)
    if isinstance(node, Call):
        return FUNCTIONS[node.func](_tree_eval(node.arg, x, y))
    raise TypeError(node)


# ---------------------------------------------------------------------------
# public API


@dataclass(frozen=True)
class CoordPoint:
    """A point ``x`` of the base, optionally with fiber coordinates ``y``."""

    x: tuple
    y: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        object.__setattr__(self, "y", tuple(float(v) for v in self.y))
        if not all(math.isfinite(v) for v in self.x + self.y):
            raise ValueError("CoordPoint entries must be finite")


class Expr:
    """An immutable parsed scalar expression in ``x1..xn`` (and ``y1..ym``).

    Calling the expression evaluates it; inputs may be floats or
    :class:`Dual` numbers.
    """

    __slots__ = ("root", "n_x", "n_y", "text", "_fn", "_const")

    def __init__(self, root, n_x: int, n_y: int = 0, text: str | None = None):
        object.__setattr__(self, "root", root)
        object.__setattr__(self, "n_x", n_x)
        object.__setattr__(self, "n_y", n_y)
        object.__setattr__(self, "text", text if text is not None else _to_text(root))
        object.__setattr__(self, "_fn", _compile(root))
        object.__setattr__(self, "_const", root.value if isinstance(root, Num) else None)

    def __setattr__(self, name, value):
        raise AttributeError("Expr is immutable")

    def __repr__(self):
        return f"Expr({self.text!r}, n_x={self.n_x}, n_y={self.n_y})"

    def __eq__(self, other):
        return (isinstance(other, Expr) and self.root == other.root
                and self.n_x == other.n_x and self.n_y == other.n_y)

    def __hash__(self):
        return hash((self.root, self.n_x, self.n_y))

    @property
    def is_constant(self) -> bool:
        return self._const is not None

    def to_text(self) -> str:
        return _to_text(self.root)

    def __call__(self, x: Sequence, y: Sequence = ()):
        if self._const is not None:
            return self._const
        try:
            v = self._fn(x, y)
        except ZeroDivisionError:
            raise DomainError(f"division by zero in {self.text!r}") from None
        except OverflowError:
            raise DomainError(f"overflow in {self.text!r}") from None
        except DomainError as exc:
            raise DomainError(f"{exc} in {self.text!r} at x={_fmt(x)}, y={_fmt(y)}") from None
        if not math.isfinite(_real(v)):
            raise DomainError(f"non-finite value in {self.text!r} at x={_fmt(x)}")
        return v

    def value(self, x: Sequence, y: Sequence = ()) -> float:
        self._check(x, y)
        return float(self(_floats(x), _floats(y)))

    def partial(self, i: int, x: Sequence, y: Sequence = (), *, wrt: str = "x") -> float:
        """Exact first derivative with respect to ``x[i]`` (or ``y[i]``)."""
        self._check(x, y)
        xs, ys = list(_floats(x)), list(_floats(y))
        target = xs if wrt == "x" else ys
        if not 0 <= i < len(target):
            raise IndexError(f"derivative index {i} out of range")
        if self._const is not None:
            return 0.0
        target[i] = Dual(target[i], 1.0)
        v = self(xs, ys)
        return float(v.eps) if isinstance(v, Dual) else 0.0

    def gradient(self, x: Sequence, y: Sequence = ()) -> np.ndarray:
        n = len(x)
        return np.array([self.partial(i, x, y) for i in range(n)])

    def second_partial(self, i: int, j: int, x: Sequence, y: Sequence = (),
                       *, wrt: tuple = ("x", "x")) -> float:
        """Exact mixed second derivative via nested duals.

        ``wrt`` names the coordinate family of ``i`` and ``j`` respectively.
        """
        self._check(x, y)
        if self._const is not None:
            return 0.0
        cols = {"x": [Dual(Dual(v, 0.0), Dual(0.0, 0.0)) for v in _floats(x)],
                "y": [Dual(Dual(v, 0.0), Dual(0.0, 0.0)) for v in _floats(y)]}
        a = cols[wrt[0]][i]
        cols[wrt[0]][i] = Dual(Dual(a.re.re, 1.0), a.eps)
        b = cols[wrt[1]][j]
        cols[wrt[1]][j] = Dual(b.re, Dual(1.0, 0.0))
        v = self(cols["x"], cols["y"])
        if not isinstance(v, Dual):
            return 0.0
        inner = v.eps
        return float(inner.eps) if isinstance(inner, Dual) else 0.0

    def _check(self, x, y):
        if len(x) != self.n_x:
            raise ValueError(f"expected {self.n_x} base coordinates, got {len(x)}")
        if len(y) < self.n_y:
            raise ValueError(f"expected {self.n_y} fiber coordinates, got {len(y)}")


class ExprGrid:
    """A fixed-shape array of expressions compiled into one closure.

    A single pass evaluates every entry, so one dual pass per coordinate
    gives the full Jacobian of the grid.
    """

    def __init__(self, exprs, n_x: int, n_y: int = 0):
        arr = np.asarray(exprs, dtype=object)
        self.shape = arr.shape
        self.n_x = n_x
        self.n_y = n_y
        self.flat = [_as_expr(e, n_x, n_y) for e in arr.ravel()]
        self.all_constant = all(e.is_constant for e in self.flat)
        body = "".join(_to_source(e.root) + ", " for e in self.flat)
        self._fn = eval(f"lambda x, y: ({body})", dict(_NAMESPACE))  # noqa: S307
        self._const_values = (
            np.array([e._const for e in self.flat], dtype=float).reshape(self.shape)
            if self.all_constant else None
        )

    def __getitem__(self, idx):
        return self.flat[int(np.ravel_multi_index(idx, self.shape))]

    def _raw(self, x, y):
        try:
            out = self._fn(x, y)
        except (DomainError, ZeroDivisionError, OverflowError, ValueError):
            # re-run entry by entry to name the failing expression
            for e in self.flat:
                e(x, y)
            raise
        return out

    def values(self, x: Sequence, y: Sequence = ()) -> np.ndarray:
        if self._const_values is not None:
            return self._const_values.copy()
        out = np.array(self._raw(_floats(x), _floats(y)), dtype=float)
        if not np.all(np.isfinite(out)):
            raise DomainError(f"non-finite value at x={_fmt(x)}")
        return out.reshape(self.shape)

    def jet(self, x: Sequence, y: Sequence = ()):
        """Values and exact first derivatives in ``x``; derivative axis last."""
        vals = self.values(x, y)
        n = len(x)
        grad = np.zeros(self.shape + (n,))
        if self.all_constant:
            return vals, grad
        xs, ys = _floats(x), _floats(y)
        for j in range(n):
            xd = list(xs)
            xd[j] = Dual(xs[j], 1.0)
            out = self._raw(xd, ys)
            grad[..., j] = np.array(
                [v.eps if isinstance(v, Dual) else 0.0 for v in out], dtype=float
            ).reshape(self.shape)
        return vals, grad

    def jet2(self, x: Sequence, y: Sequence = ()):
        """Values, gradients and Hessians in ``x`` (Hessian axes last)."""
        vals, grad = self.jet(x, y)
        n = len(x)
        hess = np.zeros(self.shape + (n, n))
        if self.all_constant:
            return vals, grad, hess
        xs, ys = _floats(x), _floats(y)
        for i in range(n):
            for j in range(i, n):
                xd = [Dual(Dual(v, 0.0), Dual(0.0, 0.0)) for v in xs]
                xd[i] = Dual(Dual(xs[i], 1.0), Dual(0.0, 0.0))
                xd[j] = Dual(xd[j].re, Dual(1.0, 0.0))
                out = self._raw(xd, ys)
                h = np.array([_second(v) for v in out], dtype=float).reshape(self.shape)
                hess[..., i, j] = h
                hess[..., j, i] = h
        return vals, grad, hess


def _second(v):
    if isinstance(v, Dual) and isinstance(v.eps, Dual):
        return v.eps.eps
    return 0.0


def _as_expr(e, n_x, n_y):
    if isinstance(e, Expr):
        return e
    if isinstance(e, (int, float)):
        return constant(e, n_x, n_y)
    return parse_expr(str(e), n_x, n_y)


def _floats(v):
    return [float(c) for c in v]


def _fmt(v):
    try:
        return "(" + ", ".join(f"{float(_real(c)):.6g}" for c in v) + ")"
    except TypeError:
        return repr(v)


def parse_expr(text: str, n_vars: int, n_y: int = 0) -> Expr:
    """Parse ``text`` into an :class:`Expr` over ``x1..x{n_vars}`` and ``y1..y{n_y}``."""
    if not isinstance(text, str) or not text.strip():
        raise ExprSyntaxError("empty expression", 0, text if isinstance(text, str) else "")
    root = _Parser(text, n_vars, n_y).parse()
    return Expr(root, n_vars, n_y, text.strip())


def constant(value: float, n_vars: int, n_y: int = 0) -> Expr:
    return Expr(Num(float(value)), n_vars, n_y)


def evaluate(e: Expr, p) -> float:
    if isinstance(p, CoordPoint):
        return e.value(p.x, p.y)
    return e.value(p)


def partial(e: Expr, i: int, p) -> float:
    if isinstance(p, CoordPoint):
        return e.partial(i, p.x, p.y)
    return e.partial(i, p)
