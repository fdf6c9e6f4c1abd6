"""Scalar field expressions over chart coordinates.

A tiny infix language used by config files to define metric coefficients,
one-forms and wind fields::

    0.5 * sin(x) ^ 2 + sqrt(1 + y*y) / 3

Supported: ``+ - * /``, ``^`` or ``**`` (power), ``pow(a, b)``, the functions
``sin cos exp sqrt log``, the constants ``pi`` and ``e``, decimal literals
(optionally with an exponent, ``1.5e-3``) and coordinate symbols.
Derivatives are computed by straight-line forward-mode code generated per
expression; the :class:`Dual` interpreter is kept for second derivatives.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ExprSyntaxError


class Dual:
    """Forward-mode dual number ``val + sum_i grad[i] * e_i``.

    ``val`` and the entries of ``grad`` may be floats, numpy arrays or other
    :class:`Dual` instances (for higher derivatives).
    """

    __slots__ = ("val", "grad")

    def __init__(self, val, grad):
        self.val = val
        self.grad = tuple(grad)

    def __repr__(self):
        return f"Dual({self.val!r}, {self.grad!r})"

    def _lift(self, other):
        if isinstance(other, Dual):
            return other
        return Dual(other, (0.0,) * len(self.grad))

    def __add__(self, other):
        if not isinstance(other, Dual):
            return Dual(self.val + other, self.grad)
        return Dual(self.val + other.val, [a + b for a, b in zip(self.grad, other.grad)])

    __radd__ = __add__

    def __neg__(self):
        return Dual(-self.val, [-g for g in self.grad])

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Dual):
            return Dual(self.val * other, [g * other for g in self.grad])
        return Dual(
            self.val * other.val,
            [a * other.val + self.val * b for a, b in zip(self.grad, other.grad)],
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Dual):
            return Dual(self.val / other, [g / other for g in self.grad])
        inv = 1.0 / other.val
        q = self.val * inv
        return Dual(q, [(a - q * b) * inv for a, b in zip(self.grad, other.grad)])

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def __pow__(self, other):
        if isinstance(other, Dual):
            return exp(other * log(self))
        if other == 0:
            return Dual(self.val ** 0, [0.0 * g for g in self.grad])
        factor = other * self.val ** (other - 1)
        return Dual(self.val ** other, [factor * g for g in self.grad])

    def __rpow__(self, other):
        return exp(self * log(other))


def _unary(name, fn, dfn):
    def op(a):
        if isinstance(a, Dual):
            d = dfn(a.val)
            return Dual(op(a.val), [d * g for g in a.grad])
        return fn(a)

    op.__name__ = name
    return op


sin = _unary("sin", np.sin, lambda v: cos(v))
cos = _unary("cos", np.cos, lambda v: -sin(v))
exp = _unary("exp", np.exp, lambda v: exp(v))
log = _unary("log", np.log, lambda v: 1.0 / v)
sqrt = _unary("sqrt", np.sqrt, lambda v: 0.5 / sqrt(v))


def power(a, b):
    return a ** b


FUNCTIONS: dict[str, tuple[int, Callable]] = {
    "sin": (1, sin),
    "cos": (1, cos),
    "exp": (1, exp),
    "log": (1, log),
    "sqrt": (1, sqrt),
    "pow": (2, power),
}
CONSTANTS = {"pi": math.pi, "e": math.e}


# ---------------------------------------------------------------------------
# AST


class Node:
    """Expression tree node.  Arithmetic operators build new trees."""

    def evaluate(self, env):
        raise NotImplementedError

    def symbols(self) -> frozenset:
        raise NotImplementedError

    def __add__(self, other):
        return _fold(BinOp("+", self, as_node(other)))

    def __radd__(self, other):
        return _fold(BinOp("+", as_node(other), self))

    def __sub__(self, other):
        return _fold(BinOp("-", self, as_node(other)))

    def __rsub__(self, other):
        return _fold(BinOp("-", as_node(other), self))

    def __mul__(self, other):
        return _fold(BinOp("*", self, as_node(other)))

    def __rmul__(self, other):
        return _fold(BinOp("*", as_node(other), self))

    def __truediv__(self, other):
        return _fold(BinOp("/", self, as_node(other)))

    def __rtruediv__(self, other):
        return _fold(BinOp("/", as_node(other), self))

    def __neg__(self):
        return _fold(Neg(self))

    def __pow__(self, other):
        return _fold(BinOp("^", self, as_node(other)))


@dataclass(frozen=True, eq=False)
class Num(Node):
    value: float

    def evaluate(self, env):
        return self.value

    def symbols(self):
        return frozenset()

    def __str__(self):
        return repr(self.value)


@dataclass(frozen=True, eq=False)
class Var(Node):
    name: str

    def evaluate(self, env):
        return env[self.name]

    def symbols(self):
        return frozenset([self.name])

    def __str__(self):
        return self.name


@dataclass(frozen=True, eq=False)
class Neg(Node):
    arg: Node

    def evaluate(self, env):
        return -self.arg.evaluate(env)

    def symbols(self):
        return self.arg.symbols()

    def __str__(self):
        return f"(-{self.arg})"


_BINARY = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": lambda a, b: a / b,
    "^": lambda a, b: a ** b,
}


@dataclass(frozen=True, eq=False)
class BinOp(Node):
    op: str
    left: Node
    right: Node

    def evaluate(self, env):
        return _BINARY[self.op](self.left.evaluate(env), self.right.evaluate(env))

    def symbols(self):
        return self.left.symbols() | self.right.symbols()

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True, eq=False)
class Call(Node):
    fn: str
    args: tuple

    def evaluate(self, env):
        return FUNCTIONS[self.fn][1](*(a.evaluate(env) for a in self.args))

    def symbols(self):
        out = frozenset()
        for a in self.args:
            out |= a.symbols()
        return out

    def __str__(self):
        return f"{self.fn}({', '.join(str(a) for a in self.args)})"


def as_node(x) -> Node:
    if isinstance(x, Node):
        return x
    if isinstance(x, ScalarFieldExpr):
        return x.ast
    return Num(float(x))


def _fold(node: Node) -> Node:
    """Constant-fold ``node`` when it has no free symbols."""
    if isinstance(node, Num) or node.symbols():
        return node
    with np.errstate(all="ignore"):
        value = float(node.evaluate({}))
    return Num(value)


# ---------------------------------------------------------------------------
# Parser (recursive descent)

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^(),]))"
)


def _tokenize(text: str):
    pos = 0
    tokens = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            col = pos + len(text[pos:]) - len(text[pos:].lstrip()) + 1
            raise ExprSyntaxError(f"unexpected character {text[col - 1]!r} in {text!r}", column=col)
        kind = m.lastgroup
        start = m.start(kind) + 1
        val = m.group(kind)
        if kind == "op" and val == "**":
            val = "^"
        tokens.append((kind, val, start))
        pos = m.end()
    tokens.append(("end", "", len(text) + 1))
    return tokens


class _Parser:
    def __init__(self, text, symbols):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.symbols = symbols

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, col = self.take()
        if val != value:
            found = "end of input" if kind == "end" else repr(val)
            raise ExprSyntaxError(f"expected {value!r}, found {found} in {self.text!r}", column=col)

    def parse(self):
        node = self.expr()
        kind, val, col = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {val!r} in {self.text!r}", column=col)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[0] == "op" and self.peek()[1] in ("-", "+"):
            op = self.take()[1]
            arg = self.unary()
            return Neg(arg) if op == "-" else arg
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            # right associative; allows 2^-1
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        kind, val, col = self.take()
        if kind == "num":
            return Num(float(val))
        if kind == "name":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if val not in FUNCTIONS:
                    raise ExprSyntaxError(f"unknown function {val!r} in {self.text!r}", column=col)
                self.take()
                args = [self.expr()]
                while self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                arity = FUNCTIONS[val][0]
                if len(args) != arity:
                    raise ExprSyntaxError(
                        f"{val} takes {arity} argument(s), got {len(args)} in {self.text!r}",
                        column=col,
                    )
                return Call(val, tuple(args))
            if val in self.symbols:
                return Var(val)
            if val in CONSTANTS:
                return Num(CONSTANTS[val])
            raise ExprSyntaxError(f"unknown symbol {val!r} in {self.text!r}", column=col)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(val)
        raise ExprSyntaxError(f"unexpected {found} in {self.text!r}", column=col)


def _fold_tree(node: Node) -> Node:
    if isinstance(node, (Num, Var)):
        return node
    if isinstance(node, Neg):
        return _fold(Neg(_fold_tree(node.arg)))
    if isinstance(node, BinOp):
        return _fold(BinOp(node.op, _fold_tree(node.left), _fold_tree(node.right)))
    if isinstance(node, Call):
        return _fold(Call(node.fn, tuple(_fold_tree(a) for a in node.args)))
    raise TypeError(node)


# ---------------------------------------------------------------------------
# Forward-mode source transformation: the tree is turned once into
# straight-line numpy code computing the value and all first partials.


class _Emitter:
    def __init__(self, coords):
        self.coords = tuple(coords)
        self.m = len(coords)
        self.lines = []
        self.n = 0

    def tmp(self, expr):
        name = f"t{self.n}"
        self.n += 1
        self.lines.append(f"{name} = {expr}")
        return name

    @staticmethod
    def _scale(c, g):
        return [None if d is None else f"{c} * {d}" for d in g]

    def _combine(self, terms):
        # terms: list of per-component expression lists, summed componentwise
        out = []
        for parts in zip(*terms):
            parts = [q for q in parts if q is not None]
            out.append(self.tmp(" + ".join(parts)) if parts else None)
        return out

    def visit(self, node):
        """Return ``(value_name, [grad_name or None] * m)``."""
        m = self.m
        if isinstance(node, Num):
            return repr(float(node.value)), [None] * m
        if isinstance(node, Var):
            i = self.coords.index(node.name)
            return f"x{i}", ["1.0" if j == i else None for j in range(m)]
        if isinstance(node, Neg):
            a, ga = self.visit(node.arg)
            return self.tmp(f"-{a}"), self._combine([self._scale("-1.0", ga)])
        if isinstance(node, BinOp):
            a, ga = self.visit(node.left)
            b, gb = self.visit(node.right)
            if node.op == "+":
                return self.tmp(f"{a} + {b}"), self._combine([ga, gb])
            if node.op == "-":
                return self.tmp(f"{a} - {b}"), self._combine([ga, self._scale("-1.0", gb)])
            if node.op == "*":
                return self.tmp(f"{a} * {b}"), self._combine([self._scale(b, ga), self._scale(a, gb)])
            if node.op == "/":
                q = self.tmp(f"{a} / {b}")
                inv = self.tmp(f"1.0 / {b}")
                qi = self.tmp(f"-{q} * {inv}")
                return q, self._combine([self._scale(inv, ga), self._scale(qi, gb)])
            return self._power(a, ga, b, gb, node.right)
        if isinstance(node, Call):
            args = [self.visit(a) for a in node.args]
            if node.fn == "pow":
                (a, ga), (b, gb) = args
                return self._power(a, ga, b, gb, node.args[1])
            (a, ga), = args
            if node.fn == "sin":
                v, d = self.tmp(f"np.sin({a})"), self.tmp(f"np.cos({a})")
            elif node.fn == "cos":
                v, d = self.tmp(f"np.cos({a})"), self.tmp(f"-np.sin({a})")
            elif node.fn == "exp":
                v = self.tmp(f"np.exp({a})")
                d = v
            elif node.fn == "log":
                v, d = self.tmp(f"np.log({a})"), self.tmp(f"1.0 / {a}")
            elif node.fn == "sqrt":
                v = self.tmp(f"np.sqrt({a})")
                d = self.tmp(f"0.5 / {v}")
            else:  # pragma: no cover - parser rejects unknown names
                raise TypeError(node.fn)
            return v, self._combine([self._scale(d, ga)])
        raise TypeError(node)

    def _power(self, a, ga, b, gb, exponent):
        if isinstance(exponent, Num):
            c = float(exponent.value)
            v = self.tmp(f"{a} ** {c!r}")
            if c == 0.0:
                return v, [None] * self.m
            d = self.tmp(f"{c!r} * {a} ** {c - 1.0!r}")
            return v, self._combine([self._scale(d, ga)])
        v = self.tmp(f"{a} ** {b}")
        la = self.tmp(f"np.log({a})")
        da = self.tmp(f"{b} * {a} ** ({b} - 1.0)")
        db = self.tmp(f"{v} * {la}")
        return v, self._combine([self._scale(da, ga), self._scale(db, gb)])


def compile_forward(ast: Node, coords: Sequence[str]) -> Callable:
    """Compile ``ast`` into ``f(x0, ..., x_{m-1}) -> (value, (d_0, ..., d_{m-1}))``.

    Zero partials are returned as the float 0.0.
    """
    em = _Emitter(coords)
    val, grad = em.visit(ast)
    args = ", ".join(f"x{i}" for i in range(em.m))
    body = ["    " + ln for ln in em.lines]
    gtxt = ", ".join("0.0" if g is None else g for g in grad)
    src = f"def _f({args}):\n" + "\n".join(body + [f"    return {val}, ({gtxt},)"]) + "\n"
    scope = {"np": np}
    exec(compile(src, "<rkgeo-expr>", "exec"), scope)
    fn = scope["_f"]
    fn.source = src
    return fn


# ---------------------------------------------------------------------------


class ScalarFieldExpr:
    """A parsed scalar field on a chart with coordinate names ``coords``."""

    def __init__(self, ast: Node, coords: Sequence[str]):
        self.coords = tuple(coords)
        self.ast = _fold_tree(ast)
        self._compiled = None
        extra = self.ast.symbols() - set(self.coords)
        if extra:
            raise ExprSyntaxError(f"unknown symbols {sorted(extra)}")

    @classmethod
    def parse(cls, text, coords: Sequence[str]) -> "ScalarFieldExpr":
        if isinstance(text, (int, float)) and not isinstance(text, bool):
            return cls(Num(float(text)), coords)
        if not isinstance(text, str):
            raise ExprSyntaxError(f"expression must be a string or number, got {type(text).__name__}")
        return cls(_Parser(text, set(coords)).parse(), coords)

    @classmethod
    def constant(cls, value: float, coords: Sequence[str]) -> "ScalarFieldExpr":
        return cls(Num(float(value)), coords)

    @property
    def is_constant(self) -> bool:
        return isinstance(self.ast, Num)

    def __str__(self):
        return str(self.ast)

    def __repr__(self):
        return f"ScalarFieldExpr({self})"

    def _env(self, x):
        return {name: x[..., i] if isinstance(x, np.ndarray) else x[i] for i, name in enumerate(self.coords)}

    def __call__(self, x):
        """Evaluate at ``x`` of shape ``(..., m)``."""
        x = np.asarray(x, dtype=float)
        if self.is_constant:
            return np.broadcast_to(self.ast.value, x.shape[:-1]) * 1.0
        return self.ast.evaluate(self._env(x)) + np.zeros(x.shape[:-1])

    def evaluate_generic(self, values: Sequence):
        """Evaluate with arbitrary coordinate values (floats, arrays, duals)."""
        return self.ast.evaluate(dict(zip(self.coords, values)))

    def value_and_grad(self, x):
        """Value and coordinate gradient at ``x`` (shape ``(..., m)``).

        Returns ``(value, grad)`` with ``grad`` of shape ``(..., m)``.
        """
        x = np.asarray(x, dtype=float)
        m = len(self.coords)
        shape = x.shape[:-1]
        if self.is_constant:
            return np.full(shape, self.ast.value), np.zeros(shape + (m,))
        if self._compiled is None:
            self._compiled = compile_forward(self.ast, self.coords)
        with np.errstate(all="ignore"):
            val, grad = self._compiled(*(x[..., i] for i in range(m)))
        if not shape:
            return np.float64(val), np.array(grad, dtype=float)
        grad = np.stack([np.zeros(shape) + g for g in grad], axis=-1)
        return np.zeros(shape) + val, grad

    def point_value_and_grad(self, xs):
        """Fast path for one point given as a sequence of floats: ``(value, grad tuple)``."""
        if self._compiled is None:
            self._compiled = compile_forward(self.ast, self.coords)
        return self._compiled(*xs)

    def value_and_grad_dual(self, x):
        """Same as :meth:`value_and_grad`, evaluated by interpreting the tree on duals."""
        x = np.asarray(x, dtype=float)
        m = len(self.coords)
        shape = x.shape[:-1]
        seeds = [Dual(x[..., i], [1.0 if j == i else 0.0 for j in range(m)]) for i in range(m)]
        out = self.evaluate_generic(seeds)
        if not isinstance(out, Dual):
            return np.zeros(shape) + out, np.zeros(shape + (m,))
        grad = np.stack([np.zeros(shape) + g for g in out.grad], axis=-1)
        return np.zeros(shape) + out.val, grad

    def hessian(self, x):
        """Second coordinate derivatives at a single point ``x`` (nested duals)."""
        x = np.asarray(x, dtype=float)
        m = len(self.coords)
        if self.is_constant:
            return np.zeros((m, m))
        seeds = []
        for i in range(m):
            inner = [Dual(1.0 if j == i else 0.0, [0.0] * m) for j in range(m)]
            seeds.append(Dual(Dual(x[i], [1.0 if j == i else 0.0 for j in range(m)]), inner))
        out = self.evaluate_generic(seeds)
        hess = np.zeros((m, m))
        if not isinstance(out, Dual):
            return hess
        for i, gi in enumerate(out.grad):
            if isinstance(gi, Dual):
                hess[i] = [float(v) for v in gi.grad]
        return hess

    # arithmetic composition (used by from_zermelo)
    def _wrap(self, node):
        return ScalarFieldExpr(node, self.coords)

    def __add__(self, o):
        return self._wrap(self.ast + as_node(o))

    __radd__ = __add__

    def __sub__(self, o):
        return self._wrap(self.ast - as_node(o))

    def __rsub__(self, o):
        return self._wrap(as_node(o) - self.ast)

    def __mul__(self, o):
        return self._wrap(self.ast * as_node(o))

    __rmul__ = __mul__

    def __truediv__(self, o):
        return self._wrap(self.ast / as_node(o))

    def __neg__(self):
        return self._wrap(-self.ast)
