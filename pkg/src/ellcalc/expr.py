"""Immutable expression trees over the chart variables ``rho, phi, theta`` and
the ellipsoid parameter ``a``.

Nodes are hash-consed: building the same tree twice returns the same object, so
structural equality is identity and shared subtrees are evaluated once per
grid.  Light algebraic folding happens in the constructors (``x + 0``,
``1*x``, constant arithmetic); nothing downstream relies on it.
"""

from __future__ import annotations

import math
import threading
from typing import Callable, Iterable, Mapping

import numpy as np

__all__ = [
    "Expr",
    "Kernel",
    "EvaluationDomainError",
    "NotDifferentiableError",
    "CHART_VARIABLES",
    "VARIABLES",
    "const",
    "var",
    "add",
    "sub",
    "mul",
    "div",
    "power",
    "neg",
    "sin",
    "cos",
    "exp",
    "ln",
    "sqrt",
    "call",
    "differentiate",
    "substitute",
    "free_variables",
    "evaluate",
    "evaluate_array",
    "GridEvaluator",
    "register_kernel",
    "get_kernel",
    "ZERO",
    "ONE",
    "RHO",
    "PHI",
    "THETA",
    "A",
]

CHART_VARIABLES = ("rho", "phi", "theta")
VARIABLES = CHART_VARIABLES + ("a",)

CONST = "const"
VAR = "var"
SUM = "sum"
PROD = "prod"
QUOT = "quot"
POW = "pow"
NEG = "neg"
SIN = "sin"
COS = "cos"
EXP = "exp"
LN = "ln"
CALL = "call"

UNARY_FUNCTIONS = (SIN, COS, EXP, LN)


class EvaluationDomainError(ArithmeticError):
    """Raised when evaluation divides by zero or takes ``ln`` of a value <= 0."""


class NotDifferentiableError(ValueError):
    """Raised when a kernel has no declared partial for the requested variable."""


_TABLE: dict = {}
_TABLE_LOCK = threading.Lock()


class Expr:
    __slots__ = ("kind", "value", "args", "_hash", "_derivs", "_text")

    def __init__(self, kind, value, args):
        self.kind = kind
        self.value = value
        self.args = args
        self._hash = hash((kind, _value_key(value), tuple(id(c) for c in args)))
        self._derivs = {}
        self._text = None

    def __hash__(self):
        return self._hash

    def __setattr__(self, name, value):
        if name in ("_derivs", "_text") or not hasattr(self, "_hash"):
            object.__setattr__(self, name, value)
        else:
            raise AttributeError("Expr is immutable")

    def __reduce__(self):
        from .parser import parse

        return (parse, (str(self),))

    # arithmetic sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __pow__(self, n):
        return power(self, n)

    def __neg__(self):
        return neg(self)

    @property
    def is_constant(self) -> bool:
        return self.kind == CONST

    def size(self) -> int:
        """Number of distinct nodes in the DAG rooted here."""
        return len(_postorder([self]))

    def __str__(self):
        if self._text is None:
            from .parser import to_text

            self._text = to_text(self)
        return self._text

    def __repr__(self):
        return f"Expr({str(self)!r})"


def _value_key(value):
    if isinstance(value, float):
        return ("f", value)
    if value is None or isinstance(value, (str, int)):
        return value
    return ("id", id(value))


def _intern(kind, value=None, args=()):
    key = (kind, _value_key(value), tuple(id(c) for c in args))
    node = _TABLE.get(key)
    if node is not None:
        return node
    node = Expr(kind, value, tuple(args))
    with _TABLE_LOCK:
        return _TABLE.setdefault(key, node)


def _as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float, np.floating, np.integer)) and not isinstance(x, bool):
        return const(float(x))
    raise TypeError(f"cannot convert {type(x).__name__} to Expr")


# constructors ----------------------------------------------------------------

def const(x: float) -> Expr:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError("constants must be finite")
    if x == 0.0:
        x = 0.0
    return _intern(CONST, x)


def var(name: str) -> Expr:
    if name not in VARIABLES:
        raise ValueError(f"unknown variable {name!r}")
    return _intern(VAR, name)


ZERO = const(0.0)
ONE = const(1.0)
RHO = var("rho")
PHI = var("phi")
THETA = var("theta")
A = var("a")


def add(*terms) -> Expr:
    flat = []
    total = 0.0
    for t in terms:
        t = _as_expr(t)
        parts = t.args if t.kind == SUM else (t,)
        for p in parts:
            if p.kind == CONST:
                total += p.value
            else:
                flat.append(p)
    if total != 0.0:
        flat.append(const(total))
    if not flat:
        return ZERO
    if len(flat) == 1:
        return flat[0]
    return _intern(SUM, None, flat)


def neg(x) -> Expr:
    x = _as_expr(x)
    if x.kind == CONST:
        return const(-x.value)
    if x.kind == NEG:
        return x.args[0]
    return _intern(NEG, None, (x,))


def sub(x, y) -> Expr:
    return add(x, neg(_as_expr(y)))


def mul(*factors) -> Expr:
    flat = []
    coeff = 1.0
    for f in factors:
        f = _as_expr(f)
        if f.kind == NEG:
            coeff = -coeff
            f = f.args[0]
        parts = f.args if f.kind == PROD else (f,)
        for p in parts:
            if p.kind == NEG:
                coeff = -coeff
                p = p.args[0]
            if p.kind == CONST:
                coeff *= p.value
            else:
                flat.append(p)
    if coeff == 0.0:
        return ZERO
    if not flat:
        return const(coeff)
    body = flat[0] if len(flat) == 1 else _intern(PROD, None, flat)
    if coeff == 1.0:
        return body
    if coeff == -1.0:
        return neg(body)
    if coeff < 0:
        return neg(_intern(PROD, None, [const(-coeff)] + flat))
    return _intern(PROD, None, [const(coeff)] + flat)


def div(x, y) -> Expr:
    x, y = _as_expr(x), _as_expr(y)
    if y.kind == CONST:
        if y.value == 0.0:
            raise ZeroDivisionError("quotient denominator is the constant 0")
        if y.value == 1.0:
            return x
        if x.kind == CONST:
            return const(x.value / y.value)
    if x is ZERO:
        return ZERO
    if y.kind == NEG:
        return neg(div(x, y.args[0]))
    if x.kind == NEG:
        return neg(div(x.args[0], y))
    return _intern(QUOT, None, (x, y))


def power(x, n) -> Expr:
    if isinstance(n, Expr):
        if n.kind != CONST:
            raise ValueError("exponent must be an integer constant")
        n = n.value
    if isinstance(n, float):
        if not n.is_integer():
            raise ValueError(f"exponent must be an integer, got {n}")
        n = int(n)
    n = int(n)
    x = _as_expr(x)
    if n == 0:
        return ONE
    if n == 1:
        return x
    if x.kind == CONST and (x.value != 0.0 or n > 0):
        return const(x.value ** n)
    if x.kind == POW:
        return power(x.args[0], x.value * n)
    return _intern(POW, n, (x,))


def _unary(kind, numeric):
    def build(x) -> Expr:
        x = _as_expr(x)
        if x.kind == CONST:
            if kind == LN and x.value <= 0:
                raise EvaluationDomainError("ln of a non-positive constant")
            return const(numeric(x.value))
        return _intern(kind, None, (x,))

    build.__name__ = kind
    return build


sin = _unary(SIN, math.sin)
cos = _unary(COS, math.cos)
exp = _unary(EXP, math.exp)
ln = _unary(LN, math.log)


def sqrt(x) -> Expr:
    """Square root of a positive expression, written as ``exp(ln(x)/2)``."""
    x = _as_expr(x)
    if x.kind == CONST:
        return const(math.sqrt(x.value))
    return exp(mul(0.5, ln(x)))


# kernels -----------------------------------------------------------------------

class Kernel:
    """A numeric function of ``(rho, phi, theta)`` (and ``a``) usable inside trees.

    ``func(rho, phi, theta, a)`` must accept broadcastable numpy arrays.
    ``partials`` maps a chart variable to the Expr of the partial derivative
    (over the standard variables), or to a zero-argument callable producing it,
    which allows a kernel to refer to itself.  Variables without an entry are
    not differentiable and :func:`differentiate` refuses them.
    """

    def __init__(self, name: str, func: Callable, partials: Mapping | None = None):
        if not name.isidentifier():
            raise ValueError(f"kernel name must be an identifier: {name!r}")
        self.name = name
        self.func = func
        self._partials = dict(partials or {})

    def partial(self, variable: str) -> Expr:
        try:
            entry = self._partials[variable]
        except KeyError:
            raise NotDifferentiableError(
                f"kernel {self.name!r} declares no partial with respect to {variable}"
            ) from None
        return entry() if callable(entry) else _as_expr(entry)

    def declares(self, variable: str) -> bool:
        return variable in self._partials

    def __repr__(self):
        return f"Kernel({self.name!r})"


_KERNELS: dict[str, Kernel] = {}


def register_kernel(kernel: Kernel) -> Kernel:
    existing = _KERNELS.get(kernel.name)
    if existing is not None and existing is not kernel:
        raise ValueError(f"a different kernel named {kernel.name!r} is already registered")
    _KERNELS[kernel.name] = kernel
    return kernel


def get_kernel(name: str) -> Kernel | None:
    return _KERNELS.get(name)


def call(kernel: Kernel, args: Iterable | None = None) -> Expr:
    args = (RHO, PHI, THETA) if args is None else tuple(_as_expr(x) for x in args)
    if len(args) != 3:
        raise ValueError("kernels take exactly (rho, phi, theta)")
    return _intern(CALL, kernel, args)


# structural queries ------------------------------------------------------------

def _postorder(roots) -> list[Expr]:
    seen = set()
    order = []
    stack = [(r, False) for r in reversed(list(roots))]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for child in reversed(node.args):
            if id(child) not in seen:
                stack.append((child, False))
    return order


def free_variables(e: Expr) -> frozenset[str]:
    names = set()
    for node in _postorder([e]):
        if node.kind == VAR:
            names.add(node.value)
        elif node.kind == CALL:
            names.add("a")
    return frozenset(names)


# differentiation ---------------------------------------------------------------

def differentiate(e: Expr, variable: str) -> Expr:
    """Exact partial derivative of ``e`` with respect to a chart variable."""
    if variable not in CHART_VARIABLES:
        raise ValueError(f"can only differentiate in {CHART_VARIABLES}, got {variable!r}")
    for node in _postorder([e]):
        if variable not in node._derivs:
            node._derivs[variable] = _derive(node, variable)
    return e._derivs[variable]


def _d(node, variable):
    return node._derivs[variable]


def _derive(node: Expr, v: str) -> Expr:
    k = node.kind
    if k == CONST:
        return ZERO
    if k == VAR:
        return ONE if node.value == v else ZERO
    if k == SUM:
        return add(*(_d(c, v) for c in node.args))
    if k == NEG:
        return neg(_d(node.args[0], v))
    if k == PROD:
        terms = []
        for i, c in enumerate(node.args):
            dc = _d(c, v)
            if dc is ZERO:
                continue
            others = node.args[:i] + node.args[i + 1:]
            terms.append(mul(*others, dc))
        return add(*terms)
    if k == QUOT:
        num, den = node.args
        dn, dd = _d(num, v), _d(den, v)
        return sub(div(dn, den), div(mul(num, dd), power(den, 2)))
    if k == POW:
        base = node.args[0]
        db = _d(base, v)
        if db is ZERO:
            return ZERO
        return mul(node.value, power(base, node.value - 1), db)
    if k in UNARY_FUNCTIONS:
        arg = node.args[0]
        da = _d(arg, v)
        if da is ZERO:
            return ZERO
        if k == SIN:
            return mul(cos(arg), da)
        if k == COS:
            return neg(mul(sin(arg), da))
        if k == EXP:
            return mul(node, da)
        return div(da, arg)
    if k == CALL:
        kernel = node.value
        terms = []
        identity = node.args == (RHO, PHI, THETA)
        for name, arg in zip(CHART_VARIABLES, node.args):
            darg = _d(arg, v)
            if darg is ZERO:
                continue
            part = kernel.partial(name)
            if not identity:
                part = substitute(part, dict(zip(CHART_VARIABLES, node.args)))
            terms.append(mul(part, darg))
        return add(*terms)
    raise AssertionError(f"unhandled node kind {k}")


# substitution ------------------------------------------------------------------

def substitute(e: Expr, mapping: Mapping[str, object]) -> Expr:
    """Replace variables by expressions (or numbers) throughout ``e``."""
    repl = {name: _as_expr(x) for name, x in mapping.items()}
    done: dict[int, Expr] = {}
    for node in _postorder([e]):
        k = node.kind
        if k == VAR:
            out = repl.get(node.value, node)
        elif not node.args:
            out = node
        else:
            new_args = [done[id(c)] for c in node.args]
            if all(n is c for n, c in zip(new_args, node.args)):
                out = node
            else:
                out = _rebuild(node, new_args)
        done[id(node)] = out
    return done[id(e)]


def _rebuild(node: Expr, args) -> Expr:
    k = node.kind
    if k == SUM:
        return add(*args)
    if k == PROD:
        return mul(*args)
    if k == NEG:
        return neg(args[0])
    if k == QUOT:
        return div(args[0], args[1])
    if k == POW:
        return power(args[0], node.value)
    if k == SIN:
        return sin(args[0])
    if k == COS:
        return cos(args[0])
    if k == EXP:
        return exp(args[0])
    if k == LN:
        return ln(args[0])
    if k == CALL:
        return call(node.value, args)
    raise AssertionError(k)


# evaluation --------------------------------------------------------------------

class GridEvaluator:
    """Evaluates many trees on one set of points, sharing common subtrees.

    Inputs are broadcast against each other; every result has the broadcast
    shape.
    """

    def __init__(self, rho, phi, theta, a):
        rho, phi, theta, a = np.broadcast_arrays(
            *(np.asarray(x, dtype=float) for x in (rho, phi, theta, a))
        )
        self.shape = rho.shape
        self._vars = {"rho": rho, "phi": phi, "theta": theta, "a": a}
        self._memo: dict[int, np.ndarray] = {}
        self._keep: list[Expr] = []

    def __call__(self, e: Expr) -> np.ndarray:
        memo = self._memo
        hit = memo.get(id(e))
        if hit is not None:
            return hit
        for node in _postorder([e]):
            if id(node) not in memo:
                memo[id(node)] = self._eval_node(node)
                self._keep.append(node)
        return memo[id(e)]

    def _eval_node(self, node: Expr) -> np.ndarray:
        k = node.kind
        memo = self._memo
        if k == CONST:
            return np.full(self.shape, node.value)
        if k == VAR:
            return self._vars[node.value]
        vals = [memo[id(c)] for c in node.args]
        if k == SUM:
            out = vals[0] + vals[1]
            for x in vals[2:]:
                out = out + x
            return out
        if k == PROD:
            out = vals[0] * vals[1]
            for x in vals[2:]:
                out = out * x
            return out
        if k == NEG:
            return -vals[0]
        if k == QUOT:
            if np.any(vals[1] == 0.0):
                raise EvaluationDomainError(f"division by zero in {_short(node)}")
            return vals[0] / vals[1]
        if k == POW:
            if node.value < 0 and np.any(vals[0] == 0.0):
                raise EvaluationDomainError(f"zero raised to a negative power in {_short(node)}")
            return vals[0] ** float(node.value) if node.value < 0 else vals[0] ** node.value
        if k == SIN:
            return np.sin(vals[0])
        if k == COS:
            return np.cos(vals[0])
        if k == EXP:
            return np.exp(vals[0])
        if k == LN:
            if np.any(vals[0] <= 0.0):
                raise EvaluationDomainError(f"ln of a non-positive value in {_short(node)}")
            return np.log(vals[0])
        if k == CALL:
            out = node.value.func(vals[0], vals[1], vals[2], self._vars["a"])
            return np.broadcast_to(np.asarray(out, dtype=float), self.shape)
        raise AssertionError(k)


def _short(node: Expr, limit: int = 60) -> str:
    text = str(node)
    return text if len(text) <= limit else text[: limit - 3] + "..."


def evaluate_array(e: Expr, rho, phi, theta, a) -> np.ndarray:
    return GridEvaluator(rho, phi, theta, a)(e)


def evaluate(e: Expr, point, a: float) -> float:
    """Value of ``e`` at a chart point (any object with ``rho, phi, theta``)."""
    if a <= 0:
        raise ValueError("the ellipsoid parameter a must be positive")
    if isinstance(point, tuple):
        rho, phi, theta = point
    else:
        rho, phi, theta = point.rho, point.phi, point.theta
    return float(evaluate_array(e, rho, phi, theta, a))
