"""Text grammar for expressions, and the printer that emits it.

Grammar (EBNF)::

    expr     = term , { ("+" | "-") , term } ;
    term     = unary , { ("*" | "/") , unary } ;
    unary    = "-" , unary | power ;
    power    = atom , [ "^" , exponent ] ;
    exponent = "-" , exponent | power ;          (* right-associative *)
    atom     = number | name | name , "(" , [ expr , { "," , expr } ] , ")"
             | "(" , expr , ")" ;
    name     = "rho" | "phi" | "theta" | "a" | function | kernel ;
    function = "sin" | "cos" | "exp" | "ln" ;

Precedence is ``^`` > unary ``-`` > ``* /`` > ``+ -``.  Exponents must reduce
to integer constants.  Registered kernels are called as ``name(rho, phi, theta)``.
"""

from __future__ import annotations

import re
from typing import Mapping

from . import expr as ex
from .expr import Expr, Kernel

__all__ = ["parse", "to_text", "ExprSyntaxError", "UnknownIdentifierError"]


class ExprSyntaxError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at offset {position}")
        self.position = position


class UnknownIdentifierError(ExprSyntaxError):
    def __init__(self, name: str, position: int):
        super().__init__(f"unknown identifier {name!r}", position)
        self.name = name


_FUNCTIONS = {"sin": ex.sin, "cos": ex.cos, "exp": ex.exp, "ln": ex.ln}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str):
    pos = 0
    tokens = []
    while pos < len(text):
        if text[pos:].strip() == "":
            pos = len(text)
            break
        m = _TOKEN.match(text, pos)
        if m is None:
            bad = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {text[bad]!r}", bad)
        start = m.start(m.lastgroup)
        tokens.append((m.lastgroup, m.group(m.lastgroup), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, kernels: Mapping[str, Kernel]):
        self.tokens = _tokenize(text)
        self.i = 0
        self.kernels = kernels

    @property
    def tok(self):
        return self.tokens[self.i]

    def advance(self):
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect(self, op):
        kind, value, pos = self.tok
        if kind != "op" or value != op:
            found = "end of input" if kind == "end" else repr(value)
            raise ExprSyntaxError(f"expected {op!r}, found {found}", pos)
        self.advance()

    def parse(self) -> Expr:
        e = self.expr()
        kind, value, pos = self.tok
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {value!r}", pos)
        return e

    def expr(self):
        left = self.term()
        while self.tok[0] == "op" and self.tok[1] in "+-":
            op = self.advance()[1]
            right = self.term()
            left = ex.add(left, right) if op == "+" else ex.sub(left, right)
        return left

    def term(self):
        left = self.unary()
        while self.tok[0] == "op" and self.tok[1] in "*/":
            op = self.advance()[1]
            pos = self.tok[2]
            right = self.unary()
            if op == "*":
                left = ex.mul(left, right)
            else:
                try:
                    left = ex.div(left, right)
                except ZeroDivisionError:
                    raise ExprSyntaxError("division by the constant 0", pos) from None
        return left

    def unary(self):
        if self.tok[0] == "op" and self.tok[1] == "-":
            self.advance()
            return ex.neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok[0] == "op" and self.tok[1] == "^":
            self.advance()
            pos = self.tok[2]
            exponent = self.exponent()
            if exponent.kind != "const" or not float(exponent.value).is_integer():
                raise ExprSyntaxError("exponent must be an integer constant", pos)
            try:
                return ex.power(base, int(exponent.value))
            except ZeroDivisionError:
                raise ExprSyntaxError("zero raised to a negative power", pos) from None
        return base

    def exponent(self):
        if self.tok[0] == "op" and self.tok[1] == "-":
            self.advance()
            return ex.neg(self.exponent())
        return self.power()

    def atom(self):
        kind, value, pos = self.tok
        if kind == "num":
            self.advance()
            return ex.const(float(value))
        if kind == "name":
            self.advance()
            if value in ex.VARIABLES:
                return ex.var(value)
            if value in _FUNCTIONS or value in self.kernels:
                args = self.call_args(value)
                if value in _FUNCTIONS:
                    if len(args) != 1:
                        raise ExprSyntaxError(f"{value} takes one argument", pos)
                    try:
                        return _FUNCTIONS[value](args[0])
                    except ValueError as err:
                        raise ExprSyntaxError(str(err), pos) from None
                if len(args) != 3:
                    raise ExprSyntaxError(f"kernel {value} takes (rho, phi, theta)", pos)
                return ex.call(self.kernels[value], args)
            raise UnknownIdentifierError(value, pos)
        if kind == "op" and value == "(":
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        found = "end of input" if kind == "end" else repr(value)
        raise ExprSyntaxError(f"expected an expression, found {found}", pos)

    def call_args(self, name):
        self.expect("(")
        args = [self.expr()]
        while self.tok[0] == "op" and self.tok[1] == ",":
            self.advance()
            args.append(self.expr())
        self.expect(")")
        return args


def parse(text: str, kernels: Mapping[str, Kernel] | None = None) -> Expr:
    """Parse ``text`` into an :class:`Expr`.

    ``kernels`` adds callable kernel names on top of the global registry.
    """
    table = dict(ex._KERNELS)
    if kernels:
        table.update(kernels)
    return _Parser(text, table).parse()


# printing ----------------------------------------------------------------------

_SUM_LEVEL, _TERM_LEVEL, _UNARY_LEVEL, _POW_LEVEL, _ATOM_LEVEL = range(1, 6)


def _num(x: float) -> str:
    if x.is_integer() and abs(x) < 2 ** 53:
        return str(int(x))
    return repr(x)


def _level(e: Expr) -> int:
    k = e.kind
    if k == "const":
        return _UNARY_LEVEL if e.value < 0 else _ATOM_LEVEL
    if k == "sum":
        return _SUM_LEVEL
    if k in ("prod", "quot"):
        return _TERM_LEVEL
    if k == "neg":
        return _UNARY_LEVEL
    if k == "pow":
        return _POW_LEVEL
    return _ATOM_LEVEL


def to_text(e: Expr) -> str:
    # iterative over the DAG so deep trees don't hit the recursion limit
    out: dict[int, str] = {}
    for node in ex._postorder([e]):
        out[id(node)] = _render(node, out)
    return out[id(e)]


def _wrap(child: Expr, out, min_level: int) -> str:
    text = out[id(child)]
    return f"({text})" if _level(child) < min_level else text


def _render(node: Expr, out) -> str:
    k = node.kind
    if k == "const":
        return _num(node.value)
    if k == "var":
        return node.value
    if k == "sum":
        parts = [out[id(node.args[0])]]
        for child in node.args[1:]:
            if child.kind == "neg":
                parts.append(" - " + _wrap(child.args[0], out, _TERM_LEVEL))
            elif child.kind == "const" and child.value < 0:
                parts.append(" - " + _num(-child.value))
            else:
                parts.append(" + " + out[id(child)])
        return "".join(parts)
    if k == "prod":
        return "*".join(_wrap(c, out, _UNARY_LEVEL) for c in node.args)
    if k == "quot":
        num, den = node.args
        return f"{_wrap(num, out, _UNARY_LEVEL)}/{_wrap(den, out, _UNARY_LEVEL)}"
    if k == "neg":
        return "-" + _wrap(node.args[0], out, _UNARY_LEVEL)
    if k == "pow":
        base = _wrap(node.args[0], out, _ATOM_LEVEL)
        n = node.value
        return f"{base}^{n}" if n >= 0 else f"{base}^({n})"
    if k == "call":
        return f"{node.value.name}({', '.join(out[id(c)] for c in node.args)})"
    return f"{k}({out[id(node.args[0])]})"
