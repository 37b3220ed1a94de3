"""Expression trees for profile pieces.

Nodes are hash-consed: structurally equal subtrees are the same object, so
derivative trees share storage and the code generator can eliminate common
subexpressions by identity.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Sequence

import numpy as np


class Op(str, Enum):
    CONST = "const"
    VAR = "var"
    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    DIV = "div"
    POW = "pow"
    EXP = "exp"
    LN = "ln"
    SIN = "sin"
    COS = "cos"
    NEG = "neg"


FUNCS = {"exp": Op.EXP, "ln": Op.LN, "sin": Op.SIN, "cos": Op.COS}


class ExprNode:
    """Immutable expression node; build through the module-level constructors."""

    __slots__ = ("op", "children", "value", "_deriv")

    def __init__(self, op: Op, children: tuple["ExprNode", ...], value: float):
        self.op = op
        self.children = children
        self.value = value
        self._deriv: ExprNode | None = None

    def __repr__(self) -> str:
        return f"ExprNode({to_text(self)})"

    @property
    def is_const(self) -> bool:
        return self.op is Op.CONST

    def derivative(self) -> "ExprNode":
        if self._deriv is None:
            self._deriv = _diff(self)
        return self._deriv

    def __call__(self, x: float) -> float:
        return compile_scalar(self)(x)


_INTERN: dict[tuple, ExprNode] = {}


def _node(op: Op, children: tuple[ExprNode, ...] = (), value: float = 0.0) -> ExprNode:
    key = (op, tuple(id(c) for c in children), value)
    n = _INTERN.get(key)
    if n is None:
        n = ExprNode(op, children, value)
        _INTERN[key] = n
    return n


def const(v: float) -> ExprNode:
    v = float(v)
    if v == 0.0:
        v = 0.0  # fold -0.0
    return _node(Op.CONST, (), v)


ZERO = const(0.0)
ONE = const(1.0)
X = _node(Op.VAR)


def _cv(n: ExprNode) -> float | None:
    return n.value if n.op is Op.CONST else None


def add(a: ExprNode, b: ExprNode) -> ExprNode:
    ca, cb = _cv(a), _cv(b)
    if ca is not None and cb is not None:
        return const(ca + cb)
    if ca == 0.0:
        return b
    if cb == 0.0:
        return a
    if b.op is Op.NEG:
        return sub(a, b.children[0])
    return _node(Op.ADD, (a, b))


def sub(a: ExprNode, b: ExprNode) -> ExprNode:
    ca, cb = _cv(a), _cv(b)
    if ca is not None and cb is not None:
        return const(ca - cb)
    if cb == 0.0:
        return a
    if ca == 0.0:
        return neg(b)
    if a is b:
        return ZERO
    if b.op is Op.NEG:
        return add(a, b.children[0])
    return _node(Op.SUB, (a, b))


def neg(a: ExprNode) -> ExprNode:
    if a.op is Op.CONST:
        return const(-a.value)
    if a.op is Op.NEG:
        return a.children[0]
    return _node(Op.NEG, (a,))


def mul(a: ExprNode, b: ExprNode) -> ExprNode:
    ca, cb = _cv(a), _cv(b)
    if ca is not None and cb is not None:
        return const(ca * cb)
    if cb is not None:
        a, b, ca, cb = b, a, cb, ca
    if ca is not None:
        if ca == 0.0:
            return ZERO
        if ca == 1.0:
            return b
        if ca == -1.0:
            return neg(b)
        if b.op is Op.MUL and b.children[0].op is Op.CONST:
            return mul(const(ca * b.children[0].value), b.children[1])
        if b.op is Op.NEG:
            return mul(const(-ca), b.children[0])
    if a.op is Op.NEG:
        return neg(mul(a.children[0], b))
    if b.op is Op.NEG:
        return neg(mul(a, b.children[0]))
    return _node(Op.MUL, (a, b))


def div(a: ExprNode, b: ExprNode) -> ExprNode:
    ca, cb = _cv(a), _cv(b)
    if cb is not None:
        if cb == 0.0:
            raise ZeroDivisionError("division by the constant 0")
        if ca is not None:
            return const(ca / cb)
        if cb == 1.0:
            return a
        if cb == -1.0:
            return neg(a)
    if ca == 0.0:
        return ZERO
    if a is b:
        return ONE
    return _node(Op.DIV, (a, b))


def power(a: ExprNode, e: float) -> ExprNode:
    e = float(e)
    if e == 0.0:
        return ONE
    if e == 1.0:
        return a
    ca = _cv(a)
    if ca is not None:
        return const(_pow_scalar(ca, e))
    if a.op is Op.POW and e.is_integer() and float(a.value).is_integer():
        return power(a.children[0], a.value * e)
    return _node(Op.POW, (a,), e)


def func(op: Op, a: ExprNode) -> ExprNode:
    ca = _cv(a)
    if ca is not None:
        return const(_SCALAR_FUNCS[op](ca))
    return _node(op, (a,))


def exp(a):
    return func(Op.EXP, a)


def ln(a):
    return func(Op.LN, a)


def sin(a):
    return func(Op.SIN, a)


def cos(a):
    return func(Op.COS, a)


def _pow_scalar(b: float, e: float) -> float:
    if float(e).is_integer():
        return b ** int(e)
    return math.pow(b, e)


def _ln_scalar(v: float) -> float:
    return math.log(v)


_SCALAR_FUNCS = {Op.EXP: math.exp, Op.LN: _ln_scalar, Op.SIN: math.sin, Op.COS: math.cos}


def _diff(n: ExprNode) -> ExprNode:
    op = n.op
    if op is Op.CONST:
        return ZERO
    if op is Op.VAR:
        return ONE
    if op is Op.NEG:
        return neg(n.children[0].derivative())
    if op is Op.ADD:
        a, b = n.children
        return add(a.derivative(), b.derivative())
    if op is Op.SUB:
        a, b = n.children
        return sub(a.derivative(), b.derivative())
    if op is Op.MUL:
        a, b = n.children
        return add(mul(a.derivative(), b), mul(a, b.derivative()))
    if op is Op.DIV:
        a, b = n.children
        da, db = a.derivative(), b.derivative()
        if db is ZERO:
            return div(da, b)
        return sub(div(da, b), div(mul(a, db), power(b, 2)))
    if op is Op.POW:
        (a,) = n.children
        e = n.value
        return mul(mul(const(e), power(a, e - 1.0)), a.derivative())
    (a,) = n.children
    da = a.derivative()
    if op is Op.EXP:
        return mul(n, da)
    if op is Op.LN:
        return div(da, a)
    if op is Op.SIN:
        return mul(cos(a), da)
    if op is Op.COS:
        return neg(mul(sin(a), da))
    raise AssertionError(op)


def nth_derivative(n: ExprNode, k: int) -> ExprNode:
    for _ in range(k):
        n = n.derivative()
    return n


def substitute(n: ExprNode, inner: ExprNode) -> ExprNode:
    """Replace the variable in ``n`` by ``inner``."""
    memo: dict[int, ExprNode] = {}

    def go(m: ExprNode) -> ExprNode:
        r = memo.get(id(m))
        if r is not None:
            return r
        if m.op is Op.VAR:
            r = inner
        elif m.op is Op.CONST:
            r = m
        else:
            ch = [go(c) for c in m.children]
            r = _rebuild(m, ch)
        memo[id(m)] = r
        return r

    return go(n)


def _rebuild(m: ExprNode, ch: Sequence[ExprNode]) -> ExprNode:
    op = m.op
    if op is Op.ADD:
        return add(*ch)
    if op is Op.SUB:
        return sub(*ch)
    if op is Op.MUL:
        return mul(*ch)
    if op is Op.DIV:
        return div(*ch)
    if op is Op.NEG:
        return neg(ch[0])
    if op is Op.POW:
        return power(ch[0], m.value)
    return func(op, ch[0])


def polynomial_of(coeffs: Sequence[float], inner: ExprNode) -> ExprNode:
    """sum(coeffs[i] * inner**i) built in Horner form."""
    acc = const(coeffs[-1]) if coeffs else ZERO
    for c in reversed(coeffs[:-1]):
        acc = add(mul(acc, inner), const(c))
    return acc


def size(n: ExprNode) -> int:
    seen: set[int] = set()
    stack = [n]
    while stack:
        m = stack.pop()
        if id(m) in seen:
            continue
        seen.add(id(m))
        stack.extend(m.children)
    return len(seen)


# ---------------------------------------------------------------- code generation

_PY_FUNCS = {Op.EXP: "_exp", Op.LN: "_log", Op.SIN: "_sin", Op.COS: "_cos"}
_NP_FUNCS = {Op.EXP: "_np.exp", Op.LN: "_np.log", Op.SIN: "_np.sin", Op.COS: "_np.cos"}


def _emit(roots: Sequence[ExprNode], vector: bool) -> tuple[list[str], list[str]]:
    names: dict[int, str] = {}
    lines: list[str] = []
    fn = _NP_FUNCS if vector else _PY_FUNCS

    def ref(m: ExprNode) -> str:
        if m.op is Op.CONST:
            return repr(m.value) if m.value >= 0 else f"({m.value!r})"
        if m.op is Op.VAR:
            return "x"
        return names[id(m)]

    order: list[ExprNode] = []
    seen: set[int] = set()
    for r in roots:
        stack: list[tuple[ExprNode, bool]] = [(r, False)]
        while stack:
            m, done = stack.pop()
            if id(m) in seen:
                continue
            if done or not m.children:
                seen.add(id(m))
                order.append(m)
                continue
            stack.append((m, True))
            for c in reversed(m.children):
                if id(c) not in seen:
                    stack.append((c, False))
    for m in order:
        if not m.children:
            continue
        a = [ref(c) for c in m.children]
        op = m.op
        if op is Op.ADD:
            e = f"{a[0]} + {a[1]}"
        elif op is Op.SUB:
            e = f"{a[0]} - {a[1]}"
        elif op is Op.MUL:
            e = f"{a[0]} * {a[1]}"
        elif op is Op.DIV:
            e = f"{a[0]} / {a[1]}"
        elif op is Op.NEG:
            e = f"-{a[0]}"
        elif op is Op.POW:
            if float(m.value).is_integer():
                e = f"{a[0]} ** {int(m.value)}"
            elif vector:
                e = f"_np.power({a[0]}, {m.value!r})"
            else:
                e = f"_pow({a[0]}, {m.value!r})"
        else:
            e = f"{fn[op]}({a[0]})"
        name = f"t{len(names)}"
        names[id(m)] = name
        lines.append(f"    {name} = {e}")
    outs = [ref(r) for r in roots]
    return lines, outs


def _build(roots: Sequence[ExprNode], vector: bool) -> Callable:
    lines, outs = _emit(roots, vector)
    if vector:
        # constants and bare x must still broadcast to the input shape
        outs = [f"(x * 0.0 + {o})" if (o == "x" or not o.startswith("t")) else o for o in outs]
    ret = outs[0] if len(outs) == 1 else "(" + ", ".join(outs) + ",)"
    src = "def _f(x):\n" + "\n".join(lines + [f"    return {ret}"]) + "\n"
    ns = {
        "_exp": math.exp,
        "_log": _ln_scalar,
        "_sin": math.sin,
        "_cos": math.cos,
        "_pow": math.pow,
        "_np": np,
    }
    exec(compile(src, "<charsweep-expr>", "exec"), ns)
    return ns["_f"]


_SCALAR_CACHE: dict[tuple[int, ...], Callable] = {}
_VECTOR_CACHE: dict[tuple[int, ...], Callable] = {}


def compile_scalar(*roots: ExprNode) -> Callable:
    """Python function of a float x returning one value or a tuple of values.

    Raises ZeroDivisionError/ValueError/OverflowError on singular input.
    """
    key = tuple(id(r) for r in roots)
    f = _SCALAR_CACHE.get(key)
    if f is None:
        f = _SCALAR_CACHE[key] = _build(roots, vector=False)
    return f


def compile_vector(*roots: ExprNode) -> Callable:
    """numpy version of :func:`compile_scalar` (singular input gives inf/nan)."""
    key = tuple(id(r) for r in roots)
    f = _VECTOR_CACHE.get(key)
    if f is None:
        f = _VECTOR_CACHE[key] = _build(roots, vector=True)
    return f


# ---------------------------------------------------------------- printing

_PREC = {Op.ADD: 1, Op.SUB: 1, Op.MUL: 2, Op.DIV: 2, Op.NEG: 3, Op.POW: 4}


def to_text(n: ExprNode) -> str:
    """Serialize to the parser's grammar; round-trips exactly."""
    op = n.op
    if op is Op.CONST:
        return repr(n.value) if n.value >= 0 else f"(-{(-n.value)!r})"
    if op is Op.VAR:
        return "x"
    if op in FUNC_NAMES:
        return f"{FUNC_NAMES[op]}({to_text(n.children[0])})"

    def wrap(c: ExprNode, min_prec: int) -> str:
        s = to_text(c)
        p = _PREC.get(c.op, 5)
        return f"({s})" if p < min_prec else s

    if op is Op.NEG:
        return f"-{wrap(n.children[0], 4)}"
    if op is Op.POW:
        e = n.value
        es = repr(e) if e >= 0 else f"(-{(-e)!r})"
        return f"{wrap(n.children[0], 5)}^{es}"
    a, b = n.children
    p = _PREC[op]
    sym = {Op.ADD: "+", Op.SUB: "-", Op.MUL: "*", Op.DIV: "/"}[op]
    return f"{wrap(a, p)} {sym} {wrap(b, p + 1)}"


FUNC_NAMES = {v: k for k, v in FUNCS.items()}


# ---------------------------------------------------------------- parsing

class ExprSyntaxError(ValueError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {msg}")
        self.line = line
        self.col = col


@dataclass
class Token:
    kind: str  # num, name, op, end
    text: str
    pos: int


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)"
    r"|(?P<op><=|>=|[-+*/^()<>:]))"
)


class _Parser:
    def __init__(self, toks: list[Token], source: str):
        self.toks = toks
        self.i = 0
        self.source = source

    def error(self, msg: str, tok: Token | None = None) -> ExprSyntaxError:
        tok = tok or self.peek()
        line = self.source.count("\n", 0, tok.pos) + 1
        col = tok.pos - (self.source.rfind("\n", 0, tok.pos) + 1) + 1
        return ExprSyntaxError(msg, line, col)

    def peek(self) -> Token:
        return self.toks[self.i]

    def take(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text: str) -> Token:
        t = self.peek()
        if t.text != text:
            raise self.error(f"expected {text!r}, found {t.text or 'end of input'!r}")
        return self.take()

    def expr(self) -> ExprNode:
        n = self.term()
        while self.peek().text in ("+", "-"):
            op = self.take().text
            rhs = self.term()
            n = add(n, rhs) if op == "+" else sub(n, rhs)
        return n

    def term(self) -> ExprNode:
        n = self.unary()
        while self.peek().text in ("*", "/"):
            tok = self.take()
            rhs = self.unary()
            if tok.text == "*":
                n = mul(n, rhs)
            else:
                try:
                    n = div(n, rhs)
                except ZeroDivisionError:
                    raise self.error("division by zero", tok) from None
        return n

    def unary(self) -> ExprNode:
        t = self.peek()
        if t.text == "-":
            self.take()
            return neg(self.unary())
        if t.text == "+":
            self.take()
            return self.unary()
        return self.pow_()

    def pow_(self) -> ExprNode:
        base = self.atom()
        if self.peek().text == "^":
            tok = self.take()
            e = self.unary()
            if e.op is not Op.CONST:
                raise self.error("exponent must be a constant", tok)
            try:
                return power(base, e.value)
            except (ValueError, ZeroDivisionError, OverflowError):
                raise self.error("invalid constant power", tok) from None
        return base

    def atom(self) -> ExprNode:
        t = self.take()
        if t.kind == "num":
            return const(float(t.text))
        if t.kind == "name":
            if t.text == "x":
                return X
            if t.text in FUNCS:
                self.expect("(")
                a = self.expr()
                self.expect(")")
                try:
                    return func(FUNCS[t.text], a)
                except (ValueError, OverflowError):
                    raise self.error(f"{t.text} of an invalid constant", t) from None
            raise self.error(f"unknown name {t.text!r}", t)
        if t.text == "(":
            n = self.expr()
            self.expect(")")
            return n
        self.i -= 1
        raise self.error(f"unexpected {t.text or 'end of input'!r}")


def parse_expr(text: str, source: str | None = None, offset: int = 0) -> ExprNode:
    """Parse one expression; ``source``/``offset`` locate it for error messages."""
    src = source if source is not None else text
    toks = _tokens_in(text, src, offset)
    p = _Parser(toks, src)
    n = p.expr()
    if p.peek().kind != "end":
        raise p.error(f"unexpected {p.peek().text!r}")
    return n


def _tokens_in(text: str, source: str, offset: int) -> list[Token]:
    toks: list[Token] = []
    pos = 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            p = offset + pos
            line = source.count("\n", 0, p) + 1
            col = p - (source.rfind("\n", 0, p) + 1) + 1
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        toks.append(Token(kind, m.group(kind), offset + m.start(kind)))
        pos = m.end()
    toks.append(Token("end", "", offset + len(text)))
    return toks


def evaluate_many(n: ExprNode, xs: Iterable[float]) -> np.ndarray:
    f = compile_vector(n)
    with np.errstate(all="ignore"):
        return np.asarray(f(np.asarray(list(xs), dtype=float)), dtype=float)
