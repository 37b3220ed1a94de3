"""Piecewise-smooth initial conditions f(x) and the characteristic speed h = G'(f).

A profile is a list of expression pieces separated by breakpoints.  All
derivative queries take a ``side`` so that values at a breakpoint are the
one-sided limits of the adjacent piece.
"""
from __future__ import annotations

import bisect
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from . import expr as ex
from .flux import MAX_ORDER, FluxModel, UnsupportedOrder, speed_is_monotone


class Side(str, Enum):
    LEFT = "left"
    RIGHT = "right"
    INTERIOR = "interior"

    @classmethod
    def _missing_(cls, value):
        if isinstance(value, str):
            return cls.__members__.get(value.strip().upper())
        return None


class ProfileError(ValueError):
    pass


class AmbiguousSide(ProfileError):
    pass


_EVAL_ERRORS = (ZeroDivisionError, ValueError, OverflowError)


def _finite(v) -> bool:
    return isinstance(v, float) and math.isfinite(v)


@dataclass(eq=False)
class PiecewiseProfile:
    breakpoints: tuple[float, ...]
    pieces: tuple[ex.ExprNode, ...]
    domain_hint: tuple[float, float]
    # side -> True when f' (or h') blows up at breakpoint i from that side
    singular: dict[tuple[int, Side], bool] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if len(self.pieces) != len(self.breakpoints) + 1:
            raise ProfileError("need exactly one more piece than breakpoints")
        if any(b >= c for b, c in zip(self.breakpoints, self.breakpoints[1:])):
            raise ProfileError("breakpoints must be strictly increasing")
        lo, hi = self.domain_hint
        if not lo < hi:
            raise ProfileError("domain_hint must be a non-empty interval")
        self._derivs: list[list[ex.ExprNode]] = [[p] for p in self.pieces]
        self._h: dict[tuple, list[list[ex.ExprNode]]] = {}
        self._fast: dict[tuple, list[Callable]] = {}

    # ------------------------------------------------------------ lookup
    def piece_index(self, x: float, side: Side = Side.INTERIOR) -> int:
        bp = self.breakpoints
        i = bisect.bisect_left(bp, x)
        if i < len(bp) and bp[i] == x:
            if side is Side.LEFT:
                return i
            if side is Side.RIGHT:
                return i + 1
            raise AmbiguousSide(f"x = {x} is a breakpoint; ask for the left or right limit")
        return i

    def piece_interval(self, i: int) -> tuple[float, float]:
        lo = self.breakpoints[i - 1] if i > 0 else -math.inf
        hi = self.breakpoints[i] if i < len(self.breakpoints) else math.inf
        return lo, hi

    def is_breakpoint(self, x: float) -> bool:
        i = bisect.bisect_left(self.breakpoints, x)
        return i < len(self.breakpoints) and self.breakpoints[i] == x

    # ------------------------------------------------------------ symbolic
    def f_expr(self, i: int, order: int = 0) -> ex.ExprNode:
        if order > MAX_ORDER + 1:
            raise UnsupportedOrder(f"order {order} exceeds MAX_ORDER={MAX_ORDER}")
        d = self._derivs[i]
        while len(d) <= order:
            d.append(d[-1].derivative())
        return d[order]

    def h_expr(self, model: FluxModel, i: int, order: int = 0) -> ex.ExprNode:
        """order-th derivative of h = G'(f) on piece i, as an expression."""
        if order > MAX_ORDER + 1:
            raise UnsupportedOrder(f"order {order} exceeds MAX_ORDER={MAX_ORDER}")
        key = model.coeffs
        per = self._h.get(key)
        if per is None:
            speed = model.derivative_coeffs(1)
            per = self._h[key] = [[ex.polynomial_of(speed, p)] for p in self.pieces]
        d = per[i]
        while len(d) <= order:
            d.append(d[-1].derivative())
        return d[order]

    # ------------------------------------------------------------ fast paths
    def fprime_funcs(self) -> list[Callable]:
        """Per piece: x -> (f(x), f'(x))."""
        key = ("f01",)
        fs = self._fast.get(key)
        if fs is None:
            fs = self._fast[key] = [
                ex.compile_scalar(self.f_expr(i, 0), self.f_expr(i, 1)) for i in range(len(self.pieces))
            ]
        return fs

    def h_funcs_vec(self, model: FluxModel) -> list[Callable]:
        """Per piece, vectorized: x -> (f, h, h')."""
        key = ("hvec", model.coeffs)
        fs = self._fast.get(key)
        if fs is None:
            fs = self._fast[key] = [
                ex.compile_vector(self.f_expr(i), self.h_expr(model, i), self.h_expr(model, i, 1))
                for i in range(len(self.pieces))
            ]
        return fs

    def f_and_slope(self, x: float, side: Side) -> tuple[float, float]:
        """(f, f') at x; at a breakpoint ``side`` picks the limit."""
        i = self.piece_index(x, side)
        return self.fprime_funcs()[i](x)

    def value(self, x: float, side: Side = Side.INTERIOR) -> float:
        return eval_profile(self, x, side, 0)

    def integral(self, a: float, b: float) -> float:
        """Integral of f over [a, b], split at breakpoints (adaptive Simpson)."""
        from .validate import adaptive_simpson

        if a == b:
            return 0.0
        sign = 1.0
        if b < a:
            a, b, sign = b, a, -1.0
        cuts = [a] + [c for c in self.breakpoints if a < c < b] + [b]
        total = 0.0
        for lo, hi in zip(cuts, cuts[1:]):
            i = self.piece_index(0.5 * (lo + hi))
            g = ex.compile_scalar(self.f_expr(i))
            total += adaptive_simpson(g, lo, hi, 1e-12)
        return sign * total


def eval_profile(profile: PiecewiseProfile, x: float, side: Side | str, order: int) -> float:
    """f^(order)(x) from the piece on ``side`` (one-sided limit at breakpoints)."""
    side = Side(side)
    if order < 0 or order > MAX_ORDER:
        raise UnsupportedOrder(f"order must be in [0, {MAX_ORDER}]")
    i = profile.piece_index(x, side)
    return float(ex.compile_scalar(profile.f_expr(i, order))(x))


def char_speed(profile: PiecewiseProfile, model: FluxModel, x: float, side: Side | str, order: int) -> float:
    """h^(order)(x) for h = G'(f), by symbolic differentiation of the composition."""
    side = Side(side)
    if order < 0 or order > MAX_ORDER:
        raise UnsupportedOrder(f"order must be in [0, {MAX_ORDER}]")
    i = profile.piece_index(x, side)
    return float(ex.compile_scalar(profile.h_expr(model, i, order))(x))


# ---------------------------------------------------------------- parsing

_COND_RE = re.compile(
    r"^\s*(?:(?P<lo>[-+]?[\d.eE+-]+)\s*(?P<lop><=|<)\s*)?x\s*(?:(?P<hop><=|<|>=|>)\s*(?P<hi>[-+]?[\d.eE+-]+))?\s*$"
)


def _number(s: str, text: str, pos: int) -> float:
    try:
        v = float(s)
    except ValueError:
        raise _err(text, pos, f"not a number: {s!r}") from None
    if not math.isfinite(v):
        raise _err(text, pos, f"not a finite number: {s!r}")
    return v


def _err(text: str, pos: int, msg: str) -> ex.ExprSyntaxError:
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return ex.ExprSyntaxError(msg, line, col)


def _parse_cond(cond: str, text: str, pos: int) -> tuple[float, float]:
    m = _COND_RE.match(cond)
    if not m or (m.group("lo") is None and m.group("hi") is None):
        raise _err(text, pos, f"bad condition {cond.strip()!r}; use 'x < c', 'c <= x < d' or 'x >= c'")
    lo, hi = -math.inf, math.inf
    if m.group("lo") is not None:
        lo = _number(m.group("lo"), text, pos)
        if m.group("hop") in (">", ">="):
            raise _err(text, pos, f"bad condition {cond.strip()!r}")
    if m.group("hi") is not None:
        v = _number(m.group("hi"), text, pos)
        if m.group("hop") in ("<", "<="):
            hi = v
        elif m.group("lo") is None:
            lo = v
        else:
            raise _err(text, pos, f"bad condition {cond.strip()!r}")
    if not lo < hi:
        raise _err(text, pos, f"empty interval in condition {cond.strip()!r}")
    return lo, hi


def _split_items(text: str) -> list[tuple[str, int]]:
    items = []
    start = 0
    for m in re.finditer(r"[;\n]", text + "\n"):
        chunk = text[start:m.start()]
        if chunk.strip():
            items.append((chunk, start))
        start = m.end()
    return items


def parse_profile(text: str, domain_hint: tuple[float, float] | None = None) -> PiecewiseProfile:
    """Parse ``cond: expr`` items separated by ``;`` or newlines.

    A single item without a condition covers the whole real line.

    >>> p = parse_profile("x < 0: 1 ; x >= 0: 0")
    >>> p.breakpoints
    (0.0,)
    """
    items = _split_items(text)
    if not items:
        raise _err(text, 0, "empty profile")
    spans: list[tuple[float, float]] = []
    exprs: list[ex.ExprNode] = []
    for chunk, off in items:
        if ":" in chunk:
            ci = chunk.index(":")
            lo, hi = _parse_cond(chunk[:ci], text, off)
            body, body_off = chunk[ci + 1:], off + ci + 1
        else:
            if len(items) > 1:
                raise _err(text, off, "every piece needs a condition when there is more than one")
            lo, hi = -math.inf, math.inf
            body, body_off = chunk, off
        if not body.strip():
            raise _err(text, body_off, "missing expression")
        exprs.append(ex.parse_expr(body, source=text, offset=body_off))
        spans.append((lo, hi))
    if spans[0][0] != -math.inf:
        raise _err(text, items[0][1], "first piece must extend to -infinity")
    if spans[-1][1] != math.inf:
        raise _err(text, items[-1][1], "last piece must extend to +infinity")
    for (a, b), (c, d), (_, off) in zip(spans, spans[1:], items[1:]):
        if b != c:
            raise _err(text, off, f"pieces must tile the line in order: {b} != {c}")
    bps = tuple(s[1] for s in spans[:-1])
    if domain_hint is None:
        if bps:
            pad = max(5.0, bps[-1] - bps[0])
            domain_hint = (bps[0] - pad, bps[-1] + pad)
        else:
            domain_hint = (-5.0, 5.0)
    prof = PiecewiseProfile(bps, tuple(exprs), (float(domain_hint[0]), float(domain_hint[1])))
    _validate(prof)
    return prof


def _validate(prof: PiecewiseProfile) -> None:
    lo_d, hi_d = prof.domain_hint
    width = hi_d - lo_d
    for i, piece in enumerate(prof.pieces):
        a, b = prof.piece_interval(i)
        f = ex.compile_scalar(piece)
        pa = a if math.isfinite(a) else min(lo_d - 0.5 * width, (b if math.isfinite(b) else lo_d) - width)
        pb = b if math.isfinite(b) else max(hi_d + 0.5 * width, (a if math.isfinite(a) else hi_d) + width)
        pts = [pa + (pb - pa) * k / 64 for k in range(65)]
        for x in pts:
            try:
                v = f(x)
            except _EVAL_ERRORS as e:
                raise ProfileError(f"piece {i} ({ex.to_text(piece)}) is singular at x = {x!r}: {e}") from None
            if not _finite(float(v)):
                raise ProfileError(f"piece {i} ({ex.to_text(piece)}) is not finite at x = {x!r}")
    # side derivatives at breakpoints
    for j, c in enumerate(prof.breakpoints):
        for side, i in ((Side.LEFT, j), (Side.RIGHT, j + 1)):
            d1 = ex.compile_scalar(prof.f_expr(i, 1))
            try:
                ok = _finite(float(d1(c)))
            except _EVAL_ERRORS:
                ok = False
            prof.singular[(j, side)] = not ok


def check_jumps(prof: PiecewiseProfile, model: FluxModel) -> None:
    """Reject jumps whose state range crosses a sign change of G''.

    Across such a jump the wave is a composite of shocks and fans, which
    the characteristic construction does not cover.
    """
    for j, c in enumerate(prof.breakpoints):
        ul = eval_profile(prof, c, Side.LEFT, 0)
        ur = eval_profile(prof, c, Side.RIGHT, 0)
        if ul != ur and not speed_is_monotone(model, ul, ur):
            raise ProfileError(
                f"jump at x = {c!r} from {ul!r} to {ur!r} spans a sign change of G''; G' is not invertible there"
            )


def profile_to_text(prof: PiecewiseProfile) -> str:
    """Serialize in the piece grammar; parse_profile(profile_to_text(p)) evaluates identically."""
    if not prof.breakpoints:
        return ex.to_text(prof.pieces[0])
    out = []
    for i, piece in enumerate(prof.pieces):
        a, b = prof.piece_interval(i)
        if i == 0:
            cond = f"x < {b!r}"
        elif i == len(prof.pieces) - 1:
            cond = f"x >= {a!r}"
        else:
            cond = f"{a!r} <= x < {b!r}"
        out.append(f"{cond}: {ex.to_text(piece)}")
    return " ;\n".join(out)


def sample_profile(prof: PiecewiseProfile, xs: Sequence[float] | np.ndarray) -> np.ndarray:
    """Vectorized f at points that are not breakpoints."""
    xs = np.asarray(xs, dtype=float)
    out = np.empty_like(xs)
    idx = np.searchsorted(np.asarray(prof.breakpoints), xs, side="left")
    for i, piece in enumerate(prof.pieces):
        m = idx == i
        if m.any():
            with np.errstate(all="ignore"):
                out[m] = ex.compile_vector(piece)(xs[m])
    return out
