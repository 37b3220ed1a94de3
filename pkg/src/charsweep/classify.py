"""Find and classify the points of an initial profile where shocks, fans or
focusing straight segments originate, and build starting points for the
shock ODEs.

Terminology: h = G'(f) is the characteristic speed as a function of the
initial coordinate; h_-^(k), h_+^(k) are its one-sided derivatives.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from . import expr as ex
from .flux import MAX_ORDER, FluxModel
from .profile import PiecewiseProfile, Side, check_jumps

N_SCAN = 2048
DELTA_MAX_FRACTION = 1e-2
DELTA_DEFAULT_FRACTION = 1e-3
ROOT_TOL = 1e-12

_FACT = [math.factorial(i) for i in range(MAX_ORDER + 3)]


class PointKind(str, Enum):
    SHOCK1 = "Shock1"
    SHOCK2 = "Shock2"
    SHOCK3 = "Shock3"
    SHOCK4 = "Shock4"
    RAREFACTION = "Rarefaction"
    STRAIGHT_LINE = "StraightLine"
    INERT = "Inert"


class Regime(str, Enum):
    KIND1 = "Kind1"
    KIND2_LEFT = "Kind2CrossFromLeft"    # foot on the left, fan on the right
    KIND2_RIGHT = "Kind2CrossFromRight"  # fan on the left, foot on the right
    KIND3 = "Kind3"


class ClassifyError(ValueError):
    pass


class InvalidKind(ClassifyError):
    pass


class RootBracketError(ClassifyError):
    pass


class SeedRejected(ClassifyError):
    def __init__(self, msg: str, max_delta: float | None):
        super().__init__(msg)
        self.max_delta = max_delta


class UndefinedSlope(ClassifyError):
    pass


@dataclass
class SideData:
    f: float
    h: tuple[float, ...]  # h, h', ..., h^(MAX_ORDER)

    def first_nonvanishing(self, start: int = 2) -> Optional[int]:
        scale = max(1.0, abs(self.h[1]))
        for k in range(start, MAX_ORDER + 1):
            if abs(self.h[k]) > 1e-9 * scale * _FACT[k]:
                return k
        return None


@dataclass
class Segment:
    """Piece on which h(x) = k (x + c), k < 0; all its characteristics meet at t = -1/k."""
    a: float
    b: float
    k: float
    c: float

    @property
    def focus_time(self) -> float:
        return -1.0 / self.k

    @property
    def focus_x(self) -> float:
        return -self.c


@dataclass
class CriticalPoint:
    id: int
    x: float
    kind: PointKind
    left: Optional[SideData]
    right: Optional[SideData]
    k_l: Optional[int] = None
    k_r: Optional[int] = None
    break_times: list[float] = field(default_factory=list)
    # sides whose crossing produces a fourth-kind shock ("left"/"right")
    crossing_sides: list[str] = field(default_factory=list)
    singular: bool = False
    at_breakpoint: bool = True
    segment: Optional[Segment] = None
    fan: bool = False

    @property
    def jump(self) -> bool:
        return self.left is not None and self.right is not None and self.left.f != self.right.f


@dataclass
class ShockSeed:
    t0: float
    xl0: float
    xr0: float
    regime: Regime
    origin: CriticalPoint
    t_break: float = 0.0
    fan_center: Optional[float] = None

    @property
    def side(self) -> str:
        if self.regime is Regime.KIND2_LEFT:
            return "left"
        if self.regime is Regime.KIND2_RIGHT:
            return "right"
        return "both"


# --------------------------------------------------------------- helpers

def _side_data(profile: PiecewiseProfile, model: FluxModel, piece: int, x: float) -> SideData:
    vals = []
    for k in range(MAX_ORDER + 1):
        g = ex.compile_scalar(profile.h_expr(model, piece, k))
        vals.append(float(g(x)))
    f = float(ex.compile_scalar(profile.f_expr(piece))(x))
    return SideData(f, tuple(vals))


def _close(a: float, b: float, rel: float = 1e-12) -> bool:
    return abs(a - b) <= rel * max(1.0, abs(a), abs(b))


def _is_linear(sd: SideData) -> bool:
    return sd.first_nonvanishing(2) is None


def _min_from_left(sd: SideData) -> bool:
    """h' on (x*-d, x*) is strictly above h'(x*-) for small d."""
    k = sd.first_nonvanishing(2)
    return k is not None and (-1) ** (k - 1) * sd.h[k] > 0.0


def _min_from_right(sd: SideData) -> bool:
    k = sd.first_nonvanishing(2)
    return k is not None and sd.h[k] > 0.0


def _numeric_unique_min(profile, model, piece: int, x: float, direction: int, width: float) -> bool:
    """Check h'(x + direction*d) > h'(x) on three halvings of the bracket."""
    g = ex.compile_scalar(profile.h_expr(model, piece, 1))
    h0 = g(x)
    d = width
    for _ in range(3):
        pts = [x + direction * d * j / 8 for j in range(1, 9)]
        if not all(g(p) > h0 for p in pts):
            return False
        d *= 0.5
    return True


def _segment_for_piece(profile, model, piece: int) -> Optional[Segment]:
    a, b = profile.piece_interval(piece)
    if not (math.isfinite(a) and math.isfinite(b)):
        return None
    mid = 0.5 * (a + b)
    sd = _side_data(profile, model, piece, mid)
    if not _is_linear(sd) or sd.h[1] >= 0.0:
        return None
    # check linearity on the whole piece, not just at the midpoint
    hf = ex.compile_scalar(profile.h_expr(model, piece, 0))
    k = sd.h[1]
    c = sd.h[0] / k - mid
    for j in range(17):
        x = a + (b - a) * j / 16
        if abs(hf(x) - k * (x + c)) > 1e-10 * max(1.0, abs(k * (x + c))):
            return None
    return Segment(a, b, k, c)


# --------------------------------------------------------------- classification

def classify_points(profile: PiecewiseProfile, model: FluxModel) -> list[CriticalPoint]:
    """Classify every breakpoint and locate interior third-kind points.

    Breakpoints whose conditions all fail are returned as ``Inert`` so the
    classification is total.  Result is sorted by location.
    """
    check_jumps(profile, model)
    pts: list[CriticalPoint] = []
    segs = {i: _segment_for_piece(profile, model, i) for i in range(len(profile.pieces))}
    for j, c in enumerate(profile.breakpoints):
        pts.append(_classify_breakpoint(profile, model, j, c, segs))
    for i in range(len(profile.pieces)):
        if segs[i] is None:
            pts.extend(_interior_points(profile, model, i))
    pts.sort(key=lambda p: p.x)
    for n, p in enumerate(pts):
        p.id = n
    return pts


def _classify_breakpoint(profile, model, j: int, c: float, segs) -> CriticalPoint:
    sing_l = profile.singular.get((j, Side.LEFT), False)
    sing_r = profile.singular.get((j, Side.RIGHT), False)
    fl = float(ex.compile_scalar(profile.f_expr(j))(c))
    fr = float(ex.compile_scalar(profile.f_expr(j + 1))(c))
    left = None if sing_l else _side_data(profile, model, j, c)
    right = None if sing_r else _side_data(profile, model, j + 1, c)
    pt = CriticalPoint(-1, c, PointKind.INERT, left, right, singular=sing_l or sing_r)
    hl, hr = model.dG(fl), model.dG(fr)
    jump = not _close(fl, fr)

    if jump:
        if hl > hr:
            pt.kind = PointKind.SHOCK1
            pt.break_times = [0.0]
        elif hl < hr:
            pt.fan = True
            pt.kind = PointKind.RAREFACTION
            if left is not None and left.h[1] < 0.0 and _min_from_left(left):
                pt.crossing_sides.append("left")
                pt.break_times.append(-1.0 / left.h[1])
            if right is not None and right.h[1] < 0.0 and _min_from_right(right):
                pt.crossing_sides.append("right")
                pt.break_times.append(-1.0 / right.h[1])
            if pt.crossing_sides:
                pt.kind = PointKind.SHOCK4
                pt.k_l = left.first_nonvanishing() if left else None
                pt.k_r = right.first_nonvanishing() if right else None
        _fill_orders(pt)
        return pt

    if pt.singular:
        # continuous with a blow-up of h' on a side: only the fallback seed applies
        pt.kind = PointKind.SHOCK2 if _singular_converges(profile, model, j, c) else PointKind.INERT
        if pt.kind is PointKind.SHOCK2:
            pt.break_times = [0.0]
        return pt

    d1l, d1r = left.h[1], right.h[1]
    fp_jump = not _close(
        float(ex.compile_scalar(profile.f_expr(j, 1))(c)), float(ex.compile_scalar(profile.f_expr(j + 1, 1))(c)), 1e-10
    )
    # straight-line connection
    if segs.get(j) is not None and segs[j].k <= d1r:
        pt.kind, pt.segment = PointKind.STRAIGHT_LINE, segs[j]
    elif segs.get(j + 1) is not None and segs[j + 1].k <= d1l:
        pt.kind, pt.segment = PointKind.STRAIGHT_LINE, segs[j + 1]
    if pt.kind is PointKind.STRAIGHT_LINE:
        pt.break_times = [pt.segment.focus_time]
        return pt

    if fp_jump:
        if d1l < 0.0 or d1r < 0.0:
            if _close(d1l, d1r, 1e-12):
                raise ClassifyError(
                    f"x = {c}: both one-sided slopes of the speed tie at {d1l}; "
                    "the side attaining the minimum is ambiguous"
                )
            ok = _min_from_right(right) if d1r < d1l else _min_from_left(left)
            if ok:
                pt.kind = PointKind.SHOCK2
                pt.break_times = [min(-1.0 / d for d in (d1l, d1r) if d < 0.0)]
        _fill_orders(pt)
        return pt

    # f' continuous: third kind at a breakpoint when x* is a strict local minimum of h'
    if d1l < 0.0 and _min_from_left(left) and _min_from_right(right):
        pt.kind = PointKind.SHOCK3
        pt.break_times = [-1.0 / d1l]
    _fill_orders(pt)
    return pt


def _singular_converges(profile, model, j, c) -> bool:
    """h decreasing across a point where its slope blows up (compressive cusp)."""
    w = 1e-6 * max(1.0, abs(c))
    fl = profile.value(c - w)
    fr = profile.value(c + w)
    return model.dG(fl) > model.dG(fr)


def _fill_orders(pt: CriticalPoint) -> None:
    if pt.left is not None and pt.k_l is None:
        pt.k_l = pt.left.first_nonvanishing()
    if pt.right is not None and pt.k_r is None:
        pt.k_r = pt.right.first_nonvanishing()


def _interior_points(profile, model, i: int) -> list[CriticalPoint]:
    a, b = profile.piece_interval(i)
    lo = max(a, profile.domain_hint[0])
    hi = min(b, profile.domain_hint[1])
    if not lo < hi:
        return []
    xs = np.linspace(lo, hi, N_SCAN + 1)[1:-1] if (lo == a or hi == b) else np.linspace(lo, hi, N_SCAN)
    fs = ex.compile_vector(profile.h_expr(model, i, 1), profile.h_expr(model, i, 2))
    with np.errstate(all="ignore"):
        d1, d2 = (np.broadcast_to(v, xs.shape) for v in fs(xs))
    d2f = ex.compile_scalar(profile.h_expr(model, i, 2))
    out = []
    for n in range(1, len(xs) - 1):
        if not (d1[n] < 0.0 and d1[n] <= d1[n - 1] and d1[n] < d1[n + 1]):
            continue
        x0, x1 = xs[n - 1], xs[n + 1]
        if d2[n - 1] < 0.0 < d2[n + 1] or (d2[n - 1] <= 0.0 <= d2[n + 1] and d2[n - 1] != d2[n + 1]):
            xm = brentq(d2f, x0, x1, xtol=1e-15, rtol=1e-15, maxiter=200)
        else:
            xm = _golden_min(ex.compile_scalar(profile.h_expr(model, i, 1)), x0, x1)
        if not a < xm < b:
            continue
        sd = _side_data(profile, model, i, xm)
        if sd.h[1] >= 0.0:
            continue
        if any(abs(p.x - xm) < 1e-9 for p in out):
            continue
        k = sd.first_nonvanishing(3) if abs(sd.h[2]) < 1e-7 * max(1.0, abs(sd.h[3])) else 2
        if k is None or k % 2 == 0 and sd.h[k] <= 0.0:
            continue
        # snap the vanishing second derivative reported by the refinement
        h = list(sd.h)
        h[2] = 0.0
        sd = SideData(sd.f, tuple(h))
        pt = CriticalPoint(-1, float(xm), PointKind.SHOCK3, sd, sd, k_l=k, k_r=k, at_breakpoint=False)
        pt.break_times = [-1.0 / sd.h[1]]
        out.append(pt)
    return out


def _golden_min(g, a: float, b: float, tol: float = 1e-12) -> float:
    r = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - r * (b - a), a + r * (b - a)
    while abs(b - a) > tol * max(1.0, abs(a)):
        if g(c) < g(d):
            b, d = d, c
            c = b - r * (b - a)
        else:
            a, c = c, d
            d = a + r * (b - a)
    return 0.5 * (a + b)


def break_times(point: CriticalPoint) -> list[float]:
    if point.kind not in (PointKind.SHOCK1, PointKind.SHOCK2, PointKind.SHOCK3, PointKind.SHOCK4):
        raise InvalidKind(f"{point.kind.value} point at x = {point.x} has no break time")
    return list(point.break_times)


# --------------------------------------------------------------- seed polynomial

def seed_poly_coeffs(k: int, p: float, A: float) -> np.ndarray:
    """Coefficients (highest first) of the limiting-ratio polynomial in s = dx_l/dx_r."""
    c = np.zeros(k + 2)
    c[0] = 1.0
    c[1] = (1.0 - A * k) / (A * (k - 1))
    c[k] = (A - k) / (A * (k - 1)) * p
    c[k + 1] = p / A
    return c


def _horner(c: np.ndarray, s: float) -> float:
    acc = 0.0
    for a in c:
        acc = acc * s + a
    return acc


def negative_root(k: int, p: float, A: float = -1.0) -> float:
    """Unique negative root of the limiting-ratio polynomial.

    Brackets by scanning (-S_MAX, 0), with S_MAX the Cauchy bound, then
    refines with Brent's method and a Newton polish.
    """
    if k < 2:
        raise ClassifyError("k must be >= 2")
    if p == 0.0:
        raise ClassifyError("p must be non-zero")
    if not A < 0.0:
        raise ClassifyError("A must be negative")
    c = seed_poly_coeffs(k, p, A)
    smax = 1.0 + float(np.max(np.abs(c[1:])))
    # geometric grid resolves roots close to 0 and far out alike
    grid = -np.concatenate([np.geomspace(smax, 1e-9, 4096), [0.0]])
    vals = np.polyval(c, grid)
    idx = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0)[0]
    idx = [i for i in idx if grid[i] < 0.0 and not (vals[i] == 0.0 and i > 0 and vals[i - 1] == 0.0)]
    if not idx:
        raise RootBracketError(f"no sign change of the seed polynomial on (-{smax}, 0) for k={k}, p={p}, A={A}")
    i = idx[-1]  # closest to zero
    a, b = grid[i], min(grid[i + 1], -1e-300)
    if vals[i] == 0.0:
        return float(a)
    fb = _horner(c, b)
    if fb == 0.0:
        return float(b)
    s = brentq(lambda z: _horner(c, z), a, b, xtol=1e-16, rtol=1e-15, maxiter=500)
    dc = np.polyder(c)
    for _ in range(3):
        d = _horner(dc, s)
        if d == 0.0:
            break
        step = _horner(c, s) / d
        if not a <= s - step <= b:
            break
        s -= step
    return float(s)


def count_negative_sign_changes(k: int, p: float, A: float = -1.0, n: int = 20000) -> int:
    c = seed_poly_coeffs(k, p, A)
    smax = 1.0 + float(np.max(np.abs(c[1:])))
    grid = -np.concatenate([np.geomspace(smax, 1e-9, n), [0.0]])
    v = np.sign(np.polyval(c, grid))
    return int(np.sum(v[:-1] * v[1:] < 0))


# --------------------------------------------------------------- seeds

def asymmetry_factor(model: FluxModel, u_l: float, u_r: float) -> float:
    """Ratio of the flux Taylor remainders about the two states; tends to -1 as u_r -> u_l."""
    if u_l == u_r:
        return -1.0
    num = model.chord_minus_speed(u_l, u_r)
    den = -model.chord_minus_speed(u_r, u_l)
    if den == 0.0:
        return -1.0
    return num / den


def char_speed_at(profile: PiecewiseProfile, model: FluxModel, x: float, side: Side) -> tuple[float, float]:
    """(h, h') at x using the given one-sided limit."""
    f, fp = profile.f_and_slope(x, side)
    return model.dG(f), model.d2G(f) * fp


def stability_check(profile: PiecewiseProfile, model: FluxModel, x_l: float, x_r: float) -> bool:
    """Local stability: both one-sided speed slopes exceed the secant slope."""
    hl, dl = char_speed_at(profile, model, x_l, Side.LEFT)
    hr, dr = char_speed_at(profile, model, x_r, Side.RIGHT)
    if hl == hr:
        raise UndefinedSlope(f"h(x_l) = h(x_r) = {hl}; the secant slope is undefined")
    slope = (hl - hr) / (x_l - x_r)
    return dl > slope and dr > slope


def intersection_time(profile, model, x_l: float, x_r: float) -> float:
    hl, _ = char_speed_at(profile, model, x_l, Side.LEFT)
    hr, _ = char_speed_at(profile, model, x_r, Side.RIGHT)
    return (x_r - x_l) / (hl - hr)


def length_scale(points: Sequence[CriticalPoint], profile: PiecewiseProfile) -> float:
    """Smallest gap between critical points and the edges of the domain of interest."""
    lo, hi = profile.domain_hint
    xs = sorted({lo, hi, *[p.x for p in points if lo < p.x < hi], *[b for b in profile.breakpoints if lo < b < hi]})
    gaps = [b - a for a, b in zip(xs, xs[1:]) if b > a]
    return min(gaps) if gaps else hi - lo


def _seed_kind2(point: CriticalPoint, delta: float, side: str, A: float) -> ShockSeed:
    sd = point.left if side == "left" else point.right
    if sd is None:
        raise SeedRejected("missing side data for a fourth-kind seed", None)
    k = sd.first_nonvanishing()
    dx = -delta if side == "left" else delta
    denom = -sd.h[1]
    if k is not None:
        denom -= 2.0 * sd.h[k] * dx ** (k - 1) / (_FACT[k - 1] * (k + 1))
    if denom <= 0.0:
        raise SeedRejected(f"fourth-kind start time not positive for delta={delta}", None)
    t0 = 1.0 / denom
    tb = -1.0 / sd.h[1]
    if side == "left":
        return ShockSeed(t0, point.x + dx, point.x, Regime.KIND2_LEFT, point, tb, point.x)
    return ShockSeed(t0, point.x, point.x + dx, Regime.KIND2_RIGHT, point, tb, point.x)


def _seed_offsets(point: CriticalPoint, delta: float, A: float) -> tuple[float, float]:
    """(dx_l, dx_r) from the leading-order asymptotics at a second/third kind point."""
    L, R = point.left, point.right
    hl1, hr1 = L.h[1], R.h[1]
    kl, kr = point.k_l, point.k_r
    if point.kind is PointKind.SHOCK2:
        if hr1 < hl1:
            if kr is None:
                raise SeedRejected("right side has no non-vanishing higher derivative", None)
            p = (kr - 1) * R.h[kr] / ((1.0 - A * kr) * _FACT[kr] * (hr1 - hl1))
            return p * delta ** kr, delta
        if kl is None:
            raise SeedRejected("left side has no non-vanishing higher derivative", None)
        p = (kl - 1) * L.h[kl] / ((1.0 - A * kl) * _FACT[kl] * (hl1 - hr1))
        return -delta, p * (-delta) ** kl
    # third kind
    if kl is None or kr is None:
        raise SeedRejected("a side of the third-kind point has no non-vanishing derivative", None)
    if kl == kr:
        s = negative_root(kl, R.h[kr] / L.h[kl], A)
        if s >= -1.0:
            return s * delta, delta
        return -delta, delta / -s
    if kl < kr:
        cst = (1 - kr) * _FACT[kl] * R.h[kr] / ((1.0 - A * kr) * _FACT[kr] * L.h[kl])
        return -abs(abs(cst) ** (1.0 / kl)) * delta ** (kr / kl), delta
    cst = (-1) ** kl * (1 - kl) * _FACT[kr] * L.h[kl] / ((1.0 - A * kl) * _FACT[kl] * R.h[kr])
    return -delta, abs(cst) ** (1.0 / kr) * delta ** (kl / kr)


def seed_shock(
    point: CriticalPoint,
    delta: float,
    A: float = -1.0,
    *,
    profile: PiecewiseProfile | None = None,
    model: FluxModel | None = None,
    side: str | None = None,
    delta_max: float | None = None,
) -> ShockSeed:
    """Starting point (t0, x_l0, x_r0) for the curve born at ``point``.

    ``profile`` and ``model`` are needed for every kind except the first
    (they supply h at the feet for the intersection time and the stability
    check).  For a fourth-kind point ``side`` picks the crossing side; the
    default is the side with the earliest break time.
    """
    if delta <= 0.0:
        raise SeedRejected("delta must be positive", None)
    if delta_max is not None and delta > delta_max:
        raise SeedRejected(f"delta={delta} exceeds the admissible maximum {delta_max}", delta_max)
    kind = point.kind
    if kind is PointKind.SHOCK1:
        return ShockSeed(0.0, point.x, point.x, Regime.KIND1, point, 0.0)
    if kind is PointKind.SHOCK4:
        if side is None:
            sides = point.crossing_sides
            side = min(sides, key=lambda s: -1.0 / (point.left if s == "left" else point.right).h[1])
        return _seed_kind2(point, delta, side, A)
    if kind not in (PointKind.SHOCK2, PointKind.SHOCK3):
        raise InvalidKind(f"{kind.value} point at x = {point.x} does not seed a shock")
    if profile is None or model is None:
        raise ClassifyError("profile and model are required for second/third kind seeds")

    def build(d: float) -> tuple[float, float, bool]:
        if point.singular or point.left is None or point.right is None:
            xl, xr = point.x - d, point.x + d
        else:
            dl, dr = _seed_offsets(point, d, A)
            xl, xr = point.x + dl, point.x + dr
        ok = xl < point.x < xr and stability_check(profile, model, xl, xr)
        return xl, xr, ok

    xl, xr, ok = build(delta)
    if not ok:
        d = delta
        for _ in range(60):
            d *= 0.5
            if build(d)[2]:
                raise SeedRejected(
                    f"seed at x* = {point.x} fails the stability condition for delta={delta}; largest admissible found {d}",
                    d,
                )
        raise SeedRejected(f"seed at x* = {point.x} fails the stability condition for every delta tried", None)
    t0 = intersection_time(profile, model, xl, xr)
    tb = point.break_times[0] if point.break_times else 0.0
    return ShockSeed(t0, xl, xr, Regime.KIND1, point, tb)


def fans_of(points: Sequence[CriticalPoint]) -> list[CriticalPoint]:
    return [p for p in points if p.fan]


def segments_of(points: Sequence[CriticalPoint]) -> list[Segment]:
    seen: dict[tuple[float, float], Segment] = {}
    for p in points:
        if p.kind is PointKind.STRAIGHT_LINE and p.segment is not None:
            seen.setdefault((p.segment.a, p.segment.b), p.segment)
    return sorted(seen.values(), key=lambda s: s.a)
