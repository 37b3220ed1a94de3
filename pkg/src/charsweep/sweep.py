"""Single-valued solution at a fixed time, swept from the initial line.

The initial line is read as an ordered list of labels: the points x0 of every
piece, with the speed interval of each rarefaction fan inserted at its
centre.  A shock curve alive at time T removes every label strictly between
its two anchors.  What is left maps monotonically onto the X axis:
characteristic labels through X = x0 + h(x0) T, fan labels through
X = c + sigma T.  The solution at a point X is recovered by inverting this map.
"""
from __future__ import annotations

import bisect
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from . import expr as ex
from .classify import Segment, segments_of
from .flux import FluxModel, OutOfRange, invert_speed
from .profile import PiecewiseProfile, Side
from .shockdyn import Fan, ShockGraph, Dynamics, Status

TABLE_POINTS = 513
NEWTON_ITERS = 60
_GAUSS = np.polynomial.legendre.leggauss(5)


class SweepError(ValueError):
    pass


class OutOfFan(SweepError):
    pass


class FocusedSegment(SweepError):
    pass


class MissingGraph(SweepError):
    pass


class FoldError(SweepError):
    """Characteristics cross at T where no shock is tracked."""


class Provenance(str, Enum):
    CHARACTERISTIC = "Characteristic"
    RAREFACTION = "Rarefaction"
    STRAIGHT_LINE = "StraightLine"


_PROV = (Provenance.CHARACTERISTIC, Provenance.RAREFACTION, Provenance.STRAIGHT_LINE)


@dataclass
class Discontinuity:
    X: float
    u_left: float
    u_right: float
    curve_id: int = -1


# ------------------------------------------------------------------ pointwise formulas

def rarefaction_value(model: FluxModel, profile: PiecewiseProfile, fan_center: float, X: float, t: float) -> float:
    """State inside the fan centred at ``fan_center``: (G')^-1((X - c) / t)."""
    if not t > 0.0:
        raise ValueError("t must be positive")
    ul = profile.value(fan_center, Side.LEFT)
    ur = profile.value(fan_center, Side.RIGHT)
    s1, s2 = model.dG(ul), model.dG(ur)
    lo, hi = min(s1, s2), max(s1, s2)
    sigma = (X - fan_center) / t
    tol = 1e-12 * max(1.0, abs(lo), abs(hi))
    if not lo - tol <= sigma <= hi + tol:
        raise OutOfFan(f"(X - c)/t = {sigma} outside the fan speeds [{lo}, {hi}]")
    sigma = min(max(sigma, lo), hi)
    try:
        return invert_speed(model, sigma, (min(ul, ur), max(ul, ur)))
    except OutOfRange as e:
        raise OutOfFan(str(e)) from e


def straight_line_value(profile: PiecewiseProfile, model: FluxModel, segment, X: float, t: float) -> float:
    """f((X - k c t) / (1 + k t)) on a linear-speed segment h = k (x + c) before it focuses."""
    seg = segment if isinstance(segment, Segment) else Segment(*segment)
    if t < 0.0:
        raise ValueError("t must be non-negative")
    den = 1.0 + seg.k * t
    if den <= 0.0:
        raise FocusedSegment(f"segment [{seg.a}, {seg.b}] has focused (t >= {seg.focus_time})")
    x0 = (X - seg.k * seg.c * t) / den
    tol = 1e-12 * max(1.0, abs(seg.a), abs(seg.b))
    if not seg.a - tol <= x0 <= seg.b + tol:
        raise SweepError(f"X = {X} is outside the segment's span at t = {t}")
    x0 = min(max(x0, seg.a), seg.b)
    i = profile.piece_index(0.5 * (seg.a + seg.b))
    return float(ex.compile_scalar(profile.f_expr(i))(x0))


def multivalue_surface(profile: PiecewiseProfile, model: FluxModel, t: float, feet: Sequence[float]) -> list[tuple[float, float]]:
    """(x0 + h(x0) t, f(x0)) for each foot; may fold, this is a diagnostic."""
    if t < 0.0:
        raise ValueError("t must be non-negative")
    out = []
    for x0 in feet:
        side = Side.RIGHT if profile.is_breakpoint(x0) else Side.INTERIOR
        f = profile.value(x0, side)
        out.append((x0 + model.dG(f) * t, f))
    return out


# ------------------------------------------------------------------ branches

@dataclass
class _Branch:
    """A kept label interval and its image [X_lo, X_hi] at time T."""
    kind: int  # index into _PROV
    X_lo: float
    X_hi: float
    piece: int = -1
    lo: float = 0.0  # x0 range (piece) or sigma range (fan)
    hi: float = 0.0
    fan: Optional[Fan] = None
    segment: Optional[Segment] = None
    table_x: Optional[np.ndarray] = field(default=None, repr=False)
    table_X: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass
class SolutionSlice:
    T: float
    X: np.ndarray
    u: np.ndarray
    provenance: np.ndarray  # indices into Provenance order: Characteristic, Rarefaction, StraightLine
    discontinuities: list[Discontinuity]
    window: tuple[float, float]
    model: FluxModel = field(repr=False, default=None)
    profile: PiecewiseProfile = field(repr=False, default=None)
    _branches: list[_Branch] = field(repr=False, default_factory=list)
    _bounds: np.ndarray = field(repr=False, default=None)

    def provenance_names(self) -> list[str]:
        return [_PROV[k].value for k in self.provenance]

    def evaluate(self, xs) -> tuple[np.ndarray, np.ndarray]:
        """(u, provenance index) at arbitrary X; right-continuous at discontinuities."""
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        u = np.full(xs.shape, np.nan)
        prov = np.zeros(xs.shape, dtype=np.int8)
        idx = np.searchsorted(self._bounds, xs, side="right") - 1
        idx = np.clip(idx, 0, len(self._branches) - 1)
        for k, br in enumerate(self._branches):
            m = idx == k
            if not m.any():
                continue
            u[m] = _eval_branch(br, xs[m], self.T, self.model, self.profile)
            prov[m] = br.kind
        return u, prov

    def cell_averages(self, edges) -> np.ndarray:
        """Exact cell means of u over [edges[j], edges[j+1]], split at every branch boundary."""
        edges = np.asarray(edges, dtype=float)
        nodes, weights = _GAUSS
        cuts = self._bounds[1:-1]
        pts, wts, owner = [], [], []
        for j in range(len(edges) - 1):
            a, b = edges[j], edges[j + 1]
            i0 = bisect.bisect_right(cuts, a)
            i1 = bisect.bisect_left(cuts, b)
            sub = [a, *cuts[i0:i1], b]
            for p, q in zip(sub, sub[1:]):
                if q <= p:
                    continue
                mid, half = 0.5 * (p + q), 0.5 * (q - p)
                pts.append(mid + half * nodes)
                wts.append(half * weights / (b - a))
                owner.append(np.full(len(nodes), j))
        pts = np.concatenate(pts)
        wts = np.concatenate(wts)
        owner = np.concatenate(owner)
        u, _ = self.evaluate(pts)
        return np.bincount(owner, weights=u * wts, minlength=len(edges) - 1)

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("X,u,provenance\n")
        names = [p.value for p in _PROV]
        for x, v, k in zip(self.X.tolist(), self.u.tolist(), self.provenance.tolist()):
            out.write(f"{x!r},{v!r},{names[k]}\n")
        return out.getvalue()

    def discontinuities_csv(self) -> str:
        out = io.StringIO()
        out.write("X,u_left,u_right\n")
        for d in self.discontinuities:
            out.write(f"{d.X!r},{d.u_left!r},{d.u_right!r}\n")
        return out.getvalue()


def _eval_branch(br: _Branch, X: np.ndarray, T: float, model: FluxModel, profile: PiecewiseProfile) -> np.ndarray:
    if br.fan is not None:
        sig = np.clip((X - br.fan.center) / T, br.lo, br.hi)
        return np.array([br.fan.state(s) for s in sig.tolist()])
    f_h = profile.h_funcs_vec(model)[br.piece]
    if br.segment is not None:
        s = br.segment
        x0 = np.clip((X - s.k * s.c * T) / (1.0 + s.k * T), br.lo, br.hi)
        return np.asarray(f_h(x0)[0], dtype=float) * np.ones_like(x0)
    x0 = _invert_characteristics(br, X, T, f_h)
    return np.asarray(f_h(x0)[0], dtype=float) * np.ones_like(x0)


def _invert_characteristics(br: _Branch, X: np.ndarray, T: float, f_h) -> np.ndarray:
    """Solve x0 + h(x0) T = X on the branch by bracketed, vectorized Newton."""
    tx, tX = br.table_x, br.table_X
    if T == 0.0:
        return np.clip(X, br.lo, br.hi)
    j = np.clip(np.searchsorted(tX, X, side="right") - 1, 0, len(tx) - 2)
    a = tx[j].copy()
    b = tx[j + 1].copy()
    Xa, Xb = tX[j], tX[j + 1]
    with np.errstate(all="ignore"):
        w = np.where(Xb > Xa, (X - Xa) / (Xb - Xa), 0.5)
    x = a + np.clip(w, 0.0, 1.0) * (b - a)
    scale = max(1.0, float(np.max(np.abs(tX))))
    for _ in range(NEWTON_ITERS):
        with np.errstate(all="ignore"):
            _, h, dh = f_h(x)
            h = np.asarray(h, dtype=float) * np.ones_like(x)
            dh = np.asarray(dh, dtype=float) * np.ones_like(x)
            r = x + h * T - X
            done = np.abs(r) <= 4e-16 * scale
            if done.all():
                break
            below = r < 0.0
            a = np.where(below, x, a)
            b = np.where(below, b, x)
            d = 1.0 + dh * T
            nxt = x - r / d
        bad = ~np.isfinite(nxt) | (nxt <= a) | (nxt >= b) | (d <= 0.0)
        nxt = np.where(bad, 0.5 * (a + b), nxt)
        nxt = np.where(done, x, nxt)
        if np.array_equal(nxt, x):
            break
        x = nxt
    return x


# ------------------------------------------------------------------ label space

@dataclass
class _Item:
    kind: str  # "piece" or "fan"
    index: int  # piece index or fan position in graph.fans
    lo: float
    hi: float
    fan: Optional[Fan] = None


def _items(profile: PiecewiseProfile, fans: Sequence[Fan]) -> list[_Item]:
    by_center = {f.center: f for f in fans}
    out = []
    n = len(profile.pieces)
    for i in range(n):
        lo, hi = profile.piece_interval(i)
        out.append(_Item("piece", i, lo, hi))
        if i < n - 1:
            fan = by_center.get(profile.breakpoints[i])
            if fan is not None:
                out.append(_Item("fan", fan.id, fan.s_lo, fan.s_hi, fan))
    return out


def _anchor_pos(items: list[_Item], profile: PiecewiseProfile, kind: str, value, left: bool, xi: float, T: float):
    """(item index, label value) of a curve anchor."""
    if kind == "fan":
        fan: Fan = value
        for k, it in enumerate(items):
            if it.kind == "fan" and it.fan is fan:
                return k, (xi - fan.center) / T if T > 0 else (fan.s_hi if left else fan.s_lo)
        raise SweepError(f"fan at {fan.center} is not part of the label space")
    x = value
    bp = profile.breakpoints
    piece = bisect.bisect_left(bp, x) if left else bisect.bisect_right(bp, x)
    for k, it in enumerate(items):
        if it.kind == "piece" and it.index == piece:
            return k, x
    raise AssertionError("piece not found")


def _curve_anchors(c, sample):
    t, xl, xr, xi = sample
    ph = c.phase_at(t)
    fan_l, fan_r = ph[2], ph[3]
    left = ("fan", fan_l) if fan_l is not None else ("foot", xl)
    right = ("fan", fan_r) if fan_r is not None else ("foot", xr)
    return left, right


def _extend(f_h, T: float, x_fixed: float, target: float, direction: float, span: float) -> float:
    """Move an infinite end until its image passes ``target``."""
    step = max(span, 1.0)
    x = x_fixed
    for _ in range(200):
        x = x + direction * step
        _, h, _ = f_h(np.array([x]))
        X = x + float(np.asarray(h).ravel()[0]) * T
        if (X - target) * direction >= 0.0:
            return x
        step *= 2.0
    raise SweepError("could not cover the window: characteristics never reach it")


def sweep_solution(
    profile: PiecewiseProfile,
    model: FluxModel,
    graph: ShockGraph,
    T: float,
    dX: float,
    window: tuple[float, float] | None = None,
) -> SolutionSlice:
    """Entropy solution at time T on a uniform X grid of spacing ``dX`` over ``window``.

    ``window`` defaults to the profile's domain hint.  Curve states at T are
    exact when T is a retained sample time (the final time or a snapshot) and
    linearly interpolated otherwise.
    """
    if not dX > 0.0:
        raise ValueError("dX must be positive")
    if T < 0.0 or T > graph.t * (1.0 + 1e-12):
        raise MissingGraph(f"graph covers [0, {graph.t_final}], asked for T = {T}")
    W = tuple(window) if window is not None else tuple(profile.domain_hint)
    dyn = Dynamics(profile, model)
    items = _items(profile, graph.fans)
    segs = {(s.a, s.b): s for s in segments_of(graph.points)}

    # cuts from curves alive at T, ordered by their position
    cuts = []
    discs = []
    for c in graph.alive_at(T):
        smp = c.sample_at(T)
        (lk, lv), (rk, rv) = _curve_anchors(c, smp)
        xi = smp[3]
        L = _anchor_pos(items, profile, lk, lv, True, xi, T)
        R = _anchor_pos(items, profile, rk, rv, False, xi, T)
        ul, ur = dyn.sample_states(c, smp)
        cuts.append((L, R, xi, c.id))
        discs.append(Discontinuity(xi, ul, ur, c.id))
    cuts.sort(key=lambda z: (z[2], z[0]))
    discs.sort(key=lambda d: d.X)
    for (L1, R1, x1, i1), (L2, R2, x2, i2) in zip(cuts, cuts[1:]):
        if R1 > L2:
            raise SweepError(f"curves {i1} and {i2} overlap on the initial line at T = {T}")

    # kept label ranges: (item index, lo, hi) grouped between cuts
    groups = []
    start = (0, -math.inf)
    for L, R, xi, cid in cuts:
        groups.append((start, L, xi))
        start = R
    groups.append((start, (len(items) - 1, math.inf), None))

    branches: list[_Branch] = []
    group_of: list[int] = []
    f_hs = profile.h_funcs_vec(model)
    for gi, ((k0, v0), (k1, v1), xi_end) in enumerate(groups):
        for k in range(k0, k1 + 1):
            it = items[k]
            lo = v0 if k == k0 else it.lo
            hi = v1 if k == k1 else it.hi
            lo, hi = max(lo, it.lo), min(hi, it.hi)
            if not lo < hi and not (math.isinf(lo) or math.isinf(hi)):
                continue
            if it.kind == "fan":
                fan = it.fan
                br = _Branch(1, fan.center + lo * T, fan.center + hi * T, lo=lo, hi=hi, fan=fan)
            else:
                f_h = f_hs[it.index]
                span = (W[1] - W[0])
                if math.isinf(lo):
                    lo = _extend(f_h, T, min(hi, W[0]), W[0] - span, -1.0, span)
                if math.isinf(hi):
                    hi = _extend(f_h, T, max(lo, W[1]), W[1] + span, 1.0, span)
                if not lo < hi:
                    continue
                seg = segs.get(profile.piece_interval(it.index))
                if seg is not None and not T < seg.focus_time:
                    seg = None  # focused: only reachable here if no curve covers it
                br = _table_branch(it.index, lo, hi, T, f_h, seg)
            branches.append(br)
            group_of.append(gi)
    if not branches:
        raise SweepError("nothing left to sweep")
    # boundaries between consecutive branches: shocks at their xi, continuous joins at the shared image
    bounds = [-math.inf]
    for k in range(len(branches) - 1):
        a, b = branches[k], branches[k + 1]
        tol = 1e-8 * max(1.0, abs(a.X_hi)) * max(1.0, T)
        if group_of[k + 1] != group_of[k]:
            edge = cuts[group_of[k]][2]
            if not (a.X_hi - tol <= edge <= b.X_lo + tol):
                raise FoldError(f"shock at X = {edge} is not between its side branches at T = {T}")
        else:
            if b.X_lo < a.X_hi - tol:
                raise FoldError(f"branches overlap near X = {a.X_hi} at T = {T}")
            edge = 0.5 * (a.X_hi + b.X_lo)
        bounds.append(edge)
    bounds.append(math.inf)

    n = int(math.floor((W[1] - W[0]) / dX + 1e-9))
    X = W[0] + dX * np.arange(n + 1)
    sl = SolutionSlice(T, X, np.empty(0), np.empty(0, dtype=np.int8), discs, W, model, profile, branches,
                       np.asarray(bounds))
    u, prov = sl.evaluate(X)
    sl.u, sl.provenance = u, prov
    return sl


def _table_branch(piece: int, lo: float, hi: float, T: float, f_h, seg: Optional[Segment]) -> _Branch:
    tx = np.linspace(lo, hi, TABLE_POINTS)
    with np.errstate(all="ignore"):
        _, h, dh = f_h(tx)
    h = np.asarray(h, dtype=float) * np.ones_like(tx)
    dh = np.asarray(dh, dtype=float) * np.ones_like(tx)
    tX = tx + h * T
    ok = np.isfinite(tX)
    if not ok.all():
        raise SweepError(f"characteristic speed is not finite on piece {piece}")
    jac = 1.0 + dh * T
    fin = np.isfinite(jac)
    if (jac[fin] < -1e-9).any() or (np.diff(tX) < -1e-12 * max(1.0, float(np.max(np.abs(tX))))).any():
        bad = tx[fin][np.argmin(jac[fin])]
        raise FoldError(f"characteristics from x0 = {bad} have crossed by T = {T} without a tracked shock")
    kind = 2 if seg is not None else 0
    return _Branch(kind, float(tX[0]), float(tX[-1]), piece=piece, lo=lo, hi=hi, segment=seg,
                   table_x=tx, table_X=np.maximum.accumulate(tX))
