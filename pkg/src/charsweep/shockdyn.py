"""Shock curves: their ODEs, the event logic between them, and the driver
that evolves every curve of a profile up to a final time.

Each curve is described by two anchors on the initial line.  An anchor is a
foot x (the curve's side state is f(x)) or a rarefaction fan (the side state
comes from the fan at the curve's position).  Left feet are always evaluated
with left limits and right feet with right limits, so a foot sitting exactly
on a breakpoint picks the piece it is about to move into.
"""
from __future__ import annotations

import bisect
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

from .classify import (
    DELTA_DEFAULT_FRACTION,
    DELTA_MAX_FRACTION,
    CriticalPoint,
    PointKind,
    Regime,
    Segment,
    SeedRejected,
    ShockSeed,
    asymmetry_factor,
    classify_points,
    length_scale,
    seed_shock,
)
from .flux import FluxModel, OutOfRange, invert_speed, speed_is_monotone
from .profile import PiecewiseProfile

CONSISTENCY_TOL = 1e-8
SINGULAR_TOL = 1e-10
RAMP_FACTOR = 0.05
FLIP_STEPS = 64
_TIME_EPS = 1e-13


class ShockError(RuntimeError):
    pass


class DegenerateJump(ShockError, ValueError):
    pass


class SingularDenominator(ShockError):
    def __init__(self, msg: str, foot: str):
        super().__init__(msg)
        self.foot = foot


class FanExit(ShockError):
    pass


class ConsistencyError(ShockError):
    pass


class RunAbort(ShockError):
    def __init__(self, t: float, msg: str):
        super().__init__(f"[t={t!r}] {msg}")
        self.t = t


class EventType(str, Enum):
    CANCEL = "CancelPoint"
    MERGE = "Merge"
    ENTER = "EnterRarefaction"
    EXIT = "ExitRarefaction"
    STRAIGHT = "StraightLineActivate"
    SINGULAR = "SingularReseed"


class Status(str, Enum):
    ACTIVE = "Active"
    MERGED = "Merged"
    FINISHED = "Finished"


@dataclass
class Event:
    time: float
    type: EventType
    participants: tuple[str, ...]
    detail: str = ""


@dataclass
class Fan:
    id: int
    center: float
    s_lo: float  # h(c-)
    s_hi: float  # h(c+)
    u_lo: float  # f(c-)
    u_hi: float  # f(c+)
    inverse: Callable[[float], float] = field(repr=False, default=None)

    def state(self, sigma: float) -> float:
        return self.inverse(sigma)

    def contains(self, sigma: float, tol: float = 0.0) -> bool:
        return self.s_lo - tol <= sigma <= self.s_hi + tol


@dataclass
class ShockCurve:
    id: int
    regime: Regime
    y: tuple[float, ...]
    fan_l: Optional[Fan] = None
    fan_r: Optional[Fan] = None
    origin: str = ""
    t_singular: Optional[float] = None
    status: Status = Status.ACTIVE
    merged_into: Optional[int] = None
    samples: list[tuple[float, float, float, float]] = field(default_factory=list)
    # (start time, regime, fan_l, fan_r) per phase
    regimes: list[tuple[float, Regime, Optional[Fan], Optional[Fan]]] = field(default_factory=list)

    @property
    def t_start(self) -> float:
        return self.samples[0][0]

    @property
    def t_end(self) -> float:
        return self.samples[-1][0]

    def alive_at(self, t: float) -> bool:
        if not self.samples or t < self.t_start:
            return False
        if t < self.t_end:
            return True
        return t == self.t_end and self.status is Status.ACTIVE

    def sample_at(self, t: float) -> tuple[float, float, float, float]:
        """Retained sample at t, linearly interpolated between samples otherwise."""
        ts = [s[0] for s in self.samples]
        i = bisect.bisect_left(ts, t)
        if i < len(ts) and ts[i] == t:
            return self.samples[i]
        if i == 0 or i == len(ts):
            raise ShockError(f"curve {self.id} has no state at t={t}")
        a, b = self.samples[i - 1], self.samples[i]
        w = (t - a[0]) / (b[0] - a[0])
        return (t,) + tuple(p + w * (q - p) for p, q in zip(a[1:], b[1:]))

    def phase_at(self, t: float) -> tuple[float, Regime, Optional[Fan], Optional[Fan]]:
        """Phase in force at t; at a switching time the later phase wins."""
        ph = self.regimes[0]
        for p in self.regimes:
            if p[0] <= t:
                ph = p
        return ph

    def regime_at(self, t: float) -> Regime:
        return self.phase_at(t)[1]

    def sample_index(self, t: float) -> int:
        return bisect.bisect_left([s[0] for s in self.samples], t)


@dataclass
class Pending:
    """A shock point or focusing segment that has not produced a curve yet."""
    key: str
    t_activate: float
    x_core: float
    side: str  # which neighbourhood of x_core a crossing foot must come from
    seed: Optional[ShockSeed] = None
    segment: Optional[Segment] = None
    point_ids: tuple[int, ...] = ()


@dataclass
class ShockGraph:
    curves: list[ShockCurve] = field(default_factory=list)
    fans: list[Fan] = field(default_factory=list)
    events: list[Event] = field(default_factory=list)
    cancelled_points: list[int] = field(default_factory=list)
    points: list[CriticalPoint] = field(default_factory=list)
    t: float = 0.0
    t_final: float = 0.0
    engine: Optional["Tracker"] = field(default=None, repr=False)

    def active(self) -> list[ShockCurve]:
        return [c for c in self.curves if c.status is Status.ACTIVE]

    def alive_at(self, t: float) -> list[ShockCurve]:
        return [c for c in self.curves if c.alive_at(t)]

    def curve(self, cid: int) -> ShockCurve:
        return self.curves[cid]


# ------------------------------------------------------------------ flux helpers

def _speed_inverse(model: FluxModel, fan_lo: float, fan_hi: float) -> Callable[[float], float]:
    """sigma -> u with G'(u) = sigma, valid slightly beyond the fan's value range."""
    c = model.coeffs
    nz = [i for i, a in enumerate(c) if a != 0.0]
    if len(nz) == 1 and nz[0] >= 2 and (nz[0] - 1) % 2 == 1:
        n, a = nz[0], c[nz[0]]
        e = 1.0 / (n - 1)
        if n == 2:
            return lambda s: s / (2.0 * a)
        return lambda s: math.copysign(abs(s / (n * a)) ** e, s / (n * a))
    lo, hi = min(fan_lo, fan_hi), max(fan_lo, fan_hi)
    w = hi - lo
    ext = (lo - 0.5 * w, hi + 0.5 * w)
    if not speed_is_monotone(model, *ext):
        ext = (lo, hi)

    def inv(s: float) -> float:
        try:
            return invert_speed(model, s, ext)
        except OutOfRange:
            # clamp to the bracket end whose speed is closest
            a, b = ext
            return a if abs(model.dG(a) - s) < abs(model.dG(b) - s) else b

    return inv


def shock_speed(model: FluxModel, u_l: float, u_r: float) -> float:
    """Jump-condition speed (G(u_r) - G(u_l)) / (u_r - u_l)."""
    if u_l == u_r:
        raise DegenerateJump(f"equal states u_l = u_r = {u_l}")
    return model.chord(u_l, u_r)


# ------------------------------------------------------------------ dynamics

class Dynamics:
    """Fast scalar evaluation of the shock ODE right-hand sides."""

    def __init__(self, profile: PiecewiseProfile, model: FluxModel):
        self.profile = profile
        self.model = model
        self.bp = list(profile.breakpoints)
        self.f01 = profile.fprime_funcs()
        d1 = model.derivative_coeffs(1)
        d2 = model.derivative_coeffs(2)
        if model.coeffs == (0.0, 0.0, 0.5):
            self.dG = lambda u: u
            self.d2G = lambda u: 1.0
        else:
            self.dG = lambda u, c=d1: _horner(c, u)
            self.d2G = lambda u, c=d2: _horner(c, u)
        if model.coeffs == (0.0, 0.0, 0.5):
            self.cms = lambda a, b: 0.5 * (b - a)
        else:
            self.cms = model.chord_minus_speed

    def piece(self, x: float, left: bool) -> int:
        return bisect.bisect_left(self.bp, x) if left else bisect.bisect_right(self.bp, x)

    def pieces(self, curve: ShockCurve, y: tuple[float, ...]) -> tuple[int, ...]:
        """Pieces of the curve's feet; frozen for the duration of a step."""
        reg = curve.regime
        if reg is Regime.KIND1:
            return self.piece(y[0], True), self.piece(y[1], False)
        if reg is Regime.KIND3:
            return ()
        return (self.piece(y[0], reg is Regime.KIND2_LEFT),)

    def foot(self, x: float, left: bool, piece: int | None = None) -> tuple[float, float, float]:
        """(f, h, h') at a foot; ``left`` selects the left limit at breakpoints.

        With ``piece`` given, that piece's formula is continued past its ends.
        """
        i = piece if piece is not None else self.piece(x, left)
        f, fp = self.f01[i](x)
        return f, self.dG(f), self.d2G(f) * fp

    def xi(self, regime: Regime, y: tuple[float, ...], t: float, pieces: Sequence[int] = ()) -> float:
        if regime is Regime.KIND3:
            return y[0]
        left = regime is not Regime.KIND2_RIGHT
        x = y[0]
        _, h, _ = self.foot(x, left, pieces[0] if pieces else None)
        return x + h * t

    def rhs(self, curve: ShockCurve, y: tuple[float, ...], t: float, pieces: Sequence[int] = ()) -> tuple[float, ...]:
        reg = curve.regime
        pl = pieces[0] if pieces else None
        if reg is Regime.KIND1:
            fl, hl, dl = self.foot(y[0], True, pl)
            fr, hr, dr = self.foot(y[1], False, pieces[1] if pieces else None)
            if fl == fr:
                raise DegenerateJump(f"f(x_l) = f(x_r) = {fl}")
            bl = 1.0 + dl * t
            br = 1.0 + dr * t
            if abs(bl) < SINGULAR_TOL:
                raise SingularDenominator("left foot denominator vanishes", "l")
            if abs(br) < SINGULAR_TOL:
                raise SingularDenominator("right foot denominator vanishes", "r")
            return self.cms(fl, fr) / bl, self.cms(fr, fl) / br
        if reg is Regime.KIND3:
            xi = y[0]
            u1 = curve.fan_l.state((xi - curve.fan_l.center) / t)
            u2 = curve.fan_r.state((xi - curve.fan_r.center) / t)
            return (self.model.chord(u1, u2),)
        left = reg is Regime.KIND2_LEFT
        fan = curve.fan_r if left else curve.fan_l
        x = y[0]
        f, h, d = self.foot(x, left, pl)
        u = fan.state(h + (x - fan.center) / t)
        b = 1.0 + d * t
        if abs(b) < SINGULAR_TOL:
            raise SingularDenominator("foot denominator vanishes", "l" if left else "r")
        return (self.cms(f, u) / b,)

    def _rk4_kind1(self, y: tuple[float, ...], t: float, h: float, pieces: Sequence[int]) -> tuple[float, float]:
        # unrolled Kind1 step: the hot loop of most runs
        fa = self.f01[pieces[0] if pieces else self.piece(y[0], True)]
        fb = self.f01[pieces[1] if pieces else self.piece(y[1], False)]
        dG, d2G, cms = self.dG, self.d2G, self.cms
        xl, xr = y
        kl = kr = 0.0
        sl = sr = 0.0
        for w, c, tt in ((1.0, 0.0, t), (2.0, 0.5, t + 0.5 * h), (2.0, 0.5, t + 0.5 * h), (1.0, 1.0, t + h)):
            fl, pl = fa(xl + c * h * kl)
            fr, pr = fb(xr + c * h * kr)
            if fl == fr:
                raise DegenerateJump(f"f(x_l) = f(x_r) = {fl}")
            bl = 1.0 + d2G(fl) * pl * tt
            br = 1.0 + d2G(fr) * pr * tt
            if abs(bl) < SINGULAR_TOL:
                raise SingularDenominator("left foot denominator vanishes", "l")
            if abs(br) < SINGULAR_TOL:
                raise SingularDenominator("right foot denominator vanishes", "r")
            kl = cms(fl, fr) / bl
            kr = cms(fr, fl) / br
            sl += w * kl
            sr += w * kr
        out = (xl + h / 6.0 * sl, xr + h / 6.0 * sr)
        if not (math.isfinite(out[0]) and math.isfinite(out[1])):
            raise SingularDenominator("non-finite RK4 stage", "?")
        return out

    def rk4(self, curve: ShockCurve, y: tuple[float, ...], t: float, h: float, pieces: Sequence[int] = ()) -> tuple[float, ...]:
        if curve.regime is Regime.KIND1:
            return self._rk4_kind1(y, t, h, pieces)
        k1 = self.rhs(curve, y, t, pieces)
        y2 = tuple(a + 0.5 * h * b for a, b in zip(y, k1))
        k2 = self.rhs(curve, y2, t + 0.5 * h, pieces)
        y3 = tuple(a + 0.5 * h * b for a, b in zip(y, k2))
        k3 = self.rhs(curve, y3, t + 0.5 * h, pieces)
        y4 = tuple(a + h * b for a, b in zip(y, k3))
        k4 = self.rhs(curve, y4, t + h, pieces)
        out = tuple(a + h / 6.0 * (p + 2.0 * q + 2.0 * r + s) for a, p, q, r, s in zip(y, k1, k2, k3, k4))
        if not all(math.isfinite(v) for v in out):
            raise SingularDenominator("non-finite RK4 stage", "?")
        return out

    def sample(self, curve: ShockCurve, y: tuple[float, ...], t: float) -> tuple[float, float, float, float]:
        reg = curve.regime
        xi = self.xi(reg, y, t)
        if reg is Regime.KIND1:
            return (t, y[0], y[1], xi)
        if reg is Regime.KIND2_LEFT:
            return (t, y[0], curve.fan_r.center, xi)
        if reg is Regime.KIND2_RIGHT:
            return (t, curve.fan_l.center, y[0], xi)
        return (t, curve.fan_l.center, curve.fan_r.center, xi)

    def side_states(self, curve: ShockCurve, y: tuple[float, ...], t: float) -> tuple[float, float]:
        """(u_left, u_right) across the curve."""
        reg = curve.regime
        xi = self.xi(reg, y, t)
        if reg is Regime.KIND1:
            return self.foot(y[0], True)[0], self.foot(y[1], False)[0]
        if reg is Regime.KIND2_LEFT:
            return self.foot(y[0], True)[0], curve.fan_r.state((xi - curve.fan_r.center) / t)
        if reg is Regime.KIND2_RIGHT:
            return curve.fan_l.state((xi - curve.fan_l.center) / t), self.foot(y[0], False)[0]
        return (
            curve.fan_l.state((xi - curve.fan_l.center) / t),
            curve.fan_r.state((xi - curve.fan_r.center) / t),
        )


    def sample_states(self, curve: ShockCurve, sample, phase=None) -> tuple[float, float]:
        """(u_left, u_right) reconstructed from a retained sample."""
        t, xl, xr, xi = sample
        _, reg, fl, fr = phase or curve.phase_at(t)
        ul = fl.state((xi - fl.center) / t) if fl is not None else self.foot(xl, True)[0]
        ur = fr.state((xi - fr.center) / t) if fr is not None else self.foot(xr, False)[0]
        return ul, ur


def _horner(c, u):
    acc = 0.0
    for a in reversed(c):
        acc = acc * u + a
    return acc


# ------------------------------------------------------------------ public RHS API

def rhs_kind1(profile: PiecewiseProfile, model: FluxModel, x_l: float, x_r: float, t: float) -> tuple[float, float]:
    """(dx_l/dt, dx_r/dt) of the first-kind shock equation."""
    dyn = Dynamics(profile, model)
    c = ShockCurve(-1, Regime.KIND1, (x_l, x_r))
    return dyn.rhs(c, (x_l, x_r), t)


def rhs_kind2(
    profile: PiecewiseProfile, model: FluxModel, x_foot: float, t: float, fan_center: float, side: str = "left"
) -> float:
    """d(foot)/dt of a shock crossing the fan centred at ``fan_center``.

    ``side`` is where the foot lies relative to the fan ("left" means the fan
    is on the shock's right).
    """
    if not t > 0.0:
        raise ValueError("t must be positive")
    fl = profile.value(fan_center, "left")
    fr = profile.value(fan_center, "right")
    fan = Fan(-1, fan_center, model.dG(fl), model.dG(fr), fl, fr)
    lo, hi = min(fan.s_lo, fan.s_hi), max(fan.s_lo, fan.s_hi)
    left = side == "left"
    dyn = Dynamics(profile, model)
    _, h, _ = dyn.foot(x_foot, left)
    sigma = h + (x_foot - fan_center) / t
    tol = 1e-12 * max(1.0, abs(lo), abs(hi))
    if not lo - tol <= sigma <= hi + tol:
        raise FanExit(f"speed {sigma} outside the fan [{lo}, {hi}]")
    fan.inverse = lambda s: invert_speed(model, min(max(s, lo), hi), (min(fl, fr), max(fl, fr)))
    reg = Regime.KIND2_LEFT if left else Regime.KIND2_RIGHT
    c = ShockCurve(-1, reg, (x_foot,), fan_l=None if left else fan, fan_r=fan if left else None)
    return dyn.rhs(c, (x_foot,), t)[0]


def rhs_kind3(model: FluxModel, x: float, t: float, x1: float, x2: float, fan1=None, fan2=None) -> float:
    """dxi/dt for a shock between two fans centred at x1 < x2.

    ``fan1``/``fan2`` are optional (u_lo, u_hi) value brackets used for the
    inversion of G'; without them the inversion is unbounded where G' is
    monotone.
    """
    if not t > 0.0:
        raise ValueError("t must be positive")
    inv1 = _speed_inverse(model, *(fan1 or (-1e3, 1e3)))
    inv2 = _speed_inverse(model, *(fan2 or (-1e3, 1e3)))
    u1 = inv1((x - x1) / t)
    u2 = inv2((x - x2) / t)
    if u1 == u2:
        if x1 == x2 and model.coeffs == (0.0, 0.0, 0.5):
            return (x - x1) / t
        raise DegenerateJump("the two fan states coincide")
    return model.chord(u1, u2)


# ------------------------------------------------------------------ tracker

@dataclass
class _Candidate:
    dt: float
    x: float
    kind: str
    curves: tuple[int, ...]
    data: tuple = ()


class Tracker:
    """Evolves a :class:`ShockGraph`; one instance per run."""

    def __init__(
        self,
        profile: PiecewiseProfile,
        model: FluxModel,
        *,
        delta: float | None = None,
        phased_step: bool = False,
        snapshots: Sequence[float] = (),
    ):
        self.profile = profile
        self.model = model
        self.dyn = Dynamics(profile, model)
        self.phased = phased_step
        self.graph = ShockGraph(engine=self)
        g = self.graph
        g.points = classify_points(profile, model)
        scale = length_scale(g.points, profile)
        self.delta_max = DELTA_MAX_FRACTION * scale
        self.delta = delta if delta is not None else DELTA_DEFAULT_FRACTION * scale
        self.snapshots = sorted(set(float(s) for s in snapshots))
        self.fans: dict[float, Fan] = {}
        for p in g.points:
            if p.fan:
                fan = Fan(len(g.fans), p.x, p.left.h[0] if p.left else model.dG(profile.value(p.x, "left")),
                          p.right.h[0] if p.right else model.dG(profile.value(p.x, "right")),
                          profile.value(p.x, "left"), profile.value(p.x, "right"))
                fan.inverse = _speed_inverse(model, fan.u_lo, fan.u_hi)
                g.fans.append(fan)
                self.fans[p.x] = fan
        self.pending: list[Pending] = []
        self._frozen: dict[int, tuple[int, ...]] = {}
        for p in g.points:
            self._register(p)
        locs = set(profile.breakpoints)
        locs.update(p.x for p in g.points)
        self.locations = sorted(locs)

    # -------------------------------------------------------- setup
    def _register(self, p: CriticalPoint) -> None:
        if p.kind is PointKind.STRAIGHT_LINE:
            s = p.segment
            key = f"S{s.a!r}:{s.b!r}"
            for q in self.pending:
                if q.key == key:
                    q.point_ids += (p.id,)
                    return
            self.pending.append(Pending(key, s.focus_time, s.a, "segment", segment=s, point_ids=(p.id,)))
            return
        if p.kind is PointKind.SHOCK4:
            for side in p.crossing_sides:
                seed = self._seed(p, side=side)
                self.pending.append(Pending(f"P{p.id}{side[0]}", seed.t0, p.x, side, seed=seed, point_ids=(p.id,)))
            return
        if p.kind in (PointKind.SHOCK1, PointKind.SHOCK2, PointKind.SHOCK3):
            seed = self._seed(p)
            self.pending.append(Pending(f"P{p.id}", seed.t0, p.x, "both", seed=seed, point_ids=(p.id,)))

    def _seed(self, p: CriticalPoint, side: str | None = None, A: float = -1.0) -> ShockSeed:
        try:
            return seed_shock(p, self.delta, A, profile=self.profile, model=self.model, side=side,
                              delta_max=self.delta_max)
        except SeedRejected as e:
            if e.max_delta is None:
                raise
            return seed_shock(p, e.max_delta, A, profile=self.profile, model=self.model, side=side)

    # -------------------------------------------------------- curve management
    def _new_curve(self, regime: Regime, y, t: float, fan_l=None, fan_r=None, origin="", t_singular=None) -> ShockCurve:
        g = self.graph
        c = ShockCurve(len(g.curves), regime, tuple(y), fan_l, fan_r, origin, t_singular)
        c.samples.append(self.dyn.sample(c, c.y, t))
        c.regimes.append((t, regime, fan_l, fan_r))
        g.curves.append(c)
        return c

    def _set_regime(self, c: ShockCurve, regime: Regime, y, t: float, fan_l=None, fan_r=None) -> None:
        c.regime, c.y, c.fan_l, c.fan_r = regime, tuple(y), fan_l, fan_r
        c.regimes.append((t, regime, fan_l, fan_r))
        self._replace_last(c, t)

    def _ordered(self) -> list[ShockCurve]:
        act = self.graph.active()
        t = self.graph.t
        return sorted(act, key=lambda c: (c.samples[-1][3], self._left_label(c)))

    def _left_label(self, c: ShockCurve) -> float:
        if c.regime in (Regime.KIND1, Regime.KIND2_LEFT):
            return c.y[0]
        return c.fan_l.center

    @staticmethod
    def _anchors(c: ShockCurve):
        """((kind, value), (kind, value)) for the left and right anchors."""
        if c.regime is Regime.KIND1:
            return ("foot", c.y[0]), ("foot", c.y[1])
        if c.regime is Regime.KIND2_LEFT:
            return ("foot", c.y[0]), ("fan", c.fan_r)
        if c.regime is Regime.KIND2_RIGHT:
            return ("fan", c.fan_l), ("foot", c.y[0])
        return ("fan", c.fan_l), ("fan", c.fan_r)

    # -------------------------------------------------------- activation
    def _activate_due(self, t: float) -> None:
        due = [p for p in self.pending if p.t_activate <= t + _TIME_EPS * max(1.0, t)]
        due.sort(key=lambda p: (p.t_activate, p.x_core))
        for p in due:
            self.pending.remove(p)
            if p.segment is not None:
                self._activate_segment(p, t)
            else:
                self._activate_seed(p, t)

    def _activate_seed(self, p: Pending, t: float) -> None:
        s = p.seed
        origin = f"P{s.origin.id}"
        tsing = None if s.origin.kind is PointKind.SHOCK1 else s.t_break
        if s.regime is Regime.KIND1:
            c = self._new_curve(Regime.KIND1, (s.xl0, s.xr0), t, origin=origin, t_singular=tsing)
        elif s.regime is Regime.KIND2_LEFT:
            fan = self.fans[s.fan_center]
            c = self._new_curve(Regime.KIND2_LEFT, (s.xl0,), t, fan_r=fan, origin=origin, t_singular=tsing)
            self._record(t, EventType.ENTER, (f"C{c.id}", f"P{s.origin.id}"), "seeded inside the fan")
        else:
            fan = self.fans[s.fan_center]
            c = self._new_curve(Regime.KIND2_RIGHT, (s.xr0,), t, fan_l=fan, origin=origin, t_singular=tsing)
            self._record(t, EventType.ENTER, (f"C{c.id}", f"P{s.origin.id}"), "seeded inside the fan")
        self._resolve_overlap(c, t)

    def _activate_segment(self, p: Pending, t: float) -> None:
        s = p.segment
        fa, fb = self.fans.get(s.a), self.fans.get(s.b)
        y: tuple
        if fa is None and fb is None:
            reg, y = Regime.KIND1, (s.a, s.b)
        elif fa is None:
            reg, y = Regime.KIND2_LEFT, (s.a,)
        elif fb is None:
            reg, y = Regime.KIND2_RIGHT, (s.b,)
        else:
            reg, y = Regime.KIND3, (s.focus_x,)
        c = self._new_curve(reg, y, t, fan_l=fa if fa and reg in (Regime.KIND2_RIGHT, Regime.KIND3) else None,
                            fan_r=fb if fb and reg in (Regime.KIND2_LEFT, Regime.KIND3) else None,
                            origin=p.key)
        self._record(t, EventType.STRAIGHT, (f"C{c.id}",) + tuple(f"P{i}" for i in p.point_ids))
        self._resolve_overlap(c, t)

    def _resolve_overlap(self, c: ShockCurve, t: float) -> None:
        """Merge a freshly started curve with a neighbour whose feet already cover its start."""
        changed = True
        while changed:
            changed = False
            order = self._ordered()
            i = order.index(c)
            for j in (i - 1, i + 1):
                if not 0 <= j < len(order):
                    continue
                a, b = (order[j], c) if j < i else (c, order[j])
                ra, lb = self._anchors(a)[1], self._anchors(b)[0]
                if ra[0] == "foot" and lb[0] == "foot" and ra[1] >= lb[1]:
                    c = self._merge(a, b, t, project=True)
                    changed = True
                    break

    # -------------------------------------------------------- events
    def _record(self, t: float, typ: EventType, parts: tuple[str, ...], detail: str = "") -> Event:
        ev = Event(t, typ, parts, detail)
        self.graph.events.append(ev)
        return ev

    def _merge(self, a: ShockCurve, b: ShockCurve, t: float, project: bool = False) -> ShockCurve:
        la, _ = self._anchors(a)
        _, rb = self._anchors(b)
        if la[0] == "foot" and rb[0] == "foot":
            reg, y, fl, fr = Regime.KIND1, (la[1], rb[1]), None, None
        elif la[0] == "foot":
            reg, y, fl, fr = Regime.KIND2_LEFT, (la[1],), None, rb[1]
        elif rb[0] == "foot":
            reg, y, fl, fr = Regime.KIND2_RIGHT, (rb[1],), la[1], None
        else:
            xi = 0.5 * (a.samples[-1][3] + b.samples[-1][3])
            reg, y, fl, fr = Regime.KIND3, (xi,), la[1], rb[1]
        if project and reg is Regime.KIND1:
            y = self._project(y, a.samples[-1][3], t)
        tsing = None
        for cc in (a, b):
            if cc.t_singular is not None and t - cc.t_singular < 1.0:
                tsing = cc.t_singular if tsing is None else min(tsing, cc.t_singular)
        new = self._new_curve(reg, y, t, fl, fr, origin=f"C{a.id}+C{b.id}", t_singular=tsing)
        for cc in (a, b):
            cc.status = Status.MERGED
            cc.merged_into = new.id
        self._record(t, EventType.MERGE, (f"C{a.id}", f"C{b.id}", f"C{new.id}"))
        return new

    def _project(self, y, xi: float, t: float):
        """Move the right foot so that both characteristics reach xi at time t."""
        xl, xr = y
        dyn = self.dyn
        gap = lambda x: x + dyn.foot(x, False)[1] * t - xi
        if abs(gap(xr)) <= CONSISTENCY_TOL:
            return y
        x = xr
        for _ in range(60):
            _, h, d = dyn.foot(x, False)
            r = x + h * t - xi
            if abs(r) <= 1e-14 * max(1.0, abs(xi)):
                break
            den = 1.0 + d * t
            if den <= 0.0:
                break
            x -= r / den
        if abs(gap(x)) > CONSISTENCY_TOL or x <= xl:
            raise ConsistencyError(f"cannot make merged feet ({xl}, {xr}) consistent at t={t}")
        return (xl, x)

    def _cancel_at(self, loc: float, from_side: str, t: float, c: ShockCurve) -> None:
        """Cancel pending points a foot reaches from ``from_side`` of ``loc``."""
        for p in list(self.pending):
            if p.segment is not None:
                s = p.segment
                hit = (from_side == "left" and loc == s.a) or (from_side == "right" and loc == s.b)
            else:
                hit = p.x_core == loc and p.side in ("both", from_side)
            if hit:
                self.pending.remove(p)
                for pid in p.point_ids:
                    if pid not in self.graph.cancelled_points:
                        self.graph.cancelled_points.append(pid)
                self._record(t, EventType.CANCEL, tuple(f"P{i}" for i in p.point_ids) + (f"C{c.id}",))

    # -------------------------------------------------------- detection
    def _trial(self, t: float, h: float, curves: Sequence[ShockCurve]) -> dict[int, tuple]:
        return {c.id: self.dyn.rk4(c, c.y, t, h, self._frozen[c.id]) for c in curves}

    def _crossings(self, c: ShockCurve, y0, y1) -> list[tuple[float, str, float]]:
        """(signed distance fn key) list of locations crossed by the curve's feet."""
        out = []
        locs = self.locations
        if c.regime in (Regime.KIND1, Regime.KIND2_LEFT):
            a, b = y1[0], y0[0]  # left foot moves left: crossed locs in [new, old)
            i = bisect.bisect_left(locs, a)
            if i < len(locs) and locs[i] < b:
                out.append(("l", locs[bisect.bisect_left(locs, b) - 1]))
        if c.regime in (Regime.KIND1, Regime.KIND2_RIGHT):
            k = 1 if c.regime is Regime.KIND1 else 0
            a, b = y0[k], y1[k]  # right foot moves right: crossed locs in (old, new]
            i = bisect.bisect_right(locs, a)
            if i < len(locs) and locs[i] <= b:
                out.append(("r", locs[i]))
        return out

    def _sigma(self, c: ShockCurve, y, t: float, fan: Fan) -> float:
        return (self.dyn.xi(c.regime, y, t, self._frozen.get(c.id, ())) - fan.center) / t

    def _event_fn(self, cand: _Candidate, ys: dict[int, tuple], t: float) -> float:
        """Signed function that is negative before the event and >= 0 after."""
        kind = cand.kind
        if kind in ("foot_l", "foot_r"):
            c = self.graph.curves[cand.curves[0]]
            loc = cand.data[0]
            k = 0 if kind == "foot_l" or c.regime is not Regime.KIND1 else 1
            x = ys[c.id][k]
            return loc - x if kind == "foot_l" else x - loc
        if kind == "exit_r":
            c = self.graph.curves[cand.curves[0]]
            return self._sigma(c, ys[c.id], t, c.fan_r) - c.fan_r.s_hi
        if kind == "exit_l":
            c = self.graph.curves[cand.curves[0]]
            return c.fan_l.s_lo - self._sigma(c, ys[c.id], t, c.fan_l)
        if kind == "merge_feet":
            a, b = (self.graph.curves[i] for i in cand.curves)
            ya, yb = ys[a.id], ys[b.id]
            return ya[-1] - yb[0]
        if kind == "merge_xi":
            a, b = (self.graph.curves[i] for i in cand.curves)
            fz = self._frozen
            return self.dyn.xi(a.regime, ys[a.id], t, fz[a.id]) - self.dyn.xi(b.regime, ys[b.id], t, fz[b.id])
        raise AssertionError(kind)

    def _candidates(self, t: float, h: float, trial: dict[int, tuple], order: list[ShockCurve]) -> list[_Candidate]:
        cands = []
        t1 = t + h
        for c in order:
            y0, y1 = c.y, trial[c.id]
            for foot, loc in self._crossings(c, y0, y1):
                cands.append(_Candidate(h, loc, "foot_" + foot, (c.id,), (loc,)))
            if c.regime in (Regime.KIND2_LEFT, Regime.KIND3):
                if self._sigma(c, y1, t1, c.fan_r) >= c.fan_r.s_hi:
                    cands.append(_Candidate(h, c.fan_r.center, "exit_r", (c.id,)))
            if c.regime in (Regime.KIND2_RIGHT, Regime.KIND3):
                if self._sigma(c, y1, t1, c.fan_l) <= c.fan_l.s_lo:
                    cands.append(_Candidate(h, c.fan_l.center, "exit_l", (c.id,)))
        for a, b in zip(order, order[1:]):
            ra, lb = self._anchors(a)[1], self._anchors(b)[0]
            if ra[0] == "foot" and lb[0] == "foot":
                if trial[a.id][-1] >= trial[b.id][0]:
                    cands.append(_Candidate(h, ra[1], "merge_feet", (a.id, b.id)))
            elif (self.dyn.xi(a.regime, trial[a.id], t1, self._frozen[a.id])
                  >= self.dyn.xi(b.regime, trial[b.id], t1, self._frozen[b.id])):
                cands.append(_Candidate(h, self._left_label(b), "merge_xi", (a.id, b.id)))
        return cands

    def _localize(self, cand: _Candidate, t: float, h: float) -> float:
        """Time offset of the event inside (0, h]: first-order guess, then bracketed secant on RK4 sub-steps."""
        curves = [self.graph.curves[i] for i in cand.curves]
        y0 = {c.id: c.y for c in curves}

        def g(d: float) -> float:
            if d == 0.0:
                return self._event_fn(cand, y0, t)
            return self._event_fn(cand, self._trial(t, d, curves), t + d)

        a, fa = 0.0, g(0.0)
        b, fb = h, g(h)
        if fa >= 0.0:
            return 0.0
        # first-order estimate from the slope at the step start
        eps = 1e-7 * h
        try:
            slope = (g(eps) - fa) / eps
        except ShockError:
            slope = 0.0
        x = -fa / slope if slope > 0.0 else 0.5 * h
        if not 0.0 < x < h:
            x = 0.5 * h
        side = 0
        for _ in range(100):
            try:
                fx = g(x)
            except ShockError:
                fx = 1.0  # treat failures as past the event
            if fx >= 0.0:
                b, fb = x, fx
                if side == 1:
                    fa *= 0.5
                side = 1
            else:
                a, fa = x, fx
                if side == -1:
                    fb *= 0.5
                side = -1
            if abs(fx) <= 1e-15 * max(1.0, abs(cand.x)):
                return x
            if b - a <= 1e-15 * max(1.0, t):
                break
            x = a - fa * (b - a) / (fb - fa) if fb != fa else 0.5 * (a + b)
            if not a < x < b:
                x = 0.5 * (a + b)
        return b

    # -------------------------------------------------------- stepping
    def _step_cap(self, c: ShockCurve, t: float) -> float:
        if c.t_singular is None:
            return math.inf
        return RAMP_FACTOR * max(t - c.t_singular, 0.0) or math.inf

    def _next_schedule(self, t: float, t_final: float) -> float:
        times = [p.t_activate for p in self.pending if p.t_activate > t]
        times += [s for s in self.snapshots if s > t]
        times.append(t_final)
        return min(times)

    def step(self, dt: float, t_final: float) -> None:
        g = self.graph
        t = g.t
        nxt = self._next_schedule(t, t_final)
        h = min(dt, nxt - t)
        if self.phased:
            later = [p.t_activate for p in self.pending if p.t_activate > t]
            if later:
                r = math.fmod(min(later) - t, dt)
                if r > _TIME_EPS * max(1.0, t):
                    h = min(h, r)
        order = self._ordered()
        self._freeze(order)
        for c in order:
            h = min(h, self._step_cap(c, t))
        if nxt - (t + h) < _TIME_EPS * max(1.0, t):
            h = nxt - t
        trial = None
        for _ in range(60):
            try:
                trial = self._trial(t, h, order)
                break
            except (SingularDenominator, DegenerateJump, OverflowError, ZeroDivisionError, ValueError) as e:
                last = e
                h *= 0.5
                if h < 1e-12 * max(1.0, t):
                    break
        if trial is None:
            if self._flip(order, t, dt):
                return
            raise RunAbort(t, f"shock ODE cannot be advanced: {last}")
        cands = self._candidates(t, h, trial, order)
        if cands:
            for cd in cands:
                cd.dt = self._localize(cd, t, h)
            first = min(cd.dt for cd in cands)
            h = first
            now = [cd for cd in cands if cd.dt <= first + 1e-14 * max(1.0, t)]
            now.sort(key=lambda cd: cd.x)
            if h > 0.0:
                trial = self._trial(t, h, order)
            else:
                trial = {c.id: c.y for c in order}
            self._commit(order, trial, t + h)
            for cd in now:
                self._apply_candidate(cd, t + h)
        else:
            self._commit(order, trial, t + h)
        if abs(g.t - nxt) <= _TIME_EPS * max(1.0, nxt):
            g.t = nxt
            self._activate_due(g.t)

    def _freeze(self, order: Sequence[ShockCurve]) -> None:
        self._frozen = {c.id: self.dyn.pieces(c, c.y) for c in order}

    def _commit(self, order: Sequence[ShockCurve], trial: dict[int, tuple], t: float) -> None:
        for c in order:
            if c.status is Status.ACTIVE:
                c.y = trial[c.id]
                smp = self.dyn.sample(c, c.y, t)
                if c.samples and c.samples[-1][0] == t:
                    c.samples[-1] = smp
                else:
                    c.samples.append(smp)
        self.graph.t = t

    def _replace_last(self, c: ShockCurve, t: float) -> None:
        if c.samples and c.samples[-1][0] == t:
            c.samples[-1] = self.dyn.sample(c, c.y, t)

    def _apply_candidate(self, cd: _Candidate, t: float) -> None:
        g = self.graph
        kind = cd.kind
        if kind in ("foot_l", "foot_r"):
            c = g.curves[cd.curves[0]]
            if c.status is not Status.ACTIVE:
                return
            loc = cd.data[0]
            k = 0 if kind == "foot_l" or c.regime is not Regime.KIND1 else 1
            y = list(c.y)
            y[k] = loc  # snap onto the location
            c.y = tuple(y)
            self._replace_last(c, t)
            from_side = "right" if kind == "foot_l" else "left"
            fan = self.fans.get(loc)
            self._cancel_at(loc, from_side, t, c)
            if fan is not None:
                self._enter(c, kind, fan, t)
            return
        if kind in ("exit_r", "exit_l"):
            c = g.curves[cd.curves[0]]
            if c.status is Status.ACTIVE:
                self._exit(c, kind, t)
            return
        a, b = (g.curves[i] for i in cd.curves)
        if a.status is Status.ACTIVE and b.status is Status.ACTIVE:
            self._merge(a, b, t)

    def _enter(self, c: ShockCurve, kind: str, fan: Fan, t: float) -> None:
        if kind == "foot_l":
            if c.regime is Regime.KIND1:
                self._set_regime(c, Regime.KIND2_RIGHT, (c.y[1],), t, fan_l=fan)
            else:  # KIND2_LEFT; the foot arrived from the right of the centre
                xi = fan.center + self.dyn.dG(fan.u_hi) * t
                self._set_regime(c, Regime.KIND3, (xi,), t, fan_l=fan, fan_r=c.fan_r)
        else:
            if c.regime is Regime.KIND1:
                self._set_regime(c, Regime.KIND2_LEFT, (c.y[0],), t, fan_r=fan)
            else:  # KIND2_RIGHT; the foot arrived from the left of the centre
                xi = fan.center + self.dyn.dG(fan.u_lo) * t
                self._set_regime(c, Regime.KIND3, (xi,), t, fan_l=c.fan_l, fan_r=fan)
        self._record(t, EventType.ENTER, (f"C{c.id}", f"F{fan.id}"))

    def _exit(self, c: ShockCurve, kind: str, t: float) -> None:
        if kind == "exit_r":
            fan = c.fan_r
            if c.regime is Regime.KIND2_LEFT:
                self._set_regime(c, Regime.KIND1, (c.y[0], fan.center), t)
            else:
                self._set_regime(c, Regime.KIND2_RIGHT, (fan.center,), t, fan_l=c.fan_l)
            self._cancel_at(fan.center, "left", t, c)
        else:
            fan = c.fan_l
            if c.regime is Regime.KIND2_RIGHT:
                self._set_regime(c, Regime.KIND1, (fan.center, c.y[0]), t)
            else:
                self._set_regime(c, Regime.KIND2_LEFT, (fan.center,), t, fan_r=c.fan_r)
            self._cancel_at(fan.center, "right", t, c)
        self._record(t, EventType.EXIT, (f"C{c.id}", f"F{fan.id}"))

    # -------------------------------------------------------- singular fallback
    def _flip(self, order: Sequence[ShockCurve], t: float, dt: float) -> bool:
        """Integrate a curve with a vanishing foot denominator in the foot coordinate."""
        dyn = self.dyn
        for c in order:
            if c.regime is not Regime.KIND1:
                continue
            fl, _, dl = dyn.foot(c.y[0], True)
            fr, _, dr = dyn.foot(c.y[1], False)
            bl, br = 1.0 + dl * t, 1.0 + dr * t
            if min(abs(bl), abs(br)) >= 1e-6:
                continue
            k = 0 if abs(bl) < abs(br) else 1
            A = asymmetry_factor(self.model, fl, fr)
            y, tt = list(c.y), t
            direction = -1.0 if k == 0 else 1.0
            scale = max(abs(c.y[1] - c.y[0]), 1e-8)
            dx = direction * scale * 1e-3

            def f(x, s):
                yy = list(s[1:])
                yy.insert(k, x)
                d = dyn.rhs(c, tuple(yy), s[0])
                ds = d[k]
                return (1.0 / ds, d[1 - k] / ds)

            for _ in range(FLIP_STEPS):
                x = y[k]
                s = (tt, y[1 - k])
                k1 = _safe(f, x, s)
                k2 = _safe(f, x + dx / 2, tuple(a + dx / 2 * b for a, b in zip(s, k1)))
                k3 = _safe(f, x + dx / 2, tuple(a + dx / 2 * b for a, b in zip(s, k2)))
                k4 = _safe(f, x + dx, tuple(a + dx * b for a, b in zip(s, k3)))
                s = tuple(a + dx / 6 * (p + 2 * q + 2 * r + w) for a, p, q, r, w in zip(s, k1, k2, k3, k4))
                tt = s[0]
                y[k] = x + dx
                y[1 - k] = s[1]
                _, _, d = dyn.foot(y[k], k == 0)
                if abs(1.0 + d * tt) > 1e-6 or tt - t > dt:
                    break
            if not tt > t:
                return False
            # the other curves are carried to the same time by ordinary steps
            others = [o for o in order if o is not c]
            trial = self._trial(t, tt - t, others) if others else {}
            trial[c.id] = tuple(y)
            self._commit(order, trial, tt)
            self._record(tt, EventType.SINGULAR, (f"C{c.id}",), f"A={A!r}")
            return True
        return False

    # -------------------------------------------------------- driver
    def run(self, T: float, dt: float) -> ShockGraph:
        g = self.graph
        g.t_final = T
        if g.t == 0.0 and not g.curves:
            self._activate_due(0.0)
        guard = 0
        limit = int(50 * T / dt) + 100000
        while g.t < T - _TIME_EPS * max(1.0, T):
            self.step(dt, T)
            guard += 1
            if guard > limit:
                raise RunAbort(g.t, "step limit exceeded")
        g.t = T
        for c in g.curves:
            if c.status is Status.ACTIVE and c.samples[-1][0] != T:
                c.samples[-1] = (T,) + c.samples[-1][1:]
        return g


def _safe(f, x, s):
    r = f(x, s)
    if not all(math.isfinite(v) for v in r):
        raise SingularDenominator("non-finite flipped derivative", "?")
    return r


# ------------------------------------------------------------------ public API

def start_graph(profile: PiecewiseProfile, model: FluxModel, **kw) -> ShockGraph:
    """Classified, seeded graph at t = 0 (curves of first-kind points already started)."""
    tr = Tracker(profile, model, **kw)
    tr._activate_due(0.0)
    return tr.graph


def detect_events(graph: ShockGraph, profile: PiecewiseProfile, model: FluxModel, t: float, dt: float) -> list[Event]:
    """Events that one step of length dt from the graph's current state would trigger.

    Nothing is committed; returned events carry their localized times.
    """
    tr = graph.engine
    if tr is None or abs(graph.t - t) > _TIME_EPS * max(1.0, t):
        raise ShockError("graph is not at the requested time")
    order = tr._ordered()
    tr._freeze(order)
    trial = tr._trial(t, dt, order)
    out = []
    names = {"foot_l": None, "foot_r": None, "exit_r": EventType.EXIT, "exit_l": EventType.EXIT,
             "merge_feet": EventType.MERGE, "merge_xi": EventType.MERGE}
    for cd in tr._candidates(t, dt, trial, order):
        d = tr._localize(cd, t, dt)
        typ = names[cd.kind]
        parts = tuple(f"C{i}" for i in cd.curves)
        if typ is None:
            loc = cd.data[0]
            if loc in tr.fans:
                typ = EventType.ENTER
            elif any(p.x_core == loc or (p.segment and loc in (p.segment.a, p.segment.b)) for p in tr.pending):
                typ = EventType.CANCEL
            else:
                continue
        out.append(Event(t + d, typ, parts))
    for p in tr.pending:
        if p.segment is not None and t < p.t_activate <= t + dt:
            out.append(Event(p.t_activate, EventType.STRAIGHT, tuple(f"P{i}" for i in p.point_ids)))
    out.sort(key=lambda e: e.time)
    return out


def advance(graph: ShockGraph, profile: PiecewiseProfile, model: FluxModel, dt: float) -> ShockGraph:
    """One step of at most dt (cut at the earliest event), with events applied."""
    tr = graph.engine
    if tr is None:
        raise ShockError("graph has no tracker; build it with start_graph")
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    tr.step(dt, graph.t + dt)
    return graph


def apply_event(graph: ShockGraph, event: Event) -> ShockGraph:
    """Apply an event produced by :func:`detect_events` at the graph's current time."""
    tr = graph.engine
    t = graph.t
    if abs(event.time - t) > 1e-9 * max(1.0, t):
        raise ConsistencyError(f"event at t={event.time} does not match graph time {t}")
    ids = [int(p[1:]) for p in event.participants if p.startswith("C")]
    curves = [graph.curves[i] for i in ids]
    if any(c.status is not Status.ACTIVE for c in curves):
        raise ConsistencyError("event refers to a curve that is not active")
    if event.type is EventType.MERGE:
        a, b = sorted(curves[:2], key=lambda c: c.samples[-1][3])
        tr._merge(a, b, t, project=True)
    elif event.type is EventType.CANCEL:
        pids = {int(p[1:]) for p in event.participants if p.startswith("P")}
        for p in list(tr.pending):
            if pids & set(p.point_ids) or not pids:
                tr.pending.remove(p)
                graph.cancelled_points.extend(i for i in p.point_ids if i not in graph.cancelled_points)
        graph.events.append(event)
    elif event.type in (EventType.ENTER, EventType.EXIT):
        c = curves[0]
        if event.type is EventType.EXIT:
            left_fan = c.fan_l is not None and (c.fan_r is None or "exit_l" in event.detail)
            tr._exit(c, "exit_l" if left_fan else "exit_r", t)
        else:
            # the foot sitting on a fan centre enters it
            anchors = tr._anchors(c)
            for k, (kind, v) in enumerate(anchors):
                if kind == "foot" and v in tr.fans:
                    tr._enter(c, "foot_l" if k == 0 else "foot_r", tr.fans[v], t)
                    break
            else:
                raise ConsistencyError("no foot of the curve sits on a fan centre")
    elif event.type is EventType.STRAIGHT:
        tr._activate_due(t)
    else:
        raise ConsistencyError(f"{event.type.value} cannot be applied directly")
    return graph


def evolve(
    profile: PiecewiseProfile,
    model: FluxModel,
    T: float,
    dt: float,
    *,
    delta: float | None = None,
    phased_step: bool = False,
    snapshots: Sequence[float] = (),
) -> ShockGraph:
    """All shock curves of the profile on [0, T]."""
    if not T > 0.0 or not dt > 0.0:
        raise ValueError("T and dt must be positive")
    tr = Tracker(profile, model, delta=delta, phased_step=phased_step, snapshots=snapshots)
    return tr.run(T, dt)


# ------------------------------------------------------------------ export

def curves_csv(graph: ShockGraph) -> str:
    out = io.StringIO()
    out.write("curve_id,regime,t,x_l,x_r,xi\n")
    for c in graph.curves:
        for s in c.samples:
            reg = c.regime_at(s[0])
            out.write(f"{c.id},{reg.value},{s[0]!r},{s[1]!r},{s[2]!r},{s[3]!r}\n")
    return out.getvalue()


def events_csv(graph: ShockGraph) -> str:
    out = io.StringIO()
    out.write("time,type,participants\n")
    for e in graph.events:
        out.write(f"{e.time!r},{e.type.value},{';'.join(e.participants)}\n")
    return out.getvalue()
