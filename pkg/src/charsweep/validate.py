"""Independent checks: Burgers invariants and a first-order finite-volume reference.

The reference is a local Lax-Friedrichs scheme with CFL 0.45 and zero-gradient
ghost cells.  It converges to the entropy solution, which is all it has to do
here; speed and sharpness are secondary.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .flux import FluxModel
from .profile import PiecewiseProfile, sample_profile

CFL = 0.45
SIMPSON_TOL = 1e-10
SHOCK_CONTRAST = 3.0
_GAUSS3 = np.polynomial.legendre.leggauss(3)


class ValidationError(ValueError):
    pass


# ------------------------------------------------------------------ quadrature

def adaptive_simpson(g: Callable[[float], float], a: float, b: float, tol: float = SIMPSON_TOL, max_depth: int = 50) -> float:
    """Adaptive Simpson quadrature of a smooth scalar function on [a, b]."""
    if a == b:
        return 0.0
    fa, fm, fb = g(a), g(0.5 * (a + b)), g(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    # explicit stack keeps deep refinements off the Python call stack
    total = 0.0
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        lo, hi, flo, fmid, fhi, s, eps, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = g(lm), g(rm)
        left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid)
        right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi)
        diff = left + right - s
        if depth >= max_depth or abs(diff) <= 15.0 * eps:
            total += left + right + diff / 15.0
        else:
            stack.append((lo, mid, flo, flm, fmid, left, 0.5 * eps, depth + 1))
            stack.append((mid, hi, fmid, frm, fhi, right, 0.5 * eps, depth + 1))
    return total


def burgers_kind1_invariant(profile: PiecewiseProfile, x_l: float, x_r: float) -> float:
    """(x_r - x_l)(f(x_l) + f(x_r)) - 2 * integral of f over [x_l, x_r].

    Feet use the one-sided limits a left and a right foot see.
    """
    if x_l == x_r:
        return 0.0
    if x_r < x_l:
        raise ValidationError("need x_l <= x_r")
    fl = profile.f_and_slope(x_l, "left")[0]
    fr = profile.f_and_slope(x_r, "right")[0]
    return (x_r - x_l) * (fl + fr) - 2.0 * profile.integral(x_l, x_r)


def burgers_kind1_scale(profile: PiecewiseProfile, x_l: float, x_r: float) -> float:
    """Magnitude of the terms of the kind-1 invariant, for relative drift."""
    fl = profile.f_and_slope(x_l, "left")[0]
    fr = profile.f_and_slope(x_r, "right")[0]
    return (x_r - x_l) * (abs(fl) + abs(fr)) + 2.0 * _abs_integral(profile, x_l, x_r)


def _abs_integral(profile: PiecewiseProfile, a: float, b: float) -> float:
    from . import expr as ex

    cuts = [a] + [c for c in profile.breakpoints if a < c < b] + [b]
    total = 0.0
    for lo, hi in zip(cuts, cuts[1:]):
        g = ex.compile_scalar(profile.f_expr(profile.piece_index(0.5 * (lo + hi))))
        total += adaptive_simpson(lambda x: abs(g(x)), lo, hi, SIMPSON_TOL)
    return total


def _moment(profile: PiecewiseProfile, c: float, x: float) -> float:
    """integral_c^x (c - s) f'(s) ds."""
    from . import expr as ex

    if x == c:
        return 0.0
    lo, hi = (x, c) if x < c else (c, x)
    cuts = [lo] + [q for q in profile.breakpoints if lo < q < hi] + [hi]
    total = 0.0
    for a, b in zip(cuts, cuts[1:]):
        i = profile.piece_index(0.5 * (a + b))
        fp = ex.compile_scalar(profile.f_expr(i, 1))
        total += adaptive_simpson(lambda s: (c - s) * fp(s), a, b, SIMPSON_TOL)
    return total if x > c else -total


def burgers_kind2_constant(profile: PiecewiseProfile, x_foot: float, fan_center: float, t: float) -> float:
    """C in t * (2 * integral_{c}^{x}(c - s) f'(s) ds + C) = (x - c)^2."""
    return (x_foot - fan_center) ** 2 / t - 2.0 * _moment(profile, fan_center, x_foot)


# ------------------------------------------------------------------ reference solver

@dataclass
class GridSolution:
    x: np.ndarray  # cell centres
    u: np.ndarray
    T: float
    x_min: float
    x_max: float
    dx: float
    dt_used: float  # mean step
    cfl: float
    steps: int = 0
    mass0: float = 0.0
    outflow: float = 0.0  # time-integrated boundary flux
    seconds: float = 0.0
    backend: str = ""
    snapshots: dict[float, np.ndarray] = field(default_factory=dict, repr=False)
    u0: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def m(self) -> int:
        return len(self.u)

    @property
    def edges(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.m + 1)

    def mass_drift(self, u: np.ndarray | None = None) -> float:
        u = self.u if u is None else u
        return float(np.sum(u) * self.dx - self.mass0 + self.outflow)


def cell_averages_of(profile: PiecewiseProfile, edges: np.ndarray) -> np.ndarray:
    """Three-point Gauss averages of f per cell, split at breakpoints."""
    edges = np.asarray(edges, dtype=float)
    nodes, weights = _GAUSS3
    a, b = edges[:-1], edges[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    pts = mid[:, None] + half[:, None] * nodes[None, :]
    out = (sample_profile(profile, pts.ravel()).reshape(pts.shape) * weights).sum(axis=1) * 0.5
    bp = np.asarray(profile.breakpoints)
    for c in bp:
        j = int(np.searchsorted(edges, c, side="right")) - 1
        if 0 <= j < len(a) and a[j] < c < b[j]:
            acc = 0.0
            for lo, hi in ((a[j], c), (c, b[j])):
                m2, h2 = 0.5 * (lo + hi), 0.5 * (hi - lo)
                acc += float(np.dot(sample_profile(profile, m2 + h2 * nodes), weights)) * h2
            out[j] = acc / (b[j] - a[j])
    return out


def reference_solve(
    profile: PiecewiseProfile,
    model: FluxModel,
    T: float,
    m: int,
    *,
    domain: tuple[float, float] | None = None,
    snapshots: Sequence[float] = (),
    backend: str | None = None,
) -> GridSolution:
    """First-order local Lax-Friedrichs solution at T on ``m`` uniform cells."""
    if m < 100:
        raise ValidationError("m must be at least 100")
    if not T > 0.0:
        raise ValidationError("T must be positive")
    x0, x1 = domain if domain is not None else profile.domain_hint
    dx = (x1 - x0) / m
    edges = x0 + dx * np.arange(m + 1)
    u = cell_averages_of(profile, edges)
    if not np.all(np.isfinite(u)):
        raise ValidationError("initial data is not finite on the reference grid")
    run = kernels.BACKENDS[backend] if backend else kernels.llf_run
    name = backend or kernels.BACKEND
    c = np.ascontiguousarray(model.coeffs, dtype=float)
    dc = np.ascontiguousarray(model.derivative_coeffs(1), dtype=float)
    mass0 = float(np.sum(u) * dx)
    u_init = u.copy()
    stops = sorted({float(s) for s in snapshots if 0.0 < s < T} | {float(T)})
    t = 0.0
    steps = 0
    outflow = 0.0
    snaps = {}
    start = time.perf_counter()
    for ts in stops:
        u, n, out = run(u, c, dc, dx, t, ts, CFL, kernels.threads())
        u = np.asarray(u)
        steps += int(n)
        outflow += float(out)
        t = ts
        snaps[ts] = u.copy()
    elapsed = time.perf_counter() - start
    return GridSolution(
        x=0.5 * (edges[:-1] + edges[1:]), u=u, T=T, x_min=x0, x_max=x1, dx=dx,
        dt_used=T / max(steps, 1), cfl=CFL, steps=steps, mass0=mass0, outflow=outflow,
        seconds=elapsed, backend=name, snapshots=snaps, u0=u_init,
    )


def total_variation(u: np.ndarray) -> float:
    return float(np.sum(np.abs(np.diff(u))))


def restrict(u_fine: np.ndarray, factor: int) -> np.ndarray:
    """Average consecutive groups of ``factor`` cells."""
    n = len(u_fine) // factor
    return u_fine[: n * factor].reshape(n, factor).mean(axis=1)


def self_convergence_error(coarse: GridSolution, fine: GridSolution) -> float:
    """L1 distance between a run and a finer run restricted to the coarse cells."""
    factor = fine.m // coarse.m
    if factor * coarse.m != fine.m:
        raise ValidationError("fine grid must refine the coarse one by an integer factor")
    return float(np.sum(np.abs(coarse.u - restrict(fine.u, factor))) * coarse.dx)


# ------------------------------------------------------------------ comparison

@dataclass
class ErrorReport:
    l1: float
    linf_off_shock: float
    shock_errors: list[Optional[float]]
    shock_cells: list[Optional[float]]  # the same errors in units of dx
    reference_shocks: list[Optional[float]]
    tracking_seconds: float = 0.0
    reference_seconds: float = 0.0
    mismatches: list[str] = field(default_factory=list)

    def lines(self) -> list[str]:
        out = [f"l1_error = {self.l1!r}", f"linf_off_shock = {self.linf_off_shock!r}"]
        for k, (e, c, r) in enumerate(zip(self.shock_errors, self.shock_cells, self.reference_shocks)):
            out.append(f"shock[{k}] reference_X = {r!r} error = {e!r} cells = {c!r}")
        out.extend(f"mismatch: {msg}" for msg in self.mismatches)
        return out


def locate_reference_shock(grid: GridSolution, X: float, halfwidth: int = 40, u: np.ndarray | None = None) -> Optional[float]:
    """Interface of the largest jump near X, if it stands out from its surroundings."""
    u = grid.u if u is None else u
    du = np.abs(np.diff(u))
    j0 = int(round((X - grid.x_min) / grid.dx))
    lo, hi = max(j0 - halfwidth, 0), min(j0 + halfwidth, len(du))
    if hi <= lo:
        return None
    j = lo + int(np.argmax(du[lo:hi]))
    ring = np.concatenate([du[max(j - 3 * halfwidth, 0): max(j - 3, 0)], du[j + 4: j + 3 * halfwidth]])
    base = float(np.median(ring)) if ring.size else 0.0
    if du[j] <= SHOCK_CONTRAST * base or du[j] == 0.0:
        return None
    # interface between cells j and j + 1
    return float(grid.x_min + (j + 1) * grid.dx)


def compare(slice_, grid: GridSolution, *, exclude_cells: int = 20, tracking_seconds: float = 0.0) -> ErrorReport:
    """Slice versus reference: L1 through exact cell averages, off-shock Linf, shock positions."""
    lo = max(slice_.window[0], grid.x_min)
    hi = min(slice_.window[1], grid.x_max)
    edges = grid.edges
    inside = (edges[:-1] >= lo - 1e-12) & (edges[1:] <= hi + 1e-12)
    idx = np.nonzero(inside)[0]
    if idx.size == 0:
        raise ValidationError("slice and reference do not overlap")
    avg = slice_.cell_averages(edges[idx[0]: idx[-1] + 2])
    diff = np.abs(avg - grid.u[idx])
    l1 = float(np.sum(diff) * grid.dx)
    near = np.zeros(idx.size, dtype=bool)
    centres = grid.x[idx]
    for d in slice_.discontinuities:
        near |= np.abs(centres - d.X) <= exclude_cells * grid.dx
    linf = float(np.max(diff[~near])) if (~near).any() else 0.0
    errs, cells, refs, bad = [], [], [], []
    for d in slice_.discontinuities:
        if not lo <= d.X <= hi:
            errs.append(None)
            cells.append(None)
            refs.append(None)
            continue
        r = locate_reference_shock(grid, d.X)
        refs.append(r)
        if r is None:
            errs.append(None)
            cells.append(None)
            bad.append(f"no reference discontinuity near X = {d.X!r}")
        else:
            errs.append(abs(d.X - r))
            cells.append(abs(d.X - r) / grid.dx)
    return ErrorReport(l1, linf, errs, cells, refs, tracking_seconds, grid.seconds, bad)
