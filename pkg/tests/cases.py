"""Shared, cached runs used by several test modules."""
from __future__ import annotations

import functools
import time

from charsweep.cli import load_scenario
from charsweep.flux import FluxModel
from charsweep.profile import parse_profile
from charsweep.shockdyn import evolve
from charsweep.sweep import sweep_solution
from charsweep.validate import reference_solve

BURGERS = FluxModel.burgers()
QUARTIC = FluxModel.quartic()

EXAMPLES = ["example1", "example2", "example3", "example4", "example5"]


@functools.lru_cache(maxsize=None)
def scenario(name: str):
    return load_scenario(name)


@functools.lru_cache(maxsize=None)
def profile(text: str, lo: float = -5.0, hi: float = 5.0):
    return parse_profile(text, (lo, hi))


@functools.lru_cache(maxsize=None)
def tracked(name: str, dt: float | None = None, T: float | None = None, snapshots: tuple = ()):
    sc = scenario(name)
    t0 = time.perf_counter()
    g = evolve(sc.profile, sc.model, T or sc.T, dt or sc.dt, snapshots=snapshots)
    return g, time.perf_counter() - t0


@functools.lru_cache(maxsize=None)
def swept(name: str, dX: float | None = None, dt: float | None = None):
    sc = scenario(name)
    g, _ = tracked(name, dt)
    return sweep_solution(sc.profile, sc.model, g, sc.T, dX or sc.dX, window=sc.domain)


@functools.lru_cache(maxsize=None)
def reference(name: str, m: int, T: float | None = None, snapshots: tuple = ()):
    sc = scenario(name)
    return reference_solve(sc.profile, sc.model, T or sc.T, m, domain=sc.domain, snapshots=snapshots)
