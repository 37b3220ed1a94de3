"""Characteristic sweeping for scalar conservation laws u_t + G(u)_x = 0.

Piecewise-smooth initial data are classified into shock origins, fans and
focusing segments; every shock curve is integrated as a small ODE system on
the initial line; the solution at a time T is then swept from the surviving
characteristics.  A first-order finite-volume solver is included as an
independent reference.
"""
from .classify import CriticalPoint, PointKind, Regime, classify_points, negative_root, seed_shock
from .flux import FluxModel, flux_from_spec
from .profile import PiecewiseProfile, Side, parse_profile
from .shockdyn import ShockCurve, ShockGraph, evolve
from .sweep import SolutionSlice, sweep_solution
from .validate import compare, reference_solve

__version__ = "0.1.0"

__all__ = [
    "CriticalPoint",
    "FluxModel",
    "PiecewiseProfile",
    "PointKind",
    "Regime",
    "ShockCurve",
    "ShockGraph",
    "Side",
    "SolutionSlice",
    "classify_points",
    "compare",
    "evolve",
    "flux_from_spec",
    "negative_root",
    "parse_profile",
    "reference_solve",
    "seed_shock",
    "sweep_solution",
]
