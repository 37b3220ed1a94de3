"""Backend selection for the reference solver's time loop.

The compiled kernel is used when it was built; otherwise, or when
CHARSWEEP_PURE_PYTHON is set to a non-empty value other than "0", the numpy
implementation below is used.  Both give the same result up to rounding.
"""
from __future__ import annotations

import os

import numpy as np


def _horner(c: np.ndarray, u: np.ndarray) -> np.ndarray:
    acc = np.zeros_like(u)
    for a in c[::-1]:
        acc = acc * u + a
    return acc


def llf_run_numpy(u0, coeffs, dcoeffs, dx: float, t0: float, t_end: float, cfl: float, threads: int = 1):
    """Numpy version of the compiled loop; same signature and return value."""
    u = np.array(u0, dtype=float, copy=True)
    coeffs = np.asarray(coeffs, dtype=float)
    dcoeffs = np.asarray(dcoeffs, dtype=float)
    m = u.shape[0]
    F = np.empty(m + 1)
    t = t0
    steps = 0
    outflow = 0.0
    while t < t_end:
        g = _horner(coeffs, u)
        s = np.abs(_horner(dcoeffs, u))
        amax = float(s.max())
        dt = cfl * dx / amax if amax > 0.0 else t_end - t
        if t + dt >= t_end:
            dt = t_end - t
        a = np.maximum(s[:-1], s[1:])
        F[1:m] = 0.5 * (g[:-1] + g[1:]) - 0.5 * a * (u[1:] - u[:-1])
        F[0] = g[0]
        F[m] = g[m - 1]
        u -= (dt / dx) * (F[1:] - F[:-1])
        outflow += dt * (F[m] - F[0])
        t += dt
        steps += 1
    return u, steps, outflow


def _force_pure() -> bool:
    v = os.environ.get("CHARSWEEP_PURE_PYTHON", "")
    return v not in ("", "0")


try:
    from ._llf import llf_run as llf_run_compiled
except ImportError:  # extension not built
    llf_run_compiled = None

BACKENDS = {"numpy": llf_run_numpy}
if llf_run_compiled is not None:
    BACKENDS["compiled"] = llf_run_compiled

BACKEND = "numpy" if _force_pure() or llf_run_compiled is None else "compiled"
llf_run = BACKENDS[BACKEND]


def threads() -> int:
    """Thread cap for the compiled loop, from CHARSWEEP_THREADS (default 1)."""
    try:
        n = int(os.environ.get("CHARSWEEP_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)
