# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled local Lax-Friedrichs time loop for polynomial fluxes."""
import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport fabs

cnp.import_array()


cdef inline double _horner(const double* c, int n, double u) noexcept nogil:
    cdef double acc = 0.0
    cdef int i
    for i in range(n - 1, -1, -1):
        acc = acc * u + c[i]
    return acc


cdef double _step_serial(double* u, double* g, double* s, Py_ssize_t m, const double* c, int nc,
                         const double* d, int nd, double dx, double cfl, double t, double t_end,
                         double* dt_out) noexcept nogil:
    """One step, fused into two sweeps; returns the boundary outflow of the step."""
    cdef Py_ssize_t i
    cdef double amax = 0.0, dt, r, a, fl, fr, v, sv
    cdef double c0, c1, c2, c3, c4, d0, d1, d2, d3
    if nc <= 5:
        # fixed quartic form: no inner loop for the common fluxes
        c0 = c[0] if nc > 0 else 0.0
        c1 = c[1] if nc > 1 else 0.0
        c2 = c[2] if nc > 2 else 0.0
        c3 = c[3] if nc > 3 else 0.0
        c4 = c[4] if nc > 4 else 0.0
        d0 = d[0] if nd > 0 else 0.0
        d1 = d[1] if nd > 1 else 0.0
        d2 = d[2] if nd > 2 else 0.0
        d3 = d[3] if nd > 3 else 0.0
        for i in range(m):
            v = u[i]
            g[i] = (((c4 * v + c3) * v + c2) * v + c1) * v + c0
            sv = fabs(((d3 * v + d2) * v + d1) * v + d0)
            s[i] = sv
            if sv > amax:
                amax = sv
    else:
        for i in range(m):
            g[i] = _horner(c, nc, u[i])
            s[i] = fabs(_horner(d, nd, u[i]))
            if s[i] > amax:
                amax = s[i]
    dt = cfl * dx / amax if amax > 0.0 else t_end - t
    if t + dt >= t_end:
        dt = t_end - t
    r = dt / dx
    fl = g[0]  # zero-gradient ghost on the left
    for i in range(m - 1):
        a = s[i] if s[i] > s[i + 1] else s[i + 1]
        fr = 0.5 * (g[i] + g[i + 1]) - 0.5 * a * (u[i + 1] - u[i])
        u[i] = u[i] - r * (fr - fl)
        fl = fr
    u[m - 1] = u[m - 1] - r * (g[m - 1] - fl)
    dt_out[0] = dt
    return dt * (g[m - 1] - g[0])


def llf_run(double[::1] u0, double[::1] coeffs, double[::1] dcoeffs, double dx,
            double t0, double t_end, double cfl, int threads=1):
    """Advance cell averages from t0 to t_end.

    Returns (u, steps, boundary_outflow) where boundary_outflow is the time
    integral of the flux leaving through both ends.
    """
    cdef Py_ssize_t m = u0.shape[0]
    cdef int nc = coeffs.shape[0], nd = dcoeffs.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ua = np.array(u0, dtype=np.float64, copy=True)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] fa = np.empty(m + 1, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ga = np.empty(m, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sa = np.empty(m, dtype=np.float64)
    cdef double* u = <double*> ua.data
    cdef double* F = <double*> fa.data
    cdef double* g = <double*> ga.data
    cdef double* s = <double*> sa.data
    cdef const double* c = &coeffs[0]
    cdef const double* d = &dcoeffs[0]
    cdef double t = t0, dt = 0.0, amax, a, r
    cdef double outflow = 0.0
    cdef Py_ssize_t i
    cdef long steps = 0
    if threads < 1:
        threads = 1
    with nogil:
        if threads == 1:
            while t < t_end:
                outflow += _step_serial(u, g, s, m, c, nc, d, nd, dx, cfl, t, t_end, &dt)
                t += dt
                steps += 1
        else:
            while t < t_end:
                for i in prange(m, num_threads=threads, schedule="static"):
                    g[i] = _horner(c, nc, u[i])
                    s[i] = fabs(_horner(d, nd, u[i]))
                # max is order independent, so this stays deterministic
                amax = 0.0
                for i in range(m):
                    if s[i] > amax:
                        amax = s[i]
                dt = cfl * dx / amax if amax > 0.0 else t_end - t
                if t + dt >= t_end:
                    dt = t_end - t
                for i in prange(1, m, num_threads=threads, schedule="static"):
                    a = s[i - 1] if s[i - 1] > s[i] else s[i]
                    F[i] = 0.5 * (g[i - 1] + g[i]) - 0.5 * a * (u[i] - u[i - 1])
                F[0] = g[0]
                F[m] = g[m - 1]
                r = dt / dx
                for i in prange(m, num_threads=threads, schedule="static"):
                    u[i] = u[i] - r * (F[i + 1] - F[i])
                outflow += dt * (F[m] - F[0])
                t += dt
                steps += 1
    return ua, steps, outflow
