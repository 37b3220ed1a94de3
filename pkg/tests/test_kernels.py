import numpy as np
import pytest

from charsweep import kernels
from charsweep.validate import reference_solve

from cases import BURGERS as B, QUARTIC as Q, profile

needs_compiled = pytest.mark.skipif("compiled" not in kernels.BACKENDS, reason="extension not built")


def _data(m=500):
    x = np.linspace(-2, 2, m)
    return np.exp(-x * x) + 0.3 * np.sin(3 * x)


@needs_compiled
@pytest.mark.parametrize("model", [B, Q])
def test_backends_agree(model):
    u0 = _data()
    c = np.array(model.coeffs)
    dc = np.array(model.derivative_coeffs(1))
    a = kernels.BACKENDS["numpy"](u0, c, dc, 4 / 500, 0.0, 1.0, 0.45)
    b = kernels.BACKENDS["compiled"](u0, c, dc, 4 / 500, 0.0, 1.0, 0.45)
    assert a[1] == b[1]
    assert np.max(np.abs(a[0] - np.asarray(b[0]))) < 1e-13
    assert a[2] == pytest.approx(b[2], abs=1e-13)


@needs_compiled
def test_general_polynomial_path():
    # more than five coefficients takes the generic loop
    u0 = _data()
    c = np.array([0.0, 0.1, 0.5, 0.0, 0.0, 0.01])
    dc = np.array([0.1, 1.0, 0.0, 0.0, 0.05])
    a = kernels.BACKENDS["numpy"](u0, c, dc, 0.01, 0.0, 0.5, 0.45)
    b = kernels.BACKENDS["compiled"](u0, c, dc, 0.01, 0.0, 0.5, 0.45)
    assert np.max(np.abs(a[0] - np.asarray(b[0]))) < 1e-13


@needs_compiled
@pytest.mark.parametrize("threads", [2, 4])
def test_threaded_run_is_deterministic(threads):
    u0 = _data(2000)
    c = np.array(B.coeffs)
    dc = np.array(B.derivative_coeffs(1))
    one = kernels.BACKENDS["compiled"](u0, c, dc, 0.002, 0.0, 0.5, 0.45, 1)
    many = kernels.BACKENDS["compiled"](u0, c, dc, 0.002, 0.0, 0.5, 0.45, threads)
    again = kernels.BACKENDS["compiled"](u0, c, dc, 0.002, 0.0, 0.5, 0.45, threads)
    assert np.array_equal(np.asarray(many[0]), np.asarray(again[0]))
    assert np.max(np.abs(np.asarray(one[0]) - np.asarray(many[0]))) < 1e-13


def test_reference_solve_backend_choice():
    p = profile("exp(-x^2)", -3, 6)
    a = reference_solve(p, B, 2.0, 400, backend="numpy")
    assert a.backend == "numpy"
    b = reference_solve(p, B, 2.0, 400)
    assert b.backend == kernels.BACKEND
    assert np.max(np.abs(a.u - b.u)) < 1e-13


def test_threads_env(monkeypatch):
    monkeypatch.setenv("CHARSWEEP_THREADS", "3")
    assert kernels.threads() == 3
    monkeypatch.setenv("CHARSWEEP_THREADS", "zero")
    assert kernels.threads() == 1


def test_pure_python_switch(monkeypatch):
    monkeypatch.setenv("CHARSWEEP_PURE_PYTHON", "1")
    assert kernels._force_pure()
    monkeypatch.setenv("CHARSWEEP_PURE_PYTHON", "0")
    assert not kernels._force_pure()
