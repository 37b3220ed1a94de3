import math

import numpy as np
import pytest

from charsweep.shockdyn import evolve
from charsweep.sweep import sweep_solution
from charsweep.validate import (
    ValidationError,
    adaptive_simpson,
    burgers_kind1_invariant,
    burgers_kind2_constant,
    cell_averages_of,
    compare,
    locate_reference_shock,
    reference_solve,
    restrict,
    self_convergence_error,
    total_variation,
)

from cases import BURGERS as B, profile, reference, scenario

RIEMANN = "x < 0: 1 ; x >= 0: 0"
RARE = "x < 0: 0 ; x >= 0: 1"
LOGISTIC = "exp(x)/(1 + exp(x))"


@pytest.mark.parametrize(
    "g,a,b,exact",
    [
        (math.sin, 0.0, math.pi, 2.0),
        (lambda x: math.exp(-x * x), -6.0, 6.0, math.sqrt(math.pi)),
        (lambda x: x**5, -1.0, 2.0, (64 - 1) / 6),
        (lambda x: 1.0, 3.0, 3.0, 0.0),
    ],
)
def test_adaptive_simpson(g, a, b, exact):
    assert adaptive_simpson(g, a, b, 1e-12) == pytest.approx(exact, abs=1e-10)


def test_cell_averages_split_at_breakpoints():
    p = profile(RIEMANN, -1, 1)
    avg = cell_averages_of(p, np.array([-1.0, -0.25, 0.25, 1.0]))
    assert np.allclose(avg, [1.0, 0.5, 0.0], atol=1e-15)


def test_riemann_shock_reference():
    g = reference_solve(profile(RIEMANN), B, 2.0, 400, domain=(-1, 3))
    j = int(np.argmax(np.abs(np.diff(g.u))))
    assert g.x[j] < 1.0 < g.x[j + 1]
    assert g.u[0] == pytest.approx(1.0, abs=1e-15) and g.u[-1] == 0.0
    assert abs(g.mass_drift()) < 1e-12


def test_riemann_rarefaction_reference():
    g = reference_solve(profile(RARE), B, 2.0, 400, domain=(-2, 4))
    assert np.all(np.diff(g.u) >= -1e-14)
    exact = np.clip(g.x / 2.0, 0.0, 1.0)
    assert np.sum(np.abs(g.u - exact)) * g.dx < 10 * g.dx


def test_example5_reference_has_one_late_shock():
    grid = reference("example5", 4000)
    du = np.abs(np.diff(grid.u))
    big = np.nonzero(du > 0.2 * du.max())[0]
    # one cluster of steep interfaces
    assert big.max() - big.min() <= 5
    assert locate_reference_shock(grid, grid.x_min + (big[0] + 1) * grid.dx) is not None


def test_reference_mass_balance():
    sc = scenario("example2")
    grid = reference("example2", 4000)
    assert abs(grid.mass_drift()) < 1e-10 * max(1.0, abs(grid.mass0))


def test_reference_total_variation_does_not_grow():
    grid = reference("example1", 4000)
    assert total_variation(grid.u) <= total_variation(grid.u0) + 1e-12


def test_reference_rejects_tiny_grids():
    with pytest.raises(ValidationError):
        reference_solve(profile(RIEMANN), B, 1.0, 10)


def test_restrict_and_self_convergence():
    assert np.array_equal(restrict(np.arange(8.0), 4), [1.5, 5.5])
    coarse = reference_solve(profile(RIEMANN), B, 1.0, 200, domain=(-1, 2))
    fine = reference_solve(profile(RIEMANN), B, 1.0, 800, domain=(-1, 2))
    assert self_convergence_error(coarse, fine) > 0.0
    mid = reference_solve(profile(RIEMANN), B, 1.0, 300, domain=(-1, 2))
    with pytest.raises(ValidationError):
        self_convergence_error(mid, fine)


# ------------------------------------------------------------------ Burgers invariants

@pytest.mark.parametrize("t", [0.5, 1.0, 4.0])
def test_kind1_invariant_riemann(t):
    assert burgers_kind1_invariant(profile(RIEMANN), -t / 2, t / 2) == pytest.approx(0.0, abs=1e-13)


def test_kind1_invariant_empty_interval():
    assert burgers_kind1_invariant(profile("exp(-x^2)"), 0.3, 0.3) == 0.0


def test_kind2_constant_of_a_constant_piece():
    # f' = 0 on the left piece: C = (x - c)^2 / t
    p = profile("x < 0: 0 ; x >= 0: 1")
    assert burgers_kind2_constant(p, -1.0, 0.0, 2.0) == pytest.approx(0.5)


# ------------------------------------------------------------------ compare

def test_compare_riemann_shock_location():
    p = profile(RIEMANN, -2, 2)
    g = evolve(p, B, 2.0, 0.1)
    sl = sweep_solution(p, B, g, 2.0, 0.001)
    grid = reference_solve(p, B, 2.0, 4000)
    rep = compare(sl, grid)
    assert rep.shock_errors[0] <= 2 * grid.dx
    assert not rep.mismatches
    assert any(line.startswith("l1_error") for line in rep.lines())


def test_compare_smooth_first_order_decay():
    p = profile(LOGISTIC, -6, 6)
    g = evolve(p, B, 2.0, 0.1)
    assert g.curves == []
    sl = sweep_solution(p, B, g, 2.0, 0.01)
    ms = [400, 800, 1600]
    errs = [compare(sl, reference_solve(p, B, 2.0, m)).l1 for m in ms]
    dxs = [12.0 / m for m in ms]
    C = np.polyfit(np.log(dxs), np.log(errs), 1)[0]
    assert C == pytest.approx(1.0, abs=0.15)
    assert all(e2 < e1 for e1, e2 in zip(errs, errs[1:]))


def test_compare_reports_missing_reference_shock():
    # a slice with a marker where the reference is smooth
    p = profile(RIEMANN, -2, 2)
    g = evolve(p, B, 2.0, 0.1)
    sl = sweep_solution(p, B, g, 2.0, 0.01)
    smooth = reference_solve(profile(LOGISTIC, -2, 2), B, 2.0, 400)
    rep = compare(sl, smooth)
    assert rep.shock_errors == [None] and rep.mismatches
