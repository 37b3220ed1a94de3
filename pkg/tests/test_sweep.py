import math

import numpy as np
import pytest

from charsweep.classify import Segment
from charsweep.shockdyn import evolve
from charsweep.sweep import (
    FocusedSegment,
    MissingGraph,
    OutOfFan,
    Provenance,
    multivalue_surface,
    rarefaction_value,
    straight_line_value,
    sweep_solution,
)
from charsweep.validate import self_convergence_error, compare

from cases import BURGERS as B, QUARTIC as Q, profile, reference, scenario, swept, tracked

RIEMANN = "x < 0: 1 ; x >= 0: 0"
RARE = "x < 0: 0 ; x >= 0: 1"
HAT = "x < -1: 1 ; -1 <= x < 1: -x ; x >= 1: -1"


def test_rarefaction_value():
    assert rarefaction_value(B, profile(RARE), 0.0, 0.5, 1.0) == pytest.approx(0.5)
    quartic_fan = profile("x < 0: 0 ; x >= 0: 2")
    assert rarefaction_value(Q, quartic_fan, 0.0, 1.0 / 3.0, 1.0) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(OutOfFan):
        rarefaction_value(B, profile(RARE), 0.0, 5.0, 1.0)


def test_straight_line_value():
    seg = (-1.0, 1.0, -1.0, 0.0)
    p = profile(HAT)
    assert straight_line_value(p, B, seg, 0.25, 0.5) == pytest.approx(-0.5)
    assert straight_line_value(p, B, Segment(*seg), 0.3, 0.0) == pytest.approx(-0.3)
    with pytest.raises(FocusedSegment):
        straight_line_value(p, B, seg, 0.0, 1.0)


def test_multivalue_identity_at_zero():
    p = profile("exp(-x^2)")
    feet = np.linspace(-2, 2, 9).tolist()
    for (X, u), x0 in zip(multivalue_surface(p, B, 0.0, feet), feet):
        assert X == x0 and u == pytest.approx(math.exp(-x0 * x0))


def test_multivalue_riemann_flat_branches():
    pts = multivalue_surface(profile(RIEMANN), B, 2.0, [-1.0, -0.5, 0.5, 1.0])
    assert pts == [(1.0, 1.0), (1.5, 1.0), (0.5, 0.0), (1.0, 0.0)]


def test_multivalue_gaussian_folds_after_break():
    tb = math.sqrt(math.e / 2)
    feet = np.linspace(-3, 3, 601).tolist()
    X = np.array([x for x, _ in multivalue_surface(profile("exp(-x^2)"), B, 2 * tb, feet)])
    assert np.any(np.diff(X) < 0)
    X0 = np.array([x for x, _ in multivalue_surface(profile("exp(-x^2)"), B, 0.5 * tb, feet)])
    assert np.all(np.diff(X0) > 0)


def test_riemann_shock_slice():
    p = profile(RIEMANN, -2, 4)
    g = evolve(p, B, 2.0, 0.1)
    sl = sweep_solution(p, B, g, 2.0, 0.01)
    assert np.all(sl.u[sl.X < 1.0 - 1e-9] == 1.0)
    assert np.all(sl.u[sl.X > 1.0 + 1e-9] == 0.0)
    (d,) = sl.discontinuities
    assert d.X == pytest.approx(1.0, abs=1e-12)
    assert (d.u_left, d.u_right) == (1.0, 0.0)


def test_riemann_rarefaction_slice():
    p = profile(RARE, -2, 4)
    g = evolve(p, B, 2.0, 0.1)
    sl = sweep_solution(p, B, g, 2.0, 0.01)
    inside = (sl.X > 0) & (sl.X < 2)
    assert np.allclose(sl.u[inside], sl.X[inside] / 2, atol=1e-14)
    assert np.all(sl.u[sl.X <= 0] == 0.0) and np.all(sl.u[sl.X >= 2] == 1.0)
    names = sl.provenance_names()
    assert names[int(np.argmax(inside))] == Provenance.RAREFACTION.value
    assert sl.discontinuities == []


def test_hat_slice_before_and_after_focus():
    p = profile(HAT)
    g = evolve(p, B, 3.0, 0.01)
    early = sweep_solution(p, B, g, 0.5, 0.01)
    mid = (early.X > -0.4) & (early.X < 0.4)
    assert np.allclose(early.u[mid], -early.X[mid] / 0.5, atol=1e-12)
    assert Provenance.STRAIGHT_LINE.value in early.provenance_names()
    late = sweep_solution(p, B, g, 3.0, 0.01)
    (d,) = late.discontinuities
    assert d.X == pytest.approx(0.0, abs=1e-12)
    assert np.all(late.u[late.X < 0] == 1.0) and np.all(late.u[late.X > 0] == -1.0)


def test_slice_beyond_graph_rejected():
    p = profile(RIEMANN)
    g = evolve(p, B, 1.0, 0.1)
    with pytest.raises(MissingGraph):
        sweep_solution(p, B, g, 2.0, 0.01)


@pytest.mark.parametrize("name", ["example1", "example2", "example3", "example4", "example5", "gaussian", "hat", "two_fans", "riemann_rarefaction"])
def test_slice_single_valued_and_admissible(name):
    sc = scenario(name)
    sl = swept(name)
    assert np.all(np.diff(sl.X) > 0)
    assert np.all(np.isfinite(sl.u))
    for d in sl.discontinuities:
        s = sc.model.chord(d.u_left, d.u_right)
        assert sc.model.dG(d.u_left) >= s >= sc.model.dG(d.u_right)


def test_evaluate_is_right_continuous():
    sl = swept("example1")
    (d,) = sl.discontinuities
    u, _ = sl.evaluate([d.X - 1e-9, d.X, d.X + 1e-9])
    assert u[0] == pytest.approx(d.u_left, abs=1e-8)
    assert u[1] == pytest.approx(d.u_right, abs=1e-9)
    assert u[2] == pytest.approx(d.u_right, abs=1e-8)


def test_cell_averages_of_linear_state():
    p = profile(RARE, -2, 4)
    g = evolve(p, B, 2.0, 0.1)
    sl = sweep_solution(p, B, g, 2.0, 0.01)
    edges = np.array([-1.0, 0.0, 0.5, 1.5, 2.5])
    # exact means of the piecewise linear solution
    expected = [0.0, 0.125, 0.5, (0.25 * 0.5 * (1.5 + 2.0) + 0.5) / 1.0]
    assert np.allclose(sl.cell_averages(edges), expected, atol=1e-14)


def test_csv_round_trip():
    sl = swept("example2")
    rows = sl.to_csv().splitlines()
    assert rows[0] == "X,u,provenance"
    x, u, prov = rows[1].split(",")
    assert float(x) == sl.X[0] and float(u) == sl.u[0]


def test_example1_matches_fine_reference():
    sl = swept("example1")
    fine = reference("example1", 16000)
    coarse = reference("example1", 4000)
    rep = compare(sl, fine)
    # the slice is closer to the fine reference than the coarse one is
    assert rep.l1 <= self_convergence_error(coarse, fine)
    assert not rep.mismatches
