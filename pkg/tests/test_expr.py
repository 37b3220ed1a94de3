import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from charsweep import expr as ex


@pytest.mark.parametrize(
    "text,x,expected",
    [
        ("x^2 - 2*x", 3.0, 3.0),
        ("2*x/(1+x^2)^2", 1.0, 0.5),
        ("exp((-x^4+5*x^2)/10)", 0.0, 1.0),
        ("-x^2", 2.0, -4.0),
        ("ln(x) + sin(x) + cos(x)", 1.0, math.sin(1.0) + math.cos(1.0)),
        ("1.5e-1 * x", 2.0, 0.3),
    ],
)
def test_parse_and_evaluate(text, x, expected):
    f = ex.compile_scalar(ex.parse_expr(text))
    assert f(x) == pytest.approx(expected, rel=1e-14)


def test_unary_minus_binds_looser_than_power():
    f = ex.compile_scalar(ex.parse_expr("-2^2"))
    assert f(0.0) == -4.0


@pytest.mark.parametrize("text", ["x +", "2 * (x", "x $ 2", "foo(x)", ")"])
def test_syntax_errors_carry_position(text):
    with pytest.raises(ex.ExprSyntaxError) as err:
        ex.parse_expr(text)
    assert err.value.line == 1 and err.value.col >= 1


def test_derivative_is_closed_and_correct():
    n = ex.parse_expr("exp(-x^2) * sin(3*x)")
    d = n.derivative()
    assert isinstance(d, ex.ExprNode)
    f = ex.compile_scalar(n)
    g = ex.compile_scalar(d)
    for x in (-1.3, 0.2, 0.9):
        h = 1e-6
        fd = (f(x + h) - f(x - h)) / (2 * h)
        assert g(x) == pytest.approx(fd, rel=1e-7, abs=1e-9)


@given(st.floats(-2.0, 2.0))
def test_nth_derivative_of_polynomial(x):
    n = ex.parse_expr("x^5 - 3*x^2 + 1")
    d3 = ex.compile_scalar(ex.nth_derivative(n, 3))
    assert d3(x) == pytest.approx(60 * x * x, abs=1e-9)


def test_to_text_roundtrip():
    n = ex.parse_expr("(1 - exp(x)) / (2 + x^2) - x^3")
    m = ex.parse_expr(ex.to_text(n))
    xs = np.linspace(-2, 2, 11)
    assert np.allclose(ex.evaluate_many(n, xs), ex.evaluate_many(m, xs), rtol=1e-14)


def test_vector_matches_scalar():
    n = ex.parse_expr("exp(-x^2) + x/(1+x^2)")
    xs = np.linspace(-3, 3, 25)
    v = ex.compile_vector(n)(xs)
    s = [ex.compile_scalar(n)(float(x)) for x in xs]
    assert np.allclose(v, s, rtol=1e-15, atol=0)
