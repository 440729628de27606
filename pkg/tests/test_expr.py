import math

import numpy as np
import pytest

from arsurf.expr import Expr, ExprError, parse, simplify


def test_parse_eval_basic():
    e = Expr("x*y + 2*cos(x) - y/(1+x^2)")
    x, y = 0.7, -1.3
    expected = x * y + 2 * math.cos(x) - y / (1 + x ** 2)
    assert np.isclose(e(x, y), expected)


def test_double_star_power_and_pow_call():
    assert np.isclose(Expr("x**3")(2.0, 0.0), 8.0)
    assert np.isclose(Expr("pow(x, 3)")(2.0, 0.0), 8.0)


def test_vectorized():
    e = Expr("exp(x) * sin(y)")
    x = np.linspace(-1, 1, 7)
    y = np.linspace(0, 2, 7)
    assert np.allclose(e(x, y), np.exp(x) * np.sin(y))


def test_derivatives_match_finite_differences():
    e = Expr("x*x*y - sin(x*y) + exp(y/2)")
    h = 1e-6
    rng = np.random.default_rng(0)
    for _ in range(20):
        x, y = rng.uniform(-1.5, 1.5, 2)
        fd_x = (e(x + h, y) - e(x - h, y)) / (2 * h)
        fd_y = (e(x, y + h) - e(x, y - h)) / (2 * h)
        assert abs(e.d("x")(x, y) - fd_x) < 1e-8 * (1 + abs(fd_x))
        assert abs(e.d("y")(x, y) - fd_y) < 1e-8 * (1 + abs(fd_y))


def test_second_derivatives():
    e = Expr("x^3 * y^2")
    assert np.isclose(e.dd("x", "x")(2.0, 3.0), 6 * 2.0 * 9.0)
    assert np.isclose(e.dd("x", "y")(2.0, 3.0), 3 * 4.0 * 2 * 3.0)
    assert np.isclose(e.dd("y", "y")(2.0, 3.0), 2 * 8.0)


def test_constant_folding():
    assert simplify(parse("2*3 + 0*x")) == ("num", 6.0)


def test_unknown_symbols_rejected():
    with pytest.raises(ExprError):
        parse("x + z")
    with pytest.raises(ExprError):
        parse("tan(x)")


def test_variable_exponent_rejected():
    e = parse("x^y")
    from arsurf.expr import diff
    with pytest.raises(ExprError):
        diff(e, "x")
