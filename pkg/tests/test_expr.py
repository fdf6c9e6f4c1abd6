import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rkgeo.errors import ConfigError, ExprSyntaxError
from rkgeo.expr import ScalarFieldExpr

XY = ("x", "y")


def test_precedence_and_power():
    e = ScalarFieldExpr.parse("1 + 2*3^2 - -x", XY)
    assert e([2.0, 0.0]) == pytest.approx(1 + 18 + 2)
    assert ScalarFieldExpr.parse("2^3^2", XY)([0, 0]) == 2 ** 9
    assert ScalarFieldExpr.parse("x**2", XY)([3, 0]) == 9
    assert ScalarFieldExpr.parse("pow(y, 3)", XY)([0, 2]) == 8


def test_functions_and_constants():
    e = ScalarFieldExpr.parse("sin(x)^2 + cos(x)^2 + exp(0) + log(e) + sqrt(4) - pi", XY)
    assert e([0.7, 0.0]) == pytest.approx(5 - math.pi)


def test_constant_folding():
    assert ScalarFieldExpr.parse("2*3 + 1", XY).is_constant
    assert not ScalarFieldExpr.parse("2*x", XY).is_constant


@pytest.mark.parametrize("text,col", [("x +* y", 4), ("foo(x)", 1), ("x + z", 5), ("(x", 3), ("x $ y", 3)])
def test_syntax_errors_carry_column(text, col):
    with pytest.raises(ExprSyntaxError) as ei:
        ScalarFieldExpr.parse(text, XY)
    assert isinstance(ei.value, ConfigError)
    assert ei.value.column == col


def test_vectorized_shapes():
    e = ScalarFieldExpr.parse("x*y + 1", XY)
    pts = np.random.default_rng(0).normal(size=(4, 5, 2))
    assert e(pts).shape == (4, 5)
    v, g = e.value_and_grad(pts)
    assert v.shape == (4, 5) and g.shape == (4, 5, 2)
    np.testing.assert_allclose(g[..., 0], pts[..., 1])


EXPRS = ["0.4+0.3*sin(y)", "x^2*y - 3/(2+y^2)", "exp(-x*x)*cos(3*y)", "sqrt(1+x^2+y^2)", "log(2+sin(x*y))",
         "pow(1+x*x, 1.5) / (2 + cos(y))", "y^3 - x^4"]


@pytest.mark.parametrize("text", EXPRS)
def test_gradient_matches_finite_differences(text):
    e = ScalarFieldExpr.parse(text, XY)
    rng = np.random.default_rng(1)
    for x in rng.uniform(-1.5, 1.5, (10, 2)):
        _, g = e.value_and_grad(x)
        h = 1e-6
        fd = [(e(x + h * d) - e(x - h * d)) / (2 * h) for d in np.eye(2)]
        np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-7)


@pytest.mark.parametrize("text", EXPRS)
def test_compiled_matches_dual_interpreter(text):
    e = ScalarFieldExpr.parse(text, XY)
    pts = np.random.default_rng(2).uniform(-1.5, 1.5, (50, 2))
    v1, g1 = e.value_and_grad(pts)
    v2, g2 = e.value_and_grad_dual(pts)
    np.testing.assert_allclose(v1, v2, rtol=1e-14, atol=1e-15)
    np.testing.assert_allclose(g1, g2, rtol=1e-13, atol=1e-14)


def test_hessian_matches_finite_differences():
    e = ScalarFieldExpr.parse("x^2*y - sin(x*y)", XY)
    x = np.array([0.3, -0.8])
    H = e.hessian(x)
    h = 1e-4
    fd = np.array([[(e.value_and_grad(x + h * d)[1][j] - e.value_and_grad(x - h * d)[1][j]) / (2 * h)
                    for j in range(2)] for d in np.eye(2)])
    np.testing.assert_allclose(H, fd, atol=1e-7)
    np.testing.assert_allclose(H, H.T)


@settings(max_examples=60, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3), x=st.floats(-2, 2), y=st.floats(-2, 2))
def test_linear_combination_property(a, b, x, y):
    e = ScalarFieldExpr.parse(f"{a!r}*x + {b!r}*y", XY)
    v, g = e.value_and_grad(np.array([x, y]))
    assert v == pytest.approx(a * x + b * y, abs=1e-12)
    np.testing.assert_allclose(g, [a, b], atol=1e-15)
