import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from hspw_lab.calculus import (
    apply_hardy_operator,
    gradient_at,
    gradient_lp_norm,
    power_integrand,
    sobolev_norm,
    tail_function,
    weighted_lp_norm,
)
from hspw_lab.domain import Ball, Box, Interval
from hspw_lab.errors import InvalidP, PointOutsideDomain
from hspw_lab.fields import (
    ScalarField,
    bubble_field,
    bump_field,
    constant_field,
    distance_field,
    expression_field,
    linear_combination,
    zero_field,
)
from hspw_lab.quadrature import QuadratureConfig, _integrate

I01 = Interval(0.0, 1.0)
U = expression_field("t*(1-t)", 1)


def close(nv, exact, rel=1e-7):
    assert not nv.divergent_flag
    assert nv.value == pytest.approx(exact, rel=rel)


# -- closed forms ------------------------------------------------------------

def test_symbolic_oracles():
    t = sp.symbols("t")
    u = t * (1 - t)
    assert sp.integrate(u**2, (t, 0, 1)) == sp.Rational(1, 30)
    assert 2 * sp.integrate(u / t, (t, 0, sp.Rational(1, 2))) == sp.Rational(3, 4)
    assert sp.integrate(sp.diff(u, t) ** 2, (t, 0, 1)) == sp.Rational(1, 3)
    assert 2 * sp.integrate((u / t) ** 2, (t, 0, sp.Rational(1, 2))) == sp.Rational(7, 12)


def test_lp_norm_examples():
    close(weighted_lp_norm(U, I01, 0.0, 2.0), math.sqrt(1 / 30))
    close(weighted_lp_norm(U, I01, 1.0, 1.0), 0.75)
    assert weighted_lp_norm(zero_field(1), I01, 0.5, 2.0).value == 0.0


def test_gradient_norm_examples():
    close(gradient_lp_norm(U, I01, 0.0, 2.0), math.sqrt(1 / 3))
    assert gradient_lp_norm(constant_field(1, 3.0), I01, 0.0, 2.0).value == 0.0
    box = Box((0.0, 0.0), (2.0, 1.5))
    close(gradient_lp_norm(expression_field("x", 2), box, 0.0, 2.0), math.sqrt(3.0), rel=1e-10)


def test_hardy_left_side_example():
    close(weighted_lp_norm(apply_hardy_operator(U, I01), I01, 0.0, 2.0), math.sqrt(7 / 12))


def test_sobolev_norm():
    assert sobolev_norm(zero_field(1), I01, 2.0) == 0.0
    literal = (1 / 3) ** 0.25 + (1 / 30) ** 0.5
    assert sobolev_norm(U, I01, 2.0) == pytest.approx(literal, rel=1e-7)
    assert literal == pytest.approx(0.942410, abs=5e-7)
    standard = (1 / 3) ** 0.5 + (1 / 30) ** 0.5
    assert sobolev_norm(U, I01, 2.0, convention="standard") == pytest.approx(standard, rel=1e-7)
    unit = Box((0.0, 0.0), (1.0, 1.0))
    assert sobolev_norm(expression_field("x1", 2), unit, 1.0) == pytest.approx(1.5, rel=1e-8)
    with pytest.raises(ValueError):
        sobolev_norm(U, I01, 2.0, convention="other")


def test_invalid_p():
    for p in (0.5, math.inf, math.nan):
        with pytest.raises(InvalidP):
            weighted_lp_norm(U, I01, 0.0, p)
        with pytest.raises(InvalidP):
            gradient_lp_norm(U, I01, 0.0, p)


def test_left_side_divergence_is_flagged():
    nv = weighted_lp_norm(apply_hardy_operator(constant_field(1, 1.0), I01), I01, 0.0, 2.0)
    assert nv.divergent_flag and nv.value == math.inf and nv.rel_error == math.inf


# -- gradients -----------------------------------------------------------------

def test_gradient_examples():
    assert gradient_at(U, [0.25], I01)[0] == pytest.approx(0.5)
    np.testing.assert_array_equal(gradient_at(constant_field(2, 4.0), [0.3, 0.4], Box((0.0, 0.0), (1.0, 1.0))),
                                  [0.0, 0.0])
    xy = expression_field("x*y", 2)
    np.testing.assert_allclose(gradient_at(xy, [2.0, 3.0], Box((0.0, 0.0), (4.0, 4.0))), [3.0, 2.0])


def test_gradient_outside_raises():
    with pytest.raises(PointOutsideDomain):
        gradient_at(U, [1.0], I01)


def strip_gradient(u):
    return ScalarField(evaluate=u.evaluate, support=u.support, name=u.name)


POLY_CASES = [
    ("t*(1-t)", I01),
    ("t**3 - 2*t + 5", Interval(-1.0, 2.0)),
    ("x**2*y - 3*x*y**2 + y", Box((-1.0, 0.0), (1.0, 2.0))),
    ("x*y*z + x**2 - z**3", Box((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))),
    ("(1 - x**2 - y**2)**2", Ball((0.0, 0.0), 1.0)),
]


@pytest.mark.parametrize("expr,dom", POLY_CASES, ids=[c[0] for c in POLY_CASES])
@settings(max_examples=40, deadline=None)
@given(data=st.data())
def test_finite_differences_match_declared_gradient(expr, dom, data):
    u = expression_field(expr, dom.n)
    bb = dom.bounding_box()
    w = np.array(data.draw(st.lists(st.floats(0.0, 1.0), min_size=dom.n, max_size=dom.n)))
    x = bb.lo_arr + bb.widths * w
    c = dom.center()
    while not dom.contains_many(x[None, :])[0]:
        x = c + 0.5 * (x - c)
    exact = gradient_at(u, x, dom)
    fd = gradient_at(strip_gradient(u), x, dom)
    scale = max(1.0, float(np.linalg.norm(exact)))
    assert np.linalg.norm(fd - exact) <= 1e-5 * scale


def test_finite_differences_near_boundary_stay_inside():
    fd = gradient_at(strip_gradient(U), [1e-9], I01)
    assert fd[0] == pytest.approx(1.0, rel=1e-5)


# -- the Hardy operator -----------------------------------------------------------

def test_hardy_operator_examples():
    T = apply_hardy_operator(U, I01)
    assert T(np.array([[0.25]]))[0] == pytest.approx(0.75)
    assert np.all(apply_hardy_operator(zero_field(1), I01)(np.array([[0.1], [0.7]])) == 0.0)
    Td = apply_hardy_operator(distance_field(I01), I01)
    np.testing.assert_allclose(Td(np.linspace(0.01, 0.99, 50)[:, None]), 1.0, rtol=1e-15)
    with pytest.raises(PointOutsideDomain):
        T(np.array([[0.0]]))


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-10, 10), b=st.floats(-10, 10), t=st.floats(0.001, 0.999))
def test_hardy_operator_is_linear(a, b, t):
    v = expression_field("t**2 + 1", 1)
    combo = apply_hardy_operator(linear_combination([(a, U), (b, v)]), I01)
    X = np.array([[t]])
    want = a * apply_hardy_operator(U, I01)(X) + b * apply_hardy_operator(v, I01)(X)
    np.testing.assert_allclose(combo(X), want, rtol=1e-12, atol=1e-12)


T_CASES = [
    (U, I01, 0.0, 2.0),
    (U, I01, 0.5, 1.5),
    (expression_field("(t*(1-t))**2", 1), I01, 0.3, 4.0),
    (bubble_field(Box((0.0, 0.0), (2.0, 1.0)), 2.0), Box((0.0, 0.0), (2.0, 1.0)), 0.5, 2.0),
    (bubble_field(Ball((0.0, 0.0), 1.0), 2.0), Ball((0.0, 0.0), 1.0), 1.5, 1.5),
]


@pytest.mark.parametrize("u,dom,alpha,p", T_CASES)
def test_hardy_operator_norm_equals_direct_left_side(u, dom, alpha, p):
    via_T = weighted_lp_norm(apply_hardy_operator(u, dom), dom, alpha, p)
    direct = _integrate(power_integrand(u, p), dom, p + alpha, QuadratureConfig())
    value = direct.value ** (1 / p)
    err = value * direct.error_estimate / (p * direct.value)
    assert abs(via_T.value - value) <= 10 * (via_T.error_estimate + err) + 1e-14 * value


# -- invariants ------------------------------------------------------------------

@pytest.mark.parametrize("c", [-2.0, 0.5, 10.0])
@pytest.mark.parametrize("u,dom,alpha,p", [
    (U, I01, 0.5, 2.0),
    (bump_field((0.0, 0.0), 0.5), Ball((0.0, 0.0), 1.0), 1.0, 3.0),
])
def test_homogeneity(c, u, dom, alpha, p):
    base = weighted_lp_norm(u, dom, alpha, p)
    scaled = weighted_lp_norm(u.scaled(c), dom, alpha, p)
    assert scaled.value == pytest.approx(abs(c) * base.value,
                                         abs=10 * (scaled.error_estimate + abs(c) * base.error_estimate))
    g = gradient_lp_norm(u, dom, alpha, p)
    gs = gradient_lp_norm(u.scaled(c), dom, alpha, p)
    assert gs.value == pytest.approx(abs(c) * g.value, abs=10 * (gs.error_estimate + abs(c) * g.error_estimate))


def test_layer_cake():
    # ||u||_1 = int_0^max tail(s) ds; level grid by the midpoint rule
    levels = np.linspace(0.0, 0.25, 101)
    mids = 0.5 * (levels[1:] + levels[:-1])
    layer = sum(tail_function(U, I01, 0.0, s) for s in mids) * (levels[1] - levels[0])
    direct = weighted_lp_norm(U, I01, 0.0, 1.0).value
    assert direct == pytest.approx(1 / 6, rel=1e-9)
    assert layer == pytest.approx(direct, rel=1e-2)


def test_tail_function_examples():
    u = expression_field("t", 1)
    assert tail_function(u, I01, 0.0, 0.3) == pytest.approx(0.7, abs=1e-6)
    assert tail_function(u, I01, 0.0, 0.0) == pytest.approx(1.0, abs=1e-12)
    assert tail_function(u, I01, 0.0, 2.0) == 0.0
