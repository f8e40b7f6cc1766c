import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from math import factorial

from platekit.quadrature import MAX_DEGREE, edge_rule, map_triangle_points, quadrature, triangle_rule


def reference_monomial_integral(a, b):
    # integral of x^a y^b over the reference triangle
    return factorial(a) * factorial(b) / factorial(a + b + 2)


def test_x2y2_degree4_is_one_over_180():
    pts, w = quadrature("triangle", 4)
    assert np.isclose(np.sum(w * pts[:, 0] ** 2 * pts[:, 1] ** 2), 1 / 180, rtol=0, atol=1e-15)


@pytest.mark.parametrize("degree", range(MAX_DEGREE + 1))
def test_triangle_rule_exact_up_to_degree(degree):
    pts, w = triangle_rule(degree)
    assert np.isclose(w.sum(), 0.5)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            got = np.sum(w * pts[:, 0] ** a * pts[:, 1] ** b)
            assert abs(got - reference_monomial_integral(a, b)) < 1e-14


@pytest.mark.parametrize("degree", range(MAX_DEGREE + 1))
def test_edge_rule_exact(degree):
    s, w = edge_rule(degree)
    for k in range(degree + 1):
        assert abs(np.sum(w * s**k) - 1 / (k + 1)) < 1e-14


def test_points_inside_reference_triangle():
    pts, w = triangle_rule(6)
    assert (pts >= 0).all() and (pts.sum(axis=1) <= 1).all() and (w > 0).all()


def test_bad_degree_and_kind():
    with pytest.raises(ValueError):
        triangle_rule(MAX_DEGREE + 1)
    with pytest.raises(ValueError):
        quadrature("square", 2)


def test_physical_edge_weights_sum_to_length():
    _, w = quadrature("edge", 3, [[0, 0], [3, 4]])
    assert np.isclose(w.sum(), 5.0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=6, max_size=6))
def test_physical_triangle_area_and_batched_agree(c):
    v = np.array(c).reshape(3, 2)
    area = 0.5 * abs((v[1, 0] - v[0, 0]) * (v[2, 1] - v[0, 1]) - (v[1, 1] - v[0, 1]) * (v[2, 0] - v[0, 0]))
    pts, w = quadrature("triangle", 4, v)
    assert np.isclose(w.sum(), area, atol=1e-12)
    bp, bw = map_triangle_points(v[None], 4)
    assert np.allclose(bp[0], pts) and np.allclose(bw[0], w)
