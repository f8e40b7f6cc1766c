import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from platekit.element import (
    LocalQuadratic,
    MaterialParams,
    P2Basis,
    bending_stiffness,
    edge_traces,
    element_stiffness,
    moments,
    p2_eval,
)

REF = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
TRI = np.array([[0.1, 0.2], [0.9, 0.0], [0.4, 0.7]])


def test_bending_stiffness_problem2_constants():
    assert np.isclose(bending_stiffness(1e6, 0.01, 0.3), 1 / 10.92)
    assert round(MaterialParams.from_plate(1e6, 0.01, 0.3).D, 7) == 0.0915751


def test_lame_parameters():
    m = MaterialParams(D=2.0, nu=0.25)
    assert np.isclose(m.lam, 0.5) and np.isclose(m.mu, 1.5)
    with pytest.raises(ValueError):
        MaterialParams(D=1.0, nu=0.5)
    with pytest.raises(ValueError):
        MaterialParams(D=-1.0)


def test_p2_eval_examples():
    q = LocalQuadratic.interpolate(lambda x, y: x**2, TRI)
    assert np.allclose(p2_eval(q, None, 2), [[2, 0], [0, 0]])
    c = LocalQuadratic(0, np.full(6, 3.0), TRI)
    assert np.allclose(p2_eval(c, [0.3, 0.3], 1), 0.0)
    xy = LocalQuadratic.interpolate(lambda x, y: x * y, TRI)
    assert np.isclose(p2_eval(xy, [0.3, 0.5], 0), 0.15)


def test_moments_examples():
    q = LocalQuadratic.interpolate(lambda x, y: x**2, TRI)
    assert np.allclose(moments(q, MaterialParams(1.0, 0.0)).sigma, [[2, 0], [0, 0]])
    assert np.allclose(moments(q, MaterialParams(1.0, 0.3)).sigma, [[2.0, 0], [0, 0.6]])


def test_edge_traces_examples():
    q = LocalQuadratic.interpolate(lambda x, y: x**2, TRI)
    mat = MaterialParams(1.0, 0.3)
    mnn, _, T = edge_traces(q, [0.0, 1.0], mat)
    assert np.isclose(mnn, 0.6) and T == 0.0
    _, mnt, _ = edge_traces(q, [1.0, 0.0], mat)
    assert np.isclose(mnt, 0.0)


def test_element_stiffness_energy_of_x_squared():
    A = element_stiffness(REF, MaterialParams(1.0, 0.0))
    c = LocalQuadratic.interpolate(lambda x, y: x**2, REF).coeffs
    assert np.isclose(c @ A @ c, 2.0)


def test_stiffness_rejects_clockwise():
    with pytest.raises(ValueError):
        element_stiffness(REF[[0, 2, 1]], MaterialParams(1.0))


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 0.45))
def test_linear_fields_in_kernel(a, b, c, nu):
    A = element_stiffness(TRI, MaterialParams(1.3, nu))
    q = LocalQuadratic.interpolate(lambda x, y: a + b * x + c * y, TRI).coeffs
    assert np.abs(A @ q).max() < 1e-10 * (1 + abs(a) + abs(b) + abs(c))
    assert np.allclose(A, A.T)
    assert np.linalg.eigvalsh(A).min() > -1e-10


def test_basis_rows_reproduce_quadratic_exactly():
    f = lambda x, y: 1 - 2 * x + 3 * y + x * x - 4 * x * y + 0.5 * y * y  # noqa: E731
    basis = P2Basis(TRI)
    c = LocalQuadratic.interpolate(f, TRI).coeffs
    pts = np.array([[[0.3, 0.2], [0.5, 0.4]]])
    assert np.allclose(basis.value_rows(pts)[0] @ c, f(pts[0, :, 0], pts[0, :, 1]))
    gx = -2 + 2 * pts[0, :, 0] - 4 * pts[0, :, 1]
    gy = 3 - 4 * pts[0, :, 0] + pts[0, :, 1]
    assert np.allclose(basis.grad_rows(pts)[0] @ c, np.stack([gx, gy], axis=1))
    assert np.allclose(basis.hess_rows()[0] @ c, [2, -4, 1])


def test_load_of_constant_is_area_times_p2_weights():
    b = P2Basis(REF).load(lambda x, y: np.ones_like(x))[0]
    # vertex functions integrate to 0, edge functions to area/3
    assert np.allclose(b, [0, 0, 0, 1 / 6, 1 / 6, 1 / 6])
