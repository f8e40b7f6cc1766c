import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from platekit import analysis as an
from platekit.element import MaterialParams
from platekit.mesh import BcLayout, build_structured_mesh, tag_boundary, unit_square_mesh
from platekit.system import MethodSpec, Solution, solve_problem


def fake_solution(mesh, coeffs, method="dpvc0"):
    return Solution(MethodSpec.from_name(method), np.zeros(mesh.n_vertices), coeffs, mesh)


def interpolate(mesh, f):
    from platekit.element import p2_nodes

    n = p2_nodes(mesh.tri_coords)
    return f(n[..., 0], n[..., 1])


def test_exact_p1_matches_sine_field_and_bilaplacian(p1):
    x, y = np.random.default_rng(0).random((2, 20))
    f = an.SineField(1, 2)
    assert np.allclose(an.exact_p1(x, y), np.sin(np.pi * x) * np.sin(2 * np.pi * y))
    d = f.derivatives(x, y)
    h = 1e-4
    fd_xx = (f(x + h, y) - 2 * f(x, y) + f(x - h, y)) / h**2
    assert np.allclose(d["hess"][0], fd_xx, rtol=1e-5, atol=1e-4)
    fd_xyy = (d["hess"][2] - an.SineField(1, 2).derivatives(x - h, y)["hess"][2]) / h
    assert np.allclose(d["third"][1 + 1], fd_xyy, rtol=1e-3, atol=1e-2)
    assert np.allclose(p1.material.D * f.bilaplacian(x, y), p1.load(x, y))


def test_levy_series_solves_problem2():
    p2 = an.get_problem("p2")
    u = p2.exact
    D, nu = p2.material.D, p2.material.nu
    x = np.linspace(0.05, 0.95, 7)
    y = np.linspace(0.05, 0.95, 7)
    X, Y = np.meshgrid(x, y)
    d = u.derivatives(X.ravel(), Y.ravel())
    # bilaplacian from third derivatives by central differences in x and y
    h = 1e-4
    dp = u.derivatives(X.ravel() + h, Y.ravel(), which=("third",))["third"]
    dm = u.derivatives(X.ravel() - h, Y.ravel(), which=("third",))["third"]
    ep = u.derivatives(X.ravel(), Y.ravel() + h, which=("third",))["third"]
    em = u.derivatives(X.ravel(), Y.ravel() - h, which=("third",))["third"]
    uxxxx = (dp[0] - dm[0]) / (2 * h)
    uxxyy = (ep[1] - em[1]) / (2 * h)
    uyyyy = (ep[3] - em[3]) / (2 * h)
    assert np.allclose(D * (uxxxx + 2 * uxxyy + uyyyy), 1.0, atol=1e-4)
    # boundary conditions
    s = np.linspace(0.1, 0.9, 5)
    zero, one = np.zeros_like(s), np.ones_like(s)
    assert np.allclose(u(s, zero), 0, atol=1e-12)
    assert np.allclose(u.derivatives(s, zero, which=("grad",))["grad"][1], 0, atol=1e-10)
    assert np.allclose(u(zero, s), 0, atol=1e-12) and np.allclose(u(one, s), 0, atol=1e-12)
    top = u.derivatives(s, one)
    m_yy = top["hess"][2] + nu * top["hess"][0]
    assert np.allclose(m_yy, 0, atol=1e-7)
    v_y = top["third"][3] + (2 - nu) * top["third"][1]
    assert np.allclose(v_y, 0, atol=1e-6)
    assert d["u"].max() > 0


def test_levy_known_values():
    u = an.get_problem("p2").exact
    assert np.isclose(u(0.5, 0.5), 0.0618858, rtol=1e-5)
    assert np.isclose(u(0.5, 1.0), 0.1226965, rtol=1e-5)


def test_zero_solution_l2_error_is_half(p1):
    m = p1.mesh("structured", 16)
    assert np.isclose(an.l2_error(fake_solution(m, np.zeros((m.n_triangles, 6))), p1.exact), 0.5, rtol=1e-4)


def test_l2_error_interpolant_small_and_decreasing(p1):
    errs = []
    for n in (8, 16, 32):
        m = p1.mesh("unstructured", n)
        e = an.l2_error(fake_solution(m, interpolate(m, p1.exact)), p1.exact)
        assert e > 0
        errs.append(e)
    assert errs[0] > errs[1] > errs[2]


def test_l2_error_deterministic(p1):
    m = p1.mesh("unstructured", 8)
    s = solve_problem(m, MethodSpec.from_name("fq"), p1.material, p1.load)
    assert an.l2_error(s, p1.exact) == an.l2_error(s, p1.exact)


def two_triangle_mesh(tag="F"):
    return tag_boundary(build_structured_mesh(1), BcLayout.uniform(tag))


def test_energy_volume_term_of_half_x_squared():
    m = two_triangle_mesh()
    mat = MaterialParams(1.0, 0.0)
    coeffs = -interpolate(m, lambda x, y: 0.5 * x * x)  # e = u - u_h with u = 0
    zero = _QuadExact(lambda x, y: 0 * x, np.zeros((2, 2)))
    comp = an.energy_components(fake_solution(m, coeffs), zero, mat)
    assert np.isclose(comp.volume, 1.0)


def test_energy_zero_for_exact_quadratic():
    m = unit_square_mesh("unstructured", 4, seed=1)
    mat = MaterialParams(1.0, 0.3)
    f = lambda x, y: x * x - x * y + 2 * y * y  # noqa: E731
    exact = _QuadExact(f, [[2, -1], [-1, 4]])
    assert an.energy_error(fake_solution(m, interpolate(m, f)), exact, mat) < 1e-10


class _QuadExact:
    def __init__(self, f, H):
        self.f, self.H = f, np.asarray(H, float)

    def __call__(self, x, y):
        return self.f(x, y)

    def derivatives(self, x, y, which=None):
        x = np.asarray(x, float)
        H = self.H
        g = np.stack([H[0, 0] * x + H[0, 1] * y, H[1, 0] * x + H[1, 1] * y])
        hess = np.stack([np.full_like(x, H[0, 0]), np.full_like(x, H[0, 1]), np.full_like(x, H[1, 1])])
        return {"u": self.f(x, y), "grad": g, "hess": hess, "third": np.zeros((4,) + x.shape)}


def test_energy_of_linear_positive_with_clamped_edges():
    m = unit_square_mesh("structured", 4, layout=BcLayout.uniform("C"))
    coeffs = -interpolate(m, lambda x, y: x + y)
    zero = _QuadExact(lambda x, y: 0 * x, np.zeros((2, 2)))
    assert an.energy_error(fake_solution(m, coeffs), zero, MaterialParams(1.0, 0.3)) > 0


@pytest.mark.parametrize("c", [2.0, -3.0])
def test_energy_homogeneity(p1, c):
    m = p1.mesh("unstructured", 8)
    s = solve_problem(m, MethodSpec.from_name("dpvc0"), p1.material, p1.load)
    zero = _QuadExact(lambda x, y: 0 * x, np.zeros((2, 2)))
    base = an.energy_error(fake_solution(m, s.reconstructed), zero, p1.material)
    scaled = an.energy_error(fake_solution(m, c * s.reconstructed), zero, p1.material)
    assert np.isclose(scaled, abs(c) * base, rtol=1e-12)


def test_energy_zero_error_is_zero(p1):
    m = p1.mesh("structured", 4)
    zero = _QuadExact(lambda x, y: 0 * x, np.zeros((2, 2)))
    comp = an.energy_components(fake_solution(m, np.zeros((m.n_triangles, 6))), zero, p1.material)
    assert comp.total == 0.0


@pytest.mark.parametrize("p", [0.5, 1.0, 2.0, 3.0])
def test_fit_slope_recovers_planted_rate(p):
    h = 1.0 / np.array([8, 16, 32, 64])
    assert abs(an.fit_slope(h, 3.7 * h**p) - p) < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 4.0), st.floats(1e-3, 1e3))
def test_fit_slope_property(p, C):
    h = 1.0 / np.array([4, 8, 16, 32, 64])
    assert abs(an.fit_slope(h, C * h**p) - p) < 1e-9


def test_fit_slope_needs_three_levels():
    with pytest.raises(an.SlopeFitError):
        an.fit_slope([0.1, 0.05], [1.0, 0.25])


def test_structured_morley_and_fq_rows_identical(p1):
    a = an.convergence_study(p1, MethodSpec.from_name("morley"), "structured", (4, 8))
    b = an.convergence_study(p1, MethodSpec.from_name("fq"), "structured", (4, 8))
    for ra, rb in zip(a.rows, b.rows):
        assert float(f"{ra.err_l2:.6g}") == float(f"{rb.err_l2:.6g}")
        assert float(f"{ra.err_energy:.6g}") == float(f"{rb.err_energy:.6g}")


def test_report_with_two_levels_has_no_slopes(p1):
    rep = an.convergence_study(p1, MethodSpec.from_name("fq"), "unstructured", (4, 8))
    assert rep.slopes() is None
    text = rep.to_csv()
    assert "slope" not in text
    assert text.splitlines()[0] == ",".join(an.CSV_FIELDS) + ",err_l2_linear"


def test_failed_level_flags_partial_report():
    prob = an.get_problem("p1")
    free = an.ModelProblem(prob.id, prob.material, BcLayout.uniform("F"), prob.load, prob.exact)
    rep = an.convergence_study(free, MethodSpec.from_name("dpvc0"), "structured", (4, 8))
    assert rep.partial and len(rep.failures) == 2 and "# failed n=4" in rep.to_csv()


def test_structured_p2_field_reproduces_solution():
    p2 = an.get_problem("p2")
    m = p2.mesh("structured", 8)
    s = solve_problem(m, MethodSpec.from_name("dpvc0"), p2.material, p2.load)
    field = an.StructuredP2Field(8, s.reconstructed)
    from platekit.quadrature import map_triangle_points
    from platekit.element import P2Basis

    pts, _ = map_triangle_points(m.tri_coords, 4)
    direct = np.einsum("mqj,mj->mq", P2Basis(m.tri_coords).value_rows(pts), s.reconstructed)
    assert np.allclose(field(pts[..., 0], pts[..., 1]), direct, atol=1e-12)


def test_reference_p2_small_resolution_richardson_gate(tmp_path, monkeypatch):
    monkeypatch.setenv("PLATEKIT_CACHE", str(tmp_path))
    with pytest.raises(an.ReferenceCheckError):
        an.reference_p2(8)  # too coarse to pass the 1% gate
    ref = an.reference_p2(64)
    assert ref.richardson < an.RICHARDSON_TOL
    assert (tmp_path / "p2_reference_n64.npz").exists()
    again = an.reference_p2(64)
    assert np.array_equal(again.field.coeffs, ref.field.coeffs)
