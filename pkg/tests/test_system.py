import numpy as np
import pytest
import scipy.sparse as sp

from helpers import Quadratic
from platekit import analysis as an
from platekit.element import MaterialParams
from platekit.mesh import BcLayout, Tag, build_structured_mesh, degenerate_mesh, unit_square_mesh
from platekit.system import (
    METHOD_NAMES,
    DgConfig,
    Family,
    IndefiniteSystemError,
    LoadMode,
    MethodSpec,
    SingularSystemError,
    assemble,
    assemble_load,
    build_expansion,
    edge_matrices,
    edge_operators,
    factorize,
    solve,
    solve_problem,
)
from platekit.element import P2Basis

MAT = MaterialParams(1.0, 0.3)


def test_method_spec_names_and_bpt_load():
    assert METHOD_NAMES == ("fq", "lsfq", "morley", "bpt", "dpv", "dpvc0")
    assert MethodSpec.from_name("bpt").load_mode is LoadMode.PLAIN_LINEAR
    assert MethodSpec.from_name("morley").load_mode is LoadMode.RECONSTRUCTED
    with pytest.raises(ValueError, match="valid"):
        MethodSpec.from_name("morley2")
    with pytest.raises(ValueError):
        MethodSpec(Family.DPV_C0, LoadMode.PLAIN_LINEAR)


def test_dg_config_validation_and_penalty():
    with pytest.raises(ValueError):
        DgConfig(beta=0)
    with pytest.raises(ValueError):
        DgConfig(penalty_projection="P2")
    m = MaterialParams(0.5)
    assert np.isclose(DgConfig(beta=10).penalty(m, 0.1), 50.0)
    assert np.isclose(DgConfig(beta=10, scale_penalty=False).penalty(m, 0.1), 100.0)


@pytest.mark.parametrize("name", METHOD_NAMES)
def test_expansion_dof_counts(name):
    m = unit_square_mesh("structured", 4)
    exp = build_expansion(m, MethodSpec.from_name(name))
    expected = {
        "fq": m.n_nodes, "lsfq": m.n_nodes, "morley": m.n_nodes, "bpt": m.n_vertices,
        "dpv": m.n_vertices + 3 * m.n_triangles, "dpvc0": m.n_vertices + m.n_edges,
    }[name]
    assert exp.n_dofs == expected
    assert exp.X.shape[:2] == (m.n_triangles, 6)


@pytest.mark.parametrize("name", METHOD_NAMES)
@pytest.mark.parametrize("layout", ["SSSS", "CSFS", "CCCC"])
def test_symmetric_positive_definite(name, layout):
    m = unit_square_mesh("unstructured", 6, layout=BcLayout.unit_square(*layout), seed=1)
    system = assemble(m, MethodSpec.from_name(name), MAT, load=lambda x, y: np.ones_like(x))
    assert system.symmetry_error() <= 1e-12
    sol = solve(system)
    assert sol.min_pivot > 0 and np.isfinite(sol.nodal).all()


def test_structured_morley_equals_fq():
    m = unit_square_mesh("structured", 8)
    A = assemble(m, MethodSpec.from_name("morley"), MAT).full_matrix
    B = assemble(m, MethodSpec.from_name("fq"), MAT).full_matrix
    assert sp.linalg.norm(A - B) <= 1e-10 * sp.linalg.norm(B)


def test_morley_interior_edge_terms_vanish():
    m = unit_square_mesh("unstructured", 6, seed=2)
    exp = build_expansion(m, MethodSpec.from_name("morley"))
    interior = np.flatnonzero(m.edge_tags == Tag.INTERIOR)
    ops = edge_operators(m, P2Basis(m.tri_coords), MAT, interior)
    A_e = edge_matrices(ops, penalty=1e3, projection="P0")  # (E, 12, 12) on the two P2 elements
    for e, (kp, km) in enumerate(zip(ops.plus, ops.minus)):
        Xe = np.zeros((12, m.n_nodes))
        for half, k in ((0, kp), (1, km)):
            np.add.at(Xe[6 * half:6 * half + 6].T, exp.dofs[k], exp.X[k].T)
        assert np.abs(Xe.T @ A_e[e] @ Xe).max() < 1e-9


def test_zero_load_gives_zero_rhs_and_solution():
    m = unit_square_mesh("unstructured", 5, seed=0)
    for name in METHOD_NAMES:
        method = MethodSpec.from_name(name)
        assert not assemble_load(m, method, lambda x, y: 0 * x).any()
        sol = solve(assemble(m, method, MAT))
        assert np.abs(sol.nodal).max() == 0.0


def test_plain_linear_load_is_star_area_over_three():
    m = unit_square_mesh("structured", 4)
    b = assemble_load(m, MethodSpec.from_name("bpt"), lambda x, y: np.ones_like(x))
    v = int(np.flatnonzero(np.all(np.isclose(m.vertices, 0.5), axis=1))[0])
    star = m.tri_coords[(m.triangles == v).any(axis=1)]
    area = 0.5 * np.abs(np.cross(np.c_[star[:, 1] - star[:, 0], np.zeros(len(star))],
                                 np.c_[star[:, 2] - star[:, 0], np.zeros(len(star))])[:, 2]).sum()
    assert np.isclose(b[v], area / 3)


def test_all_free_is_singular():
    m = unit_square_mesh("structured", 4, layout=BcLayout.uniform("F"))
    with pytest.raises(SingularSystemError):
        solve(assemble(m, MethodSpec.from_name("dpvc0"), MAT, load=lambda x, y: np.ones_like(x)))


def test_indefinite_matrix_reported():
    A = sp.csr_matrix(np.array([[2.0, 0.0], [0.0, -1.0]]))
    with pytest.raises(IndefiniteSystemError):
        factorize(A)


def test_problem1_fq_residual(p1):
    m = p1.mesh("unstructured", 32)
    sol = solve_problem(m, MethodSpec.from_name("fq"), p1.material, p1.load)
    assert sol.residual <= 1e-10 and np.isfinite(sol.nodal).all()


def test_solution_linear_coeffs_midpoints_average():
    m = unit_square_mesh("structured", 2)
    sol = solve(assemble(m, MethodSpec.from_name("fq"), MAT, load=lambda x, y: np.ones_like(x)))
    c = sol.linear_coeffs()
    assert np.allclose(c[:, 3], 0.5 * (c[:, 0] + c[:, 1]))


def test_degenerate_fq_raises_lsfq_solves():
    from platekit.patch import DegeneratePatchError

    m = degenerate_mesh(8)
    with pytest.raises(DegeneratePatchError):
        assemble(m, MethodSpec.from_name("fq"), MAT)
    sol = solve(assemble(m, MethodSpec.from_name("lsfq"), MAT, load=lambda x, y: np.ones_like(x)))
    assert sol.min_pivot > 0


@pytest.mark.parametrize("name", ["dpvc0", "dpv", "fq", "lsfq"])
@pytest.mark.parametrize("layout", ["CCCC", "CSFS", "SSSS"])
@pytest.mark.parametrize("proj", ["P0", "P1"])
def test_quadratic_patch_test(name, layout, proj):
    m = unit_square_mesh("unstructured", 6, layout=BcLayout.unit_square(*layout), seed=9)
    q = Quadratic([0.3, -1.0, 0.5, 1.2, -0.7, 0.4], MAT)
    sol = solve(assemble(m, MethodSpec.from_name(name), MAT, DgConfig(penalty_projection=proj),
                         boundary=q.boundary()))
    assert np.abs(sol.nodal[: m.n_vertices] - q(*m.vertices.T)).max() < 1e-9


def test_matrix_market_dump(tmp_path):
    import scipy.io

    m = unit_square_mesh("structured", 3)
    system = assemble(m, MethodSpec.from_name("dpvc0"), MAT)
    system.write_matrix_market(tmp_path / "a.mtx")
    back = scipy.io.mmread(str(tmp_path / "a.mtx"))
    assert np.allclose(back.toarray(), system.matrix.toarray())
