import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from platekit import kernels


def case(m, r, w, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, r, r))
    X = rng.standard_normal((m, r, w))
    dofs = rng.integers(0, 50, size=(m, w))
    return A, X, dofs


def dense(rows, cols, vals, n=50):
    out = np.zeros((n, n))
    np.add.at(out, (rows, cols), vals)
    return out


def test_numpy_kernel_against_loop():
    A, X, dofs = case(7, 6, 8, 0)
    ref = np.zeros((50, 50))
    for k in range(7):
        B = X[k].T @ A[k] @ X[k]
        np.add.at(ref, (dofs[k][:, None], dofs[k][None, :]), B)
    assert np.allclose(dense(*kernels.conjugate_scatter_numpy(A, X, dofs)), ref)


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernels not built")
@settings(max_examples=20, deadline=None)
@given(st.integers(1, 40), st.integers(1, 12), st.integers(1, 12), st.integers(0, 99))
def test_compiled_matches_numpy(m, r, w, seed):
    A, X, dofs = case(m, r, w, seed)
    r1, c1, v1 = kernels.conjugate_scatter_numpy(A, X, dofs)
    r2, c2, v2 = kernels.conjugate_scatter(A, X, dofs)
    assert (r1 == r2).all() and (c1 == c2).all()
    assert np.allclose(v1, v2, rtol=1e-12, atol=1e-12)


def test_pure_python_switch():
    env = dict(os.environ, PLATEKIT_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from platekit import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


def test_assembly_identical_across_backends():
    code = (
        "import numpy as np, scipy.sparse as sp\n"
        "from platekit import get_problem, MethodSpec, assemble\n"
        "p = get_problem('p1'); m = p.mesh('unstructured', 8, 0)\n"
        "A = assemble(m, MethodSpec.from_name('lsfq'), p.material).full_matrix.tocoo()\n"
        "np.save('{path}', A.toarray())\n"
    )
    mats = []
    for i, pure in enumerate(("", "1")):
        path = f"/tmp/platekit_backend_{os.getpid()}_{i}.npy"
        env = dict(os.environ)
        env.pop("PLATEKIT_PURE_PYTHON", None)
        if pure:
            env["PLATEKIT_PURE_PYTHON"] = pure
        subprocess.run([sys.executable, "-c", code.format(path=path)], env=env, check=True)
        mats.append(np.load(path))
        os.remove(path)
    assert np.allclose(mats[0], mats[1], rtol=1e-12, atol=1e-12 * np.abs(mats[1]).max())
