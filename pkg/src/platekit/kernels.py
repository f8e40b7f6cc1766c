"""Hot assembly kernels with a compiled backend and a numpy fallback.

The compiled module ``platekit._ckernels`` is used when it was built;
otherwise the vectorised numpy versions below run. Set
``PLATEKIT_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

import numpy as np


def conjugate_scatter_numpy(A: np.ndarray, X: np.ndarray, dofs: np.ndarray):
    """COO triplets of ``sum_k P_k^T X_k^T A_k X_k P_k``.

    ``A`` is (M, r, r), ``X`` is (M, r, w) and ``dofs`` is (M, w).
    """
    B = np.einsum("mai,mab,mbj->mij", X, A, X, optimize=True)
    w = dofs.shape[1]
    rows = np.repeat(dofs, w, axis=1).ravel()
    cols = np.tile(dofs, (1, w)).ravel()
    return rows.astype(np.int64), cols.astype(np.int64), B.ravel()


BACKEND = "numpy"
conjugate_scatter = conjugate_scatter_numpy

if not os.environ.get("PLATEKIT_PURE_PYTHON"):
    try:
        from ._ckernels import conjugate_scatter as _compiled
    except ImportError:
        pass
    else:

        def conjugate_scatter(A, X, dofs):  # noqa: F811
            return _compiled(
                np.ascontiguousarray(A, dtype=np.float64),
                np.ascontiguousarray(X, dtype=np.float64),
                np.ascontiguousarray(dofs, dtype=np.int64),
            )

        BACKEND = "cython"
