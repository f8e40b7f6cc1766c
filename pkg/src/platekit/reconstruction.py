"""Reconstruction of local quadratics from continuous piecewise linear data.

Each operator is materialised as a dense ``6 x n`` matrix taking the values
at the ``n`` patch nodes to the six P2 nodal coefficients on the centre
element. The three rows for the centre's vertices are exact selections,
which is what makes the reconstructed field continuous at mesh nodes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .element import EDGE_VERTS, monomial_grads, monomials, p2_nodes
from .mesh import Mesh
from .patch import DEFAULT_RANK_TOL, DegeneratePatchError, Patch, PatchStatus, numerical_rank

MONOMIAL_NAMES = ("1", "x", "y", "x^2", "xy", "y^2")


class ReconKind(enum.Enum):
    MORLEY = "Morley"
    FULL_QUADRATIC = "FullQuadratic"
    LEAST_SQUARES = "LeastSquares"


@dataclass(frozen=True)
class ReconstructionMap:
    element: int
    patch: Patch
    matrix: np.ndarray
    kind: ReconKind

    @property
    def nodes(self) -> tuple[int, ...]:
        return self.patch.nodes

    def apply(self, values) -> np.ndarray:
        """P2 coefficients on the element from values at the patch nodes."""
        return self.matrix @ np.asarray(values, float)


def _pin_vertex_rows(mat: np.ndarray) -> np.ndarray:
    mat[:3] = 0.0
    mat[0, 0] = mat[1, 1] = mat[2, 2] = 1.0
    return mat


def _element_p2_rows(patch: Patch) -> np.ndarray:
    """Monomials (in patch scaling) evaluated at the centre's P2 nodes."""
    return monomials(patch.local(p2_nodes(patch.coords[:3])))


def _linear_gradient(coords: np.ndarray) -> np.ndarray:
    """2x3 operator from vertex values to the gradient of the linear interpolant."""
    A = np.column_stack([np.ones(3), coords])
    return np.linalg.inv(A)[1:]


def morley_map(patch: Patch, mesh: Mesh) -> ReconstructionMap:
    """Morley-type reconstruction.

    Values at the centre's vertices are kept; the normal derivative at each
    edge midpoint is the average of the gradients of the two linear pieces
    sharing that edge (the ghost piece on the boundary).
    """
    n = len(patch.nodes)
    pos = {v: i for i, v in enumerate(patch.nodes)}
    xv = patch.coords[:3]
    s = patch.scale
    E = _element_p2_rows(patch)
    T = np.linalg.inv(E)  # monomial coefficients from P2 coefficients
    G_K = _linear_gradient(xv)

    lhs = np.zeros((6, 6))
    rhs = np.zeros((6, n))
    lhs[0, 0] = lhs[1, 1] = lhs[2, 2] = 1.0
    rhs[0, 0] = rhs[1, 1] = rhs[2, 2] = 1.0
    for k, (i, j) in enumerate(EDGE_VERTS):
        d = xv[j] - xv[i]
        nrm = np.array([d[1], -d[0]]) / np.hypot(*d)
        mid = 0.5 * (xv[i] + xv[j])
        grad_rows = monomial_grads(patch.local(mid)) @ T / s
        lhs[3 + k] = nrm @ grad_rows
        g = np.zeros((2, n))
        g[:, :3] += G_K
        nb = patch.edge_neighbors[k]
        if nb >= 0:
            nodes_nb = mesh.element_nodes(nb)
            G_nb = _linear_gradient(mesh.node_coords[list(nodes_nb)])
            for c, v in enumerate(nodes_nb):
                g[:, pos[v]] += G_nb[:, c]
        else:
            g[:, :3] += G_K
        rhs[3 + k] = 0.5 * (nrm @ g)
    mat = np.linalg.solve(lhs, rhs)
    return ReconstructionMap(patch.center, patch, _pin_vertex_rows(mat), ReconKind.MORLEY)


def full_quadratic_map(patch: Patch, tol: float = DEFAULT_RANK_TOL) -> ReconstructionMap:
    """Quadratic interpolation of the six patch nodes."""
    V = monomials(patch.local(patch.coords))
    if len(patch.nodes) != 6 or numerical_rank(V, tol) < 6:
        raise DegeneratePatchError(
            f"element {patch.center}: patch has {len(patch.nodes)} nodes and status "
            f"{patch.status.value}; use the least-squares reconstruction",
            [patch.center],
        )
    mat = _element_p2_rows(patch) @ np.linalg.inv(V)
    return ReconstructionMap(patch.center, patch, _pin_vertex_rows(mat), ReconKind.FULL_QUADRATIC)


def least_squares_map(patch: Patch, tol: float = DEFAULT_RANK_TOL) -> ReconstructionMap:
    """Quadratic exact at the centre's vertices, least squares at the rest.

    The three vertex conditions eliminate the constant and linear
    monomial coefficients; the three quadratic ones solve a reduced
    least-squares problem by QR.
    """
    n = len(patch.nodes)
    if n < 6:
        raise DegeneratePatchError(f"element {patch.center}: only {n} patch nodes", [patch.center])
    V = monomials(patch.local(patch.coords))
    L, Q = V[:3, :3], V[:3, 3:]
    VnL, VnQ = V[3:, :3], V[3:, 3:]
    Linv = np.linalg.inv(L)
    G = VnQ - VnL @ Linv @ Q
    if numerical_rank(G, tol) < 3:
        raise DegeneratePatchError(
            f"element {patch.center}: reduced least-squares system is rank deficient", [patch.center]
        )
    # residual data r = v_N - VnL Linv v_K as an operator on all patch values
    Rop = np.hstack([-VnL @ Linv, np.eye(n - 3)])
    Qf, Rf = np.linalg.qr(G)
    aq = np.linalg.solve(Rf, Qf.T @ Rop)
    al = Linv @ (np.hstack([np.eye(3), np.zeros((3, n - 3))]) - Q @ aq)
    mat = _element_p2_rows(patch) @ np.vstack([al, aq])
    return ReconstructionMap(patch.center, patch, _pin_vertex_rows(mat), ReconKind.LEAST_SQUARES)


def _regular(p: Patch) -> bool:
    return len(p.nodes) == 6 and len(p.members) == 4 and min(p.edge_neighbors) >= 0


def _local_frame(xv: np.ndarray):
    origin = xv.mean(axis=1)
    scale = np.linalg.norm(xv - xv[:, [1, 2, 0]], axis=2).max(axis=1)
    return origin, scale


def _linear_gradients(pts: np.ndarray) -> np.ndarray:
    A = np.concatenate([np.ones(pts.shape[:2] + (1,)), pts], axis=2)
    return np.linalg.inv(A)[:, 1:]


def _batched_interpolation(coords: np.ndarray) -> np.ndarray:
    """Quadratic interpolation matrices for a stack of six-node patches."""
    origin, scale = _local_frame(coords[:, :3])
    loc = lambda x: (x - origin[:, None]) / scale[:, None, None]  # noqa: E731
    V = monomials(loc(coords))
    E = monomials(loc(p2_nodes(coords[:, :3])))
    mats = E @ np.linalg.inv(V)
    return mats


def _batched_morley(coords: np.ndarray) -> np.ndarray:
    """Morley-type matrices for six-node patches whose node ``3 + k`` lies across local edge ``k``."""
    B = coords.shape[0]
    xv = coords[:, :3]
    origin, scale = _local_frame(xv)
    T = np.linalg.inv(monomials((p2_nodes(xv) - origin[:, None]) / scale[:, None, None]))
    G_K = _linear_gradients(xv)
    lhs = np.zeros((B, 6, 6))
    rhs = np.zeros((B, 6, 6))
    for r in range(3):
        lhs[:, r, r] = rhs[:, r, r] = 1.0
    for k, (i, j) in enumerate(EDGE_VERTS):
        d = xv[:, j] - xv[:, i]
        nrm = np.stack([d[:, 1], -d[:, 0]], axis=1) / np.linalg.norm(d, axis=1)[:, None]
        mid = 0.5 * (xv[:, i] + xv[:, j])
        grads = monomial_grads((mid - origin) / scale[:, None]) @ T / scale[:, None, None]
        lhs[:, 3 + k] = np.einsum("bd,bdj->bj", nrm, grads)
        g = np.zeros((B, 2, 6))
        g[:, :, :3] += G_K
        cols = [i, j, 3 + k]
        g[:, :, cols] += _linear_gradients(coords[:, cols])
        rhs[:, 3 + k] = 0.5 * np.einsum("bd,bdj->bj", nrm, g)
    return np.linalg.solve(lhs, rhs)


def without_ghosts(patch: Patch, mesh: Mesh) -> Patch:
    """Drop ghost members so boundary edges see only the centre element."""
    M, N = mesh.n_triangles, mesh.n_vertices
    keep = [i for i, v in enumerate(patch.nodes) if v < N]
    return Patch(
        patch.center,
        tuple(k for k in patch.members if k < M),
        tuple(patch.nodes[i] for i in keep),
        patch.coords[keep],
        patch.status,
        patch.vandermonde_rank,
        tuple(-1 if k >= M else k for k in patch.edge_neighbors),
    )


def build_maps(mesh: Mesh, patches, kind: ReconKind, tol: float = DEFAULT_RANK_TOL) -> list[ReconstructionMap]:
    """Reconstruction maps for every patch.

    Regular patches (three neighbours, six distinct nodes) are processed in
    one vectorised batch; the remainder go through the per-patch routines.
    """
    if kind is ReconKind.FULL_QUADRATIC:
        bad = [p.center for p in patches if len(p.nodes) != 6 or not p.status.usable]
        if bad:
            raise DegeneratePatchError(
                f"{len(bad)} degenerate patch(es), first at element {bad[0]}; "
                "the least-squares reconstruction (lsfq) extends such patches",
                bad,
            )
    out: list[ReconstructionMap | None] = [None] * len(patches)
    if kind is ReconKind.MORLEY:
        batch = [i for i, p in enumerate(patches) if _regular(p)]
    else:
        batch = [i for i, p in enumerate(patches) if _regular(p) and p.status is PatchStatus.OK]
    if batch:
        coords = np.stack([patches[i].coords for i in batch])
        mats = _batched_morley(coords) if kind is ReconKind.MORLEY else _batched_interpolation(coords)
        for i, m in zip(batch, mats):
            out[i] = ReconstructionMap(patches[i].center, patches[i], _pin_vertex_rows(m), kind)
    single = {
        ReconKind.MORLEY: lambda p: morley_map(p, mesh),
        ReconKind.FULL_QUADRATIC: lambda p: full_quadratic_map(p, tol),
        ReconKind.LEAST_SQUARES: lambda p: least_squares_map(p, tol),
    }[kind]
    for i, p in enumerate(patches):
        if out[i] is None:
            out[i] = single(p)
    return out


def monomial_samples(coords: np.ndarray) -> np.ndarray:
    """(n, 6) values of 1, x, y, x^2, xy, y^2 at physical points."""
    return monomials(np.asarray(coords, float))


def verify_reproduction(rmap: ReconstructionMap, patch: Patch | None = None) -> float:
    """Largest coefficient error when reconstructing the quadratic monomials."""
    patch = patch or rmap.patch
    samples = monomial_samples(patch.coords)
    exact = monomial_samples(p2_nodes(patch.coords[:3]))
    return float(np.abs(rmap.matrix @ samples - exact).max())


def nodal_match_error(rmap: ReconstructionMap, values) -> float:
    values = np.asarray(values, float)
    return float(np.abs(rmap.apply(values)[:3] - values[:3]).max())
