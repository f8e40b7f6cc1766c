"""Element neighbourhoods used as reconstruction stencils.

Element ids ``0..M-1`` are mesh triangles; ids ``M + g`` are ghost
elements. Node ids are CP1 degrees of freedom: vertex indices, then
``n_vertices + g`` for ghost nodes.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass

import numpy as np

from .element import monomials
from .mesh import Mesh

DEFAULT_RANK_TOL = 1e-8
MAX_DIAMETER_FACTOR = 4.0


class PatchStatus(enum.Enum):
    OK = "Ok"
    FIVE_NODES = "FiveNodes"
    COLLINEAR = "Collinear"
    EXTENDED_OK = "ExtendedOk"

    @property
    def usable(self) -> bool:
        return self in (PatchStatus.OK, PatchStatus.EXTENDED_OK)


class DegeneratePatchError(RuntimeError):
    def __init__(self, message: str, elements=()):
        self.elements = tuple(elements)
        super().__init__(message)


class UnrecoverablePatchError(DegeneratePatchError):
    pass


@dataclass(frozen=True)
class Patch:
    """Stencil of element ``center``.

    ``nodes`` starts with the three vertices of ``center`` in triangle
    order. ``edge_neighbors[k]`` is the element across local edge ``k`` of
    ``center`` (``-1`` when there is none).
    """

    center: int
    members: tuple[int, ...]
    nodes: tuple[int, ...]
    coords: np.ndarray
    status: PatchStatus
    vandermonde_rank: int
    edge_neighbors: tuple[int, int, int]

    @property
    def origin(self) -> np.ndarray:
        return self.coords[:3].mean(axis=0)

    @property
    def scale(self) -> float:
        v = self.coords[:3]
        return float(np.linalg.norm(v - v[[1, 2, 0]], axis=1).max())

    @property
    def diameter(self) -> float:
        d = self.coords[:, None, :] - self.coords[None, :, :]
        return float(np.sqrt((d**2).sum(-1)).max())

    def local(self, x) -> np.ndarray:
        return (np.asarray(x, float) - self.origin) / self.scale


def scaled_vandermonde(coords: np.ndarray, origin: np.ndarray, scale: float) -> np.ndarray:
    return monomials((np.asarray(coords, float) - origin) / scale)


def numerical_rank(matrix: np.ndarray, tol: float = DEFAULT_RANK_TOL) -> int:
    s = np.linalg.svd(matrix, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))


def vandermonde_rank(coords, origin=None, scale=None, tol: float = DEFAULT_RANK_TOL) -> int:
    """Rank of the quadratic monomial matrix on ``coords``.

    Coordinates are centred at ``origin`` and divided by ``scale``; both
    default to the centroid and diameter of the first three points.
    """
    coords = np.asarray(coords, float)
    if origin is None:
        origin = coords[:3].mean(axis=0)
    if scale is None:
        v = coords[:3]
        scale = float(np.linalg.norm(v - v[[1, 2, 0]], axis=1).max())
    return numerical_rank(scaled_vandermonde(coords, origin, scale), tol)


def _classify(n_nodes: int, rank: int, extended: bool) -> PatchStatus:
    if rank == 6:
        return PatchStatus.EXTENDED_OK if extended else PatchStatus.OK
    return PatchStatus.FIVE_NODES if n_nodes < 6 else PatchStatus.COLLINEAR


def detect_degeneracy(patch: Patch, tol: float = DEFAULT_RANK_TOL) -> tuple[PatchStatus, int]:
    """Status and numerical rank of the patch's quadratic Vandermonde."""
    rank = numerical_rank(scaled_vandermonde(patch.coords, patch.origin, patch.scale), tol)
    extended = patch.status is PatchStatus.EXTENDED_OK or len(patch.members) > 4
    return _classify(len(patch.nodes), rank, extended), rank


def _gather(mesh: Mesh, members) -> tuple[tuple[int, ...], np.ndarray]:
    nodes: list[int] = []
    for k in members:
        for v in mesh.element_nodes(k):
            if v not in nodes:
                nodes.append(v)
    return tuple(nodes), mesh.node_coords[list(nodes)]


def standard_patch(mesh: Mesh, K: int, tol: float = DEFAULT_RANK_TOL) -> Patch:
    """``K`` and its edge neighbours; boundary edges contribute their ghost."""
    M = mesh.n_triangles
    nb = []
    for e in mesh.tri_edges[K]:
        o = mesh.edge_owners[e]
        if o[1] >= 0:
            nb.append(int(o[1] if o[0] == K else o[0]))
        elif mesh.edge_ghost[e] >= 0:
            nb.append(M + int(mesh.edge_ghost[e]))
        else:
            nb.append(-1)
    members = (int(K),) + tuple(k for k in nb if k >= 0)
    nodes, coords = _gather(mesh, members)
    patch = Patch(K, members, nodes, coords, PatchStatus.OK, 0, tuple(nb))
    status, rank = detect_degeneracy(patch, tol)
    return dataclasses.replace(patch, status=status, vandermonde_rank=rank)


def extend_patch(
    mesh: Mesh, patch: Patch, tol: float = DEFAULT_RANK_TOL, max_diameter_factor: float = MAX_DIAMETER_FACTOR
) -> Patch:
    """Grow a degenerate patch one element at a time until rank 6.

    At each step the candidate with the smallest element id, among edge
    neighbours of current members that keep the patch diameter within
    ``max_diameter_factor * h_K``, is added.
    """
    if patch.status.usable:
        return patch
    limit = max_diameter_factor * patch.scale
    members = list(patch.members)
    while True:
        cands = sorted({n for k in members for n in mesh.element_neighbors(k)} - set(members))
        chosen = None
        for c in cands:
            nodes, coords = _gather(mesh, members + [c])
            d = coords[:, None, :] - coords[None, :, :]
            if np.sqrt((d**2).sum(-1)).max() <= limit * (1 + 1e-12):
                chosen = c
                break
        if chosen is None:
            raise UnrecoverablePatchError(
                f"patch of element {patch.center} stays degenerate within diameter {limit:.3g}", [patch.center]
            )
        members.append(chosen)
        rank = vandermonde_rank(coords, patch.origin, patch.scale, tol)
        if rank == 6:
            return Patch(patch.center, tuple(members), nodes, coords, PatchStatus.EXTENDED_OK, 6, patch.edge_neighbors)


def _edge_neighbors(mesh: Mesh) -> np.ndarray:
    """(M, 3) element across each local edge; ghosts are ``M + g``, -1 if none."""
    M = mesh.n_triangles
    K = np.arange(M)[:, None]
    own = mesh.edge_owners[mesh.tri_edges]  # (M, 3, 2)
    other = np.where(own[..., 0] == K, own[..., 1], own[..., 0])
    if mesh.edge_ghost.size:
        g = mesh.edge_ghost[mesh.tri_edges]
        other = np.where((other < 0) & (g >= 0), M + g, other)
    return other


def _batched_standard(mesh: Mesh, tol: float):
    """Vectorised standard patches; returns (nodes, ranks, neighbours, regular mask).

    ``regular`` marks elements whose three neighbours all exist and
    contribute three distinct extra nodes; only those rows are meaningful.
    """
    M, N = mesh.n_triangles, mesh.n_vertices
    nb = _edge_neighbors(mesh)
    tri = mesh.triangles
    opp = np.full((M, 3), -1, dtype=np.int64)
    real = (nb >= 0) & (nb < M)
    tri_sum = tri.sum(axis=1)
    edge_sum = tri.sum(axis=1)[:, None] - tri  # sum of the two vertices of local edge k is total minus vertex (k+2)%3
    edge_sum = edge_sum[:, [2, 0, 1]]
    opp[real] = tri_sum[nb[real]] - edge_sum[real]
    ghost = nb >= M
    opp[ghost] = N + (nb[ghost] - M)
    nodes = np.hstack([tri, opp])
    srt = np.sort(opp, axis=1)
    regular = (nb >= 0).all(axis=1) & (srt[:, 1:] != srt[:, :-1]).all(axis=1)
    coords = mesh.node_coords[np.where(nodes >= 0, nodes, 0)]
    v = coords[:, :3]
    origin = v.mean(axis=1)
    scale = np.linalg.norm(v - v[:, [1, 2, 0]], axis=2).max(axis=1)
    V = monomials((coords - origin[:, None]) / scale[:, None, None])
    sv = np.linalg.svd(V, compute_uv=False)
    ranks = (sv > tol * sv[:, :1]).sum(axis=1)
    return nodes, coords, ranks, nb, regular


def build_patches(mesh: Mesh, extend: bool = False, tol: float = DEFAULT_RANK_TOL) -> list[Patch]:
    """Standard patches of every triangle, optionally extended when degenerate."""
    nodes, coords, ranks, nb, regular = _batched_standard(mesh, tol)
    out = []
    for K in range(mesh.n_triangles):
        if regular[K]:
            r = int(ranks[K])
            status = _classify(6, r, False)
            members = (K,) + tuple(int(x) for x in nb[K])
            p = Patch(K, members, tuple(int(x) for x in nodes[K]), coords[K], status, r, tuple(int(x) for x in nb[K]))
        else:
            p = standard_patch(mesh, K, tol)
        if extend and not p.status.usable:
            p = extend_patch(mesh, p, tol)
        out.append(p)
    return out


def patch_report_rows(patches) -> list[tuple]:
    """Rows ``(element, status, rank, n_members, n_nodes)`` for CSV dumps."""
    return [(p.center, p.status.value, p.vandermonde_rank, len(p.members), len(p.nodes)) for p in patches]
