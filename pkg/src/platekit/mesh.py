"""Triangulations of polygonal plates: topology, boundary tags, ghost elements.

A :class:`Mesh` stores its edge data as flat arrays (one row per edge) so
that assembly can work on whole meshes at once; :meth:`Mesh.edge` and
:meth:`Mesh.ghost` give record views for single items.

Edge orientation: every edge carries a fixed unit normal ``n`` and tangent
``t = (n_y, -n_x)``. The endpoints are stored so that ``t`` runs from the
first to the second, and the first owner triangle is the one ``n`` points
away from (``v+`` in jump/average notation). On the boundary ``n`` is the
exterior normal.
"""

from __future__ import annotations

import dataclasses
import enum
import os
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay

from .element import EDGE_VERTS, diameters, signed_areas


class Tag(enum.IntEnum):
    INTERIOR = 0
    CLAMPED = 1
    SIMPLY_SUPPORTED = 2
    FREE = 3

    @property
    def letter(self) -> str:
        return "ICSF"[self]

    @classmethod
    def parse(cls, value) -> "Tag":
        if isinstance(value, Tag):
            return value
        if isinstance(value, str):
            key = value.strip().upper()
            for tag in cls:
                if key in (tag.letter, tag.name, tag.name.replace("_", "")):
                    return tag
        raise ValueError(f"unknown boundary tag {value!r}")


class MeshError(ValueError):
    pass


class MeshParseError(MeshError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}" if lineno is not None else message)


class BoundaryLayoutError(MeshError):
    pass


class MeshWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Edge:
    index: int
    endpoints: tuple[int, int]
    normal: np.ndarray
    tangent: np.ndarray
    owners: tuple[int, ...]
    tag: Tag
    dn: tuple[int, int] = (-1, 1)


@dataclass(frozen=True)
class GhostElement:
    boundary_edge: int
    ghost_vertex: np.ndarray
    ghost_dof: int
    owner_triangle: int


@dataclass(frozen=True)
class BcLayout:
    """Boundary conditions as a list of straight segments ``(p0, p1, tag)``."""

    segments: tuple

    @classmethod
    def unit_square(cls, bottom="S", right="S", top="S", left="S") -> "BcLayout":
        corners = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
        tags = [bottom, right, top, left]
        return cls(tuple((corners[i], corners[(i + 1) % 4], Tag.parse(tags[i])) for i in range(4)))

    @classmethod
    def uniform(cls, tag) -> "BcLayout":
        return cls.unit_square(tag, tag, tag, tag)

    def match(self, a: np.ndarray, b: np.ndarray, tol: float = 1e-10) -> list[int]:
        """Indices of segments containing the whole edge ``a``-``b``."""
        hits = []
        for i, (p0, p1, _) in enumerate(self.segments):
            p0 = np.asarray(p0, float)
            d = np.asarray(p1, float) - p0
            L2 = d @ d
            ok = True
            for x in (a, b):
                r = x - p0
                s = (r @ d) / L2
                if s < -tol or s > 1 + tol or abs(r[0] * d[1] - r[1] * d[0]) > tol * np.sqrt(L2):
                    ok = False
                    break
            if ok:
                hits.append(i)
        return hits


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray
    edge_vertices: np.ndarray
    edge_normals: np.ndarray
    edge_owners: np.ndarray
    edge_tags: np.ndarray
    tri_edges: np.ndarray
    constrained: np.ndarray
    ghost_edges: np.ndarray
    ghost_vertices: np.ndarray
    ghost_owners: np.ndarray
    edge_ghost: np.ndarray
    h: float
    quasi_uniformity_ratio: float

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, np.ndarray):
                v.flags.writeable = False

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented
        return (
            np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.triangles, other.triangles)
            and np.array_equal(self.edge_vertices, other.edge_vertices)
            and np.array_equal(self.edge_tags, other.edge_tags)
        )

    __hash__ = None

    # sizes -------------------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edge_vertices)

    @property
    def n_ghosts(self) -> int:
        return len(self.ghost_edges)

    @property
    def has_ghosts(self) -> bool:
        return self.n_ghosts > 0

    # derived geometry --------------------------------------------------
    @property
    def edge_tangents(self) -> np.ndarray:
        n = self.edge_normals
        return np.column_stack([n[:, 1], -n[:, 0]])

    @property
    def edge_lengths(self) -> np.ndarray:
        x = self.vertices[self.edge_vertices]
        return np.linalg.norm(x[:, 1] - x[:, 0], axis=1)

    @property
    def edge_midpoints(self) -> np.ndarray:
        return self.vertices[self.edge_vertices].mean(axis=1)

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_tags != Tag.INTERIOR)

    @property
    def tri_coords(self) -> np.ndarray:
        return self.vertices[self.triangles]

    @property
    def areas(self) -> np.ndarray:
        return signed_areas(self.tri_coords)

    @property
    def element_diameters(self) -> np.ndarray:
        return diameters(self.tri_coords)

    @property
    def node_coords(self) -> np.ndarray:
        """Coordinates of all CP1 degrees of freedom: vertices, then ghosts."""
        return np.vstack([self.vertices, self.ghost_vertices])

    @property
    def n_nodes(self) -> int:
        return self.n_vertices + self.n_ghosts

    # record views ------------------------------------------------------
    def edge(self, i: int) -> Edge:
        n = self.edge_normals[i]
        owners = tuple(int(k) for k in self.edge_owners[i] if k >= 0)
        return Edge(
            index=int(i),
            endpoints=(int(self.edge_vertices[i, 0]), int(self.edge_vertices[i, 1])),
            normal=n.copy(),
            tangent=np.array([n[1], -n[0]]),
            owners=owners,
            tag=Tag(int(self.edge_tags[i])),
        )

    @property
    def edges(self) -> list[Edge]:
        return [self.edge(i) for i in range(self.n_edges)]

    def ghost(self, g: int) -> GhostElement:
        return GhostElement(
            boundary_edge=int(self.ghost_edges[g]),
            ghost_vertex=self.ghost_vertices[g].copy(),
            ghost_dof=self.n_vertices + int(g),
            owner_triangle=int(self.ghost_owners[g]),
        )

    @property
    def ghost_elements(self) -> list[GhostElement]:
        return [self.ghost(g) for g in range(self.n_ghosts)]

    def element_nodes(self, k: int) -> tuple[int, int, int]:
        """Node (dof) indices of element ``k``; ids >= n_triangles are ghosts."""
        if k < self.n_triangles:
            return tuple(int(v) for v in self.triangles[k])
        g = k - self.n_triangles
        a, b = self.edge_vertices[self.ghost_edges[g]]
        return int(a), int(b), self.n_vertices + g

    def element_neighbors(self, k: int) -> list[int]:
        """Edge neighbours of element ``k`` (ghost ids included)."""
        M = self.n_triangles
        if k >= M:
            return [int(self.ghost_owners[k - M])]
        out = []
        for e in self.tri_edges[k]:
            o = self.edge_owners[e]
            if o[1] >= 0:
                out.append(int(o[1] if o[0] == k else o[0]))
            elif self.edge_ghost.size and self.edge_ghost[e] >= 0:
                out.append(M + int(self.edge_ghost[e]))
        return out

    def vertex_tags(self) -> np.ndarray:
        return self.constrained

    def check(self) -> None:
        """Raise :class:`MeshError` if topological invariants fail."""
        if np.any(self.areas <= 0):
            raise MeshError("mesh has non-positive triangle areas")
        for k in range(self.n_triangles):
            for e in self.tri_edges[k]:
                if k not in self.edge_owners[e]:
                    raise MeshError(f"edge {e} does not list triangle {k} as owner")
        cnt = (self.edge_owners >= 0).sum(axis=1)
        if np.any((cnt == 2) != (self.edge_tags == Tag.INTERIOR)):
            raise MeshError("interior/boundary classification inconsistent")


# ---------------------------------------------------------------------------
# construction


def from_triangles(vertices, triangles, *, reorient: bool = False) -> Mesh:
    """Build topology for a conforming triangulation.

    Boundary edges start tagged ``FREE``; use :func:`tag_boundary`.
    """
    V = np.ascontiguousarray(vertices, dtype=float)
    T = np.ascontiguousarray(triangles, dtype=np.int64)
    if V.ndim != 2 or V.shape[1] != 2 or T.ndim != 2 or T.shape[1] != 3:
        raise MeshError("vertices must be (N, 2) and triangles (M, 3)")
    if T.size and (T.min() < 0 or T.max() >= len(V)):
        raise MeshError("triangle references a missing vertex")
    area = signed_areas(V[T])
    if np.any(area < 0):
        if not reorient:
            raise MeshError("clockwise triangles present")
        T = T.copy()
        flip = area < 0
        T[flip] = T[flip][:, [0, 2, 1]]
        area = np.abs(area)
    if np.any(area <= 1e-14 * max(1.0, float(np.ptp(V, axis=0).max()) ** 2)):
        raise MeshError("degenerate (zero area) triangle")

    M = len(T)
    loc = T[:, EDGE_VERTS]  # (M, 3, 2)
    keys = np.sort(loc.reshape(-1, 2), axis=1)
    uniq, inv, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    if np.any(counts > 2):
        raise MeshError("non-manifold edge shared by more than two triangles")
    E = len(uniq)
    tri_edges = inv.reshape(M, 3)

    # outward normal of each (triangle, local edge) occurrence
    x = V[loc]
    d = x[:, :, 1] - x[:, :, 0]
    L = np.linalg.norm(d, axis=2)
    outward = np.stack([d[:, :, 1], -d[:, :, 0]], axis=2) / L[:, :, None]

    occ_tri = np.repeat(np.arange(M), 3)
    order = np.argsort(inv, kind="stable")
    owners = np.full((E, 2), -1, dtype=np.int64)
    occ_first = np.full(E, -1, dtype=np.int64)
    occ_second = np.full(E, -1, dtype=np.int64)
    sorted_edges = inv[order]
    start = np.r_[0, np.flatnonzero(np.diff(sorted_edges)) + 1]
    occ_first[sorted_edges[start]] = order[start]
    two = counts[sorted_edges[start]] == 2
    occ_second[sorted_edges[start[two]]] = order[start[two] + 1]

    xa, xb = V[uniq[:, 0]], V[uniq[:, 1]]
    t_sorted = (xb - xa) / np.linalg.norm(xb - xa, axis=1)[:, None]
    normals = np.column_stack([-t_sorted[:, 1], t_sorted[:, 0]])
    boundary = occ_second < 0
    out_flat = outward.reshape(-1, 2)
    normals[boundary] = out_flat[occ_first[boundary]]

    o1 = occ_tri[occ_first]
    o2 = np.where(occ_second >= 0, occ_tri[np.maximum(occ_second, 0)], -1)
    # first owner: the triangle whose outward normal is n
    plus_first = np.einsum("ij,ij->i", out_flat[occ_first], normals) > 0
    owners[:, 0] = np.where(plus_first | boundary, o1, o2)
    owners[:, 1] = np.where(boundary, -1, np.where(plus_first, o2, o1))

    tangents = np.column_stack([normals[:, 1], -normals[:, 0]])
    ev = uniq.copy()
    swap = np.einsum("ij,ij->i", xb - xa, tangents) < 0
    ev[swap] = ev[swap][:, ::-1]

    tags = np.where(boundary, Tag.FREE, Tag.INTERIOR).astype(np.int8)
    lengths = np.linalg.norm(xb - xa, axis=1)
    return Mesh(
        vertices=V,
        triangles=T,
        edge_vertices=ev,
        edge_normals=normals,
        edge_owners=owners,
        edge_tags=tags,
        tri_edges=tri_edges,
        constrained=np.zeros(len(V), dtype=bool),
        ghost_edges=np.zeros(0, dtype=np.int64),
        ghost_vertices=np.zeros((0, 2)),
        ghost_owners=np.zeros(0, dtype=np.int64),
        edge_ghost=np.full(E, -1, dtype=np.int64),
        h=float(diameters(V[T]).max()),
        quasi_uniformity_ratio=float(lengths.max() / lengths.min()),
    )


def build_structured_mesh(n: int) -> Mesh:
    """Unit square split into ``n x n`` cells, each cut by its (0,0)-(1,1) diagonal."""
    if n < 1:
        raise ValueError("n must be at least 1")
    s = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(s, s, indexing="xy")
    V = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    i, j = i.ravel(), j.ravel()
    v00 = j * (n + 1) + i
    v10, v01, v11 = v00 + 1, v00 + n + 1, v00 + n + 2
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    T = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return from_triangles(V, T)


def min_angles(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Smallest interior angle of each triangle, in degrees."""
    x = vertices[triangles]
    ang = []
    for k in range(3):
        a = x[:, (k + 1) % 3] - x[:, k]
        b = x[:, (k + 2) % 3] - x[:, k]
        c = np.einsum("ij,ij->i", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        ang.append(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))
    return np.min(ang, axis=0)


def build_unstructured_mesh(
    n: int,
    seed: int = 0,
    jitter: float = 0.2,
    min_angle: float = 15.0,
    max_redraws: int = 200,
    slide_boundary: bool = False,
) -> Mesh:
    """Jittered grid, Delaunay-triangulated.

    Interior vertices move by a random offset of length at most
    ``jitter * h`` (``h`` the structured diagonal). Boundary vertices stay
    on the grid unless ``slide_boundary`` lets them move along their side;
    corners never move. Vertices of triangles whose
    smallest angle is below ``min_angle`` are redrawn; after
    ``max_redraws`` rounds any still offending vertices fall back to the grid.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if not 0.0 <= jitter <= 0.3:
        raise ValueError("jitter must lie in [0, 0.3]")
    rng = np.random.default_rng(seed)
    s = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(s, s, indexing="xy")
    base = np.column_stack([X.ravel(), Y.ravel()])
    radius = jitter * np.sqrt(2.0) / n
    on_x = np.isclose(base[:, 0], 0.0) | np.isclose(base[:, 0], 1.0)
    on_y = np.isclose(base[:, 1], 0.0) | np.isclose(base[:, 1], 1.0)
    corner = on_x & on_y

    def draw(idx):
        r = radius * np.sqrt(rng.random(len(idx)))
        th = 2.0 * np.pi * rng.random(len(idx))
        off = np.column_stack([r * np.cos(th), r * np.sin(th)])
        if slide_boundary:
            off[on_x[idx], 0] = 0.0
            off[on_y[idx], 1] = 0.0
            off[corner[idx]] = 0.0
        else:
            off[(on_x | on_y)[idx]] = 0.0
        return off

    offset = draw(np.arange(len(base)))
    for it in range(max_redraws + 1):
        V = base + offset
        T = Delaunay(V).simplices.astype(np.int64)
        area = signed_areas(V[T])
        T[area < 0] = T[area < 0][:, [0, 2, 1]]
        bad = min_angles(V, T) < min_angle
        if not bad.any():
            break
        idx = np.unique(T[bad])
        if it == max_redraws:
            offset[idx] = 0.0
            V = base + offset
            T = Delaunay(V).simplices.astype(np.int64)
            area = signed_areas(V[T])
            T[area < 0] = T[area < 0][:, [0, 2, 1]]
            break
        offset[idx] = draw(idx)
    # deterministic element order: sort by centroid (row-major on the grid)
    c = V[T].mean(axis=1)
    order = np.lexsort((c[:, 0], np.floor(c[:, 1] * n)))
    return from_triangles(V, T[order])


def tag_boundary(mesh: Mesh, layout: BcLayout) -> Mesh:
    """Assign a boundary condition to every boundary edge.

    Vertices of clamped and simply supported edges become constrained.
    """
    tags = mesh.edge_tags.copy()
    for e in mesh.boundary_edges:
        a, b = mesh.vertices[mesh.edge_vertices[e]]
        hits = layout.match(a, b)
        if not hits:
            raise BoundaryLayoutError(f"boundary edge {e} ({a} - {b}) is not covered by the layout")
        if len(hits) > 1:
            raise BoundaryLayoutError(f"boundary edge {e} is covered by overlapping segments {hits}")
        tags[e] = layout.segments[hits[0]][2]
    return _with_tags(mesh, tags)


def _with_tags(mesh: Mesh, tags: np.ndarray) -> Mesh:
    constrained = np.zeros(mesh.n_vertices, dtype=bool)
    ess = (tags == Tag.CLAMPED) | (tags == Tag.SIMPLY_SUPPORTED)
    constrained[mesh.edge_vertices[ess].ravel()] = True
    return dataclasses.replace(mesh, edge_tags=np.asarray(tags, dtype=np.int8), constrained=constrained)


def add_ghosts(mesh: Mesh) -> Mesh:
    """One ghost element per boundary edge, by point reflection of the
    owner's opposite vertex through the edge midpoint."""
    bnd = mesh.boundary_edges
    owner = mesh.edge_owners[bnd, 0]
    ab = mesh.edge_vertices[bnd]
    tri = mesh.triangles[owner]
    opp_mask = (tri != ab[:, :1]) & (tri != ab[:, 1:])
    opp = tri[opp_mask]
    x = mesh.vertices
    ghost_v = x[ab[:, 0]] + x[ab[:, 1]] - x[opp]
    edge_ghost = np.full(mesh.n_edges, -1, dtype=np.int64)
    edge_ghost[bnd] = np.arange(len(bnd))
    return dataclasses.replace(
        mesh,
        ghost_edges=bnd.astype(np.int64),
        ghost_vertices=ghost_v,
        ghost_owners=owner.astype(np.int64),
        edge_ghost=edge_ghost,
    )


def unit_square_mesh(
    kind: str = "structured", n: int = 8, layout: BcLayout | None = None, seed: int = 0, jitter: float = 0.2
) -> Mesh:
    """Convenience: build, tag (default all simply supported) and add ghosts."""
    if kind == "structured":
        mesh = build_structured_mesh(n)
    elif kind == "unstructured":
        mesh = build_unstructured_mesh(n, seed=seed, jitter=jitter)
    else:
        raise ValueError(f"unknown mesh type {kind!r}")
    return add_ghosts(tag_boundary(mesh, layout or BcLayout.uniform("S")))


def split_triangle(mesh: Mesh, k: int) -> Mesh:
    """Split triangle ``k`` at its centroid into three.

    The new centroid vertex has valence three, which makes the standard
    patches of the three children five-node (degenerate). Tags are kept.
    """
    V = np.vstack([mesh.vertices, mesh.vertices[mesh.triangles[k]].mean(axis=0)])
    c = len(V) - 1
    a, b, d = mesh.triangles[k]
    T = np.vstack([np.delete(mesh.triangles, k, axis=0), [[a, b, c], [b, d, c], [d, a, c]]])
    out = from_triangles(V, T)
    tags = out.edge_tags.copy()
    for e in out.boundary_edges:
        old = _find_edge(mesh, *out.edge_vertices[e])
        tags[e] = mesh.edge_tags[old]
    out = _with_tags(out, tags)
    return add_ghosts(out) if mesh.has_ghosts else out


def _find_edge(mesh: Mesh, a: int, b: int) -> int:
    ev = mesh.edge_vertices
    hit = np.flatnonzero(((ev[:, 0] == a) & (ev[:, 1] == b)) | ((ev[:, 0] == b) & (ev[:, 1] == a)))
    if hit.size != 1:
        raise MeshError(f"no edge {a}-{b}")
    return int(hit[0])


def degenerate_mesh(n: int = 16, layout: BcLayout | None = None) -> Mesh:
    """Structured mesh with one interior triangle split at its centroid."""
    base = unit_square_mesh("structured", n, layout)
    i = j = n // 2
    k = 2 * (j * n + i)
    return split_triangle(base, k)


# ---------------------------------------------------------------------------
# text format


def write_mesh(mesh: Mesh, path) -> Path:
    """Write ``platemesh 1`` text format; ghosts are derived and not stored."""
    path = Path(path)
    lines = ["platemesh 1", f"vertices {mesh.n_vertices}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines.append(f"triangles {mesh.n_triangles}")
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    bnd = mesh.boundary_edges
    lines.append(f"boundary {len(bnd)}")
    for e in bnd:
        a, b = mesh.edge_vertices[e]
        lines.append(f"{a} {b} {Tag(int(mesh.edge_tags[e])).letter}")
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    os.replace(tmp, path)
    return path


def read_mesh(path, ghosts: bool = True) -> Mesh:
    """Parse a ``platemesh 1`` file; clockwise triangles are reoriented."""
    raw = Path(path).read_text().splitlines()
    lines = [(i + 1, ln.strip()) for i, ln in enumerate(raw) if ln.strip() and not ln.lstrip().startswith("#")]
    pos = 0

    def take():
        nonlocal pos
        if pos >= len(lines):
            raise MeshParseError("unexpected end of file", len(raw) + 1)
        item = lines[pos]
        pos += 1
        return item

    def section(name):
        no, ln = take()
        parts = ln.split()
        if len(parts) != 2 or parts[0] != name:
            raise MeshParseError(f"expected '{name} <count>'", no)
        try:
            count = int(parts[1])
        except ValueError:
            raise MeshParseError(f"bad count {parts[1]!r}", no) from None
        if count < 0:
            raise MeshParseError("negative count", no)
        return count

    no, ln = take()
    if ln.split() != ["platemesh", "1"]:
        raise MeshParseError("missing 'platemesh 1' header", no)

    nv = section("vertices")
    V = np.empty((nv, 2))
    for i in range(nv):
        no, ln = take()
        parts = ln.split()
        try:
            if len(parts) != 2:
                raise ValueError
            V[i] = [float(parts[0]), float(parts[1])]
        except ValueError:
            raise MeshParseError("expected 'x y'", no) from None

    nt = section("triangles")
    T = np.empty((nt, 3), dtype=np.int64)
    seen = {}
    for i in range(nt):
        no, ln = take()
        try:
            idx = [int(p) for p in ln.split()]
            if len(idx) != 3:
                raise ValueError
        except ValueError:
            raise MeshParseError("expected 'i j k'", no) from None
        if min(idx) < 0 or max(idx) >= nv or len(set(idx)) != 3:
            raise MeshParseError(f"invalid vertex indices {idx}", no)
        key = tuple(sorted(idx))
        if key in seen:
            raise MeshParseError(f"duplicated triangle (first on line {seen[key]})", no)
        seen[key] = no
        T[i] = idx
        if signed_areas(V[idx]) < 0:
            warnings.warn(f"line {no}: clockwise triangle reoriented", MeshWarning, stacklevel=2)
            T[i] = [idx[0], idx[2], idx[1]]

    nb = section("boundary")
    entries = []
    for _ in range(nb):
        no, ln = take()
        parts = ln.split()
        try:
            if len(parts) != 3:
                raise ValueError
            a, b = int(parts[0]), int(parts[1])
            tag = Tag.parse(parts[2])
            if tag == Tag.INTERIOR:
                raise ValueError
        except ValueError:
            raise MeshParseError("expected 'i j TAG' with TAG in {C,S,F}", no) from None
        entries.append((no, a, b, tag))
    if pos != len(lines):
        raise MeshParseError("trailing content", lines[pos][0])

    try:
        mesh = from_triangles(V, T)
    except MeshError as exc:
        raise MeshParseError(str(exc)) from None
    lookup = {tuple(sorted(map(int, mesh.edge_vertices[e]))): int(e) for e in mesh.boundary_edges}
    tags = mesh.edge_tags.copy()
    done = set()
    for no, a, b, tag in entries:
        e = lookup.get(tuple(sorted((a, b))))
        if e is None:
            raise MeshParseError(f"{a}-{b} is not a boundary edge", no)
        if e in done:
            raise MeshParseError(f"boundary edge {a}-{b} tagged twice", no)
        done.add(e)
        tags[e] = tag
    if len(done) != len(lookup):
        raise MeshParseError(f"{len(lookup) - len(done)} boundary edges left untagged")
    mesh = _with_tags(mesh, tags)
    return add_ghosts(mesh) if ghosts else mesh
