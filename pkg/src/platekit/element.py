"""Local P2 shape functions, curvatures, moments and element matrices.

Every local quadratic is stored by its values at the six Lagrange nodes of
its triangle, ordered ``v0, v1, v2, m01, m12, m20`` (vertices, then edge
midpoints of the local edges (0,1), (1,2), (2,0)). Internally the fields
are converted to monomials in coordinates centred at the triangle centroid
and scaled by the triangle diameter, which keeps the 6x6 systems well
conditioned for any mesh size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .quadrature import map_triangle_points

# local edge k joins local vertices EDGE_VERTS[k]; its midpoint is coefficient 3 + k
EDGE_VERTS = np.array([[0, 1], [1, 2], [2, 0]])


@dataclass(frozen=True)
class MaterialParams:
    """Isotropic plate material.

    ``lam = D*nu`` and ``mu = D*(1 - nu)`` are the plate Lame parameters.
    """

    D: float
    nu: float = 0.0
    E: float | None = None
    p: float | None = None
    lam: float = field(init=False)
    mu: float = field(init=False)

    def __post_init__(self):
        if not 0.0 <= self.nu < 0.5:
            raise ValueError(f"Poisson ratio must lie in [0, 0.5), got {self.nu}")
        if self.D <= 0:
            raise ValueError("bending stiffness must be positive")
        object.__setattr__(self, "lam", self.D * self.nu)
        object.__setattr__(self, "mu", self.D * (1.0 - self.nu))

    @classmethod
    def from_plate(cls, E: float, p: float, nu: float) -> "MaterialParams":
        return cls(D=bending_stiffness(E, p, nu), nu=nu, E=E, p=p)

    def constitutive(self) -> np.ndarray:
        """3x3 matrix C with sigma:kappa = k_v . C . k_w for k = (xx, xy, yy)."""
        lam, mu = self.lam, self.mu
        return np.array([[lam + mu, 0.0, lam], [0.0, 2.0 * mu, 0.0], [lam, 0.0, lam + mu]])


def bending_stiffness(E: float, p: float, nu: float) -> float:
    return E * p**3 / (12.0 * (1.0 - nu**2))


# ---------------------------------------------------------------------------
# monomial machinery, batched over elements


def monomials(xi: np.ndarray) -> np.ndarray:
    x, y = xi[..., 0], xi[..., 1]
    return np.stack([np.ones_like(x), x, y, x * x, x * y, y * y], axis=-1)


def monomial_grads(xi: np.ndarray) -> np.ndarray:
    """(..., 2, 6) derivatives of the scaled monomials."""
    x, y = xi[..., 0], xi[..., 1]
    z, o = np.zeros_like(x), np.ones_like(x)
    dx = np.stack([z, o, z, 2 * x, y, z], axis=-1)
    dy = np.stack([z, z, o, z, x, 2 * y], axis=-1)
    return np.stack([dx, dy], axis=-2)


def p2_nodes(tri: np.ndarray) -> np.ndarray:
    """Lagrange nodes (..., 6, 2) of triangles (..., 3, 2)."""
    mids = 0.5 * (tri + tri[..., [1, 2, 0], :])
    return np.concatenate([tri, mids], axis=-2)


def diameters(tri: np.ndarray) -> np.ndarray:
    d = np.linalg.norm(tri - tri[..., [1, 2, 0], :], axis=-1)
    return d.max(axis=-1)


def signed_areas(tri: np.ndarray) -> np.ndarray:
    e1 = tri[..., 1, :] - tri[..., 0, :]
    e2 = tri[..., 2, :] - tri[..., 0, :]
    return 0.5 * (e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0])


class P2Basis:
    """Batched P2 Lagrange basis on a set of triangles.

    Parameters
    ----------
    tri : ndarray, shape (M, 3, 2)
        Triangle vertex coordinates.
    """

    def __init__(self, tri: np.ndarray):
        tri = np.asarray(tri, dtype=float)
        if tri.ndim == 2:
            tri = tri[None]
        self.tri = tri
        self.center = tri.mean(axis=1)
        self.scale = diameters(tri)
        self.area = np.abs(signed_areas(tri))
        vand = monomials(self.local(p2_nodes(tri)))
        # monomial coefficients = T @ (nodal P2 coefficients)
        self.T = np.linalg.inv(vand)

    def __len__(self):
        return self.tri.shape[0]

    def local(self, x: np.ndarray, idx=None) -> np.ndarray:
        """Scaled coordinates of points ``x`` of shape (M, P, 2) or (M, 2)."""
        c = self.center if idx is None else self.center[idx]
        s = self.scale if idx is None else self.scale[idx]
        if x.ndim == c.ndim + 1:
            return (x - c[:, None, :]) / s[:, None, None]
        return (x - c) / s[:, None]

    def value_rows(self, x: np.ndarray, idx=None) -> np.ndarray:
        """Rows (M, P, 6) evaluating each element's field at points (M, P, 2)."""
        T = self.T if idx is None else self.T[idx]
        return np.einsum("mpk,mkj->mpj", monomials(self.local(x, idx)), T)

    def grad_rows(self, x: np.ndarray, idx=None) -> np.ndarray:
        """Rows (M, P, 2, 6) for the physical gradient at points (M, P, 2)."""
        T = self.T if idx is None else self.T[idx]
        s = self.scale if idx is None else self.scale[idx]
        g = np.einsum("mpdk,mkj->mpdj", monomial_grads(self.local(x, idx)), T)
        return g / s[:, None, None, None]

    def hess_rows(self, idx=None) -> np.ndarray:
        """Rows (M, 3, 6) giving (u_xx, u_xy, u_yy), constant per element."""
        T = self.T if idx is None else self.T[idx]
        s = self.scale if idx is None else self.scale[idx]
        h = np.stack([2.0 * T[:, 3], T[:, 4], 2.0 * T[:, 5]], axis=1)
        return h / (s**2)[:, None, None]

    def stiffness(self, material: MaterialParams) -> np.ndarray:
        """Exact local matrices (M, 6, 6) of (sigma(phi_i), kappa(phi_j))_K."""
        H = self.hess_rows()
        A = np.einsum("m,mai,ab,mbj->mij", self.area, H, material.constitutive(), H)
        return 0.5 * (A + A.transpose(0, 2, 1))

    def load(self, f, degree: int = 4) -> np.ndarray:
        """Local load vectors (M, 6) of (f, phi_i)_K."""
        pts, wts = map_triangle_points(self.tri, degree)
        vals = f(pts[..., 0], pts[..., 1])
        return np.einsum("mp,mp,mpj->mj", wts, vals, self.value_rows(pts))


# ---------------------------------------------------------------------------
# single-element API


@dataclass(frozen=True)
class LocalQuadratic:
    """A quadratic on one triangle, stored by its six P2 nodal values."""

    element: int
    coeffs: np.ndarray
    vertices: np.ndarray

    @classmethod
    def interpolate(cls, func, vertices, element: int = 0) -> "LocalQuadratic":
        nodes = p2_nodes(np.asarray(vertices, dtype=float))
        return cls(element, np.asarray(func(nodes[:, 0], nodes[:, 1]), dtype=float), np.asarray(vertices, float))


@dataclass(frozen=True)
class MomentState:
    kappa: np.ndarray
    sigma: np.ndarray


def p2_eval(q: LocalQuadratic, x, order: int = 0):
    """Evaluate value, gradient or hessian of ``q`` at ``x``.

    ``x`` may lie outside the triangle; the polynomial is extended.
    """
    basis = P2Basis(q.vertices)
    if order == 2:
        h = basis.hess_rows()[0] @ q.coeffs
        return np.array([[h[0], h[1]], [h[1], h[2]]])
    pts = np.atleast_2d(np.asarray(x, dtype=float))[None]
    if order == 0:
        out = basis.value_rows(pts)[0] @ q.coeffs
    elif order == 1:
        out = basis.grad_rows(pts)[0] @ q.coeffs
    else:
        raise ValueError("order must be 0, 1 or 2")
    return out[0] if np.ndim(x) == 1 else out


def constitutive(kappa: np.ndarray, material: MaterialParams) -> np.ndarray:
    kappa = np.asarray(kappa, dtype=float)
    tr = np.trace(kappa, axis1=-2, axis2=-1)[..., None, None]
    return material.lam * tr * np.eye(2) + material.mu * kappa


def moments(q: LocalQuadratic, material: MaterialParams) -> MomentState:
    kappa = p2_eval(q, None, order=2)
    return MomentState(kappa=kappa, sigma=constitutive(kappa, material))


def edge_traces(q: LocalQuadratic, edge, material: MaterialParams) -> tuple[float, float, float]:
    """Bending moment, twisting moment and transversal force on an edge.

    ``edge`` is anything with a ``normal`` attribute, or a normal vector.
    The transversal force of a quadratic vanishes identically.
    """
    n = np.asarray(getattr(edge, "normal", edge), dtype=float)
    t = np.array([n[1], -n[0]])
    sigma = moments(q, material).sigma
    return float(n @ sigma @ n), float(n @ sigma @ t), 0.0


def element_stiffness(vertices, material: MaterialParams) -> np.ndarray:
    tri = np.asarray(vertices, dtype=float)
    if signed_areas(tri) <= 0:
        raise ValueError("triangle must have positive (counterclockwise) area")
    return P2Basis(tri).stiffness(material)[0]
