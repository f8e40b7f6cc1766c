"""Gauss rules on the reference triangle and on straight edges.

Triangle rules are collapsed (Stroud conical) products of a Gauss-Jacobi
rule and a Gauss-Legendre rule, so exactness to a given polynomial degree
follows directly from the 1D rules.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

MAX_DEGREE = 6


def _npoints(degree: int) -> int:
    if not 0 <= degree <= MAX_DEGREE:
        raise ValueError(f"unsupported quadrature degree {degree} (0..{MAX_DEGREE})")
    return max(1, -(-(degree + 1) // 2))


@lru_cache(maxsize=None)
def _triangle_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    q = _npoints(degree)
    tj, wj = roots_jacobi(q, 1.0, 0.0)
    tl, wl = np.polynomial.legendre.leggauss(q)
    u = 0.5 * (1.0 + tj)
    v = 0.5 * (1.0 + tl)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    pts = np.column_stack([uu.ravel(), (vv * (1.0 - uu)).ravel()])
    wts = np.outer(wj / 4.0, wl / 2.0).ravel()
    pts.flags.writeable = False
    wts.flags.writeable = False
    return pts, wts


@lru_cache(maxsize=None)
def _edge_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    q = _npoints(degree)
    t, w = np.polynomial.legendre.leggauss(q)
    s = 0.5 * (1.0 + t)
    w = 0.5 * w
    s.flags.writeable = False
    w.flags.writeable = False
    return s, w


def triangle_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Points and weights on the reference triangle (0,0), (1,0), (0,1).

    Weights sum to 1/2, the reference area.
    """
    return _triangle_rule(int(degree))


def edge_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre parameters in [0, 1] and weights summing to 1."""
    return _edge_rule(int(degree))


def quadrature(kind: str, degree: int, vertices=None):
    """Quadrature on a physical triangle or edge.

    Parameters
    ----------
    kind : {"triangle", "edge"}
    degree : int
        Polynomial degree integrated exactly.
    vertices : array_like, optional
        3x2 triangle corners or 2x2 edge endpoints. When omitted the
        reference rule is returned.

    Returns
    -------
    points, weights : ndarray
        Weights sum to the triangle area or the edge length.
    """
    if kind == "triangle":
        ref, w = triangle_rule(degree)
        if vertices is None:
            return ref.copy(), w.copy()
        v = np.asarray(vertices, dtype=float)
        jac = np.column_stack([v[1] - v[0], v[2] - v[0]])
        det = abs(np.linalg.det(jac))
        return v[0] + ref @ jac.T, w * det
    if kind == "edge":
        s, w = edge_rule(degree)
        if vertices is None:
            return s.copy(), w.copy()
        v = np.asarray(vertices, dtype=float)
        length = float(np.hypot(*(v[1] - v[0])))
        return v[0] + s[:, None] * (v[1] - v[0]), w * length
    raise ValueError(f"unknown quadrature kind {kind!r}")


def map_triangle_points(tri: np.ndarray, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Batched physical rule for triangles ``tri`` of shape (M, 3, 2).

    Returns points (M, Q, 2) and weights (M, Q).
    """
    ref, w = triangle_rule(degree)
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    det = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    pts = tri[:, None, 0] + ref[None, :, 0, None] * e1[:, None] + ref[None, :, 1, None] * e2[:, None]
    return pts, det[:, None] * w[None, :]
