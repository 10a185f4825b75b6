"""Scaled monomial bases, Legendre edge bases and quadrature on polygons/segments."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre

__all__ = [
    "QuadratureRule",
    "ElementBasis",
    "EdgeBasis",
    "dim_pk",
    "monomial_exponents",
    "triangle_rule",
    "polygon_quadrature",
    "segment_quadrature",
    "element_quadrature",
    "edge_quadrature",
    "eval_element_basis",
    "eval_edge_basis",
    "element_mass_matrix",
    "edge_mass_matrix",
]


def dim_pk(k: int) -> int:
    """Dimension of P_k in two variables (0 for negative k)."""
    return (k + 1) * (k + 2) // 2 if k >= 0 else 0


@lru_cache(maxsize=None)
def monomial_exponents(k: int) -> np.ndarray:
    """Exponents ``(a, b)`` with ``a + b <= k``, by total degree, then decreasing ``a``."""
    exps = [(d - j, j) for d in range(k + 1) for j in range(d + 1)]
    out = np.array(exps, dtype=np.int64).reshape(-1, 2)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int


@dataclass(frozen=True)
class ElementBasis:
    """Scaled monomials ``((x - xc)/h)**a * ((y - yc)/h)**b``."""

    center: np.ndarray
    h: float
    degree: int

    @property
    def dim(self) -> int:
        return dim_pk(self.degree)

    def __call__(self, points):
        return eval_element_basis(self, points)


@dataclass(frozen=True)
class EdgeBasis:
    """Legendre polynomials in the reference coordinate ``t`` in [-1, 1]."""

    start: np.ndarray
    end: np.ndarray
    degree: int

    @property
    def dim(self) -> int:
        return self.degree + 1

    @property
    def length(self) -> float:
        return float(np.hypot(*(np.asarray(self.end) - np.asarray(self.start))))

    def reference_coordinate(self, points) -> np.ndarray:
        p0, p1 = np.asarray(self.start, float), np.asarray(self.end, float)
        mid, d = 0.5 * (p0 + p1), p1 - p0
        return 2.0 * ((np.asarray(points, float) - mid) @ d) / (d @ d)


# ---------------------------------------------------------------- quadrature


@lru_cache(maxsize=None)
def _gauss_legendre(n: int):
    x, w = legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=None)
def triangle_rule(degree: int):
    """Collapsed Gauss rule on the reference triangle (0,0), (1,0), (0,1).

    Exact for total degree ``degree``; returns barycentric-free reference
    points ``(n, 2)`` and weights summing to 1/2.
    """
    n = max(1, -(-(degree + 2) // 2))
    x, w = _gauss_legendre(n)
    u = 0.5 * (x + 1.0)
    wu = 0.5 * w
    U, V = np.meshgrid(u, u, indexing="ij")
    WU, WV = np.meshgrid(wu, wu, indexing="ij")
    px = U
    py = (1.0 - U) * V
    wt = WU * WV * (1.0 - U)
    pts = np.column_stack([px.ravel(), py.ravel()])
    wts = wt.ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


def polygon_quadrature(coords, center, degree: int) -> QuadratureRule:
    """Fan-triangulate a polygon from ``center`` and map a triangle rule onto each piece.

    The polygon must be star-shaped with respect to ``center``.
    """
    coords = np.asarray(coords, float)
    center = np.asarray(center, float)
    ref, wref = triangle_rule(degree)
    a = coords - center
    b = np.roll(coords, -1, axis=0) - center
    jac = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    if np.any(jac <= 0.0):
        raise ValueError("polygon is not star-shaped with respect to the fan center")
    pts = center + ref[None, :, 0:1] * a[:, None, :] + ref[None, :, 1:2] * b[:, None, :]
    wts = wref[None, :] * jac[:, None]
    return QuadratureRule(pts.reshape(-1, 2), wts.ravel(), degree)


def segment_quadrature(start, end, degree: int) -> QuadratureRule:
    """Gauss-Legendre with ``ceil((degree + 1) / 2)`` points on a segment."""
    n = max(1, -(-(degree + 1) // 2))
    x, w = _gauss_legendre(n)
    p0, p1 = np.asarray(start, float), np.asarray(end, float)
    length = float(np.hypot(*(p1 - p0)))
    pts = 0.5 * (p0 + p1) + 0.5 * x[:, None] * (p1 - p0)
    return QuadratureRule(pts, 0.5 * length * w, degree)


def element_quadrature(mesh, t: int, exactness: int) -> QuadratureRule:
    """Quadrature on element ``t`` of ``mesh``; fails loudly on a non-star-shaped element."""
    try:
        return polygon_quadrature(mesh.element_coords(t), mesh.centroids[t], exactness)
    except ValueError as exc:
        raise ValueError(f"element {t}: {exc}") from None


def edge_quadrature(mesh, e: int, exactness: int) -> QuadratureRule:
    v0, v1 = mesh.edges[e]
    return segment_quadrature(mesh.vertices[v0], mesh.vertices[v1], exactness)


# -------------------------------------------------------------------- bases


def scaled_monomials(rel: np.ndarray, k: int):
    """Values ``(n, dim)`` and gradients ``(n, dim, 2)`` of monomials in scaled coordinates.

    ``rel`` holds already-scaled coordinates ``(x - xc)/h``; gradients are
    with respect to the scaled coordinates.
    """
    rel = np.asarray(rel, float)
    exps = monomial_exponents(k)
    X = rel[..., 0:1]
    Y = rel[..., 1:2]
    a, b = exps[:, 0], exps[:, 1]
    powx = X ** np.arange(k + 1)
    powy = Y ** np.arange(k + 1)
    vals = powx[..., a] * powy[..., b]
    am1 = np.maximum(a - 1, 0)
    bm1 = np.maximum(b - 1, 0)
    gx = a * powx[..., am1] * powy[..., b]
    gy = b * powx[..., a] * powy[..., bm1]
    return vals, np.stack([gx, gy], axis=-1)


def eval_element_basis(basis: ElementBasis, points):
    """Basis values ``(n, dim)`` and physical gradients ``(n, dim, 2)``."""
    rel = (np.asarray(points, float) - basis.center) / basis.h
    vals, grads = scaled_monomials(rel, basis.degree)
    return vals, grads / basis.h


def eval_edge_basis(t, degree: int) -> np.ndarray:
    """Legendre values ``P_j(t)``, shape ``(len(t), degree + 1)``."""
    return legendre.legvander(np.asarray(t, float), degree)


def element_mass_matrix(basis: ElementBasis, quad: QuadratureRule, element_id=None) -> np.ndarray:
    """Gram matrix of the element basis; verified SPD by Cholesky."""
    vals, _ = eval_element_basis(basis, quad.points)
    M = (vals * quad.weights[:, None]).T @ vals
    M = 0.5 * (M + M.T)
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        where = f"element {element_id}" if element_id is not None else "element"
        raise np.linalg.LinAlgError(f"{where}: mass matrix is not positive definite") from None
    return M


def edge_mass_matrix(basis: EdgeBasis, quad: QuadratureRule) -> np.ndarray:
    t = basis.reference_coordinate(quad.points)
    vals = eval_edge_basis(t, basis.degree)
    return (vals * quad.weights[:, None]).T @ vals
