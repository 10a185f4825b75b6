"""L2 projections and discrete weak gradients on a single polygon.

Both weak gradients reduce to one scalar operator. For a scalar weak
function ``{w0, wb}`` with ``w0`` in P_a(T) and ``wb`` in P_kb(e) on every
edge, the weak gradient in [P_r(T)]^2 solves, for every test ``psi`` in P_r,

    (grad_w w, psi e_j)_T = (d_j w0, psi)_T - <w0 - wb, psi n_j>_dT.

The velocity gradient applies it to each velocity component with
``(a, kb, r) = (k, k, k-1)``; the pressure gradient uses ``(k-1, k, k)``.

Edge polynomials are written in Legendre polynomials of the coordinate
``t`` in [-1, 1] running counterclockwise around the element.
"""
from __future__ import annotations

import numpy as np

from .polybasis import (
    ElementBasis,
    dim_pk,
    eval_edge_basis,
    eval_element_basis,
    polygon_quadrature,
    segment_quadrature,
)

__all__ = [
    "LocalElement",
    "scalar_weak_gradient_matrix",
    "velocity_gradient_matrix",
    "pressure_gradient_matrix",
    "velocity_component_index",
    "weak_gradient_velocity",
    "weak_gradient_pressure",
    "project_interior",
    "project_edge",
    "project_tensor",
]


class LocalElement:
    """Geometry, quadrature and basis data of one polygon.

    Parameters
    ----------
    coords : (n, 2) array
        Counterclockwise vertices.
    center, h : optional
        Scaling of the monomial basis; default to the area centroid and the
        diameter.
    """

    def __init__(self, coords, center=None, h=None, element_id=None):
        from .mesh import _diameter, _polygon_centroid, _signed_area

        self.coords = np.asarray(coords, dtype=float)
        self.element_id = element_id
        self.area = _signed_area(self.coords)
        if self.area <= 0:
            raise ValueError(f"element {element_id}: vertices are not counterclockwise")
        self.center = _polygon_centroid(self.coords) if center is None else np.asarray(center, float)
        self.h = _diameter(self.coords) if h is None else float(h)
        self.starts = self.coords
        self.ends = np.roll(self.coords, -1, axis=0)
        d = self.ends - self.starts
        self.lengths = np.hypot(d[:, 0], d[:, 1])
        self.normals = np.column_stack([d[:, 1], -d[:, 0]]) / self.lengths[:, None]
        self._cache: dict = {}

    @classmethod
    def from_mesh(cls, mesh, t: int) -> "LocalElement":
        return cls(mesh.element_coords(t), mesh.centroids[t], mesh.diameters[t], element_id=t)

    @property
    def n_edges(self) -> int:
        return len(self.coords)

    def basis(self, degree: int) -> ElementBasis:
        return ElementBasis(self.center, self.h, degree)

    def quadrature(self, degree: int):
        key = ("quad", degree)
        if key not in self._cache:
            try:
                self._cache[key] = polygon_quadrature(self.coords, self.center, degree)
            except ValueError as exc:
                raise ValueError(f"element {self.element_id}: {exc}") from None
        return self._cache[key]

    def edge_quadrature(self, i: int, degree: int):
        key = ("equad", i, degree)
        if key not in self._cache:
            self._cache[key] = segment_quadrature(self.starts[i], self.ends[i], degree)
        return self._cache[key]

    def edge_coordinate(self, i: int, points) -> np.ndarray:
        mid = 0.5 * (self.starts[i] + self.ends[i])
        d = self.ends[i] - self.starts[i]
        return 2.0 * ((np.asarray(points, float) - mid) @ d) / (d @ d)

    def eval(self, degree: int, points):
        return eval_element_basis(self.basis(degree), points)

    def mass(self, degree: int, exactness: int | None = None) -> np.ndarray:
        q = 2 * degree + 2 if exactness is None else exactness
        key = ("mass", degree, q)
        if key not in self._cache:
            rule = self.quadrature(q)
            vals, _ = self.eval(degree, rule.points)
            M = (vals * rule.weights[:, None]).T @ vals
            M = 0.5 * (M + M.T)
            try:
                np.linalg.cholesky(M)
            except np.linalg.LinAlgError:
                raise np.linalg.LinAlgError(
                    f"element {self.element_id}: mass matrix of degree {degree} is singular"
                ) from None
            self._cache[key] = M
        return self._cache[key]

    def moments(self, degree: int) -> np.ndarray:
        """Integrals of the basis functions over the element."""
        rule = self.quadrature(max(degree, 1))
        vals, _ = self.eval(degree, rule.points)
        return rule.weights @ vals


def scalar_weak_gradient_matrix(
    elem: LocalElement,
    interior_degree: int,
    edge_degree: int,
    target_degree: int,
    form: str = "by_parts",
) -> np.ndarray:
    """Matrix mapping local scalar weak-function coefficients to weak-gradient coefficients.

    Columns: interior coefficients, then ``edge_degree + 1`` Legendre
    coefficients per edge in edge-loop order. Rows: ``x``-component
    coefficients in P_target, then ``y``-component.

    ``form="by_parts"`` integrates ``grad w0`` against the test polynomial and
    subtracts the jump term; ``form="definition"`` moves the derivative onto
    the test polynomial instead. Both give the same matrix up to round-off.
    """
    key = ("wgrad", interior_degree, edge_degree, target_degree, form)
    if key in elem._cache:
        return elem._cache[key]
    a, kb, r = interior_degree, edge_degree, target_degree
    q = 2 * max(a, kb, r) + 2
    n_int, n_r, n_b = dim_pk(a), dim_pk(r), kb + 1
    ncols = n_int + elem.n_edges * n_b
    rhs = np.zeros((2, n_r, ncols))

    rule = elem.quadrature(q)
    phi, dphi = elem.eval(a, rule.points)
    psi, dpsi = elem.eval(r, rule.points)
    w = rule.weights[:, None]
    for j in range(2):
        if form == "by_parts":
            rhs[j, :, :n_int] = (psi * w).T @ dphi[:, :, j]
        elif form == "definition":
            rhs[j, :, :n_int] = -(dpsi[:, :, j] * w).T @ phi
        else:
            raise ValueError(f"unknown form {form!r}")

    for i in range(elem.n_edges):
        erule = elem.edge_quadrature(i, q)
        ew = erule.weights[:, None]
        phi_e, _ = elem.eval(a, erule.points)
        psi_e, _ = elem.eval(r, erule.points)
        leg = eval_edge_basis(elem.edge_coordinate(i, erule.points), kb)
        cols = slice(n_int + i * n_b, n_int + (i + 1) * n_b)
        for j in range(2):
            nj = elem.normals[i, j]
            if form == "by_parts":
                rhs[j, :, :n_int] -= nj * (psi_e * ew).T @ phi_e
            rhs[j, :, cols] += nj * (psi_e * ew).T @ leg

    M = elem.mass(r)
    G = np.vstack([np.linalg.solve(M, rhs[j]) for j in range(2)])
    elem._cache[key] = G
    return G


def velocity_gradient_matrix(elem: LocalElement, k: int, form: str = "by_parts") -> np.ndarray:
    """Scalar weak-gradient matrix for one velocity component (P_k / P_k(e) -> [P_{k-1}]^2)."""
    return scalar_weak_gradient_matrix(elem, k, k, k - 1, form)


def pressure_gradient_matrix(elem: LocalElement, k: int, form: str = "by_parts") -> np.ndarray:
    """Weak-gradient matrix for pressures (P_{k-1} / P_k(e) -> [P_k]^2)."""
    return scalar_weak_gradient_matrix(elem, k - 1, k, k, form)


def velocity_component_index(n_edges: int, k: int, component: int) -> np.ndarray:
    """Local velocity DOFs of one component, in scalar weak-function order.

    Local velocity layout: interior x, interior y, then for each edge x then y.
    """
    nk, nb = dim_pk(k), k + 1
    interior = component * nk + np.arange(nk)
    edges = [2 * nk + e * 2 * nb + component * nb + np.arange(nb) for e in range(n_edges)]
    return np.concatenate([interior] + edges)


def weak_gradient_velocity(elem: LocalElement, k: int, v_local, form: str = "by_parts") -> np.ndarray:
    """Weak gradient of a local weak velocity; returns ``g[i, j, :]`` = coefficients of d_j v_i."""
    v_local = np.asarray(v_local, float)
    G = velocity_gradient_matrix(elem, k, form)
    nr = dim_pk(k - 1)
    out = np.empty((2, 2, nr))
    for i in range(2):
        out[i] = (G @ v_local[velocity_component_index(elem.n_edges, k, i)]).reshape(2, nr)
    return out


def weak_gradient_pressure(elem: LocalElement, k: int, q_local, form: str = "by_parts") -> np.ndarray:
    """Weak gradient of a local weak pressure; returns ``(2, dim P_k)`` coefficients."""
    G = pressure_gradient_matrix(elem, k, form)
    return (G @ np.asarray(q_local, float)).reshape(2, dim_pk(k))


# -------------------------------------------------------------- projections


def _evaluate(f, points):
    base = points.shape[:-1]
    vals = np.asarray(f(points[..., 0], points[..., 1]), dtype=float)
    if vals.ndim == 0 or vals.shape == base:
        return np.broadcast_to(vals, base)[None], True
    if vals.ndim == 1:
        vals = vals.reshape(-1, *([1] * len(base)))
    return np.broadcast_to(vals, (vals.shape[0],) + base), False


def project_interior(elem: LocalElement, f, degree: int, exactness: int | None = None) -> np.ndarray:
    """L2 projection of ``f(x, y)`` onto P_degree(T).

    ``f`` may return a scalar field or a stacked ``(ncomp, ...)`` field;
    the result has shape ``(dim,)`` or ``(ncomp, dim)`` accordingly.
    """
    q = 2 * degree + 2 if exactness is None else exactness
    rule = elem.quadrature(q)
    vals, _ = elem.eval(degree, rule.points)
    fv, scalar = _evaluate(f, rule.points)
    b = (fv * rule.weights) @ vals
    c = np.linalg.solve(elem.mass(degree), b.T).T
    return c[0] if scalar else c


def project_edge(start, end, f, degree: int, exactness: int | None = None) -> np.ndarray:
    """L2 projection onto Legendre polynomials of degree ``degree`` on the segment ``start -> end``.

    The Legendre mass matrix is diagonal, ``length / (2j + 1)``.
    """
    q = 2 * degree + 2 if exactness is None else exactness
    rule = segment_quadrature(start, end, q)
    p0, p1 = np.asarray(start, float), np.asarray(end, float)
    d = p1 - p0
    t = 2.0 * ((rule.points - 0.5 * (p0 + p1)) @ d) / (d @ d)
    leg = eval_edge_basis(t, degree)
    fv, scalar = _evaluate(f, rule.points)
    length = float(np.hypot(*d))
    c = (fv * rule.weights) @ leg * ((2 * np.arange(degree + 1) + 1) / length)
    return c[0] if scalar else c


def project_tensor(elem: LocalElement, G, degree: int) -> np.ndarray:
    """Componentwise projection of a 2x2 tensor field; returns ``(2, 2, dim)``."""
    c = project_interior(elem, lambda x, y: np.asarray(G(x, y), float).reshape(4, *np.shape(x)), degree)
    return c.reshape(2, 2, -1)
