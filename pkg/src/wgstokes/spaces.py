"""Global DOF layout, weak function containers and mesh-wide projections.

Global velocity layout: for every element ``[x coeffs, y coeffs]`` of
P_k(T), followed by every edge ``[x coeffs, y coeffs]`` of P_k(e). Global
pressure layout: P_{k-1}(T) coefficients per element, then P_k(e) per edge.
Global edge polynomials are parameterized from ``v0`` to ``v1``.

Elements are grouped by shape (vertex offsets from the centroid), so
structured meshes need only a handful of distinct element matrices.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .forms import LocalForms, local_forms, n_pressure_local, n_velocity_local
from .mesh import PolygonalMesh
from .polybasis import _gauss_legendre, dim_pk, eval_edge_basis
from .weakops import LocalElement

__all__ = [
    "DofMap",
    "ElementGroup",
    "Discretization",
    "WeakVelocity",
    "WeakPressure",
    "project_Qh",
    "project_Qh_pressure",
]


@dataclass(frozen=True)
class DofMap:
    n_elements: int
    n_edges: int
    k: int
    boundary_edges: np.ndarray

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("polynomial degree k must be at least 1")

    @property
    def nk(self) -> int:
        return dim_pk(self.k)

    @property
    def npk(self) -> int:
        return dim_pk(self.k - 1)

    @property
    def nb(self) -> int:
        return self.k + 1

    @property
    def n_u_interior(self) -> int:
        return 2 * self.nk * self.n_elements

    @property
    def n_u(self) -> int:
        return self.n_u_interior + 2 * self.nb * self.n_edges

    @property
    def n_p_interior(self) -> int:
        return self.npk * self.n_elements

    @property
    def n_p(self) -> int:
        return self.n_p_interior + self.nb * self.n_edges

    def velocity_interior(self, t) -> np.ndarray:
        t = np.asarray(t)
        return (t * 2 * self.nk)[..., None] + np.arange(2 * self.nk)

    def velocity_edge(self, e) -> np.ndarray:
        e = np.asarray(e)
        return self.n_u_interior + (e * 2 * self.nb)[..., None] + np.arange(2 * self.nb)

    def pressure_interior(self, t) -> np.ndarray:
        t = np.asarray(t)
        return (t * self.npk)[..., None] + np.arange(self.npk)

    def pressure_edge(self, e) -> np.ndarray:
        e = np.asarray(e)
        return self.n_p_interior + (e * self.nb)[..., None] + np.arange(self.nb)

    @cached_property
    def boundary_velocity_dofs(self) -> np.ndarray:
        return np.sort(self.velocity_edge(self.boundary_edges).ravel())


@dataclass
class ElementGroup:
    """Congruent elements sharing one set of local matrices.

    ``*_dofs`` are ``(n_members, n_local)`` global indices and ``*_signs``
    the matching ``+-1`` factors relating local to global edge coefficients.
    """

    ids: np.ndarray
    elem: LocalElement
    vel_dofs: np.ndarray
    vel_signs: np.ndarray
    pres_dofs: np.ndarray
    pres_signs: np.ndarray


def _shape_key(mesh: PolygonalMesh, t: int, tol: float) -> bytes:
    rel = mesh.element_coords(t) - mesh.centroids[t]
    q = np.round(rel / tol).astype(np.int64)
    return len(rel).to_bytes(4, "little") + q.tobytes()


class Discretization:
    """Mesh, degree, DOF map and cached element matrices."""

    def __init__(self, mesh: PolygonalMesh, k: int, group_tol: float = 1e-11):
        if k < 1:
            raise ValueError("polynomial degree k must be at least 1")
        self.mesh = mesh
        self.k = k
        self.dofs = DofMap(mesh.n_elements, mesh.n_edges, k, mesh.boundary_edges)
        span = float(np.ptp(mesh.vertices, axis=0).max())
        self.groups = self._build_groups(group_tol * span)
        self._forms: dict[int, LocalForms] = {}
        self.element_group = np.empty(mesh.n_elements, dtype=np.int64)
        self.element_slot = np.empty(mesh.n_elements, dtype=np.int64)
        for g, grp in enumerate(self.groups):
            self.element_group[grp.ids] = g
            self.element_slot[grp.ids] = np.arange(len(grp.ids))

    def _build_groups(self, tol: float) -> list[ElementGroup]:
        mesh, k, dm = self.mesh, self.k, self.dofs
        buckets: dict[bytes, list[int]] = {}
        for t in range(mesh.n_elements):
            buckets.setdefault(_shape_key(mesh, t, tol), []).append(t)
        nb = dm.nb
        parity = (-1.0) ** np.arange(nb)
        groups = []
        for members in buckets.values():
            ids = np.array(members, dtype=np.int64)
            ne = len(mesh.elements[ids[0]])
            edges = np.array([mesh.element_edges[t] for t in ids])
            signs = np.array([mesh.element_edge_signs[t] for t in ids])
            # reversed edge: P_l(-t) = (-1)^l P_l(t)
            esign = np.where(signs[:, :, None] > 0, 1.0, parity[None, None, :])

            vdofs = np.empty((len(ids), n_velocity_local(ne, k)), dtype=np.int64)
            vsign = np.ones_like(vdofs, dtype=float)
            vdofs[:, : 2 * dm.nk] = dm.velocity_interior(ids)
            ve = dm.velocity_edge(edges)  # (n, ne, 2 nb)
            vdofs[:, 2 * dm.nk :] = ve.reshape(len(ids), -1)
            vsign[:, 2 * dm.nk :] = np.concatenate([esign, esign], axis=2).reshape(len(ids), -1)

            pdofs = np.empty((len(ids), n_pressure_local(ne, k)), dtype=np.int64)
            psign = np.ones_like(pdofs, dtype=float)
            pdofs[:, : dm.npk] = dm.pressure_interior(ids)
            pdofs[:, dm.npk :] = dm.pressure_edge(edges).reshape(len(ids), -1)
            psign[:, dm.npk :] = esign.reshape(len(ids), -1)

            groups.append(
                ElementGroup(ids, LocalElement.from_mesh(mesh, int(ids[0])), vdofs, vsign, pdofs, psign)
            )
        return groups

    def forms(self, g: int) -> LocalForms:
        if g not in self._forms:
            self._forms[g] = local_forms(self.groups[g].elem, self.k)
        return self._forms[g]

    def local_element(self, t: int) -> LocalElement:
        return LocalElement.from_mesh(self.mesh, t)

    def group_points(self, g: int, degree: int):
        """Quadrature points ``(n_members, nq, 2)``, weights ``(nq,)`` and the representative's rule."""
        grp = self.groups[g]
        rule = grp.elem.quadrature(degree)
        rel = rule.points - grp.elem.center
        pts = self.mesh.centroids[grp.ids][:, None, :] + rel[None]
        return pts, rule

    def local_velocity(self, t: int, coeffs: np.ndarray) -> np.ndarray:
        grp = self.groups[self.element_group[t]]
        s = self.element_slot[t]
        return coeffs[grp.vel_dofs[s]] * grp.vel_signs[s]

    def local_pressure(self, t: int, coeffs: np.ndarray) -> np.ndarray:
        grp = self.groups[self.element_group[t]]
        s = self.element_slot[t]
        return coeffs[grp.pres_dofs[s]] * grp.pres_signs[s]


@dataclass
class WeakVelocity:
    dofs: DofMap
    coeffs: np.ndarray

    def interior(self, t: int) -> np.ndarray:
        return self.coeffs[self.dofs.velocity_interior(t)].reshape(2, self.dofs.nk)

    def edge(self, e: int) -> np.ndarray:
        return self.coeffs[self.dofs.velocity_edge(e)].reshape(2, self.dofs.nb)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))


@dataclass
class WeakPressure:
    dofs: DofMap
    coeffs: np.ndarray

    def interior(self, t: int) -> np.ndarray:
        return self.coeffs[self.dofs.pressure_interior(t)]

    def edge(self, e: int) -> np.ndarray:
        return self.coeffs[self.dofs.pressure_edge(e)]

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))


# ---------------------------------------------------------------- projections


def _eval_field(f, pts, ncomp):
    vals = np.asarray(f(pts[..., 0], pts[..., 1]), dtype=float)
    shape = pts.shape[:-1]
    if ncomp is None:
        return np.broadcast_to(vals, shape)[None]
    if vals.ndim == 1 and vals.shape[0] == ncomp and shape != (ncomp,):
        vals = vals.reshape(ncomp, *([1] * len(shape)))
    return np.broadcast_to(vals, (ncomp,) + shape)


def interior_projection(disc: Discretization, f, degree: int, ncomp=None, exactness=None) -> np.ndarray:
    """Element-wise L2 projection onto P_degree; returns ``(ncomp or 1, n_elements, dim)``."""
    q = max(2 * disc.k + 2, 2 * degree + 2) if exactness is None else exactness
    out = np.empty((ncomp or 1, disc.mesh.n_elements, dim_pk(degree)))
    for g, grp in enumerate(disc.groups):
        pts, rule = disc.group_points(g, q)
        vals, _ = grp.elem.eval(degree, rule.points)
        fv = _eval_field(f, pts, ncomp)
        b = (fv * rule.weights) @ vals
        out[:, grp.ids] = np.linalg.solve(grp.elem.mass(degree), b.reshape(-1, b.shape[-1]).T).T.reshape(b.shape)
    return out


def edge_projection(mesh: PolygonalMesh, f, degree: int, edges=None, ncomp=None, exactness=None) -> np.ndarray:
    """L2 projection onto P_degree(e) in global edge orientation; ``(ncomp or 1, n, degree+1)``."""
    edges = np.arange(mesh.n_edges) if edges is None else np.asarray(edges)
    q = 2 * degree + 2 if exactness is None else exactness
    x, w = _gauss_legendre(max(1, -(-(q + 1) // 2)))
    p0 = mesh.vertices[mesh.edges[edges, 0]]
    p1 = mesh.vertices[mesh.edges[edges, 1]]
    pts = 0.5 * (p0 + p1)[:, None, :] + 0.5 * x[None, :, None] * (p1 - p0)[:, None, :]
    fv = _eval_field(f, pts, ncomp)
    leg = eval_edge_basis(x, degree)
    # (2l+1)/L * int_e f P_l with ds = L/2 dt
    return 0.5 * (fv * w) @ leg * (2 * np.arange(degree + 1) + 1)


def project_Qh(disc: Discretization, u) -> WeakVelocity:
    """``{Q_0 u, Q_b u}`` for a vector field ``u(x, y) -> (2, ...)``."""
    dm = disc.dofs
    coeffs = np.empty(dm.n_u)
    interior = interior_projection(disc, u, disc.k, ncomp=2)  # (2, nel, nk)
    coeffs[: dm.n_u_interior] = interior.transpose(1, 0, 2).ravel()
    edge = edge_projection(disc.mesh, u, disc.k, ncomp=2)  # (2, nE, nb)
    coeffs[dm.n_u_interior :] = edge.transpose(1, 0, 2).ravel()
    return WeakVelocity(dm, coeffs)


def project_Qh_pressure(disc: Discretization, p) -> WeakPressure:
    """``{Q0~ p, Qb~ p}``: interior degree k-1, edge degree k."""
    dm = disc.dofs
    coeffs = np.empty(dm.n_p)
    coeffs[: dm.n_p_interior] = interior_projection(disc, p, disc.k - 1)[0].ravel()
    coeffs[dm.n_p_interior :] = edge_projection(disc.mesh, p, disc.k)[0].ravel()
    return WeakPressure(dm, coeffs)
