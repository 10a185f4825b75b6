"""Global saddle-point assembly, boundary conditions and linear solvers.

Unknowns of the reduced system, in order: free velocity DOFs (all velocity
DOFs except the edge DOFs on the domain boundary), all pressure DOFs and
one Lagrange multiplier enforcing ``sum_T int_T p0 = 0``::

    [ A_ff   B_f   0 ] [u_f]   [F_f - A_fb u_b ]
    [ B_f^T  -C    m ] [ p ] = [ G - B_b^T u_b ]
    [ 0      m^T   0 ] [lam]   [       0       ]
"""
from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import PolygonalMesh
from .polybasis import _gauss_legendre
from .spaces import (
    Discretization,
    WeakPressure,
    WeakVelocity,
    _eval_field,
    edge_projection,
)

__all__ = [
    "SolverError",
    "SaddleSystem",
    "StokesSolution",
    "CondensedSystem",
    "assemble",
    "solve",
    "static_condensation",
    "boundary_flux",
]

log = logging.getLogger(__name__)

# larger thresholds trade diagonal pivots for row swaps that destroy the ND fill pattern
PIVOT_THRESHOLD = 1e-6


class SolverError(RuntimeError):
    """Linear solve failed; ``residual_history`` holds relative residuals seen so far."""

    def __init__(self, message, residual_history=()):
        super().__init__(message)
        self.residual_history = list(residual_history)


@dataclass
class SaddleSystem:
    disc: Discretization
    A: sp.csr_matrix
    B: sp.csr_matrix
    C: sp.csr_matrix
    F: np.ndarray
    G: np.ndarray
    m: np.ndarray
    u_boundary: np.ndarray
    viscosity: float = 1.0
    _K: sp.csc_matrix | None = field(default=None, repr=False)

    @property
    def dofs(self):
        return self.disc.dofs

    @property
    def free(self) -> np.ndarray:
        mask = np.ones(self.dofs.n_u, dtype=bool)
        mask[self.dofs.boundary_velocity_dofs] = False
        return np.flatnonzero(mask)

    @property
    def n_free(self) -> int:
        return self.dofs.n_u - len(self.dofs.boundary_velocity_dofs)

    def full_matrix(self) -> sp.csr_matrix:
        """Unconstrained ``[[A, B], [B^T, -C]]`` over all velocity and pressure DOFs."""
        return sp.bmat([[self.A, self.B], [self.B.T, -self.C]], format="csr")

    def matrix(self) -> sp.csc_matrix:
        """Bordered matrix on free velocity DOFs, pressures and the multiplier."""
        if self._K is None:
            f = self.free
            Af = self.A[f][:, f]
            Bf = self.B[f]
            m = sp.csr_matrix(self.m.reshape(-1, 1))
            self._K = sp.bmat(
                [[Af, Bf, None], [Bf.T, -self.C, m], [None, m.T, None]], format="csc"
            )
        return self._K

    def rhs(self) -> np.ndarray:
        bd = self.dofs.boundary_velocity_dofs
        f = self.free
        ub = self.u_boundary
        top = self.F[f] - self.A[f][:, bd] @ ub
        mid = self.G - self.B[bd].T @ ub
        return np.concatenate([top, mid, [0.0]])

    def expand(self, x: np.ndarray):
        """Split a reduced solution vector into full velocity, pressure and multiplier."""
        dm = self.dofs
        u = np.empty(dm.n_u)
        u[self.free] = x[: self.n_free]
        u[dm.boundary_velocity_dofs] = self.u_boundary
        p = x[self.n_free : self.n_free + dm.n_p]
        return u, p, float(x[-1])


@dataclass
class StokesSolution:
    u: WeakVelocity
    p: WeakPressure
    multiplier: float
    stats: dict


def boundary_flux(mesh: PolygonalMesh, g, degree: int = 8) -> float:
    """Numerical ``int_dOmega g . n ds``."""
    edges = mesh.boundary_edges
    x, w = _gauss_legendre(max(1, (degree + 2) // 2))
    p0 = mesh.vertices[mesh.edges[edges, 0]]
    p1 = mesh.vertices[mesh.edges[edges, 1]]
    pts = 0.5 * (p0 + p1)[:, None, :] + 0.5 * x[None, :, None] * (p1 - p0)[:, None, :]
    gv = _eval_field(g, pts, 2)
    gn = np.einsum("cnq,nc->nq", gv, mesh.edge_normals[edges])
    return float(((gn * w).sum(axis=1) * 0.5 * mesh.edge_lengths[edges]).sum())


def _scatter(n_rows, n_cols, blocks):
    rows, cols, vals = [], [], []
    for K, rdofs, rsign, cdofs, csign in blocks:
        v = K[None] * rsign[:, :, None] * csign[:, None, :]
        rows.append(np.broadcast_to(rdofs[:, :, None], v.shape).ravel())
        cols.append(np.broadcast_to(cdofs[:, None, :], v.shape).ravel())
        vals.append(v.ravel())
    M = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n_rows, n_cols)
    ).tocsr()
    M.sum_duplicates()
    M.eliminate_zeros()
    return M


def assemble(
    disc: Discretization | PolygonalMesh,
    k: int | None = None,
    f=None,
    g=None,
    viscosity: float = 1.0,
    compat_tol: float = 1e-8,
) -> SaddleSystem:
    """Assemble the weak Galerkin Stokes system.

    ``f(x, y)`` and ``g(x, y)`` return stacked ``(2, ...)`` arrays; ``None``
    means zero. Boundary velocity edge DOFs are set to the edge L2
    projection of ``g``, and the continuity equation receives the boundary
    flux ``<g.n, q_b>`` so that nonzero normal boundary data stays
    consistent.
    """
    if isinstance(disc, PolygonalMesh):
        if k is None:
            raise ValueError("k is required when assembling from a mesh")
        disc = Discretization(disc, k)
    elif k is not None and k != disc.k:
        raise ValueError(f"k={k} does not match the discretization degree {disc.k}")
    dm = disc.dofs
    mesh = disc.mesh
    t0 = time.perf_counter()

    a_blocks, b_blocks, c_blocks = [], [], []
    F = np.zeros(dm.n_u)
    m = np.zeros(dm.n_p)
    q = 2 * disc.k + 2
    for gi, grp in enumerate(disc.groups):
        lf = disc.forms(gi)
        a_blocks.append((viscosity * lf.A, grp.vel_dofs, grp.vel_signs, grp.vel_dofs, grp.vel_signs))
        b_blocks.append((lf.B, grp.vel_dofs, grp.vel_signs, grp.pres_dofs, grp.pres_signs))
        c_blocks.append((lf.C, grp.pres_dofs, grp.pres_signs, grp.pres_dofs, grp.pres_signs))
        m[dm.pressure_interior(grp.ids)] = lf.pressure_moments[None, :]
        if f is not None:
            pts, rule = disc.group_points(gi, q)
            vals, _ = grp.elem.eval(disc.k, rule.points)
            fv = _eval_field(f, pts, 2)
            load = (fv * rule.weights) @ vals  # (2, nel, nk)
            F[dm.velocity_interior(grp.ids)] = load.transpose(1, 0, 2).reshape(len(grp.ids), -1)

    A = _scatter(dm.n_u, dm.n_u, a_blocks)
    B = _scatter(dm.n_u, dm.n_p, b_blocks)
    C = _scatter(dm.n_p, dm.n_p, c_blocks)

    bd_edges = mesh.boundary_edges
    ub = np.zeros(len(dm.boundary_velocity_dofs))
    G = np.zeros(dm.n_p)
    if g is not None:
        try:
            flux = boundary_flux(mesh, g)
            gb = edge_projection(mesh, g, disc.k, edges=bd_edges, ncomp=2)  # (2, nb_edges, nb)
        except Exception as exc:
            raise ValueError(f"boundary data g could not be evaluated on the boundary: {exc}") from exc
        scale = max(1.0, float(np.abs(gb).max()))
        if abs(flux) > compat_tol * scale:
            warnings.warn(
                f"boundary data violates the compatibility condition: flux = {flux:.3e}",
                RuntimeWarning,
                stacklevel=2,
            )
        vals = np.zeros(dm.n_u)
        vals[dm.velocity_edge(bd_edges)] = gb.transpose(1, 0, 2).reshape(len(bd_edges), -1)
        ub = vals[dm.boundary_velocity_dofs]
        # <u_b . n, P_l>_e = (c_l . n) L / (2l + 1)
        normals = mesh.edge_normals[bd_edges]
        cn = np.einsum("cel,ec->el", gb, normals)
        scale_l = mesh.edge_lengths[bd_edges, None] / (2 * np.arange(dm.nb) + 1)
        G[dm.pressure_edge(bd_edges)] = cn * scale_l

    log.debug("assembled n_u=%d n_p=%d in %.2fs", dm.n_u, dm.n_p, time.perf_counter() - t0)
    return SaddleSystem(disc, A, B, C, F, G, m, ub, viscosity)


# ---------------------------------------------------------------------- solve


def _relres(K, x, b):
    nb = np.linalg.norm(b)
    r = np.linalg.norm(b - K @ x)
    return r / nb if nb > 0 else r


def fill_reducing_order(K) -> np.ndarray | None:
    """Nested-dissection ordering of the symmetric pattern; dense rows go last.

    Returns ``None`` when METIS bindings are unavailable.
    """
    try:
        import pymetis
    except ImportError:
        return None
    K = sp.csr_matrix(K)
    n = K.shape[0]
    deg = np.diff(K.indptr)
    dense = deg > max(200, 20 * np.median(deg))
    keep = np.flatnonzero(~dense)
    G = K[keep][:, keep]
    G = (abs(G) + abs(G.T)).tocsr()
    G.setdiag(0)
    G.eliminate_zeros()
    if G.nnz == 0:
        return None
    perm, _ = pymetis.nested_dissection(pymetis.CSRAdjacency(G.indptr, G.indices))
    order = np.concatenate([keep[np.asarray(perm)], np.flatnonzero(dense)])
    assert len(order) == n
    return order


def _direct(K, b):
    """Sparse LU with a symmetric fill-reducing permutation and diagonal-preferring pivots."""
    order = fill_reducing_order(K)
    opts = dict(SymmetricMode=True)
    try:
        if order is None:
            lu = spla.splu(sp.csc_matrix(K), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=PIVOT_THRESHOLD, options=opts)
            x = lu.solve(b)
        else:
            Kp = sp.csc_matrix(K)[order][:, order].tocsc()
            lu = spla.splu(Kp, permc_spec="NATURAL", diag_pivot_thresh=PIVOT_THRESHOLD, options=opts)
            x = np.empty_like(b)
            x[order] = lu.solve(b[order])
    except RuntimeError as exc:
        raise SolverError(f"sparse factorization failed: {exc}") from exc
    return x, {"fill": int(lu.L.nnz + lu.U.nnz), "ordering": "metis-nd" if order is not None else "mmd"}


def _pressure_block(system: SaddleSystem) -> sp.csc_matrix:
    """Interior pressure mass plus the c-form; SPD and norm-equivalent to the pressure norm."""
    disc, dm = system.disc, system.dofs
    blocks = []
    for gi, grp in enumerate(disc.groups):
        M = disc.forms(gi).mass_km1
        d = dm.pressure_interior(grp.ids)
        blocks.append((M, d, np.ones(d.shape), d, np.ones(d.shape)))
    Mp = _scatter(dm.n_p, dm.n_p, blocks)
    return (Mp + system.C).tocsc()


def _minres(system: SaddleSystem, K, b, tol, maxiter):
    nf = system.n_free
    diagA = K.diagonal()[:nf]
    if np.any(diagA <= 0):
        raise SolverError("velocity block has a non-positive diagonal entry")
    Pp = spla.splu(_pressure_block(system))
    m = system.m
    lam_scale = float(m @ Pp.solve(m))

    def apply(r):
        out = np.empty_like(r)
        out[:nf] = r[:nf] / diagA
        out[nf:-1] = Pp.solve(r[nf:-1])
        out[-1] = r[-1] / lam_scale
        return out

    M = spla.LinearOperator(K.shape, matvec=apply, dtype=float)
    nb = np.linalg.norm(b) or 1.0
    history = []
    x = np.zeros_like(b)
    # minres stops on the preconditioned residual, which can sit well above
    # the true one; restart on the true residual until it reaches tol
    for _ in range(20):
        r = b - K @ x
        if np.linalg.norm(r) / nb <= tol or len(history) >= maxiter:
            break

        def callback(dk, r=r):
            history.append(np.linalg.norm(r - K @ dk) / nb)

        done = len(history)
        dx, info = spla.minres(K, r, M=M, rtol=1e-8, maxiter=maxiter - done, callback=callback)
        if info < 0:
            raise SolverError(f"MINRES breakdown (info={info})", history)
        x += dx
        if len(history) == done:
            break
    res = _relres(K, x, b)
    if res > tol:
        raise SolverError(f"MINRES stopped at relative residual {res:.3e} after {len(history)} iterations",
                          history)
    return x, {"iterations": len(history), "residual_history": history}


def solve(
    system: SaddleSystem,
    method: str = "direct",
    tol: float = 1e-10,
    maxiter: int = 20000,
    condense: bool = False,
) -> StokesSolution:
    """Solve the assembled system; raises :class:`SolverError` if the residual exceeds ``tol``."""
    t0 = time.perf_counter()
    K = system.matrix()
    b = system.rhs()
    if condense:
        if method != "direct":
            raise ValueError("static condensation is only available with the direct solver")
        x, stats = static_condensation(system).solve()
    elif method == "direct":
        x, stats = _direct(K, b)
    elif method == "minres":
        x, stats = _minres(system, K, b, tol, maxiter)
    else:
        raise ValueError(f"unknown solver {method!r}; expected 'direct' or 'minres'")
    if not np.all(np.isfinite(x)):
        raise SolverError("solution contains non-finite values", stats.get("residual_history", ()))
    res = _relres(K, x, b)
    if res > tol:
        raise SolverError(
            f"{method} solve reached relative residual {res:.3e} > {tol:.1e}",
            stats.get("residual_history", [res]),
        )
    u, p, lam = system.expand(x)
    stats.update(method=method, condensed=condense, residual=res, seconds=time.perf_counter() - t0)
    return StokesSolution(WeakVelocity(system.dofs, u), WeakPressure(system.dofs, p), lam, stats)


# ------------------------------------------------------------ condensation


@dataclass
class CondensedSystem:
    """Schur complement on edge unknowns (free edge velocities, edge pressures, multiplier)."""

    S: sp.csc_matrix
    rhs: np.ndarray
    interior: np.ndarray
    retained: np.ndarray
    K_ir: sp.csr_matrix
    Kinv_ii: sp.csr_matrix
    f_i: np.ndarray
    size: int

    @property
    def n_reduced(self) -> int:
        return self.S.shape[0]

    def back_substitute(self, x_r: np.ndarray) -> np.ndarray:
        x = np.empty(self.size)
        x[self.retained] = x_r
        x[self.interior] = self.Kinv_ii @ (self.f_i - self.K_ir @ x_r)
        return x

    def solve(self):
        x_r, stats = _direct(self.S, self.rhs)
        stats["reduced_unknowns"] = self.n_reduced
        return self.back_substitute(x_r), stats


def static_condensation(system: SaddleSystem) -> CondensedSystem:
    """Eliminate interior velocity and interior pressure DOFs element by element."""
    disc, dm = system.disc, system.dofs
    K = system.matrix().tocsr()
    b = system.rhs()
    nf = system.n_free
    # position of each global velocity DOF in the reduced vector
    vpos = np.full(dm.n_u, -1, dtype=np.int64)
    vpos[system.free] = np.arange(nf)

    nvi, npi = 2 * dm.nk, dm.npk
    n_loc = nvi + npi
    interior = np.empty((dm.n_elements, n_loc), dtype=np.int64)
    blocks = np.empty((dm.n_elements, n_loc, n_loc))
    for gi, grp in enumerate(disc.groups):
        lf = disc.forms(gi)
        Kl = np.zeros((n_loc, n_loc))
        Kl[:nvi, :nvi] = system.viscosity * lf.A[:nvi, :nvi]
        Kl[:nvi, nvi:] = lf.B[:nvi, :npi]
        Kl[nvi:, :nvi] = lf.B[:nvi, :npi].T
        Kl[nvi:, nvi:] = -lf.C[:npi, :npi]
        try:
            if np.linalg.cond(Kl) > 1e14:
                raise np.linalg.LinAlgError
            inv = np.linalg.inv(Kl)
        except np.linalg.LinAlgError:
            raise SolverError(
                f"static condensation: singular interior block on element {int(grp.ids[0])}"
            ) from None
        blocks[grp.ids] = inv
        interior[grp.ids, :nvi] = vpos[dm.velocity_interior(grp.ids)]
        interior[grp.ids, nvi:] = nf + dm.pressure_interior(grp.ids)

    rows = np.broadcast_to(interior[:, :, None], blocks.shape).ravel()
    cols = np.broadcast_to(interior[:, None, :], blocks.shape).ravel()
    n = K.shape[0]
    I = interior.ravel()
    mask = np.ones(n, dtype=bool)
    mask[I] = False
    R = np.flatnonzero(mask)
    # renumber interior DOFs to 0..len(I)-1 in element order
    ipos = np.empty(n, dtype=np.int64)
    ipos[I] = np.arange(len(I))
    Kinv = sp.csr_matrix((blocks.ravel(), (ipos[rows], ipos[cols])), shape=(len(I), len(I)))

    K_ri = K[R][:, I]
    K_ir = K[I][:, R]
    K_rr = K[R][:, R]
    S = (K_rr - K_ri @ Kinv @ K_ir).tocsc()
    f_i = b[I]
    rhs = b[R] - K_ri @ (Kinv @ f_i)
    return CondensedSystem(S, rhs, I, R, K_ir.tocsr(), Kinv, f_i, n)
