"""Element matrices of the bilinear forms s, a, b and c.

Local DOF layout (element-local, edges counterclockwise):

* velocity: interior x, interior y, then per edge x then y;
* pressure: interior, then per edge.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .polybasis import dim_pk, eval_edge_basis
from .weakops import (
    LocalElement,
    pressure_gradient_matrix,
    velocity_component_index,
    velocity_gradient_matrix,
)

__all__ = [
    "LocalForms",
    "jump_matrix",
    "local_stabilizer_s",
    "local_grad_a",
    "local_b",
    "local_c",
    "local_forms",
    "n_velocity_local",
    "n_pressure_local",
]


def n_velocity_local(n_edges: int, k: int) -> int:
    return 2 * dim_pk(k) + 2 * n_edges * (k + 1)


def n_pressure_local(n_edges: int, k: int) -> int:
    return dim_pk(k - 1) + n_edges * (k + 1)


def jump_matrix(elem: LocalElement, interior_degree: int, edge_degree: int, weight: float) -> np.ndarray:
    """``weight * sum_e <w0 - wb, v0 - vb>_e`` over scalar weak functions."""
    n_int, n_b = dim_pk(interior_degree), edge_degree + 1
    n = n_int + elem.n_edges * n_b
    q = 2 * max(interior_degree, edge_degree) + 2
    S = np.zeros((n, n))
    for i in range(elem.n_edges):
        rule = elem.edge_quadrature(i, q)
        D = np.zeros((len(rule.weights), n))
        D[:, :n_int], _ = elem.eval(interior_degree, rule.points)
        cols = slice(n_int + i * n_b, n_int + (i + 1) * n_b)
        D[:, cols] = -eval_edge_basis(elem.edge_coordinate(i, rule.points), edge_degree)
        S += (D * rule.weights[:, None]).T @ D
    S *= weight
    return 0.5 * (S + S.T)


def _expand_components(elem: LocalElement, k: int, scalar: np.ndarray) -> np.ndarray:
    n = n_velocity_local(elem.n_edges, k)
    out = np.zeros((n, n))
    for c in range(2):
        idx = velocity_component_index(elem.n_edges, k, c)
        out[np.ix_(idx, idx)] = scalar
    return out


def local_stabilizer_s(elem: LocalElement, k: int) -> np.ndarray:
    """Velocity stabilizer ``h_T^-1 <w0 - wb, v0 - vb>_dT``."""
    return _expand_components(elem, k, jump_matrix(elem, k, k, 1.0 / elem.h))


def local_grad_a(elem: LocalElement, k: int, grad_matrix: np.ndarray | None = None) -> np.ndarray:
    """Velocity matrix ``(grad_w w, grad_w v)_T + s_T(w, v)``."""
    G = velocity_gradient_matrix(elem, k) if grad_matrix is None else grad_matrix
    M = elem.mass(k - 1)
    nr = M.shape[0]
    gg = G[:nr].T @ M @ G[:nr] + G[nr:].T @ M @ G[nr:]
    scalar = gg + jump_matrix(elem, k, k, 1.0 / elem.h)
    return _expand_components(elem, k, 0.5 * (scalar + scalar.T))


def local_b(elem: LocalElement, k: int, grad_matrix: np.ndarray | None = None) -> np.ndarray:
    """Coupling ``(w0, grad_w q)_T``; only interior velocity rows are nonzero."""
    G = pressure_gradient_matrix(elem, k) if grad_matrix is None else grad_matrix
    M = elem.mass(k)
    nk = dim_pk(k)
    B = np.zeros((n_velocity_local(elem.n_edges, k), G.shape[1]))
    for j in range(2):
        B[j * nk : (j + 1) * nk] = M @ G[j * nk : (j + 1) * nk]
    return B


def local_c(elem: LocalElement, k: int) -> np.ndarray:
    """Pressure stabilizer ``h_T <rho0 - rhob, q0 - qb>_dT``."""
    return jump_matrix(elem, k - 1, k, elem.h)


@dataclass
class LocalForms:
    """All element matrices of one element (or one congruent element shape)."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    S: np.ndarray
    Gv: np.ndarray
    Gp: np.ndarray
    mass_k: np.ndarray
    mass_km1: np.ndarray
    pressure_moments: np.ndarray


def local_forms(elem: LocalElement, k: int) -> LocalForms:
    if k < 1:
        raise ValueError("polynomial degree k must be at least 1")
    Gv = velocity_gradient_matrix(elem, k)
    Gp = pressure_gradient_matrix(elem, k)
    return LocalForms(
        A=local_grad_a(elem, k, Gv),
        B=local_b(elem, k, Gp),
        C=local_c(elem, k),
        S=local_stabilizer_s(elem, k),
        Gv=Gv,
        Gp=Gp,
        mass_k=elem.mass(k),
        mass_km1=elem.mass(k - 1),
        pressure_moments=elem.moments(k - 1),
    )
