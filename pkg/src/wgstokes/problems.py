"""Built-in test problems on the unit square.

Fields take coordinate arrays ``x, y`` and return ``(2, ...)`` stacks for
vectors, ``(2, 2, ...)`` for gradients (``grad_u[i, j] = d_j u_i``).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "ManufacturedProblem",
    "builtin_example71",
    "builtin_example72",
    "builtin_cavity",
    "LID_SIDES",
]

pi = np.pi
Field = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ManufacturedProblem:
    name: str
    f: Field
    g: Field
    u: Field | None = None
    p: Field | None = None
    grad_u: Field | None = None
    grad_p: Field | None = None
    bounds: tuple = (0.0, 1.0, 0.0, 1.0)
    singular_points: tuple = ()

    @property
    def has_exact_solution(self) -> bool:
        return self.u is not None and self.p is not None


def builtin_example71() -> ManufacturedProblem:
    """u = (sin px sin py, cos px cos py), p = 2 cos px sin py."""

    def u(x, y):
        return np.stack([np.sin(pi * x) * np.sin(pi * y), np.cos(pi * x) * np.cos(pi * y)])

    def p(x, y):
        return 2.0 * np.cos(pi * x) * np.sin(pi * y)

    def grad_u(x, y):
        sx, cx, sy, cy = np.sin(pi * x), np.cos(pi * x), np.sin(pi * y), np.cos(pi * y)
        return pi * np.stack([np.stack([cx * sy, sx * cy]), np.stack([-sx * cy, -cx * sy])])

    def grad_p(x, y):
        return 2.0 * pi * np.stack([-np.sin(pi * x) * np.sin(pi * y), np.cos(pi * x) * np.cos(pi * y)])

    def f(x, y):
        sx, cx, sy, cy = np.sin(pi * x), np.cos(pi * x), np.sin(pi * y), np.cos(pi * y)
        return np.stack(
            [
                2 * pi**2 * sx * sy - 2 * pi * sx * sy,
                2 * pi**2 * cx * cy + 2 * pi * cx * cy,
            ]
        )

    return ManufacturedProblem("example71", f, u, u, p, grad_u, grad_p)


def builtin_example72() -> ManufacturedProblem:
    """Stream-function velocity with p = cos px cos py; u vanishes on the boundary."""

    def u(x, y):
        return np.stack(
            [
                2 * pi * np.sin(pi * x) ** 2 * np.cos(pi * y) * np.sin(pi * y),
                -2 * pi * np.sin(pi * x) * np.cos(pi * x) * np.sin(pi * y) ** 2,
            ]
        )

    def p(x, y):
        return np.cos(pi * x) * np.cos(pi * y)

    def grad_u(x, y):
        s2x, s2y = np.sin(2 * pi * x), np.sin(2 * pi * y)
        c2x, c2y = np.cos(2 * pi * x), np.cos(2 * pi * y)
        sxx, syy = np.sin(pi * x) ** 2, np.sin(pi * y) ** 2
        # u1 = pi sin^2(px) sin(2py), u2 = -pi sin(2px) sin^2(py)
        return np.stack(
            [
                np.stack([pi**2 * s2x * s2y, 2 * pi**2 * sxx * c2y]),
                np.stack([-2 * pi**2 * c2x * syy, -(pi**2) * s2x * s2y]),
            ]
        )

    def grad_p(x, y):
        return -pi * np.stack([np.sin(pi * x) * np.cos(pi * y), np.cos(pi * x) * np.sin(pi * y)])

    def f(x, y):
        sx2, sy2 = np.sin(pi * x) ** 2, np.sin(pi * y) ** 2
        return np.stack(
            [
                -2 * pi**3 * np.sin(2 * pi * y) * (1 - 4 * sx2) - pi * np.sin(pi * x) * np.cos(pi * y),
                2 * pi**3 * np.sin(2 * pi * x) * (1 - 4 * sy2) - pi * np.cos(pi * x) * np.sin(pi * y),
            ]
        )

    return ManufacturedProblem("example72", f, u, u, p, grad_u, grad_p)


# side -> (axis, wall value, lid velocity); the lid moves clockwise
LID_SIDES = {
    "right": (0, 1.0, (0.0, -1.0)),
    "top": (1, 1.0, (1.0, 0.0)),
    "left": (0, 0.0, (0.0, 1.0)),
    "bottom": (1, 0.0, (-1.0, 0.0)),
}


def builtin_cavity(lid_side: str = "right", speed: float = 1.0, tol: float = 1e-12) -> ManufacturedProblem:
    """Driven cavity with f = 0, unit tangential lid on one side and no-slip elsewhere.

    The lid velocity is applied on the open side only; corner points
    belong to no edge interior, so each boundary edge sees its own side's
    data.
    """
    if lid_side not in LID_SIDES:
        raise ValueError(f"unknown lid side {lid_side!r}; choose from {sorted(LID_SIDES)}")
    axis, wall, vel = LID_SIDES[lid_side]
    vel = np.asarray(vel) * speed

    def g(x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        coord = (x, y)[axis]
        on_lid = np.abs(coord - wall) <= tol
        return np.stack([np.where(on_lid, vel[0], 0.0), np.where(on_lid, vel[1], 0.0)])

    def f(x, y):
        return np.zeros((2,) + np.shape(x))

    if axis == 0:
        corners = ((wall, 0.0), (wall, 1.0))
    else:
        corners = ((0.0, wall), (1.0, wall))
    return ManufacturedProblem(f"cavity-{lid_side}", f, g, singular_points=corners)
