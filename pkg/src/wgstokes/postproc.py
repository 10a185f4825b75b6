"""Error norms, convergence tables and field export (legacy VTK + CSV)."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .polybasis import dim_pk, eval_edge_basis
from .mesh import build_mesh
from .spaces import Discretization, project_Qh, project_Qh_pressure
from .weakops import velocity_component_index

__all__ = [
    "ErrorReport",
    "ConvergenceTable",
    "compute_errors",
    "velocity_error_norms",
    "pressure_error_norms",
    "fitted_order",
    "cell_averages",
    "export_fields",
    "write_vtk",
    "read_vtk",
    "NORMS",
    "convergence_study",
]

NORMS = ("energy_u", "l2_u", "wg_p", "l2_p")


@dataclass(frozen=True)
class ErrorReport:
    h: float
    energy_u: float
    l2_u: float
    wg_p: float
    seminorm_p: float
    l2_p: float


def _group_local(disc: Discretization, gi: int, coeffs: np.ndarray, kind: str) -> np.ndarray:
    grp = disc.groups[gi]
    if kind == "u":
        return coeffs[grp.vel_dofs] * grp.vel_signs
    return coeffs[grp.pres_dofs] * grp.pres_signs


def velocity_error_norms(disc: Discretization, e: np.ndarray):
    """Energy norm and L2 norm of a weak velocity, integrated directly at quadrature points."""
    k = disc.k
    nk, nr, nb = dim_pk(k), dim_pk(k - 1), k + 1
    q = 2 * k + 2
    grad2 = jump2 = l2 = 0.0
    for gi, grp in enumerate(disc.groups):
        lf = disc.forms(gi)
        elem = grp.elem
        loc = _group_local(disc, gi, e, "u")  # (nel, nvl)
        rule = elem.quadrature(q)
        psi, _ = elem.eval(k - 1, rule.points)
        phi, _ = elem.eval(k, rule.points)
        for c in range(2):
            idx = velocity_component_index(elem.n_edges, k, c)
            sc = loc[:, idx]
            g = sc @ lf.Gv.T  # (nel, 2 nr)
            for j in range(2):
                vals = g[:, j * nr : (j + 1) * nr] @ psi.T
                grad2 += float((vals**2 @ rule.weights).sum())
            v0 = sc[:, :nk] @ phi.T
            l2 += float((v0**2 @ rule.weights).sum())
            for i in range(elem.n_edges):
                er = elem.edge_quadrature(i, q)
                tr, _ = elem.eval(k, er.points)
                leg = eval_edge_basis(elem.edge_coordinate(i, er.points), k)
                jump = sc[:, :nk] @ tr.T - sc[:, nk + i * nb : nk + (i + 1) * nb] @ leg.T
                jump2 += float((jump**2 @ er.weights).sum()) / elem.h
    return math.sqrt(grad2 + jump2), math.sqrt(l2)


def pressure_error_norms(disc: Discretization, eps: np.ndarray):
    """``(l2, seminorm)`` of a weak pressure; the seminorm is ``c(eps, eps)**0.5``."""
    k = disc.k
    npk, nb = dim_pk(k - 1), k + 1
    q = 2 * k + 2
    l2 = semi = 0.0
    for gi, grp in enumerate(disc.groups):
        elem = grp.elem
        loc = _group_local(disc, gi, eps, "p")
        rule = elem.quadrature(q)
        psi, _ = elem.eval(k - 1, rule.points)
        v0 = loc[:, :npk] @ psi.T
        l2 += float((v0**2 @ rule.weights).sum())
        for i in range(elem.n_edges):
            er = elem.edge_quadrature(i, q)
            tr, _ = elem.eval(k - 1, er.points)
            leg = eval_edge_basis(elem.edge_coordinate(i, er.points), k)
            jump = loc[:, :npk] @ tr.T - loc[:, npk + i * nb : npk + (i + 1) * nb] @ leg.T
            semi += elem.h * float((jump**2 @ er.weights).sum())
    return math.sqrt(l2), math.sqrt(semi)


def compute_errors(disc: Discretization, solution, u, p, h: float | None = None) -> ErrorReport:
    """Errors ``Q_h u - u_h`` and ``Q~_h p - p_h`` in the five discrete norms."""
    e = project_Qh(disc, u).coeffs - solution.u.coeffs
    eps = project_Qh_pressure(disc, p).coeffs - solution.p.coeffs
    energy, l2u = velocity_error_norms(disc, e)
    l2p, semi = pressure_error_norms(disc, eps)
    return ErrorReport(
        h=disc.mesh.h if h is None else h,
        energy_u=energy,
        l2_u=l2u,
        wg_p=math.sqrt(l2p**2 + semi**2),
        seminorm_p=semi,
        l2_p=l2p,
    )


def fitted_order(h, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(h)``."""
    h, errors = np.asarray(h, float), np.asarray(errors, float)
    slope, _ = np.polyfit(np.log(h), np.log(errors), 1)
    return float(slope)


@dataclass
class ConvergenceTable:
    """Errors per level with ``log2`` orders between successive halvings."""

    k: int
    problem: str
    reports: list = field(default_factory=list)

    def add(self, report: ErrorReport):
        self.reports.append(report)

    @property
    def h(self) -> np.ndarray:
        return np.array([r.h for r in self.reports])

    def errors(self, norm: str) -> np.ndarray:
        return np.array([getattr(r, norm) for r in self.reports])

    def orders(self, norm: str) -> list:
        """``None`` for the first row and wherever the mesh size did not halve."""
        e, h = self.errors(norm), self.h
        out = [None]
        for i in range(1, len(e)):
            if abs(h[i - 1] / h[i] - 2.0) > 1e-9 or e[i] <= 0 or e[i - 1] <= 0:
                out.append(None)
            else:
                out.append(math.log2(e[i - 1] / e[i]))
        return out

    def fitted_order(self, norm: str) -> float:
        return fitted_order(self.h, self.errors(norm))

    def rows(self):
        orders = {n: self.orders(n) for n in NORMS}
        for i, r in enumerate(self.reports):
            yield r, {n: orders[n][i] for n in NORMS}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["h", "energy_u", "order", "l2_u", "order", "wg_p", "order", "l2_p", "order"])
        for r, o in self.rows():
            row = [f"{r.h:.10g}"]
            for n in NORMS:
                row += [f"{getattr(r, n):.10e}", "" if o[n] is None else f"{o[n]:.4f}"]
            w.writerow(row)
        return buf.getvalue()

    def format(self) -> str:
        """Plain-text table: velocity errors, then pressure errors."""
        lines = []
        head = f"{'h':>8} | {'|||e_h|||':>11} {'order':>7} | {'||e_h||':>11} {'order':>7} | " \
               f"{'|||eps|||_0':>11} {'order':>7} | {'||eps||':>11} {'order':>7}"
        lines.append(head)
        lines.append("-" * len(head))
        for r, o in self.rows():
            cells = []
            for n in NORMS:
                od = "" if o[n] is None else f"{o[n]:.4f}"
                cells.append(f"{getattr(r, n):11.4e} {od:>7}")
            denom = round(1.0 / r.h)
            hs = f"1/{denom}" if abs(denom * r.h - 1.0) < 1e-9 else f"{r.h:.4g}"
            lines.append(f"{hs:>8} | " + " | ".join(cells))
        return "\n".join(lines)

    def as_dicts(self):
        return [asdict(r) for r in self.reports]


def convergence_study(problem, k: int, levels, mesh: str = "triangular", solver: str = "direct",
                      condense: bool = False, rng_seed: int = 0, on_level=None, viscosity: float = 1.0,
                      tol: float = 1e-10) -> ConvergenceTable:
    """Solve ``problem`` on each level ``n`` (mesh step ``1/n``) and tabulate the errors.

    Solver failures are re-raised with the level attached.
    """
    from .system import SolverError, assemble, solve

    levels = [int(n) for n in levels]
    if not levels or any(b != 2 * a for a, b in zip(levels, levels[1:])):
        raise ValueError(f"levels must double from one entry to the next, got {levels}")
    if not problem.has_exact_solution:
        raise ValueError(f"problem {problem.name!r} has no exact solution to compare against")
    table = ConvergenceTable(k, problem.name)
    for n in levels:
        disc = Discretization(build_mesh(mesh, n, problem.bounds, rng_seed), k)
        system = assemble(disc, f=problem.f, g=problem.g, viscosity=viscosity)
        try:
            sol = solve(system, method=solver, condense=condense, tol=tol)
        except SolverError as exc:
            raise SolverError(f"level n={n}: {exc}", exc.residual_history) from exc
        report = compute_errors(disc, sol, problem.u, problem.p, h=1.0 / n)
        table.add(report)
        if on_level is not None:
            on_level(n, report, sol)
    return table


# ----------------------------------------------------------------- export


def cell_averages(disc: Discretization, solution):
    """Cell-averaged velocity ``(nel, 2)`` and pressure ``(nel,)``."""
    dm = disc.dofs
    mesh = disc.mesh
    vel = np.empty((mesh.n_elements, 2))
    pres = np.empty(mesh.n_elements)
    u = solution.u.coeffs[: dm.n_u_interior].reshape(mesh.n_elements, 2, dm.nk)
    p = solution.p.coeffs[: dm.n_p_interior].reshape(mesh.n_elements, dm.npk)
    for grp in disc.groups:
        mk = grp.elem.moments(disc.k)
        mp = grp.elem.moments(disc.k - 1)
        area = mesh.areas[grp.ids]
        vel[grp.ids] = (u[grp.ids] @ mk) / area[:, None]
        pres[grp.ids] = (p[grp.ids] @ mp) / area
    return vel, pres


def write_vtk(path, mesh, cell_vectors: dict | None = None, cell_scalars: dict | None = None,
              title: str = "weak Galerkin Stokes solution") -> Path:
    """Legacy ASCII VTK unstructured grid of polygon cells with cell data."""
    path = Path(path)
    out = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID"]
    out.append(f"POINTS {mesh.n_vertices} double")
    out += [f"{x!r} {y!r} 0.0" for x, y in mesh.vertices.tolist()]
    size = sum(len(c) + 1 for c in mesh.elements)
    out.append(f"CELLS {mesh.n_elements} {size}")
    out += [" ".join(map(str, [len(c), *c.tolist()])) for c in mesh.elements]
    out.append(f"CELL_TYPES {mesh.n_elements}")
    out += ["7"] * mesh.n_elements
    out.append(f"CELL_DATA {mesh.n_elements}")
    for name, vec in (cell_vectors or {}).items():
        out.append(f"VECTORS {name} double")
        out += [f"{a!r} {b!r} 0.0" for a, b in np.asarray(vec, float).tolist()]
    for name, val in (cell_scalars or {}).items():
        out.append(f"SCALARS {name} double 1")
        out.append("LOOKUP_TABLE default")
        out += [repr(v) for v in np.asarray(val, float).tolist()]
    try:
        path.write_text("\n".join(out) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write VTK file {path}: {exc}") from exc
    return path


def read_vtk(path) -> dict:
    """Parse files produced by :func:`write_vtk`."""
    tokens = Path(path).read_text().split("\n")
    if not tokens[0].startswith("# vtk DataFile"):
        raise ValueError(f"{path}: not a legacy VTK file")
    if tokens[2].strip() != "ASCII" or tokens[3].strip() != "DATASET UNSTRUCTURED_GRID":
        raise ValueError(f"{path}: expected an ASCII unstructured grid")
    i = 4
    out = {"vectors": {}, "scalars": {}}
    while i < len(tokens):
        line = tokens[i].split()
        i += 1
        if not line:
            continue
        key = line[0]
        if key == "POINTS":
            n = int(line[1])
            out["points"] = np.array([[float(s) for s in tokens[i + j].split()] for j in range(n)])
            i += n
        elif key == "CELLS":
            n = int(line[1])
            out["cells"] = [[int(s) for s in tokens[i + j].split()][1:] for j in range(n)]
            i += n
        elif key == "CELL_TYPES":
            n = int(line[1])
            out["cell_types"] = [int(tokens[i + j]) for j in range(n)]
            i += n
        elif key == "CELL_DATA":
            n_cells = int(line[1])
        elif key == "VECTORS":
            out["vectors"][line[1]] = np.array(
                [[float(s) for s in tokens[i + j].split()] for j in range(n_cells)]
            )
            i += n_cells
        elif key == "SCALARS":
            i += 1  # LOOKUP_TABLE
            out["scalars"][line[1]] = np.array([float(tokens[i + j]) for j in range(n_cells)])
            i += n_cells
        else:
            raise ValueError(f"{path}: unexpected section {key!r}")
    return out


def export_fields(disc: Discretization, solution, path) -> tuple[Path, Path]:
    """Write ``<path>.vtk`` and ``<path>.csv`` with cell-averaged velocity and pressure."""
    path = Path(path)
    vel, pres = cell_averages(disc, solution)
    vtk = write_vtk(path.with_suffix(".vtk"), disc.mesh, {"velocity": vel}, {"pressure": pres})
    csv_path = path.with_suffix(".csv")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "u1", "u2", "p"])
    for (x, y), (a, b), q in zip(disc.mesh.centroids.tolist(), vel.tolist(), pres.tolist()):
        w.writerow([f"{x:.12g}", f"{y:.12g}", f"{a:.12e}", f"{b:.12e}", f"{q:.12e}"])
    try:
        csv_path.write_text(buf.getvalue())
    except OSError as exc:
        raise OSError(f"cannot write CSV file {csv_path}: {exc}") from exc
    return vtk, csv_path
