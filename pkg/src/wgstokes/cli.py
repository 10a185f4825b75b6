"""Command-line driver: convergence studies, the driven cavity and mesh checks.

Configuration comes from a flat ``key = value`` file (``--config``) and
command-line flags; flags win. Exit codes: 0 success, 2 configuration
error, 3 solver failure.

Example::

    wgstokes run --problem example71 --k 1 --levels 4,8,16,32 --out results
    wgstokes run --problem cavity --lid-side top
"""
from __future__ import annotations

import argparse
import importlib.util
import logging
import os
import sys
import time
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .mesh import MESH_FAMILIES, MeshError, build_mesh, check_shape_regularity, write_mesh
from .postproc import convergence_study, export_fields
from .problems import LID_SIDES, ManufacturedProblem, builtin_cavity, builtin_example71, builtin_example72
from .spaces import Discretization
from .system import SolverError, assemble, solve

__all__ = ["RunConfig", "ConfigError", "load_config_file", "parse_levels", "run", "main"]

log = logging.getLogger("wgstokes")

PROBLEMS = ("example71", "example72", "cavity", "custom")
SOLVERS = ("direct", "minres")
EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


class ConfigError(ValueError):
    """Invalid run configuration."""


@dataclass(frozen=True)
class RunConfig:
    problem: str = "example71"
    k: int | None = None
    mesh: str = "triangular"
    levels: tuple = ()
    solver: str = "direct"
    condensation: bool = False
    output_dir: Path = Path("results")
    rng_seed: int = 0
    lid_side: str = "right"
    lid_speed: float = 1.0
    viscosity: float = 1.0
    custom_module: Path | None = None
    tol: float = 1e-10

    def resolved(self) -> "RunConfig":
        """Fill problem-dependent defaults and validate."""
        cavity = self.problem == "cavity"
        k = self.k if self.k is not None else (2 if cavity else 1)
        levels = self.levels or ((32,) if cavity else (4, 8, 16, 32))
        cfg = replace(self, k=k, levels=tuple(levels))
        cfg.validate()
        return cfg

    def validate(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem must be one of {', '.join(PROBLEMS)}; got {self.problem!r}")
        if self.k is None or not 1 <= self.k <= 3:
            raise ConfigError(f"k must be 1, 2 or 3 (the spaces need k >= 1); got {self.k}")
        if self.mesh not in MESH_FAMILIES:
            raise ConfigError(f"mesh must be one of {', '.join(MESH_FAMILIES)}; got {self.mesh!r}")
        if self.solver not in SOLVERS:
            raise ConfigError(f"solver must be one of {', '.join(SOLVERS)}; got {self.solver!r}")
        if self.condensation and self.solver != "direct":
            raise ConfigError("condensation requires solver = direct")
        if self.lid_side not in LID_SIDES:
            raise ConfigError(f"lid_side must be one of {', '.join(LID_SIDES)}; got {self.lid_side!r}")
        if self.problem == "custom" and self.custom_module is None:
            raise ConfigError("problem = custom needs custom_module = <path to a .py file>")
        if self.viscosity <= 0:
            raise ConfigError(f"viscosity must be positive; got {self.viscosity}")
        if not 0 < self.tol < 1:
            raise ConfigError(f"tol must lie in (0, 1); got {self.tol}")
        check_levels(self.levels)


def check_levels(levels):
    if not levels:
        raise ConfigError("levels must list at least one mesh level n (step h = 1/n)")
    if any(n < 1 for n in levels):
        raise ConfigError(f"levels must be positive integers; got {list(levels)}")
    for a, b in zip(levels, levels[1:]):
        if b != 2 * a:
            raise ConfigError(
                f"levels must double each time (e.g. 4,8,16,32); {a} is followed by {b}"
            )


def parse_levels(text: str) -> tuple:
    try:
        return tuple(int(s) for s in text.replace(" ", "").split(",") if s)
    except ValueError:
        raise ConfigError(f"levels must be comma-separated integers; got {text!r}") from None


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


_CONVERTERS = {
    "problem": str,
    "k": int,
    "mesh": str,
    "levels": parse_levels,
    "solver": str,
    "condensation": _parse_bool,
    "output_dir": Path,
    "rng_seed": int,
    "lid_side": str,
    "lid_speed": float,
    "viscosity": float,
    "custom_module": Path,
    "tol": float,
}


def load_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _CONVERTERS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}; known keys: {', '.join(_CONVERTERS)}")
        try:
            out[key] = _CONVERTERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return out


def load_custom_problem(path) -> ManufacturedProblem:
    """Import a problem from a Python file.

    The file defines either ``problem()`` returning a
    :class:`ManufacturedProblem`, or the fields ``f`` and ``g`` (and
    optionally ``u`` and ``p`` for error tables).
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"custom module {path} does not exist")
    spec = importlib.util.spec_from_file_location(f"wgstokes_custom_{path.stem}", path)
    mod = importlib.util.module_from_spec(spec)
    try:
        spec.loader.exec_module(mod)
    except Exception as exc:
        raise ConfigError(f"custom module {path} failed to import: {exc}") from exc
    if hasattr(mod, "problem"):
        prob = mod.problem()
        if not isinstance(prob, ManufacturedProblem):
            raise ConfigError(f"{path}: problem() must return a ManufacturedProblem")
        return prob
    if not (hasattr(mod, "f") and hasattr(mod, "g")):
        raise ConfigError(f"{path}: define problem() or both f(x, y) and g(x, y)")
    return ManufacturedProblem(path.stem, mod.f, mod.g, getattr(mod, "u", None), getattr(mod, "p", None))


def get_problem(cfg: RunConfig) -> ManufacturedProblem:
    if cfg.problem == "example71":
        return builtin_example71()
    if cfg.problem == "example72":
        return builtin_example72()
    if cfg.problem == "cavity":
        return builtin_cavity(cfg.lid_side, cfg.lid_speed)
    return load_custom_problem(cfg.custom_module)


def _limit_threads():
    """Apply ``WG_THREADS`` to the BLAS/OpenMP pools; returns the limiter or ``None``."""
    value = os.environ.get("WG_THREADS")
    if not value:
        return None
    try:
        n = int(value)
        if n < 1:
            raise ValueError
    except ValueError:
        raise ConfigError(f"WG_THREADS must be a positive integer; got {value!r}") from None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def _run_convergence(cfg: RunConfig, problem: ManufacturedProblem, out) -> Path:
    def on_level(n, report, sol):
        log.info("n=%d  energy_u=%.4e  unknowns=%d  %.2fs", n, report.energy_u,
                 sol.u.coeffs.size + sol.p.coeffs.size, sol.stats["seconds"])

    table = convergence_study(
        problem, cfg.k, cfg.levels, mesh=cfg.mesh, solver=cfg.solver,
        condense=cfg.condensation, rng_seed=cfg.rng_seed, on_level=on_level,
        viscosity=cfg.viscosity, tol=cfg.tol,
    )
    path = cfg.output_dir / f"{problem.name}_k{cfg.k}_{cfg.mesh}.csv"
    path.write_text(table.to_csv())
    print(f"{problem.name}, k = {cfg.k}, {cfg.mesh} mesh", file=out)
    print(table.format(), file=out)
    print(f"wrote {path}", file=out)
    return path


def _run_fields(cfg: RunConfig, problem: ManufacturedProblem, out) -> tuple:
    n = cfg.levels[-1]
    disc = Discretization(build_mesh(cfg.mesh, n, problem.bounds, cfg.rng_seed), cfg.k)
    system = assemble(disc, f=problem.f, g=problem.g, viscosity=cfg.viscosity)
    sol = solve(system, method=cfg.solver, condense=cfg.condensation, tol=cfg.tol)
    stem = cfg.output_dir / f"{problem.name}_k{cfg.k}_n{n}"
    vtk, csv_path = export_fields(disc, sol, stem)
    print(f"{problem.name}: h = 1/{n}, k = {cfg.k}, {cfg.mesh} mesh, "
          f"{sol.u.coeffs.size + sol.p.coeffs.size} unknowns, residual {sol.stats['residual']:.2e}", file=out)
    print(f"wrote {vtk}\nwrote {csv_path}", file=out)
    return vtk, csv_path


def run(cfg: RunConfig, out=None) -> int:
    """Execute a resolved configuration; returns the process exit status."""
    out = sys.stdout if out is None else out
    err = sys.stderr
    limiter = None
    try:
        cfg = cfg.resolved()
        limiter = _limit_threads()
        problem = get_problem(cfg)
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
    except (ConfigError, OSError) as exc:
        if limiter is not None:
            limiter.unregister()
        print(f"configuration error: {exc}", file=err)
        return EXIT_CONFIG
    if cfg.k == 3:
        print("note: k = 3 is experimental and has no reference results to compare against", file=out)
    t0 = time.perf_counter()
    try:
        if problem.has_exact_solution:
            _run_convergence(cfg, problem, out)
        else:
            _run_fields(cfg, problem, out)
    except SolverError as exc:
        print(f"solver failure: {exc}", file=err)
        hist = exc.residual_history
        if hist:
            print(f"  last residuals: {', '.join(f'{r:.3e}' for r in hist[-5:])}", file=err)
        return EXIT_SOLVER
    except (MeshError, ValueError) as exc:
        print(f"configuration error: {exc}", file=err)
        return EXIT_CONFIG
    finally:
        if limiter is not None:
            limiter.unregister()
    log.info("finished in %.1fs", time.perf_counter() - t0)
    return EXIT_OK


def mesh_report(kind: str, n: int, seed: int, out_path=None, out=None) -> int:
    out = sys.stdout if out is None else out
    mesh = build_mesh(kind, n, rng_seed=seed)
    rep = check_shape_regularity(mesh)
    print(f"{kind} mesh n={n}: {mesh.n_elements} elements, {mesh.n_edges} edges, "
          f"{mesh.n_vertices} vertices, h = {mesh.h:.4g}", file=out)
    print(f"min edge/h_T = {rep.min_edge_ratio:.4g}, max aspect = {rep.max_aspect_ratio:.4g}, "
          f"star-shaped = {rep.star_shaped}", file=out)
    if out_path is not None:
        write_mesh(mesh, out_path)
        print(f"wrote {out_path}", file=out)
    return EXIT_OK


# -------------------------------------------------------------------- argparse


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wgstokes", description="Weak Galerkin Stokes solver on polygonal meshes.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-level progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="convergence study or field solve")
    r.add_argument("--config", type=Path, help="flat key = value configuration file")
    r.add_argument("--problem", choices=PROBLEMS)
    r.add_argument("--k", type=int, help="polynomial degree (1, 2; 3 is experimental)")
    r.add_argument("--mesh", choices=MESH_FAMILIES)
    r.add_argument("--levels", type=str, help="comma-separated n values, mesh step h = 1/n")
    r.add_argument("--solver", choices=SOLVERS)
    r.add_argument("--condense", dest="condensation", action="store_true", default=None,
                   help="eliminate interior unknowns before the direct solve")
    r.add_argument("--out", dest="output_dir", type=Path, help="output directory")
    r.add_argument("--seed", dest="rng_seed", type=int, help="seed for Voronoi meshes")
    r.add_argument("--lid-side", dest="lid_side", choices=sorted(LID_SIDES))
    r.add_argument("--lid-speed", dest="lid_speed", type=float)
    r.add_argument("--viscosity", type=float)
    r.add_argument("--custom-module", dest="custom_module", type=Path,
                   help="Python file defining the custom problem")
    r.add_argument("--tol", type=float, help="relative residual tolerance")

    m = sub.add_parser("mesh", help="generate a mesh and print its shape report")
    m.add_argument("--mesh", choices=MESH_FAMILIES, default="voronoi")
    m.add_argument("--n", type=int, default=8)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--write", type=Path, help="save the mesh in wgmesh format")
    return parser


def config_from_args(args) -> RunConfig:
    values = load_config_file(args.config) if args.config else {}
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is None:
            continue
        values[f.name] = parse_levels(v) if f.name == "levels" else v
    return RunConfig(**values)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    if args.command == "mesh":
        try:
            return mesh_report(args.mesh, args.n, args.seed, args.write)
        except MeshError as exc:
            print(f"configuration error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
