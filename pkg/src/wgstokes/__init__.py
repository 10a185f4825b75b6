"""Weak Galerkin finite elements for the 2D Stokes equations on polygonal meshes."""
from .mesh import (
    MeshError,
    PolygonalMesh,
    build_mesh,
    check_shape_regularity,
    generate_polygonal_voronoi,
    generate_rectangular,
    generate_triangular,
    read_mesh,
    write_mesh,
)
from .postproc import (
    ConvergenceTable,
    ErrorReport,
    cell_averages,
    compute_errors,
    convergence_study,
    export_fields,
    read_vtk,
    write_vtk,
)
from .problems import ManufacturedProblem, builtin_cavity, builtin_example71, builtin_example72
from .spaces import Discretization, project_Qh, project_Qh_pressure
from .system import SolverError, assemble, solve, static_condensation

__version__ = "0.1.0"
