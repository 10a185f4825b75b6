"""Polygonal meshes: topology, structured generators, Voronoi meshes and I/O.

A mesh is built from a vertex array and a list of counterclockwise vertex
loops. Edges are numbered in order of first appearance; each edge is stored
so that its *left* element (the incident element with the smaller index)
traverses it from ``v0`` to ``v1``. The stored normal is therefore the
outward normal of the left element.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "MeshError",
    "PolygonalMesh",
    "ShapeReport",
    "generate_rectangular",
    "generate_triangular",
    "generate_polygonal_voronoi",
    "voronoi_from_seeds",
    "check_shape_regularity",
    "read_mesh",
    "write_mesh",
    "build_mesh",
    "MESH_FAMILIES",
]


class MeshError(ValueError):
    """Raised for invalid or degenerate mesh input."""


def _signed_area(xy: np.ndarray) -> float:
    x, y = xy[:, 0], xy[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _polygon_centroid(xy: np.ndarray) -> np.ndarray:
    x, y = xy[:, 0], xy[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    cx = ((x + xn) * cross).sum() / (6.0 * area)
    cy = ((y + yn) * cross).sum() / (6.0 * area)
    return np.array([cx, cy])


def _diameter(xy: np.ndarray) -> float:
    d = xy[:, None, :] - xy[None, :, :]
    return float(np.sqrt((d**2).sum(axis=-1)).max())


@dataclass(eq=False)
class PolygonalMesh:
    """Immutable polygonal mesh with full edge topology.

    Attributes
    ----------
    vertices : (nv, 2) float array
    elements : list of int arrays
        Counterclockwise vertex loops.
    edges : (ne, 2) int array
        Vertex pair ``(v0, v1)`` traversed counterclockwise by the left element.
    edge_elements : (ne, 2) int array
        ``(left, right)``; ``right == -1`` on the boundary.
    element_edges, element_edge_signs : lists of int arrays
        Edge loop of each element (edge ``i`` joins local vertices ``i`` and
        ``i+1``) and the orientation sign, ``+1`` when the element is the
        edge's left element.
    """

    vertices: np.ndarray
    elements: list
    edges: np.ndarray = field(init=False)
    edge_elements: np.ndarray = field(init=False)
    element_edges: list = field(init=False)
    element_edge_signs: list = field(init=False)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshError("vertices must be an (n, 2) array")
        if not np.all(np.isfinite(self.vertices)):
            raise MeshError("vertex coordinates must be finite")
        self.elements = [np.asarray(loop, dtype=np.int64) for loop in self.elements]
        nv = len(self.vertices)
        for i, loop in enumerate(self.elements):
            if len(loop) < 3:
                raise MeshError(f"element {i} has fewer than 3 vertices")
            if loop.min() < 0 or loop.max() >= nv:
                raise MeshError(f"element {i} references a missing vertex")
            if len(np.unique(loop)) != len(loop):
                raise MeshError(f"element {i} repeats a vertex")
        self._build_geometry()
        self._build_topology()

    def _build_geometry(self):
        n = len(self.elements)
        self.areas = np.empty(n)
        self.centroids = np.empty((n, 2))
        self.diameters = np.empty(n)
        for i, loop in enumerate(self.elements):
            xy = self.vertices[loop]
            a = _signed_area(xy)
            if a <= 0.0:
                raise MeshError(f"element {i} is not counterclockwise (signed area {a:.3e})")
            self.areas[i] = a
            self.centroids[i] = _polygon_centroid(xy)
            self.diameters[i] = _diameter(xy)

    def _build_topology(self):
        index: dict[tuple[int, int], int] = {}
        pairs: list[tuple[int, int]] = []
        owners: list[list[int]] = []
        self.element_edges = []
        self.element_edge_signs = []
        for t, loop in enumerate(self.elements):
            ids = np.empty(len(loop), dtype=np.int64)
            signs = np.empty(len(loop), dtype=np.int64)
            for i in range(len(loop)):
                a, b = int(loop[i]), int(loop[(i + 1) % len(loop)])
                key = (a, b) if a < b else (b, a)
                e = index.get(key)
                if e is None:
                    e = len(pairs)
                    index[key] = e
                    pairs.append((a, b))
                    owners.append([t])
                    signs[i] = 1
                else:
                    if len(owners[e]) == 2:
                        raise MeshError(f"edge {key} is shared by more than two elements")
                    if pairs[e] != (b, a):
                        raise MeshError(
                            f"elements {owners[e][0]} and {t} traverse edge {key} "
                            "in the same direction"
                        )
                    owners[e].append(t)
                    signs[i] = -1
                ids[i] = e
            self.element_edges.append(ids)
            self.element_edge_signs.append(signs)

        self.edges = np.array(pairs, dtype=np.int64).reshape(-1, 2)
        ee = np.full((len(pairs), 2), -1, dtype=np.int64)
        for e, own in enumerate(owners):
            ee[e, : len(own)] = own
        self.edge_elements = ee

        p0 = self.vertices[self.edges[:, 0]]
        p1 = self.vertices[self.edges[:, 1]]
        d = p1 - p0
        self.edge_lengths = np.hypot(d[:, 0], d[:, 1])
        if np.any(self.edge_lengths <= 0.0):
            raise MeshError("zero-length edge")
        self.edge_midpoints = 0.5 * (p0 + p1)
        self.edge_normals = np.column_stack([d[:, 1], -d[:, 0]]) / self.edge_lengths[:, None]
        self.boundary_edges = np.flatnonzero(ee[:, 1] < 0)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def h(self) -> float:
        return float(self.diameters.max())

    @property
    def on_boundary(self) -> np.ndarray:
        return self.edge_elements[:, 1] < 0

    def element_coords(self, t: int) -> np.ndarray:
        return self.vertices[self.elements[t]]

    def total_area(self) -> float:
        return float(self.areas.sum())


# ---------------------------------------------------------------- generators


def _check_bounds(bounds):
    x0, x1, y0, y1 = map(float, bounds)
    if not (x1 > x0 and y1 > y0):
        raise MeshError(f"invalid bounds {bounds!r}; expected (xmin, xmax, ymin, ymax)")
    return x0, x1, y0, y1


def _grid_vertices(nx, ny, bounds):
    x0, x1, y0, y1 = bounds
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    return np.column_stack([X.ravel(), Y.ravel()])


def generate_rectangular(nx: int, ny: int | None = None, bounds=(0.0, 1.0, 0.0, 1.0)) -> PolygonalMesh:
    """Uniform ``nx`` by ``ny`` grid of axis-aligned quadrilaterals."""
    ny = nx if ny is None else ny
    if nx < 1 or ny < 1:
        raise MeshError("nx and ny must be at least 1")
    bounds = _check_bounds(bounds)
    verts = _grid_vertices(nx, ny, bounds)
    vid = lambda i, j: j * (nx + 1) + i  # noqa: E731
    elems = [
        [vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)]
        for j in range(ny)
        for i in range(nx)
    ]
    return PolygonalMesh(verts, elems)


def generate_triangular(n: int, bounds=(0.0, 1.0, 0.0, 1.0)) -> PolygonalMesh:
    """``n`` by ``n`` grid with every square cut along its lower-left/upper-right diagonal."""
    if n < 1:
        raise MeshError("n must be at least 1")
    bounds = _check_bounds(bounds)
    verts = _grid_vertices(n, n, bounds)
    vid = lambda i, j: j * (n + 1) + i  # noqa: E731
    elems = []
    for j in range(n):
        for i in range(n):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            elems.append([a, b, c])
            elems.append([a, c, d])
    return PolygonalMesh(verts, elems)


def voronoi_from_seeds(seeds, bounds=(0.0, 1.0, 0.0, 1.0), merge_tol: float = 1e-10) -> PolygonalMesh:
    """Voronoi cells of ``seeds`` clipped to a rectangle.

    Clipping uses the reflection trick: seeds mirrored across the four sides
    produce Voronoi facets exactly on the box boundary.
    """
    from scipy.spatial import Voronoi

    x0, x1, y0, y1 = _check_bounds(bounds)
    seeds = np.asarray(seeds, dtype=float)
    inside = (seeds[:, 0] > x0) & (seeds[:, 0] < x1) & (seeds[:, 1] > y0) & (seeds[:, 1] < y1)
    if not inside.all():
        raise MeshError("all seeds must lie strictly inside the bounds")
    n = len(seeds)
    mirrored = [seeds]
    for axis, lo, hi in ((0, x0, x1), (1, y0, y1)):
        for wall in (lo, hi):
            m = seeds.copy()
            m[:, axis] = 2.0 * wall - m[:, axis]
            mirrored.append(m)
    vor = Voronoi(np.vstack(mirrored))

    scale = max(x1 - x0, y1 - y0)
    raw = vor.vertices.copy()
    raw[:, 0] = np.clip(raw[:, 0], x0, x1)
    raw[:, 1] = np.clip(raw[:, 1], y0, y1)
    for axis, lo, hi in ((0, x0, x1), (1, y0, y1)):
        raw[np.abs(raw[:, axis] - lo) < merge_tol * scale, axis] = lo
        raw[np.abs(raw[:, axis] - hi) < merge_tol * scale, axis] = hi

    keys = np.round(raw / (merge_tol * scale)).astype(np.int64)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    used: dict[int, int] = {}
    verts: list[np.ndarray] = []
    elems = []
    for s in range(n):
        region = vor.regions[vor.point_region[s]]
        if -1 in region or not region:
            raise MeshError(f"Voronoi region of seed {s} is unbounded")
        loop = []
        for v in region:
            u = int(inverse[v])
            if u not in used:
                used[u] = len(verts)
                verts.append(raw[first[u]])
            g = used[u]
            if not loop or loop[-1] != g:
                loop.append(g)
        while len(loop) > 1 and loop[0] == loop[-1]:
            loop.pop()
        xy = np.array([verts[g] for g in loop])
        if _signed_area(xy) < 0:
            loop.reverse()
        elems.append(loop)
    return PolygonalMesh(np.array(verts), elems)


def generate_polygonal_voronoi(
    seed_count: int,
    bounds=(0.0, 1.0, 0.0, 1.0),
    rng_seed: int = 0,
    lloyd_iterations: int = 10,
    max_attempts: int = 10,
    min_edge_ratio: float = 1e-6,
) -> PolygonalMesh:
    """Clipped Voronoi mesh of quasi-uniform random seeds.

    Seeds are drawn uniformly and relaxed by Lloyd iterations. A mesh with an
    edge shorter than ``min_edge_ratio`` times its size is rejected and the
    seeds are perturbed, up to ``max_attempts`` times.
    """
    if seed_count < 4:
        raise MeshError("seed_count must be at least 4")
    bounds = _check_bounds(bounds)
    x0, x1, y0, y1 = bounds
    lo, hi = np.array([x0, y0]), np.array([x1, y1])
    rng = np.random.default_rng(rng_seed)
    seeds = lo + (hi - lo) * rng.uniform(0.05, 0.95, size=(seed_count, 2))
    last = None
    for _ in range(max_attempts):
        try:
            mesh = voronoi_from_seeds(seeds, bounds)
            for _ in range(lloyd_iterations):
                seeds = mesh.centroids.copy()
                mesh = voronoi_from_seeds(seeds, bounds)
            if mesh.edge_lengths.min() >= min_edge_ratio * mesh.h:
                return mesh
            last = f"shortest edge {mesh.edge_lengths.min():.3e}"
        except MeshError as exc:
            last = str(exc)
        spacing = np.sqrt((x1 - x0) * (y1 - y0) / seed_count)
        seeds = seeds + 0.05 * spacing * rng.standard_normal(seeds.shape)
        seeds = np.clip(seeds, lo + 0.01 * (hi - lo), hi - 0.01 * (hi - lo))
    raise MeshError(f"Voronoi generation failed after {max_attempts} attempts: {last}")


# ------------------------------------------------------------ diagnostics


@dataclass(frozen=True)
class ShapeReport:
    min_edge_ratio: float
    max_aspect_ratio: float
    star_shaped: bool
    bad_elements: tuple = ()


def star_shaped_elements(mesh: PolygonalMesh, tol: float = 1e-12) -> np.ndarray:
    """Boolean mask: element is star-shaped with respect to its centroid."""
    ok = np.ones(mesh.n_elements, dtype=bool)
    for t, loop in enumerate(mesh.elements):
        xy = mesh.vertices[loop] - mesh.centroids[t]
        nxt = np.roll(xy, -1, axis=0)
        cross = xy[:, 0] * nxt[:, 1] - xy[:, 1] * nxt[:, 0]
        ok[t] = np.all(cross > tol * mesh.diameters[t] ** 2)
    return ok


def check_shape_regularity(mesh: PolygonalMesh) -> ShapeReport:
    """Shape diagnostics; never mutates the mesh.

    The aspect ratio of an element is ``h_T**2 / area``.
    """
    min_ratio = np.inf
    for t in range(mesh.n_elements):
        lengths = mesh.edge_lengths[mesh.element_edges[t]]
        min_ratio = min(min_ratio, lengths.min() / mesh.diameters[t])
    aspect = mesh.diameters**2 / mesh.areas
    star = star_shaped_elements(mesh)
    return ShapeReport(
        min_edge_ratio=float(min_ratio),
        max_aspect_ratio=float(aspect.max()),
        star_shaped=bool(star.all()),
        bad_elements=tuple(int(t) for t in np.flatnonzero(~star)),
    )


# ---------------------------------------------------------------------- I/O


def write_mesh(mesh: PolygonalMesh, path) -> None:
    path = Path(path)
    lines = ["wgmesh 2d", str(mesh.n_vertices)]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines.append(str(mesh.n_elements))
    lines += [" ".join([str(len(loop))] + [str(v) for v in loop]) for loop in mesh.elements]
    path.write_text("\n".join(lines) + "\n")


def read_mesh(path) -> PolygonalMesh:
    """Read the ``wgmesh 2d`` ASCII format; topology is rebuilt."""
    path = Path(path)
    tokens = path.read_text().split("\n")
    lines = [ln.strip() for ln in tokens if ln.strip()]
    if not lines or lines[0].split() != ["wgmesh", "2d"]:
        raise MeshError(f"{path}: missing 'wgmesh 2d' header")
    try:
        nv = int(lines[1])
        verts = np.array([[float(s) for s in ln.split()] for ln in lines[2 : 2 + nv]])
        ne = int(lines[2 + nv])
        elems = []
        for ln in lines[3 + nv : 3 + nv + ne]:
            parts = [int(s) for s in ln.split()]
            if parts[0] != len(parts) - 1:
                raise MeshError(f"{path}: element line {ln!r} has a wrong vertex count")
            elems.append(parts[1:])
    except (IndexError, ValueError) as exc:
        raise MeshError(f"{path}: malformed mesh file ({exc})") from exc
    if verts.shape != (nv, 2) or len(elems) != ne:
        raise MeshError(f"{path}: truncated mesh file")
    return PolygonalMesh(verts, elems)


MESH_FAMILIES = ("triangular", "rectangular", "voronoi")


def build_mesh(kind: str, n: int, bounds=(0.0, 1.0, 0.0, 1.0), rng_seed: int = 0) -> PolygonalMesh:
    """Mesh of nominal step ``1/n``; Voronoi meshes use ``max(4, n**2)`` seeds."""
    if n < 1:
        raise MeshError(f"mesh level n must be a positive integer; got {n}")
    if kind == "triangular":
        return generate_triangular(n, bounds)
    if kind == "rectangular":
        return generate_rectangular(n, n, bounds)
    if kind == "voronoi":
        return generate_polygonal_voronoi(max(4, n * n), bounds, rng_seed=rng_seed)
    raise MeshError(f"unknown mesh family {kind!r}; choose from {MESH_FAMILIES}")
