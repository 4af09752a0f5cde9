"""Conforming triangulations of the model domains.

All generators return a :class:`Mesh` whose cells are counter-clockwise
vertex triples. Edge connectivity and outward boundary normals are derived
once at construction and the instance is treated as immutable afterwards.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import Delaunay


class MeshError(ValueError):
    """Raised for invalid mesh input (inverted cells, bad parameters)."""


def _signed_areas(vertices: np.ndarray, cells: np.ndarray) -> np.ndarray:
    p0 = vertices[cells[:, 0]]
    p1 = vertices[cells[:, 1]]
    p2 = vertices[cells[:, 2]]
    d1 = p1 - p0
    d2 = p2 - p0
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


@dataclass(eq=False)
class Mesh:
    """Triangular mesh with edge and boundary connectivity.

    Parameters
    ----------
    vertices : (V, 2) array
    cells : (T, 3) int array, counter-clockwise
    circle_radius : float, optional
        Set for polygonal approximations of a disk centred at the origin;
        :func:`refine_uniform` then projects new boundary vertices onto the
        circle.
    """

    vertices: np.ndarray
    cells: np.ndarray
    circle_radius: Optional[float] = None
    edges: np.ndarray = field(init=False, repr=False)
    cell_edges: np.ndarray = field(init=False, repr=False)
    edge_cells: np.ndarray = field(init=False, repr=False)
    boundary_edges: np.ndarray = field(init=False, repr=False)
    boundary_normals: np.ndarray = field(init=False, repr=False)
    boundary_parent: np.ndarray = field(init=False, repr=False)
    boundary_oriented: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.cells = np.ascontiguousarray(self.cells, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshError("vertices must have shape (V, 2)")
        if self.cells.ndim != 2 or self.cells.shape[1] != 3:
            raise MeshError("cells must have shape (T, 3)")
        if not np.all(np.isfinite(self.vertices)):
            raise MeshError("non-finite vertex coordinates")
        areas = _signed_areas(self.vertices, self.cells)
        if np.any(areas <= 0.0):
            bad = np.flatnonzero(areas <= 0.0)
            raise MeshError(f"{bad.size} inverted or degenerate cells, first: {bad[0]}")
        self._build_connectivity()
        for name in ("vertices", "cells", "edges", "cell_edges", "edge_cells",
                     "boundary_edges", "boundary_normals", "boundary_parent",
                     "boundary_oriented"):
            getattr(self, name).flags.writeable = False

    def _build_connectivity(self):
        c = self.cells
        # local edge i joins local vertices i and i+1 (mod 3)
        local = np.stack([c[:, [0, 1]], c[:, [1, 2]], c[:, [2, 0]]], axis=1)
        flat = local.reshape(-1, 2)
        edges, inverse, counts = np.unique(np.sort(flat, axis=1), axis=0,
                                           return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        if np.any(counts > 2):
            raise MeshError("non-manifold mesh: an edge is shared by more than two cells")
        self.edges = edges
        self.cell_edges = inverse.reshape(-1, 3)
        order = np.argsort(inverse, kind="stable")
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        cell_of = order // 3
        edge_cells = -np.ones((edges.shape[0], 2), dtype=np.int64)
        edge_cells[:, 0] = cell_of[starts]
        two = counts == 2
        edge_cells[two, 1] = cell_of[starts[two] + 1]
        self.edge_cells = edge_cells
        self.boundary_edges = np.flatnonzero(counts == 1)
        # boundary edges keep the direction their CCW parent traverses them in
        oriented = flat[order[starts[self.boundary_edges]]]
        self.boundary_oriented = oriented
        self.boundary_parent = edge_cells[self.boundary_edges, 0]
        d = self.vertices[oriented[:, 1]] - self.vertices[oriented[:, 0]]
        length = np.hypot(d[:, 0], d[:, 1])
        self.boundary_normals = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def cell_areas(self) -> np.ndarray:
        return _signed_areas(self.vertices, self.cells)

    @property
    def area(self) -> float:
        return float(self.cell_areas.sum())

    @property
    def h(self) -> float:
        """Largest edge length."""
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return float(np.hypot(d[:, 0], d[:, 1]).max())

    @property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.edges[self.boundary_edges])

    @property
    def is_axisymmetric(self) -> bool:
        return self.circle_radius is not None

    def min_angle(self) -> float:
        """Smallest interior angle over all cells, in radians."""
        p = self.vertices[self.cells]
        angles = []
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            cosang = np.einsum("ij,ij->i", a, b) / (
                np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            angles.append(np.arccos(np.clip(cosang, -1.0, 1.0)))
        return float(np.min(angles))


def compute_geometry(mesh: Mesh):
    """Recompute ``(h, boundary_normals, cell_areas)`` and validate them.

    Raises
    ------
    MeshError
        If a cell has non-positive area or a boundary normal fails to point
        away from its parent cell.
    """
    areas = _signed_areas(mesh.vertices, mesh.cells)
    if np.any(areas <= 0.0):
        raise MeshError("inverted cells present")
    v = mesh.vertices
    e = mesh.boundary_oriented
    d = v[e[:, 1]] - v[e[:, 0]]
    normals = np.column_stack([d[:, 1], -d[:, 0]]) / np.hypot(d[:, 0], d[:, 1])[:, None]
    mid = 0.5 * (v[e[:, 0]] + v[e[:, 1]])
    centroid = v[mesh.cells[mesh.boundary_parent]].mean(axis=1)
    if np.any(np.einsum("ij,ij->i", normals, mid - centroid) <= 0.0):
        raise MeshError("boundary normal not outward")
    return mesh.h, normals, areas


def generate_rectangle(a: float, b: float, nx: int, ny: int,
                       origin: Sequence[float] = (0.0, 0.0)) -> Mesh:
    """Structured mesh of ``[x0, x0+a] x [y0, y0+b]`` with 2*nx*ny cells.

    Each grid square is split along its bottom-left to top-right diagonal.
    """
    if a <= 0 or b <= 0:
        raise MeshError("rectangle sides must be positive")
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise MeshError("nx, ny must be positive integers")
    nx, ny = int(nx), int(ny)
    x = origin[0] + a * np.arange(nx + 1) / nx
    y = origin[1] + b * np.arange(ny + 1) / ny
    X, Y = np.meshgrid(x, y)
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    v00 = (j * (nx + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    cells = np.empty((2 * v00.size, 3), dtype=np.int64)
    cells[0::2] = lower
    cells[1::2] = upper
    return Mesh(vertices, cells)


def _compact(vertices: np.ndarray, cells: np.ndarray):
    used = np.unique(cells)
    remap = -np.ones(vertices.shape[0], dtype=np.int64)
    remap[used] = np.arange(used.size)
    return vertices[used], remap[cells]


def generate_lshape(n: int) -> Mesh:
    """L-shaped domain ``[-1,1]^2`` minus the upper-right quadrant.

    ``n`` is the number of grid cells per unit length; each of the three unit
    squares is meshed exactly as by :func:`generate_rectangle`.
    """
    if int(n) != n or n < 1:
        raise MeshError("n must be a positive integer")
    n = int(n)
    full = generate_rectangle(2.0, 2.0, 2 * n, 2 * n, origin=(-1.0, -1.0))
    centroids = full.vertices[full.cells].mean(axis=1)
    keep = ~((centroids[:, 0] > 0.0) & (centroids[:, 1] > 0.0))
    vertices, cells = _compact(full.vertices, full.cells[keep])
    return Mesh(vertices, cells)


def generate_disk(R: float, n: int) -> Mesh:
    """Mesh of the regular ``n``-gon inscribed in the circle of radius ``R``.

    Interior vertices sit on concentric rings whose spacing matches the
    boundary segment length, so cells stay close to equilateral. Boundary
    vertices lie exactly on the circle.
    """
    if R <= 0:
        raise MeshError("radius must be positive")
    if int(n) != n or n < 3:
        raise MeshError("a disk needs at least 3 boundary segments")
    n = int(n)
    rings = max(1, int(round(n / (2.0 * np.pi))))
    points = [np.zeros((1, 2))]
    for k in range(1, rings):
        count = max(6, int(round(n * k / rings)))
        # half-step twist keeps neighbouring rings from being co-radial
        theta = 2.0 * np.pi * (np.arange(count) + 0.5 * (k % 2)) / count
        r = R * k / rings
        points.append(np.column_stack([r * np.cos(theta), r * np.sin(theta)]))
    theta = 2.0 * np.pi * np.arange(n) / n
    points.append(np.column_stack([R * np.cos(theta), R * np.sin(theta)]))
    vertices = np.vstack(points)
    tri = Delaunay(vertices)
    cells = tri.simplices.astype(np.int64)
    areas = _signed_areas(vertices, cells)
    flip = areas < 0
    cells[flip] = cells[flip][:, [0, 2, 1]]
    # drop slivers qhull may emit along the co-circular hull
    cells = cells[np.abs(areas) > 1e-14 * R * R]
    cells = cells[np.lexsort(cells.T[::-1])]
    return Mesh(vertices, cells, circle_radius=float(R))


def generate_triangle_domain(p0, p1, p2, n: int) -> Mesh:
    """Uniform subdivision of the triangle ``p0 p1 p2`` into ``n**2`` cells."""
    if int(n) != n or n < 1:
        raise MeshError("n must be a positive integer")
    n = int(n)
    p0, p1, p2 = (np.asarray(p, dtype=float) for p in (p0, p1, p2))
    d1, d2 = p1 - p0, p2 - p0
    cross = d1[0] * d2[1] - d1[1] * d2[0]
    scale = max(np.dot(d1, d1), np.dot(d2, d2))
    if abs(cross) <= 1e-14 * scale:
        raise MeshError("triangle vertices are collinear")
    if cross < 0:
        p1, p2 = p2, p1
        d1, d2 = d2, d1
    index = {}
    coords = []
    for j in range(n + 1):
        for i in range(n + 1 - j):
            index[i, j] = len(coords)
            coords.append(p0 + (i / n) * d1 + (j / n) * d2)
    cells = []
    for j in range(n):
        for i in range(n - j):
            cells.append((index[i, j], index[i + 1, j], index[i, j + 1]))
            if i + j < n - 1:
                cells.append((index[i + 1, j], index[i + 1, j + 1], index[i, j + 1]))
    return Mesh(np.array(coords), np.array(cells, dtype=np.int64))


def refine_uniform(mesh: Mesh) -> Mesh:
    """Split every cell into four through its edge midpoints.

    Coarse vertices keep their indices and coordinates; edge ``e`` of the
    coarse mesh becomes vertex ``V + e``. On disk meshes the new boundary
    vertices are pushed radially onto the circle.
    """
    V = mesh.n_vertices
    v = mesh.vertices
    mid = 0.5 * (v[mesh.edges[:, 0]] + v[mesh.edges[:, 1]])
    if mesh.circle_radius is not None:
        b = mesh.boundary_edges
        r = np.hypot(mid[b, 0], mid[b, 1])
        mid[b] *= (mesh.circle_radius / r)[:, None]
    vertices = np.vstack([v, mid])
    c = mesh.cells
    m = V + mesh.cell_edges  # midpoints of (0,1), (1,2), (2,0)
    m01, m12, m20 = m[:, 0], m[:, 1], m[:, 2]
    cells = np.concatenate([
        np.column_stack([c[:, 0], m01, m20]),
        np.column_stack([m01, c[:, 1], m12]),
        np.column_stack([m20, m12, c[:, 2]]),
        np.column_stack([m01, m12, m20]),
    ])
    return Mesh(vertices, cells, circle_radius=mesh.circle_radius)


def polygon_area(vertices: np.ndarray) -> float:
    x, y = np.asarray(vertices, dtype=float).T
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


# -- domain presets ---------------------------------------------------------

TRIANGLE_PRESETS = {
    # prose of the triangle example
    "triangle_prose": ((0.0, 0.0), (2.0, 0.0), (0.0, 1.0)),
    # caption of the triangle table (isosceles)
    "triangle_caption": ((0.0, 0.0), (2.0, 0.0), (1.0, 2.0)),
}


@dataclass(frozen=True)
class DomainSpec:
    """A named domain plus its resolution.

    ``tag`` is one of ``rectangle``, ``square`` (unit square), ``square2``
    (``[-1,1]^2``), ``lshape``, ``disk``, ``triangle``. For grid domains
    ``n`` counts cells per unit length; for the disk it counts boundary
    segments; for triangles it is the subdivision factor. ``refinements``
    uniform refinements are applied after generation.
    """

    tag: str
    n: int = 8
    a: float = 1.0
    b: float = 1.0
    R: float = 1.0
    vertices: tuple = TRIANGLE_PRESETS["triangle_prose"]
    refinements: int = 0

    def __post_init__(self):
        if self.tag not in ("rectangle", "square", "square2", "lshape", "disk", "triangle"):
            raise MeshError(f"unknown domain tag {self.tag!r}")
        if self.a <= 0 or self.b <= 0 or self.R <= 0:
            raise MeshError("domain dimensions must be positive")
        if self.n < 1 or self.refinements < 0:
            raise MeshError("resolution must be positive")

    @property
    def is_rectangle_family(self) -> bool:
        return self.tag in ("rectangle", "square", "square2")

    @property
    def rectangle_box(self):
        """``(a, b, origin)`` for rectangle-family domains."""
        if self.tag == "square":
            return 1.0, 1.0, (0.0, 0.0)
        if self.tag == "square2":
            return 2.0, 2.0, (-1.0, -1.0)
        if self.tag == "rectangle":
            return self.a, self.b, (0.0, 0.0)
        raise MeshError(f"{self.tag} is not a rectangle")

    def with_refinements(self, refinements: int) -> "DomainSpec":
        return DomainSpec(self.tag, self.n, self.a, self.b, self.R, self.vertices, refinements)

    def describe(self) -> str:
        if self.tag == "rectangle":
            return f"rectangle({self.a:g},{self.b:g})"
        if self.tag == "disk":
            return f"disk({self.R:g})"
        if self.tag == "triangle":
            return "triangle(" + ",".join(f"{c:g}" for p in self.vertices for c in p) + ")"
        return self.tag


def build_mesh(spec: DomainSpec) -> Mesh:
    if spec.tag in ("rectangle", "square", "square2"):
        a, b, origin = spec.rectangle_box
        nx = max(1, int(round(spec.n * a)))
        ny = max(1, int(round(spec.n * b)))
        mesh = generate_rectangle(a, b, nx, ny, origin=origin)
    elif spec.tag == "lshape":
        mesh = generate_lshape(spec.n)
    elif spec.tag == "disk":
        mesh = generate_disk(spec.R, spec.n)
    else:
        mesh = generate_triangle_domain(*spec.vertices, spec.n)
    for _ in range(spec.refinements):
        mesh = refine_uniform(mesh)
    return mesh
