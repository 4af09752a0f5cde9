"""Legacy ASCII VTK output for meshes and mode fields."""
from __future__ import annotations

from typing import Optional

import numpy as np

from .fespace import FunctionSpace, evaluate
from .mesh import Mesh

_CENTROID = np.array([[1.0, 1.0, 1.0]]) / 3.0


def vertex_fields(space: FunctionSpace, coeffs: np.ndarray):
    """Displacement at the vertices and area-weighted vertex averages of div and rot."""
    mesh = space.mesh
    u = np.asarray(coeffs, dtype=float).reshape(-1, 2)[: mesh.n_vertices]
    # div and rot are averaged over the cell at its centroid (exact for P1)
    _, grad = evaluate(space, coeffs, _CENTROID)
    div_c = grad[:, 0, 0, 0] + grad[:, 0, 1, 1]
    rot_c = grad[:, 0, 1, 0] - grad[:, 0, 0, 1]
    area = mesh.cell_areas
    wsum = np.bincount(mesh.cells.ravel(), np.repeat(area, 3), mesh.n_vertices)
    div = np.bincount(mesh.cells.ravel(), np.repeat(area * div_c, 3), mesh.n_vertices) / wsum
    rot = np.bincount(mesh.cells.ravel(), np.repeat(area * rot_c, 3), mesh.n_vertices) / wsum
    return u, div, rot


def export_vtk(mesh: Mesh, path, displacement: Optional[np.ndarray] = None,
               divergence: Optional[np.ndarray] = None, rotation: Optional[np.ndarray] = None,
               title: str = "jones mode") -> None:
    """Write an unstructured grid of triangles (cell type 5).

    With no fields the file holds the mesh only. ``displacement`` has shape
    ``(V, 2)`` and is written with a zero third component.
    """
    V = mesh.n_vertices
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " "), "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {V} double"]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in mesh.vertices]
    T = mesh.n_cells
    lines.append(f"CELLS {T} {4 * T}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.cells]
    lines.append(f"CELL_TYPES {T}")
    lines += ["5"] * T
    fields = [displacement, divergence, rotation]
    if any(f is not None for f in fields):
        lines.append(f"POINT_DATA {V}")
        if displacement is not None:
            d = np.asarray(displacement, dtype=float)
            if d.shape != (V, 2):
                raise ValueError(f"displacement must have shape ({V}, 2)")
            lines.append("VECTORS displacement double")
            lines += [f"{x:.17g} {y:.17g} 0" for x, y in d]
        for name, f in (("divergence", divergence), ("rotation", rotation)):
            if f is None:
                continue
            f = np.asarray(f, dtype=float)
            if f.shape != (V,):
                raise ValueError(f"{name} must have shape ({V},)")
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [f"{x:.17g}" for x in f]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def export_mode(space: FunctionSpace, coeffs: np.ndarray, path, title: str = "jones mode") -> None:
    u, div, rot = vertex_fields(space, coeffs)
    export_vtk(space.mesh, path, u, div, rot, title)


def read_vtk(path) -> dict:
    """Parse a file written by :func:`export_vtk` back into arrays."""
    with open(path) as fh:
        tokens = fh.read().split("\n")
    out: dict = {"title": tokens[1]}
    i = 4
    n = int(tokens[i].split()[1])
    out["points"] = np.array([[float(v) for v in tokens[i + 1 + k].split()] for k in range(n)])
    i += 1 + n
    nc = int(tokens[i].split()[1])
    out["cells"] = np.array([[int(v) for v in tokens[i + 1 + k].split()[1:]] for k in range(nc)])
    i += 1 + nc
    out["cell_types"] = np.array([int(tokens[i + 1 + k]) for k in range(nc)])
    i += 1 + nc
    while i < len(tokens) and tokens[i].strip():
        head = tokens[i].split()
        if head[0] == "POINT_DATA":
            i += 1
        elif head[0] == "VECTORS":
            out[head[1]] = np.array([[float(v) for v in tokens[i + 1 + k].split()] for k in range(n)])
            i += 1 + n
        elif head[0] == "SCALARS":
            out[head[1]] = np.array([float(tokens[i + 2 + k]) for k in range(n)])
            i += 2 + n
        else:
            raise ValueError(f"unexpected VTK section {head[0]!r}")
    return out
