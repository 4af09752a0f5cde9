"""Vector Lagrange spaces and the discrete normal-trace constraint.

Degrees of freedom are blocked by scalar node: node ``i`` owns global DOFs
``2*i`` (x-component) and ``2*i + 1`` (y-component). Scalar nodes are the
mesh vertices followed, for ``k = 2``, by the edge midpoints in mesh edge
order.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh

SLIP_ANGLE_POLYGON = 1e-8
SLIP_ANGLE_CIRCLE = 0.2

# 6-point rule on the reference triangle, exact for degree 4.
# Points in barycentric form, weights sum to 1 (multiply by the cell area).
_A1, _B1, _W1 = 0.445948490915965, 0.108103018168070, 0.223381589678011
_A2, _B2, _W2 = 0.091576213509771, 0.816847572980459, 0.109951743655322
QUAD6_BARY = np.array([
    [_B1, _A1, _A1], [_A1, _B1, _A1], [_A1, _A1, _B1],
    [_B2, _A2, _A2], [_A2, _B2, _A2], [_A2, _A2, _B2],
])
QUAD6_WEIGHTS = np.array([_W1, _W1, _W1, _W2, _W2, _W2])


def shape_values(k: int, bary: np.ndarray) -> np.ndarray:
    """Lagrange basis values at barycentric points, shape ``(q, nloc)``.

    Local ordering: the three vertices, then (k=2) midpoints of local edges
    (0,1), (1,2), (2,0).
    """
    L0, L1, L2 = bary[:, 0], bary[:, 1], bary[:, 2]
    if k == 1:
        return np.column_stack([L0, L1, L2])
    return np.column_stack([
        L0 * (2 * L0 - 1), L1 * (2 * L1 - 1), L2 * (2 * L2 - 1),
        4 * L0 * L1, 4 * L1 * L2, 4 * L2 * L0,
    ])


def shape_bary_gradients(k: int, bary: np.ndarray) -> np.ndarray:
    """Derivatives of the basis with respect to (L0, L1, L2), shape ``(q, nloc, 3)``."""
    q = bary.shape[0]
    if k == 1:
        return np.broadcast_to(np.eye(3), (q, 3, 3)).copy()
    L0, L1, L2 = bary[:, 0], bary[:, 1], bary[:, 2]
    z = np.zeros(q)
    return np.stack([
        np.column_stack([4 * L0 - 1, z, z]),
        np.column_stack([z, 4 * L1 - 1, z]),
        np.column_stack([z, z, 4 * L2 - 1]),
        np.column_stack([4 * L1, 4 * L0, z]),
        np.column_stack([z, 4 * L2, 4 * L1]),
        np.column_stack([4 * L2, z, 4 * L0]),
    ], axis=1)


def barycentric_gradients(coords: np.ndarray):
    """Gradients of the barycentric coordinates on each cell.

    Parameters
    ----------
    coords : (T, 3, 2) vertex coordinates

    Returns
    -------
    grads : (T, 3, 2)
    areas : (T,)
    """
    x, y = coords[..., 0], coords[..., 1]
    area = 0.5 * ((x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0])
                  - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0]))
    grads = np.empty(coords.shape)
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        grads[:, i, 0] = (y[:, j] - y[:, k]) / (2 * area)
        grads[:, i, 1] = (x[:, k] - x[:, j]) / (2 * area)
    return grads, area


@dataclass(eq=False)
class FunctionSpace:
    mesh: Mesh
    degree: int
    nodes: np.ndarray          # (N, 2) scalar node coordinates
    cell_nodes: np.ndarray     # (T, nloc) scalar node indices per cell

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def total_dofs(self) -> int:
        return 2 * self.n_nodes

    @property
    def cell_dofs(self) -> np.ndarray:
        """(T, 2*nloc) vector DOF indices, node-blocked."""
        cn = self.cell_nodes
        out = np.empty((cn.shape[0], 2 * cn.shape[1]), dtype=np.int64)
        out[:, 0::2] = 2 * cn
        out[:, 1::2] = 2 * cn + 1
        return out

    def gradients_at(self, bary: np.ndarray):
        """Physical basis gradients ``(T, q, nloc, 2)`` and cell areas."""
        lam_grad, area = barycentric_gradients(self.mesh.vertices[self.mesh.cells])
        dphi = shape_bary_gradients(self.degree, bary)
        return np.einsum("qaj,tjd->tqad", dphi, lam_grad), area

    def boundary_edge_nodes(self) -> np.ndarray:
        """Scalar nodes on each boundary edge, ordered (start, end[, mid])."""
        ends = self.mesh.boundary_oriented
        if self.degree == 1:
            return ends
        mids = self.mesh.n_vertices + self.mesh.boundary_edges
        return np.column_stack([ends, mids])


def build_space(mesh: Mesh, k: int) -> FunctionSpace:
    """Continuous vector Lagrange space of degree ``k`` on ``mesh``."""
    if k not in (1, 2):
        raise ValueError(f"unsupported polynomial degree {k}; use 1 or 2")
    if k == 1:
        return FunctionSpace(mesh, 1, mesh.vertices.copy(), mesh.cells.copy())
    v = mesh.vertices
    mids = 0.5 * (v[mesh.edges[:, 0]] + v[mesh.edges[:, 1]])
    nodes = np.vstack([v, mids])
    cell_nodes = np.hstack([mesh.cells, mesh.n_vertices + mesh.cell_edges])
    return FunctionSpace(mesh, 2, nodes, cell_nodes)


@dataclass(frozen=True)
class BoundaryNodeClass:
    node: int
    kind: str                                # "interior", "slip" or "pinned"
    normal: Optional[tuple] = None           # unit normal for slip nodes


def classify_boundary_nodes(space: FunctionSpace,
                            angle_tol: float = SLIP_ANGLE_POLYGON) -> List[BoundaryNodeClass]:
    """Classify boundary nodes as slip (one tangential DOF) or pinned.

    A vertex is slip when the normals of its two boundary edges differ by at
    most ``angle_tol``; it then carries their renormalised average. Edge
    midpoints (k=2) are always slip with their edge normal. Interior nodes
    are not listed.
    """
    mesh = space.mesh
    ends = mesh.boundary_oriented
    normals = mesh.boundary_normals
    # for each boundary vertex: the edge ending there and the edge starting there
    incoming = {}
    outgoing = {}
    for e, (a, b) in enumerate(ends):
        outgoing[int(a)] = e
        incoming[int(b)] = e
    classes = []
    for v in sorted(outgoing):
        n1 = normals[incoming[v]]
        n2 = normals[outgoing[v]]
        angle = abs(np.arctan2(n1[0] * n2[1] - n1[1] * n2[0], np.dot(n1, n2)))
        if angle <= angle_tol:
            n = n1 + n2
            n = n / np.hypot(n[0], n[1])
            classes.append(BoundaryNodeClass(v, "slip", (float(n[0]), float(n[1]))))
        else:
            classes.append(BoundaryNodeClass(v, "pinned"))
    if space.degree == 2:
        base = mesh.n_vertices
        for e, n in zip(mesh.boundary_edges, normals):
            classes.append(BoundaryNodeClass(int(base + e), "slip", (float(n[0]), float(n[1]))))
    return classes


@dataclass(eq=False)
class ConstraintOperator:
    """Orthonormal reduction map ``Z`` from free DOFs to the full vector."""

    Z: sp.csr_matrix

    @property
    def free_dofs(self) -> int:
        return self.Z.shape[1]

    @property
    def total_dofs(self) -> int:
        return self.Z.shape[0]

    def lift(self, y: np.ndarray) -> np.ndarray:
        return self.Z @ y

    def restrict(self, x: np.ndarray) -> np.ndarray:
        return self.Z.T @ x


def build_constraint_operator(space: FunctionSpace,
                              classes: List[BoundaryNodeClass]) -> ConstraintOperator:
    """Assemble ``Z``: two identity columns per interior node, one tangent
    column per slip node, none for pinned nodes."""
    kind = {}
    for c in classes:
        if c.kind == "slip":
            n = np.asarray(c.normal, dtype=float)
            length = np.hypot(n[0], n[1])
            if not length > 0.0:
                raise ValueError(f"zero-length normal at node {c.node}")
            kind[c.node] = n / length
        elif c.kind == "pinned":
            kind[c.node] = None
        elif c.kind != "interior":
            raise ValueError(f"unknown boundary class {c.kind!r}")
    rows, cols, vals = [], [], []
    col = 0
    for node in range(space.n_nodes):
        if node not in kind:
            rows += [2 * node, 2 * node + 1]
            cols += [col, col + 1]
            vals += [1.0, 1.0]
            col += 2
        elif kind[node] is not None:
            n = kind[node]
            rows += [2 * node, 2 * node + 1]
            cols += [col, col]
            vals += [-n[1], n[0]]
            col += 1
    Z = sp.csr_matrix((vals, (rows, cols)), shape=(space.total_dofs, col))
    Z.eliminate_zeros()
    return ConstraintOperator(Z)


def interpolate(space: FunctionSpace, field: Callable) -> np.ndarray:
    """Nodal interpolant of ``field(x, y) -> (fx, fy)`` as a full DOF vector."""
    x, y = space.nodes[:, 0], space.nodes[:, 1]
    fx, fy = field(x, y)
    out = np.empty(space.total_dofs)
    out[0::2] = np.broadcast_to(np.asarray(fx, dtype=float), x.shape)
    out[1::2] = np.broadcast_to(np.asarray(fy, dtype=float), x.shape)
    if not np.all(np.isfinite(out)):
        raise ValueError("field produced non-finite values")
    return out


def evaluate(space: FunctionSpace, coeffs: np.ndarray, bary: np.ndarray):
    """Values ``(T, q, 2)`` and gradients ``(T, q, 2, 2)`` of a discrete field.

    ``grad[..., i, j]`` is the derivative of component ``i`` along ``x_j``.
    """
    phi = shape_values(space.degree, bary)
    grads, _ = space.gradients_at(bary)
    u = coeffs.reshape(-1, 2)[space.cell_nodes]          # (T, nloc, 2)
    values = np.einsum("qa,tai->tqi", phi, u)
    gradient = np.einsum("tqad,tai->tqid", grads, u)
    return values, gradient


def quadrature_points(space: FunctionSpace, bary: np.ndarray = QUAD6_BARY) -> np.ndarray:
    """Physical coordinates ``(T, q, 2)`` of barycentric points on each cell."""
    coords = space.mesh.vertices[space.mesh.cells]
    return np.einsum("qj,tjd->tqd", bary, coords)
