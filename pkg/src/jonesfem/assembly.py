"""Stiffness, mass and coupling matrices for the Jones eigenproblem.

Three stiffness forms are provided:

``grad_div``
    ``mu (grad u, grad v) + (lam + mu) (div u, div v)``
``strain``
    ``2 mu (eps u, eps v) + lam (div u, div v)``
``shifted``
    ``grad_div`` plus ``rho`` times the mass form.

The mass form is the plain L2 product; the density enters only through
``kappa = rho * w**2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fespace import (QUAD6_BARY, QUAD6_WEIGHTS, BoundaryNodeClass,
                      ConstraintOperator, FunctionSpace, barycentric_gradients,
                      shape_bary_gradients, shape_values)

FORMULATIONS = ("grad_div", "strain", "shifted")
IMPOSITIONS = ("reduction", "penalty", "mixed")

PENALTY_FACTOR = 1e10
DEFAULT_ETA = 1e-8
_DENSE_CHOLESKY_MAX = 4000


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class MaterialParams:
    """Lame constants and density.

    Parameters
    ----------
    mu : float
        Shear modulus, must be positive.
    lam : float
        First Lame constant; ``lam + 2 mu / dim`` must be positive.
    rho : float
        Density, must be positive.
    dim : int
        Spatial dimension (only 2 is discretized).
    """

    mu: float
    lam: float
    rho: float = 1.0
    dim: int = 2

    def __post_init__(self):
        vals = (self.mu, self.lam, self.rho)
        if not all(np.isfinite(v) for v in vals):
            raise AssemblyError("material parameters must be finite")
        if self.mu <= 0:
            raise AssemblyError(f"shear modulus must be positive, got mu={self.mu}")
        if self.rho <= 0:
            raise AssemblyError(f"density must be positive, got rho={self.rho}")
        if self.lam + 2.0 * self.mu / self.dim <= 0:
            raise AssemblyError(
                f"lam + 2 mu / {self.dim} must be positive, got lam={self.lam}, mu={self.mu}")

    @property
    def coercivity_constant(self) -> float:
        """``min(2 mu, dim (lam + 2 mu / dim))``, the pointwise strain-energy bound."""
        return min(2.0 * self.mu, self.dim * (self.lam + 2.0 * self.mu / self.dim))

    def as_dict(self) -> dict:
        return {"mu": self.mu, "lambda": self.lam, "rho": self.rho, "dim": self.dim}


def _check_formulation(formulation: str) -> None:
    if formulation not in FORMULATIONS:
        raise AssemblyError(f"unknown formulation {formulation!r}; expected one of {FORMULATIONS}")


def _stiffness_blocks(g: np.ndarray, mu: float, lam: float, formulation: str) -> np.ndarray:
    """Pairwise 2x2 blocks ``(T, nloc, nloc, 2, 2)`` for gradients ``g`` of shape ``(T, nloc, 2)``.

    Block ``[a, b, i, j]`` is the form evaluated at ``(phi_b e_j, phi_a e_i)``.
    """
    dot = np.einsum("tad,tbd->tab", g, g)
    ab = np.einsum("tai,tbj->tabij", g, g)          # g_a[i] g_b[j]
    eye = np.eye(2)
    if formulation == "strain":
        ba = np.einsum("tbi,taj->tabij", g, g)      # g_b[i] g_a[j]
        return mu * dot[..., None, None] * eye + mu * ba + lam * ab
    return mu * dot[..., None, None] * eye + (lam + mu) * ab


def _local_matrices(space: FunctionSpace, params: MaterialParams, formulation: str):
    """Batched local stiffness and scalar mass matrices.

    Returns
    -------
    K : (T, 2 nloc, 2 nloc)
    m : (T, nloc, nloc) scalar mass (the vector mass is ``m`` kron ``I2``)
    """
    stiff_form = "strain" if formulation == "strain" else "grad_div"
    coords = space.mesh.vertices[space.mesh.cells]
    lam_grad, area = barycentric_gradients(coords)
    if np.any(area <= 0):
        raise AssemblyError("degenerate or inverted cell")
    T = coords.shape[0]
    if space.degree == 1:
        blocks = _stiffness_blocks(lam_grad, params.mu, params.lam, stiff_form)
        blocks *= area[:, None, None, None, None]
        m = (area / 12.0)[:, None, None] * (np.ones((3, 3)) + np.eye(3))
        nloc = 3
    else:
        nloc = 6
        dphi = shape_bary_gradients(2, QUAD6_BARY)              # (q, 6, 3)
        phi = shape_values(2, QUAD6_BARY)                       # (q, 6)
        blocks = np.zeros((T, nloc, nloc, 2, 2))
        for q, w in enumerate(QUAD6_WEIGHTS):
            g = np.einsum("aj,tjd->tad", dphi[q], lam_grad)
            blocks += w * _stiffness_blocks(g, params.mu, params.lam, stiff_form)
        blocks *= area[:, None, None, None, None]
        m = area[:, None, None] * np.einsum("q,qa,qb->ab", QUAD6_WEIGHTS, phi, phi)
    K = blocks.transpose(0, 1, 3, 2, 4).reshape(T, 2 * nloc, 2 * nloc)
    return K, m


def element_matrices(cell: np.ndarray, k: int, params: MaterialParams,
                     formulation: str = "grad_div"):
    """Local stiffness and vector mass on a single triangle.

    Parameters
    ----------
    cell : (3, 2) counter-clockwise vertex coordinates
    k : polynomial degree (1 or 2)

    Returns
    -------
    K, M : (2 nloc, 2 nloc) arrays with node-blocked ordering.
    """
    from .fespace import build_space
    from .mesh import Mesh, MeshError

    _check_formulation(formulation)
    try:
        mesh = Mesh(np.asarray(cell, dtype=float), np.array([[0, 1, 2]]))
    except MeshError as exc:
        raise AssemblyError(str(exc)) from exc
    space = build_space(mesh, k)
    K, m = _local_matrices(space, params, formulation)
    M = np.kron(m[0], np.eye(2))
    K = K[0]
    if formulation == "shifted":
        K = K + params.rho * M
    return 0.5 * (K + K.T), 0.5 * (M + M.T)


def _scatter(dofs: np.ndarray, local: np.ndarray, n: int) -> sp.csr_matrix:
    nloc = dofs.shape[1]
    rows = np.repeat(dofs, nloc, axis=1).ravel()
    cols = np.tile(dofs, (1, nloc)).ravel()
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    return symmetrize(A)


def symmetrize(A: sp.spmatrix) -> sp.csr_matrix:
    """``(A + A^T) / 2``; floating-point addition commutes, so the result is exactly symmetric."""
    A = sp.csr_matrix(A)
    S = ((A + A.T) * 0.5).tocsr()
    S.sort_indices()
    return S


def assemble_form(space: FunctionSpace, params: MaterialParams, formulation: str = "grad_div"):
    """Global stiffness and mass on the unconstrained vector space.

    Returns
    -------
    K_full, M_full : csr_matrix of size ``space.total_dofs``
    """
    _check_formulation(formulation)
    K_loc, m = _local_matrices(space, params, formulation)
    nloc = m.shape[1]
    M_loc = np.einsum("tab,ij->taibj", m, np.eye(2)).reshape(-1, 2 * nloc, 2 * nloc)
    dofs = space.cell_dofs
    n = space.total_dofs
    K = _scatter(dofs, K_loc, n)
    M = _scatter(dofs, M_loc, n)
    if formulation == "shifted":
        K = symmetrize(K + params.rho * M)
    return K, M


def assemble_scalar_mass(space: FunctionSpace) -> sp.csr_matrix:
    """Mass matrix of the scalar Lagrange space on the same nodes."""
    params = MaterialParams(1.0, 0.0, 1.0)
    _, m = _local_matrices(space, params, "grad_div")
    return _scatter(space.cell_nodes, m, space.n_nodes)


def is_positive_definite(M: sp.spmatrix) -> bool:
    """Cholesky test: dense below a size threshold, sparse LDL-like LU above."""
    n = M.shape[0]
    if n == 0:
        return True
    if n <= _DENSE_CHOLESKY_MAX:
        try:
            sla.cholesky(M.toarray(), lower=True)
            return True
        except sla.LinAlgError:
            return False
    try:
        lu = spla.splu(sp.csc_matrix(M), permc_spec="MMD_AT_PLUS_A",
                       diag_pivot_thresh=0.0, options={"SymmetricMode": True})
    except RuntimeError:
        return False
    # with symmetric pivoting the U diagonal is the D of an LDL^T factorization
    if np.any(lu.perm_r != lu.perm_c):
        return bool(np.all(np.linalg.eigvalsh(M.toarray()) > 0))
    return bool(np.all(lu.U.diagonal() > 0))


@dataclass(eq=False)
class SymmetricSystem:
    """A generalized symmetric pencil ``(K, M)``.

    ``Z`` lifts solution vectors to the full DOF space (``None`` means the
    identity). ``shift`` is added to every eigenvalue by the stiffness form
    and removed again when reporting.
    """

    K: sp.csr_matrix
    M: sp.csr_matrix
    formulation: str
    imposition: str
    Z: Optional[ConstraintOperator] = None
    shift: float = 0.0
    K_full: Optional[sp.csr_matrix] = field(default=None, repr=False)
    M_full: Optional[sp.csr_matrix] = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.K.shape[0]

    def lift(self, y: np.ndarray) -> np.ndarray:
        return y if self.Z is None else self.Z.lift(y)


@dataclass(eq=False)
class SaddleSystem:
    """Block system ``[[A, B^T], [B, -eta C]]`` with mass ``M_u`` on the displacement only."""

    A: sp.csr_matrix
    B: sp.csr_matrix
    C: sp.csr_matrix
    M_u: sp.csr_matrix
    eta: float
    formulation: str = "strain"
    imposition: str = "mixed"

    @property
    def n_u(self) -> int:
        return self.A.shape[0]

    @property
    def n_p(self) -> int:
        return self.C.shape[0]

    def block_matrix(self) -> sp.csr_matrix:
        S = sp.bmat([[self.A, self.B.T], [self.B, -self.eta * self.C]], format="csr")
        return symmetrize(S)

    def block_mass(self) -> sp.csr_matrix:
        Z = sp.csr_matrix((self.n_p, self.n_p))
        return sp.bmat([[self.M_u, None], [None, Z]], format="csr")


def _sym_project(A: sp.spmatrix, Z: sp.spmatrix) -> sp.csr_matrix:
    return symmetrize(Z.T @ A @ Z)


def reduce_system(K_full: sp.spmatrix, M_full: sp.spmatrix, Z: ConstraintOperator,
                  formulation: str = "grad_div", shift: float = 0.0) -> SymmetricSystem:
    """Restrict a pencil to the constrained space ``range(Z)``.

    Raises
    ------
    AssemblyError
        If the reduced mass is not positive definite, which indicates a
        malformed constraint operator.
    """
    if K_full.shape != M_full.shape or K_full.shape[0] != Z.total_dofs:
        raise AssemblyError("matrix and constraint operator sizes disagree")
    K = _sym_project(K_full, Z.Z)
    M = _sym_project(M_full, Z.Z)
    if not is_positive_definite(M):
        raise AssemblyError("reduced mass matrix is not positive definite")
    return SymmetricSystem(K, M, formulation, "reduction", Z, shift,
                           sp.csr_matrix(K_full), sp.csr_matrix(M_full))


def default_penalty(K_full: sp.spmatrix) -> float:
    return PENALTY_FACTOR * float(np.max(np.abs(K_full.diagonal())))


def assemble_penalty(K_full: sp.spmatrix, M_full: sp.spmatrix,
                     classes: List[BoundaryNodeClass], gamma: Optional[float] = None,
                     formulation: str = "grad_div", shift: float = 0.0) -> SymmetricSystem:
    """Add ``gamma n n^T`` at slip nodes and ``gamma I`` at pinned nodes."""
    if gamma is None:
        gamma = default_penalty(K_full)
    if gamma < 0:
        raise AssemblyError("penalty weight must be non-negative")
    rows, cols, vals = [], [], []
    for c in classes:
        i = 2 * c.node
        if c.kind == "slip":
            n = np.asarray(c.normal, dtype=float)
            n = n / np.hypot(n[0], n[1])
            P = np.outer(n, n)
        elif c.kind == "pinned":
            P = np.eye(2)
        else:
            continue
        for a in range(2):
            for b in range(2):
                rows.append(i + a)
                cols.append(i + b)
                vals.append(gamma * P[a, b])
    n = K_full.shape[0]
    P = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    K = symmetrize(K_full + P)
    return SymmetricSystem(K, sp.csr_matrix(M_full), formulation, "penalty", None, shift,
                           sp.csr_matrix(K_full), sp.csr_matrix(M_full))


# 3-point Gauss-Legendre rule on [0, 1]
_GL_T = 0.5 + 0.5 * np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
_GL_W = np.array([5.0, 8.0, 5.0]) / 18.0


def _edge_basis(k: int, t: np.ndarray) -> np.ndarray:
    """1D Lagrange basis on an edge, nodes ordered (start, end[, mid])."""
    if k == 1:
        return np.column_stack([1 - t, t])
    return np.column_stack([(1 - t) * (1 - 2 * t), t * (2 * t - 1), 4 * t * (1 - t)])


def assemble_trace_coupling(space_u: FunctionSpace, space_p: FunctionSpace) -> sp.csr_matrix:
    """``B[c, (a, d)] = int_{boundary} phi_a n_d psi_c ds`` over straight boundary edges."""
    mesh = space_u.mesh
    ends = mesh.boundary_oriented
    v = mesh.vertices
    length = np.hypot(*(v[ends[:, 1]] - v[ends[:, 0]]).T)
    normals = mesh.boundary_normals
    phi = _edge_basis(space_u.degree, _GL_T)                    # (3, nu)
    psi = _edge_basis(space_p.degree, _GL_T)                    # (3, np)
    local = np.einsum("q,qc,qa->ca", _GL_W, psi, phi)           # (np, nu)
    u_nodes = space_u.boundary_edge_nodes()
    p_nodes = space_p.boundary_edge_nodes()
    vals = (length[:, None, None, None] * local[None, :, :, None]
            * normals[:, None, None, :])                        # (E, np, nu, 2)
    rows = np.broadcast_to(p_nodes[:, :, None, None], vals.shape)
    cols = 2 * u_nodes[:, None, :, None] + np.arange(2)[None, None, None, :]
    cols = np.broadcast_to(cols, vals.shape)
    B = sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())),
                      shape=(space_p.n_nodes, space_u.total_dofs)).tocsr()
    B.sum_duplicates()
    B.sort_indices()
    return B


def assemble_mixed(space_u: FunctionSpace, space_p: FunctionSpace, params: MaterialParams,
                   eta: float = DEFAULT_ETA) -> SaddleSystem:
    """Saddle-point pencil with a scalar multiplier for the normal trace.

    The displacement block uses the strain form on the unconstrained space;
    the multiplier is a P1 field on the whole domain whose mass ``C``
    stabilizes the system when ``eta > 0``.
    """
    if eta < 0:
        raise AssemblyError("eta must be non-negative")
    if space_p.mesh is not space_u.mesh:
        raise AssemblyError("displacement and multiplier spaces must share a mesh")
    A, M_u = assemble_form(space_u, params, "strain")
    B = assemble_trace_coupling(space_u, space_p)
    C = assemble_scalar_mass(space_p)
    return SaddleSystem(A, B, C, M_u, float(eta))


def write_coo(path, A: sp.spmatrix) -> None:
    """Write ``row col value`` lines (0-based, 17 significant digits)."""
    C = sp.coo_matrix(A)
    order = np.lexsort((C.col, C.row))
    with open(path, "w") as fh:
        fh.write(f"% {C.shape[0]} {C.shape[1]} {C.nnz}\n")
        for r, c, x in zip(C.row[order], C.col[order], C.data[order]):
            fh.write(f"{r} {c} {x:.17g}\n")
