"""Smallest eigenpairs of the Jones pencils.

Small systems go through LAPACK (Cholesky reduction to a standard problem
followed by tridiagonalization); large ones through ARPACK shift-invert
Lanczos with a Rayleigh-Ritz clean-up in the returned subspace. Penalty and
stabilized mixed systems take the shift-invert route from a much smaller
size, because the dense transform loses the small eigenvalues to the size
of the penalty.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (DEFAULT_ETA, FORMULATIONS, IMPOSITIONS, MaterialParams,
                       SaddleSystem, SymmetricSystem, assemble_form, assemble_mixed,
                       assemble_penalty, reduce_system)
from .fespace import (SLIP_ANGLE_CIRCLE, SLIP_ANGLE_POLYGON, build_constraint_operator,
                      build_space, classify_boundary_nodes)
from .mesh import Mesh

DENSE_MAX = 1500
# pencils with large penalty-like terms lose small eigenvalues in the dense
# transform; above this size they go through shift-invert instead
ILL_SCALED_DENSE_MAX = 0
DEFAULT_TOL = 1e-8
CLUSTER_TOL = 1e-3
SHIFT_FACTOR = 0.4


class ConvergenceError(RuntimeError):
    pass


class RotationLockingWarning(UserWarning):
    pass


@dataclass(eq=False)
class EigenPair:
    """Eigenvalue ``kappa = rho w^2`` with an M-normalized full-DOF vector.

    ``residual`` is ``||K u - k M u|| / ||M u||`` on the pencil that was
    solved (``k`` includes any shift); ``backward_error`` scales the same
    residual by ``(||K|| + |k| ||M||) ||u||``.
    """

    kappa: float
    coeffs: np.ndarray
    residual: float
    backward_error: float = 0.0
    reduced: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass(frozen=True)
class EigenCluster:
    kappa: float
    members: tuple

    @property
    def multiplicity(self) -> int:
        return len(self.members)


def _fix_sign(v: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(v)))
    return -v if v[i] < 0 else v


def _norm1(A) -> float:
    if sp.issparse(A):
        return float(abs(A).sum(axis=0).max()) if A.nnz else 0.0
    return float(np.abs(A).sum(axis=0).max()) if A.size else 0.0


def _make_pairs(K, M, vals, vecs, shift, lift, tol, apply_K=None) -> List[EigenPair]:
    apply_K = apply_K or (lambda x: K @ x)
    nK, nM = _norm1(K) if K is not None else 0.0, _norm1(M)
    pairs = []
    for lam, y in zip(vals, vecs.T):
        y = y / np.sqrt(y @ (M @ y))
        y = _fix_sign(y)
        My = M @ y
        r = np.linalg.norm(apply_K(y) - lam * My)
        res = r / np.linalg.norm(My)
        scale = (nK + abs(lam) * nM) * np.linalg.norm(y)
        be = r / scale if scale > 0 else r
        if be > tol:
            raise ConvergenceError(
                f"eigenpair {lam:.6g} has backward error {be:.3g} above tolerance {tol:.3g}")
        pairs.append(EigenPair(float(lam - shift), lift(y), float(res), float(be), y))
    return pairs


def _shift_for(K, M) -> float:
    """A negative shift on the scale of the low end of the spectrum.

    ``trace K / trace M`` is the mean eigenvalue; dividing by the dimension
    gives the slope of the (roughly linear in 2D) eigenvalue counting
    function, which is the order of the first eigenvalues.
    """
    tm = float(M.diagonal().sum())
    tk = float(K.diagonal().sum())
    if tm <= 0 or tk <= 0:
        return -1.0
    return -SHIFT_FACTOR * tk / (tm * K.shape[0])


def _start_vector(n: int) -> np.ndarray:
    # deterministic, non-symmetric start to avoid missing modes of any parity
    i = np.arange(n, dtype=float)
    return 1.0 + 0.5 * np.sin(1.7 * i + 0.3) + 0.25 * np.cos(0.37 * i * i)


def _rayleigh_ritz(apply_K, M, V):
    """Orthonormalize ``V`` in the M inner product and solve the projected pencil."""
    G = V.T @ (M @ V)
    G = 0.5 * (G + G.T)
    Hk = V.T @ np.column_stack([apply_K(v) for v in V.T])
    Hk = 0.5 * (Hk + Hk.T)
    vals, W = sla.eigh(Hk, G)
    return vals, V @ W


def _lanczos(apply_K, M, n, k, sigma, opinv, tol):
    ncv = min(n - 1, max(2 * k + 1, k + 20))
    maxiter = max(1000, 20 * n)
    try:
        vals, vecs = spla.eigsh(spla.LinearOperator((n, n), matvec=apply_K, dtype=float),
                                k=k, M=M, sigma=sigma, which="LM", OPinv=opinv,
                                v0=_start_vector(n), ncv=ncv, maxiter=maxiter, tol=0)
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceError(f"Lanczos did not converge: {exc}") from exc
    order = np.argsort(vals)
    return _rayleigh_ritz(apply_K, M, vecs[:, order])


def _opinv_from_lu(A):
    lu = spla.splu(sp.csc_matrix(A))
    n = A.shape[0]
    return spla.LinearOperator((n, n), matvec=lu.solve, dtype=float)


def solve_gevp(system: SymmetricSystem, k_want: int, tol: float = DEFAULT_TOL,
               method: str = "auto") -> List[EigenPair]:
    """Smallest ``k_want`` eigenpairs of ``K u = k M u`` in ascending order.

    Parameters
    ----------
    system : SymmetricSystem
    k_want : int
        Number of eigenpairs, at most ``system.dim``.
    tol : float
        Bound on the normwise backward error of every returned pair.
    method : {"auto", "dense", "lanczos"}

    Returns
    -------
    list of EigenPair
        ``kappa`` has the system shift removed and ``coeffs`` are lifted to
        the full DOF space.
    """
    n = system.dim
    if n == 0 or k_want == 0:
        return []
    if k_want < 0 or k_want > n:
        raise ValueError(f"k_want={k_want} outside [0, {n}]")
    K, M = system.K, system.M
    if method == "auto":
        limit = ILL_SCALED_DENSE_MAX if system.imposition == "penalty" else DENSE_MAX
        dense = n <= limit
        method = "dense" if dense or k_want >= n - 1 else "lanczos"
    if method == "dense":
        try:
            vals, vecs = sla.eigh(K.toarray(), M.toarray(), subset_by_index=[0, k_want - 1])
        except sla.LinAlgError as exc:
            raise ConvergenceError(f"dense solve failed (mass not positive definite?): {exc}") \
                from exc
    elif method == "lanczos":
        # the penalty would dominate the trace, so size the shift on the bare form
        use_full = system.imposition == "penalty" and system.K_full is not None
        sigma = _shift_for(system.K_full, system.M_full) if use_full else _shift_for(K, M)
        try:
            opinv = _opinv_from_lu(K - sigma * M)
        except RuntimeError as exc:
            raise ConvergenceError(f"factorization of shifted pencil failed: {exc}") from exc
        vals, vecs = _lanczos(lambda x: K @ x, M, n, k_want, sigma, opinv, tol)
    else:
        raise ValueError(f"unknown method {method!r}")
    return _make_pairs(K, M, vals, vecs, system.shift, system.lift, tol)


def _saddle_parts(saddle: SaddleSystem):
    """Drop multiplier rows that do not touch the boundary when ``eta = 0``."""
    B, C = saddle.B, saddle.C
    if saddle.eta == 0:
        keep = np.flatnonzero(np.diff(B.indptr) > 0)
        B = B[keep]
        C = C[keep][:, keep]
    return B, C


def solve_saddle(saddle: SaddleSystem, k_want: int, tol: float = DEFAULT_TOL,
                 method: str = "auto", shift: float = 0.0) -> List[EigenPair]:
    """Smallest eigenpairs of the mixed pencil, mass acting on ``u`` only.

    For ``eta > 0`` this equals the pencil ``(A + B^T (eta C)^-1 B, M_u)``;
    for ``eta = 0`` it is ``(A, M_u)`` restricted to ``ker B``.
    """
    n = saddle.n_u
    if n == 0 or k_want == 0:
        return []
    A, M = saddle.A, saddle.M_u
    B, C = _saddle_parts(saddle)
    eta = saddle.eta
    if method == "auto":
        limit = ILL_SCALED_DENSE_MAX if eta > 0 else DENSE_MAX
        method = "dense" if n <= limit or k_want >= n - 1 else "lanczos"
    if eta > 0:
        Clu = spla.splu(sp.csc_matrix(C))
        apply_K = lambda x: A @ x + B.T @ (Clu.solve(B @ x) / eta)  # noqa: E731
    else:
        apply_K = lambda x: A @ x  # noqa: E731

    if method == "dense":
        if eta > 0:
            S = A.toarray() + B.T.toarray() @ Clu.solve(B.toarray()) / eta
            S = 0.5 * (S + S.T)
            vals, vecs = sla.eigh(S, M.toarray(), subset_by_index=[0, min(k_want, n) - 1])
        else:
            N = sla.null_space(B.toarray())
            if N.shape[1] == 0:
                return []
            An = N.T @ (A @ N)
            Mn = N.T @ (M @ N)
            k = min(k_want, N.shape[1])
            vals, W = sla.eigh(0.5 * (An + An.T), 0.5 * (Mn + Mn.T), subset_by_index=[0, k - 1])
            vecs = N @ W
    elif method == "lanczos":
        sigma = _shift_for(A, M)
        blk = sp.bmat([[A - sigma * M, B.T], [B, -eta * C]], format="csc")
        lu = spla.splu(blk)
        npad = B.shape[0]
        opinv = spla.LinearOperator(
            (n, n), matvec=lambda x: lu.solve(np.concatenate([x, np.zeros(npad)]))[:n],
            dtype=float)
        if eta > 0:
            vals, vecs = _lanczos(apply_K, M, n, k_want, sigma, opinv, tol)
        else:
            ncv = min(n - 1, max(2 * k_want + 1, k_want + 20))
            try:
                vals, vecs = spla.eigsh(spla.LinearOperator((n, n), matvec=apply_K, dtype=float),
                                        k=k_want, M=M, sigma=sigma, which="LM", OPinv=opinv,
                                        v0=_start_vector(n), ncv=ncv, tol=0)
            except spla.ArpackNoConvergence as exc:
                raise ConvergenceError(f"Lanczos did not converge: {exc}") from exc
            order = np.argsort(vals)
            vals, vecs = vals[order], vecs[:, order]
    else:
        raise ValueError(f"unknown method {method!r}")

    if eta > 0:
        return _make_pairs_op(apply_K, A, B, C, eta, M, vals, vecs, shift, tol)
    return _make_pairs_constrained(A, B, M, vals, vecs, shift, tol)


def _make_pairs_op(apply_K, A, B, C, eta, M, vals, vecs, shift, tol):
    # the Schur complement is not formed; bound it by its two terms
    nS = _norm1(A) + _norm1(B) ** 2 / (eta * _min_diag(C))
    nM = _norm1(M)
    pairs = []
    for lam, y in zip(vals, vecs.T):
        y = _fix_sign(y / np.sqrt(y @ (M @ y)))
        My = M @ y
        r = np.linalg.norm(apply_K(y) - lam * My)
        be = r / ((nS + abs(lam) * nM) * np.linalg.norm(y))
        if be > tol:
            raise ConvergenceError(f"mixed eigenpair {lam:.6g} backward error {be:.3g}")
        pairs.append(EigenPair(float(lam - shift), y, float(r / np.linalg.norm(My)),
                               float(be), y))
    return pairs


def _min_diag(C) -> float:
    d = C.diagonal()
    return float(d.min()) if d.size else 1.0


def _make_pairs_constrained(A, B, M, vals, vecs, shift, tol):
    # residual of the saddle system with the least-squares multiplier
    nA, nM = _norm1(A), _norm1(M)
    Bt = sp.csr_matrix(B.T)
    pairs = []
    for lam, y in zip(vals, vecs.T):
        y = _fix_sign(y / np.sqrt(y @ (M @ y)))
        My = M @ y
        g = lam * My - A @ y
        p = spla.lsqr(Bt, g, atol=1e-15, btol=1e-15)[0] if B.shape[0] else np.zeros(0)
        r = np.hypot(np.linalg.norm(A @ y + Bt @ p - lam * My), np.linalg.norm(B @ y))
        be = r / ((nA + abs(lam) * nM) * np.linalg.norm(y))
        if be > tol:
            raise ConvergenceError(f"constrained eigenpair {lam:.6g} backward error {be:.3g}")
        pairs.append(EigenPair(float(lam - shift), y, float(r / np.linalg.norm(My)),
                               float(be), y))
    return pairs


def cluster_eigenvalues(pairs, cluster_tol: float = CLUSTER_TOL) -> List[EigenCluster]:
    """Greedy chaining of sorted eigenvalues by relative gap.

    ``pairs`` may hold :class:`EigenPair` objects or plain numbers. Two
    neighbours join a cluster when ``|k2 - k1| <= cluster_tol * max(|k1|, |k2|)``.
    """
    vals = [p.kappa if isinstance(p, EigenPair) else float(p) for p in pairs]
    if any(b < a for a, b in zip(vals, vals[1:])):
        raise ValueError("eigenvalues must be sorted ascending")
    clusters: List[list] = []
    for i, v in enumerate(vals):
        if clusters:
            prev = vals[clusters[-1][-1]]
            if abs(v - prev) <= cluster_tol * max(abs(v), abs(prev)):
                clusters[-1].append(i)
                continue
        clusters.append([i])
    return [EigenCluster(float(np.mean([vals[i] for i in c])), tuple(c)) for c in clusters]


def _default_angle_tol(mesh: Mesh) -> float:
    return SLIP_ANGLE_CIRCLE if mesh.is_axisymmetric else SLIP_ANGLE_POLYGON


def solve_jones(mesh: Mesh, params: MaterialParams, k: int = 1, imposition: str = "reduction",
                formulation: str = "grad_div", k_want: int = 6, *, tol: float = DEFAULT_TOL,
                angle_tol: Optional[float] = None, eta: float = DEFAULT_ETA,
                gamma: Optional[float] = None, cluster_tol: float = CLUSTER_TOL,
                domain=None, method: str = "auto"):
    """Build, assemble and solve a Jones eigenproblem end to end.

    Returns
    -------
    SpectrumReport
        Eigenvalues ascending with diagnostics; empty when the constrained
        space has no free DOFs.
    """
    from .postprocess import build_report

    if imposition not in IMPOSITIONS:
        raise ValueError(f"unknown imposition {imposition!r}; expected one of {IMPOSITIONS}")
    if formulation not in FORMULATIONS:
        raise ValueError(f"unknown formulation {formulation!r}; expected one of {FORMULATIONS}")
    if k_want < 1:
        raise ValueError("k_want must be at least 1")
    if angle_tol is None:
        angle_tol = _default_angle_tol(mesh)
    if mesh.is_axisymmetric and imposition == "reduction" and angle_tol < SLIP_ANGLE_CIRCLE / 10:
        warnings.warn("pinning the boundary of a polygonal disk locks its rigid rotation; "
                      "use a looser angle tolerance or the mixed imposition",
                      RotationLockingWarning, stacklevel=2)
    space = build_space(mesh, k)
    shift = params.rho if formulation == "shifted" else 0.0
    meta = {"angle_tol": angle_tol}

    if imposition == "mixed":
        if formulation == "grad_div":
            warnings.warn("the mixed imposition uses the strain form on the unconstrained "
                          "space; formulation set to strain", UserWarning, stacklevel=2)
            formulation = "strain"
        saddle = assemble_mixed(space, build_space(mesh, 1), params, eta)
        if formulation == "shifted":
            saddle.A = (saddle.A + params.rho * saddle.M_u).tocsr()
        saddle.formulation = formulation
        pairs = solve_saddle(saddle, min(k_want, saddle.n_u), tol, method, shift)
        meta.update(eta=eta, multiplier_dofs=saddle.n_p)
        free = saddle.n_u
    else:
        classes = classify_boundary_nodes(space, angle_tol)
        K_full, M_full = assemble_form(space, params, formulation)
        if imposition == "reduction":
            Z = build_constraint_operator(space, classes)
            system = reduce_system(K_full, M_full, Z, formulation, shift)
        else:
            system = assemble_penalty(K_full, M_full, classes, gamma, formulation, shift)
            meta["gamma"] = float(system.K.diagonal().max())
        free = system.dim
        pairs = solve_gevp(system, min(k_want, system.dim), tol, method)
    meta["free_dofs"] = free
    return build_report(space, params, pairs, imposition=imposition, formulation=formulation,
                        cluster_tol=cluster_tol, domain=domain, meta=meta)
