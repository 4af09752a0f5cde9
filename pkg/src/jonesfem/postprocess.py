"""Mode diagnostics, spectrum reports and convergence tables."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .assembly import MaterialParams, assemble_form
from .fespace import QUAD6_BARY, QUAD6_WEIGHTS, FunctionSpace, evaluate, interpolate

RATIO_TOL = 1e-3
RIGID_FLOOR = 1e-8
LOW_COERCIVITY = 1e-3

CSV_HEADER = ["j", "kappa", "w2", "w2_over_pi2", "div2", "rot2", "class", "cluster", "residual"]


def field_energies(space: FunctionSpace, coeffs: np.ndarray) -> dict:
    """Squared L2 norms of div, rot, strain, gradient and the field itself.

    The six-point rule integrates squared P2 gradients and P2 values
    exactly, so the results carry no quadrature error for k <= 2.
    """
    vals, grad = evaluate(space, np.asarray(coeffs, dtype=float), QUAD6_BARY)
    area = space.mesh.cell_areas
    w = area[:, None] * QUAD6_WEIGHTS[None, :]
    div = grad[..., 0, 0] + grad[..., 1, 1]
    rot = grad[..., 1, 0] - grad[..., 0, 1]
    off = 0.5 * (grad[..., 0, 1] + grad[..., 1, 0])
    eps2 = grad[..., 0, 0] ** 2 + grad[..., 1, 1] ** 2 + 2 * off ** 2
    return {
        "div2": float(np.sum(w * div ** 2)),
        "rot2": float(np.sum(w * rot ** 2)),
        "strain2": float(np.sum(w * eps2)),
        "grad2": float(np.sum(w * np.sum(grad ** 2, axis=(-2, -1)))),
        "l2": float(np.sum(w * np.sum(vals ** 2, axis=-1))),
    }


def div_rot_energies(space: FunctionSpace, coeffs: np.ndarray):
    """``(||div u||^2, ||rot u||^2)`` integrated exactly over the mesh."""
    e = field_energies(space, coeffs)
    return e["div2"], e["rot2"]


def tensor_norms(tau: np.ndarray, weights: np.ndarray, dim: int = 2):
    """``(||tau||^2, ||dev tau||^2, ||tr tau||^2)`` for a piecewise-constant tensor field.

    ``tau`` has shape ``(T, dim, dim)`` and ``weights`` holds the cell areas.
    """
    tr = np.trace(tau, axis1=1, axis2=2)
    dev = tau - tr[:, None, None] * np.eye(dim) / dim
    full = float(np.sum(weights * np.sum(tau ** 2, axis=(1, 2))))
    return full, float(np.sum(weights * np.sum(dev ** 2, axis=(1, 2)))), float(np.sum(weights * tr ** 2))


def classify_mode(div2: float, rot2: float, ratio_tol: float = RATIO_TOL,
                  floor: float = RIGID_FLOOR, strain2: Optional[float] = None) -> str:
    """Label a mode ``rigid``, ``s``, ``p`` or ``mixed``.

    Besides the absolute floor on both energies, a mode is rigid when its
    strain energy is negligible against ``div2 + rot2``; this catches the
    rotation of a disk, whose rot energy is large.
    """
    if div2 < 0 or rot2 < 0:
        raise ValueError("energies must be non-negative")
    if div2 <= floor and rot2 <= floor:
        return "rigid"
    if strain2 is not None and strain2 <= ratio_tol * (div2 + rot2):
        return "rigid"
    if div2 <= ratio_tol * rot2:
        return "s"
    if rot2 <= ratio_tol * div2:
        return "p"
    return "mixed"


@dataclass
class ReportEntry:
    kappa: float
    w2: float
    div2: float
    rot2: float
    strain2: float
    cls: str
    cluster: int
    residual: float


def _fmt17(x: float):
    if isinstance(x, float):
        if math.isfinite(x):
            return float(f"{x:.17g}")
        return str(x)
    return x


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return _fmt17(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, float):
        return _fmt17(obj)
    return obj


class _Float17Encoder(json.JSONEncoder):
    def iterencode(self, o, _one_shot=False):
        return super().iterencode(_clean(o), _one_shot)


def _g6(x: float) -> str:
    return f"{x:.6g}"


@dataclass(eq=False)
class SpectrumReport:
    """Computed spectrum with per-mode diagnostics, ascending in ``kappa``."""

    domain: str
    params: MaterialParams
    h: float
    degree: int
    imposition: str
    formulation: str
    entries: List[ReportEntry]
    pairs: list = field(default_factory=list, repr=False)
    space: Optional[FunctionSpace] = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)

    @property
    def kappas(self) -> np.ndarray:
        return np.array([e.kappa for e in self.entries])

    @property
    def classes(self) -> List[str]:
        return [e.cls for e in self.entries]

    @property
    def coercivity_constant(self) -> float:
        return self.params.coercivity_constant

    @property
    def low_coercivity(self) -> bool:
        """Flag when the coercivity bound is tiny against the stiffest modulus."""
        scale = max(2 * self.params.mu, abs(self.params.lam) + 2 * self.params.mu)
        return self.coercivity_constant <= LOW_COERCIVITY * scale

    def as_dict(self) -> dict:
        return {
            "domain": self.domain,
            "params": self.params.as_dict(),
            "h": self.h,
            "degree": self.degree,
            "imposition": self.imposition,
            "formulation": self.formulation,
            "coercivity_constant": self.coercivity_constant,
            "low_coercivity": self.low_coercivity,
            "meta": self.meta,
            "modes": [
                {"j": j, "kappa": e.kappa, "w2": e.w2, "w2_over_pi2": e.w2 / math.pi ** 2,
                 "div2": e.div2, "rot2": e.rot2, "strain2": e.strain2, "class": e.cls,
                 "cluster": e.cluster, "residual": e.residual}
                for j, e in enumerate(self.entries, start=1)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), cls=_Float17Encoder, indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for j, e in enumerate(self.entries, start=1):
            w.writerow([j, _g6(e.kappa), _g6(e.w2), _g6(e.w2 / math.pi ** 2), _g6(e.div2),
                        _g6(e.rot2), e.cls, e.cluster, _g6(e.residual)])
        return buf.getvalue()


def build_report(space: FunctionSpace, params: MaterialParams, pairs, *, imposition: str,
                 formulation: str, cluster_tol: float, domain=None, meta=None,
                 ratio_tol: float = RATIO_TOL) -> SpectrumReport:
    from .eigensolve import cluster_eigenvalues

    cluster_of = {}
    for c_id, c in enumerate(cluster_eigenvalues(pairs, cluster_tol)):
        for i in c.members:
            cluster_of[i] = c_id
    entries = []
    korn = math.inf
    for i, p in enumerate(pairs):
        e = field_energies(space, p.coeffs)
        cls = classify_mode(e["div2"], e["rot2"], ratio_tol, strain2=e["strain2"])
        entries.append(ReportEntry(p.kappa, p.kappa / params.rho, e["div2"], e["rot2"],
                                   e["strain2"], cls, cluster_of[i], p.residual))
        korn = min(korn, e["strain2"] / (e["l2"] + e["grad2"]))
    meta = dict(meta or {})
    if pairs:
        meta["korn_ratio"] = korn
    name = domain.describe() if hasattr(domain, "describe") else (domain or "mesh")
    return SpectrumReport(name, params, space.mesh.h, space.degree, imposition, formulation,
                          entries, list(pairs), space, meta)


@dataclass
class ConvergenceTable:
    """Rows ``(h, kappa_h, e, rate)``; the first rate is ``None``."""

    kappa_ref: float
    provenance: str
    h: List[float]
    kappa_h: List[float]
    errors: List[float]
    rates: List[Optional[float]]

    @property
    def median_rate(self) -> float:
        r = [x for x in self.rates if x is not None]
        return float(np.median(r)) if r else math.nan

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["h", "kappa_h", "e", "rate"])
        for h, k, e, r in zip(self.h, self.kappa_h, self.errors, self.rates):
            w.writerow([_g6(h), _g6(k), _g6(e), "" if r is None else _g6(r)])
        w.writerow(["median_rate", _g6(self.median_rate), "", ""])
        return buf.getvalue()


def error_and_rate(kappa_ref: float, runs: Sequence, provenance: str = "analytic") -> ConvergenceTable:
    """Relative errors ``|k - k_h| / |k|`` and rates ``log(e/e') / log(h/h')``."""
    if kappa_ref == 0:
        raise ValueError("reference eigenvalue must be non-zero")
    if len(runs) < 2:
        raise ValueError("need at least two runs")
    hs = [float(h) for h, _ in runs]
    if any(b >= a for a, b in zip(hs, hs[1:])):
        raise ValueError("mesh sizes must be strictly decreasing")
    ks = [float(k) for _, k in runs]
    es = [abs(kappa_ref - k) / abs(kappa_ref) for k in ks]
    rates: List[Optional[float]] = [None]
    for i in range(1, len(runs)):
        if es[i] > 0 and es[i - 1] > 0:
            rates.append(math.log(es[i - 1] / es[i]) / math.log(hs[i - 1] / hs[i]))
        else:
            rates.append(math.nan)
    return ConvergenceTable(float(kappa_ref), provenance, hs, ks, es, rates)


def _pick(report: SpectrumReport, j: int, skip_rigid: bool) -> float:
    ks = [e.kappa for e in report.entries if not (skip_rigid and e.cls == "rigid")]
    if len(ks) < j:
        raise ValueError(f"only {len(ks)} eigenvalues available, wanted index {j}")
    return ks[j - 1]


def convergence_study(domain, params: MaterialParams, k: int = 1, levels: int = 5, j: int = 1,
                      *, imposition: str = "reduction", formulation: str = "grad_div",
                      reference: str = "auto", skip_rigid: Optional[bool] = None,
                      extra_refinements: int = 2, eta: Optional[float] = None,
                      progress=None) -> ConvergenceTable:
    """Track the ``j``-th eigenvalue (1-based) over nested refinements.

    The reference is the analytic value on rectangle-family domains and a
    P2 solve ``extra_refinements`` levels beyond the finest mesh otherwise.
    On domains with a rigid rotation (disk) the zero eigenvalue is skipped
    when counting unless ``skip_rigid`` is False.
    """
    from .assembly import DEFAULT_ETA
    from .eigensolve import solve_jones
    from .mesh import build_mesh
    from .oracle import rectangle_spectrum

    if levels < 3:
        raise ValueError("a convergence study needs at least three levels")
    if skip_rigid is None:
        skip_rigid = domain.tag == "disk"
    eta = DEFAULT_ETA if eta is None else eta
    k_want = j + (2 if skip_rigid else 0) + 2
    base = domain.refinements
    runs = []
    for lev in range(levels):
        mesh = build_mesh(domain.with_refinements(base + lev))
        rep = solve_jones(mesh, params, k, imposition, formulation, k_want, eta=eta)
        runs.append((mesh.h, _pick(rep, j, skip_rigid)))
        if progress:
            progress(lev, mesh.h, runs[-1][1])
    if reference == "auto":
        reference = "analytic" if domain.is_rectangle_family else "fine-grid-P2"
    if reference == "analytic":
        a, b, _ = domain.rectangle_box
        kappa_ref = rectangle_spectrum(a, b, params, j)[j - 1].kappa
    elif reference == "fine-grid-P2":
        mesh = build_mesh(domain.with_refinements(base + levels - 1 + extra_refinements))
        rep = solve_jones(mesh, params, 2, imposition, formulation, k_want, eta=eta)
        kappa_ref = _pick(rep, j, skip_rigid)
    else:
        raise ValueError(f"unknown reference {reference!r}")
    return error_and_rate(kappa_ref, runs, reference)


def _as_matrix(space: FunctionSpace, items) -> np.ndarray:
    from .eigensolve import EigenPair

    if isinstance(items, (EigenPair, np.ndarray)) or callable(items):
        items = [items]
    cols = []
    for it in items:
        if isinstance(it, EigenPair):
            cols.append(np.asarray(it.coeffs, dtype=float))
        elif isinstance(it, np.ndarray):
            cols.append(it.astype(float))
        elif hasattr(it, "field"):
            cols.append(interpolate(space, it.field))
        else:
            cols.append(interpolate(space, it))
    if not cols:
        raise ValueError("empty set of modes")
    return np.column_stack(cols)


def _m_orthonormal(V: np.ndarray, M) -> np.ndarray:
    G = V.T @ (M @ V)
    G = 0.5 * (G + G.T)
    w, U = np.linalg.eigh(G)
    keep = w > 1e-14 * max(w.max(), 1e-300)
    if not np.any(keep):
        raise ValueError("modes have zero norm")
    return V @ (U[:, keep] / np.sqrt(w[keep]))


def match_to_oracle(space: FunctionSpace, computed, analytic, M=None) -> float:
    """Alignment in ``[0, 1]`` between computed and analytic modes.

    Both sets are orthonormalized in the discrete L2 product; the result is
    the cosine of the largest principal angle between the two spans (the
    smallest singular value of their cross Gram matrix). For a single
    computed mode against a single analytic one this is ``|(u, v)_M|``.
    When the analytic set is larger than the computed one, each computed
    vector is measured against the analytic span.
    """
    if M is None:
        _, M = assemble_form(space, MaterialParams(1.0, 0.0, 1.0), "grad_div")
    U = _m_orthonormal(_as_matrix(space, computed), M)
    V = _m_orthonormal(_as_matrix(space, analytic), M)
    s = sla.svdvals(U.T @ (M @ V))
    return float(min(1.0, s[min(U.shape[1], V.shape[1]) - 1]))
