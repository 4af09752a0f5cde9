"""Closed-form Jones modes and rigid motions.

On the rectangle ``[0,a] x [0,b]`` (optionally shifted by ``origin``) the
Jones eigenmodes separate into shear (s) and pressure (p) families

    s:  (a l sin X cos Y, -b m cos X sin Y),   w^2 = mu pi^2 / rho (m^2/a^2 + l^2/b^2)
    p:  (b m sin X cos Y,  a l cos X sin Y),   w^2 = (lam + 2 mu) pi^2 / rho (...)

with ``X = m pi x / a`` and ``Y = l pi y / b``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from .assembly import MaterialParams


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class AnalyticMode:
    """A closed-form displacement field with its derivatives.

    For ``kind`` in ``{"s", "p"}`` the field is ``(A1 sin X cos Y, A2 cos X sin Y)``.
    For ``"translation"`` and ``"rotation"`` it is ``t + c (y, -x)``. 3D rigid
    modes (``dim = 3``) only provide :meth:`field3`.
    """

    kind: str
    indices: Tuple[int, int] = (0, 0)
    w_squared: float = 0.0
    amplitudes: Tuple[float, float] = (0.0, 0.0)
    wavenumbers: Tuple[float, float] = (0.0, 0.0)
    origin: Tuple[float, float] = (0.0, 0.0)
    translation: Tuple[float, ...] = (0.0, 0.0)
    spin: float = 0.0
    dim: int = 2
    rotation3: Optional[Tuple[int, int]] = None   # (i, j): u_i = x_j, u_j = -x_i

    @property
    def is_rigid(self) -> bool:
        return self.kind in ("translation", "rotation")

    def _xy(self, x, y):
        return np.asarray(x, dtype=float) - self.origin[0], np.asarray(y, dtype=float) - self.origin[1]

    def _trig(self, x, y):
        xs, ys = self._xy(x, y)
        X, Y = self.wavenumbers[0] * xs, self.wavenumbers[1] * ys
        return np.sin(X), np.cos(X), np.sin(Y), np.cos(Y)

    def field(self, x, y):
        """Displacement ``(u1, u2)`` at the given points."""
        self._require2d()
        if self.is_rigid:
            xs, ys = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
            return (self.translation[0] + self.spin * ys + 0 * xs,
                    self.translation[1] - self.spin * xs + 0 * ys)
        sX, cX, sY, cY = self._trig(x, y)
        A1, A2 = self.amplitudes
        return A1 * sX * cY, A2 * cX * sY

    __call__ = field

    def gradient(self, x, y):
        """``G[i][j] = d u_i / d x_j`` as nested tuples of arrays."""
        self._require2d()
        if self.is_rigid:
            z = 0 * np.asarray(x, dtype=float) + 0 * np.asarray(y, dtype=float)
            return ((z, z + self.spin), (z - self.spin, z))
        sX, cX, sY, cY = self._trig(x, y)
        A1, A2 = self.amplitudes
        kx, ky = self.wavenumbers
        return ((A1 * kx * cX * cY, -A1 * ky * sX * sY),
                (-A2 * kx * sX * sY, A2 * ky * cX * cY))

    def divergence(self, x, y):
        G = self.gradient(x, y)
        return G[0][0] + G[1][1]

    def rot(self, x, y):
        """``d u2 / dx - d u1 / dy``."""
        G = self.gradient(x, y)
        return G[1][0] - G[0][1]

    def strain(self, x, y):
        G = self.gradient(x, y)
        off = 0.5 * (G[0][1] + G[1][0])
        return ((G[0][0], off), (off, G[1][1]))

    def laplacian(self, x, y):
        if self.is_rigid:
            z = 0 * np.asarray(x, dtype=float) + 0 * np.asarray(y, dtype=float)
            return z, z
        kx, ky = self.wavenumbers
        u1, u2 = self.field(x, y)
        k2 = kx * kx + ky * ky
        return -k2 * u1, -k2 * u2

    def grad_div(self, x, y):
        if self.is_rigid:
            z = 0 * np.asarray(x, dtype=float) + 0 * np.asarray(y, dtype=float)
            return z, z
        sX, cX, sY, cY = self._trig(x, y)
        A1, A2 = self.amplitudes
        kx, ky = self.wavenumbers
        c = A1 * kx + A2 * ky
        return -c * kx * sX * cY, -c * ky * cX * sY

    def stress(self, x, y, params: MaterialParams):
        """Cauchy stress ``2 mu eps + lam div I``."""
        E = self.strain(x, y)
        d = E[0][0] + E[1][1]
        return ((2 * params.mu * E[0][0] + params.lam * d, 2 * params.mu * E[0][1]),
                (2 * params.mu * E[1][0], 2 * params.mu * E[1][1] + params.lam * d))

    def field3(self, x, y, z):
        """Displacement of a 3D rigid mode."""
        if self.dim != 3:
            raise OracleError("field3 is only defined for 3D modes")
        pts = [np.asarray(c, dtype=float) for c in (x, y, z)]
        zero = 0 * pts[0] + 0 * pts[1] + 0 * pts[2]
        u = [zero + t for t in self.translation]
        if self.rotation3 is not None:
            i, j = self.rotation3
            u[i] = u[i] + pts[j]
            u[j] = u[j] - pts[i]
        return tuple(u)

    def _require2d(self):
        if self.dim != 2:
            raise OracleError("3D modes are analytic data only; use field3")


def rectangle_mode(kind: str, m: int, l: int, a: float, b: float, params: MaterialParams,
                   origin=(0.0, 0.0)) -> AnalyticMode:
    """Closed-form s- or p-mode with indices ``(m, l)`` on ``[0,a] x [0,b] + origin``."""
    if a <= 0 or b <= 0:
        raise OracleError("rectangle sides must be positive")
    if kind == "s":
        if m < 1 or l < 1:
            raise OracleError("s-modes need m, l >= 1")
        amps = (a * l, -b * m)
        speed = params.mu
    elif kind == "p":
        if m < 0 or l < 0 or m + l == 0:
            raise OracleError("p-modes need m, l >= 0 and m + l > 0")
        amps = (b * m, a * l)
        speed = params.lam + 2 * params.mu
    else:
        raise OracleError(f"unknown mode kind {kind!r}")
    w2 = speed * np.pi ** 2 / params.rho * (m * m / (a * a) + l * l / (b * b))
    return AnalyticMode(kind, (m, l), float(w2), (float(amps[0]), float(amps[1])),
                        (m * np.pi / a, l * np.pi / b), (float(origin[0]), float(origin[1])))


class SpectrumEntry(NamedTuple):
    w2: float
    kappa: float
    kind: str
    indices: Tuple[int, int]


def rectangle_spectrum(a: float, b: float, params: MaterialParams, count: int) -> List[SpectrumEntry]:
    """The ``count`` smallest analytic Jones eigenvalues of the rectangle.

    Equal frequencies are kept adjacent with p before s, then by ``(m, l)``.
    """
    if count < 1:
        raise OracleError("count must be at least 1")
    slow = min(params.mu, params.lam + 2 * params.mu) / params.rho * np.pi ** 2 / max(a, b) ** 2
    N = 4
    while True:
        entries = []
        for m in range(N + 1):
            for l in range(N + 1):
                if m >= 1 and l >= 1:
                    entries.append(("s", m, l))
                if m + l > 0:
                    entries.append(("p", m, l))
        w2 = np.array([rectangle_mode(k, m, l, a, b, params).w_squared for k, m, l in entries])
        if len(entries) >= count:
            cutoff = np.sort(w2)[count - 1]
            if slow * (N + 1) ** 2 > cutoff:
                break
        N *= 2
    order = np.argsort(w2, kind="stable")
    # regroup floating-point ties so the documented order holds within them
    out, i = [], 0
    while i < len(order) and len(out) < count:
        j = i + 1
        while j < len(order) and w2[order[j]] - w2[order[i]] <= 1e-12 * w2[order[i]]:
            j += 1
        group = sorted(order[i:j], key=lambda t: (entries[t][0] != "p", entries[t][1], entries[t][2]))
        for t in group:
            k, m, l = entries[t]
            out.append(SpectrumEntry(float(w2[t]), float(params.rho * w2[t]), k, (m, l)))
        i = j
    return out[:count]


def _translation(t) -> AnalyticMode:
    return AnalyticMode("translation", translation=tuple(float(c) for c in t), dim=len(t))


def _rotation(spin: float = 1.0) -> AnalyticMode:
    return AnalyticMode("rotation", spin=float(spin))


def _polygon_rigid_modes(vertices: np.ndarray, tol: float = 1e-10) -> List[AnalyticMode]:
    """Rigid motions ``t + c (y, -x)`` tangential to every edge of a closed polygon."""
    v = np.asarray(vertices, dtype=float)
    rows = []
    for p, q in zip(v, np.roll(v, -1, axis=0)):
        d = q - p
        n = np.array([d[1], -d[0]]) / np.hypot(*d)
        for x, y in (p, q):
            # (t1 + c y) n1 + (t2 - c x) n2 = 0
            rows.append([n[0], n[1], y * n[0] - x * n[1]])
    _, s, Vt = np.linalg.svd(np.array(rows))
    rank = int(np.sum(s > tol * s[0]))
    return [AnalyticMode("rotation" if abs(w[2]) > tol else "translation",
                         translation=(float(w[0]), float(w[1])), spin=float(w[2]))
            for w in Vt[rank:]]


_ROT3 = {1: (1, 2), 2: (0, 2), 3: (0, 1)}


def rigid_motion_basis(descriptor, dimension: int = 2) -> List[AnalyticMode]:
    """Basis of the rigid motions compatible with ``u . n = 0`` on the boundary.

    Parameters
    ----------
    descriptor
        ``("disk", R)``, ``("halfplane_x1", a)`` for ``x1 > a``,
        ``("halfplane_x2", b)`` for ``x2 > b``, ``("polygon", vertices)``, a
        :class:`~jonesfem.mesh.DomainSpec`, or for ``dimension = 3``
        ``("halfspace", axis)`` (translation along ``axis``, the boundary
        plane containing it) and ``("axisymmetric", axis)`` (rotation
        about ``axis``). Axes are 1-based.
    """
    from .mesh import DomainSpec

    if isinstance(descriptor, DomainSpec):
        d = descriptor
        if d.tag == "disk":
            return [_rotation()]
        if d.is_rectangle_family:
            a, b, (x0, y0) = d.rectangle_box
            verts = [(x0, y0), (x0 + a, y0), (x0 + a, y0 + b), (x0, y0 + b)]
        elif d.tag == "lshape":
            verts = [(-1, -1), (1, -1), (1, 0), (0, 0), (0, 1), (-1, 1)]
        else:
            verts = d.vertices
        return _polygon_rigid_modes(np.array(verts))
    if isinstance(descriptor, str):
        descriptor = (descriptor, None)
    tag, arg = descriptor[0], descriptor[1] if len(descriptor) > 1 else None
    if dimension == 2:
        if tag == "disk":
            return [_rotation()]
        if tag == "halfplane_x1":
            return [_translation((0.0, 1.0))]
        if tag == "halfplane_x2":
            return [_translation((1.0, 0.0))]
        if tag == "polygon":
            return _polygon_rigid_modes(np.asarray(arg))
    elif dimension == 3:
        if tag == "halfspace" and arg in (1, 2, 3):
            t = [0.0, 0.0, 0.0]
            t[arg - 1] = 1.0
            return [_translation(t)]
        if tag == "axisymmetric" and arg in (1, 2, 3):
            return [AnalyticMode("rotation", translation=(0.0, 0.0, 0.0), dim=3,
                                 rotation3=_ROT3[arg])]
    raise OracleError(f"unknown domain descriptor {descriptor!r} in {dimension}D")


def traction_rigid_basis() -> List[AnalyticMode]:
    """The three 2D rigid motions (kernel of the strain form without constraints)."""
    return [_translation((1.0, 0.0)), _translation((0.0, 1.0)), _rotation()]
