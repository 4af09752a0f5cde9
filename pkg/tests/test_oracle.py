import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from jonesfem.assembly import MaterialParams
from jonesfem.mesh import TRIANGLE_PRESETS, DomainSpec
from jonesfem.oracle import (OracleError, rectangle_mode, rectangle_spectrum, rigid_motion_basis,
                             traction_rigid_basis)

PI2 = math.pi ** 2


def test_s_mode_frequency():
    m = rectangle_mode("s", 1, 1, 1, 1, MaterialParams(1.0, 0.0))
    assert m.w_squared == pytest.approx(2 * PI2, rel=1e-15)
    assert m.w_squared == pytest.approx(19.7392, abs=1e-4)


def test_p_mode_frequency_lambda0():
    m = rectangle_mode("p", 1, 0, 1, 1, MaterialParams(1.0, 0.0))
    assert m.w_squared == pytest.approx(2 * PI2, rel=1e-15)


def test_s_mode_divergence_free(rng):
    m = rectangle_mode("s", 2, 3, 1.5, 1.0, MaterialParams(1.0, 1.0))
    x, y = rng.uniform(0, 1.5, 100), rng.uniform(0, 1, 100)
    assert np.abs(m.divergence(x, y)).max() <= 1e-12


def test_invalid_modes():
    p = MaterialParams(1.0, 1.0)
    with pytest.raises(OracleError):
        rectangle_mode("s", 0, 1, 1, 1, p)
    with pytest.raises(OracleError):
        rectangle_mode("p", 0, 0, 1, 1, p)
    with pytest.raises(OracleError):
        rectangle_mode("q", 1, 1, 1, 1, p)
    with pytest.raises(OracleError):
        rectangle_mode("s", 1, 1, -1, 1, p)
    with pytest.raises(OracleError):
        rectangle_spectrum(1, 1, p, 0)


def test_spectrum_square_lambda0():
    sp_ = rectangle_spectrum(1, 1, MaterialParams(1.0, 0.0), 4)
    np.testing.assert_allclose([e.w2 for e in sp_], [2 * PI2] * 3 + [4 * PI2], rtol=1e-14)
    assert [e.kind for e in sp_] == ["p", "p", "s", "p"]
    assert [e.indices for e in sp_] == [(0, 1), (1, 0), (1, 1), (1, 1)]


def test_spectrum_square_unit_params():
    sp_ = rectangle_spectrum(1, 1, MaterialParams(1.0, 1.0), 7)
    np.testing.assert_allclose([e.w2 / PI2 for e in sp_], [2, 3, 3, 5, 5, 6, 8], rtol=1e-14)


def test_spectrum_rectangle_2x1():
    sp_ = rectangle_spectrum(2, 1, MaterialParams(1.0, 1.0), 4)
    np.testing.assert_allclose([e.w2 / PI2 for e in sp_], [0.75, 1.25, 2.0, 3.0], rtol=1e-14)


def test_spectrum_kappa_is_rho_w2():
    sp_ = rectangle_spectrum(1, 1, MaterialParams(10.0, 1.0, 12.0), 5)
    for e in sp_:
        assert e.kappa == pytest.approx(12.0 * e.w2, rel=1e-15)


@given(a=st.floats(0.3, 3), b=st.floats(0.3, 3), mu=st.floats(0.1, 10), lam=st.floats(-0.05, 10),
       count=st.integers(1, 30))
def test_spectrum_is_complete_and_sorted(a, b, mu, lam, count):
    p = MaterialParams(mu, lam)
    sp_ = rectangle_spectrum(a, b, p, count)
    w = np.array([e.w2 for e in sp_])
    assert len(sp_) == count and np.all(np.diff(w) >= 0)
    # brute force over a generous index box
    allw = []
    for m in range(60):
        for l in range(60):
            if m >= 1 and l >= 1:
                allw.append(rectangle_mode("s", m, l, a, b, p).w_squared)
            if m + l > 0:
                allw.append(rectangle_mode("p", m, l, a, b, p).w_squared)
    np.testing.assert_allclose(w, np.sort(allw)[:count], rtol=1e-13)


_modes = st.tuples(st.sampled_from(["s", "p"]), st.integers(0, 4), st.integers(0, 4)).filter(
    lambda t: (t[0] == "s" and t[1] >= 1 and t[2] >= 1) or (t[0] == "p" and t[1] + t[2] > 0))


@given(mode=_modes, a=st.floats(0.5, 2), b=st.floats(0.5, 2), mu=st.floats(0.1, 5),
       lam=st.floats(0.0, 5), rho=st.floats(0.5, 5), seed=st.integers(0, 2**31))
def test_pde_residual(mode, a, b, mu, lam, rho, seed):
    p = MaterialParams(mu, lam, rho)
    m = rectangle_mode(*mode, a, b, p)
    rng = np.random.default_rng(seed)
    x, y = rng.uniform(0, a, 100), rng.uniform(0, b, 100)
    L = m.laplacian(x, y)
    G = m.grad_div(x, y)
    u = m.field(x, y)
    w2 = m.w_squared
    scale = rho * w2 * max(abs(m.amplitudes[0]), abs(m.amplitudes[1]))
    for i in range(2):
        r = -(mu * L[i] + (lam + mu) * G[i]) - rho * w2 * u[i]
        assert np.abs(r).max() <= 1e-10 * scale


def test_derivatives_against_finite_differences(rng):
    m = rectangle_mode("p", 2, 1, 1.3, 0.7, MaterialParams(1.0, 2.0))
    x, y = rng.uniform(0, 1.3, 20), rng.uniform(0, 0.7, 20)
    h = 1e-6
    G = m.gradient(x, y)
    fx = [(a - b) / (2 * h) for a, b in zip(m.field(x + h, y), m.field(x - h, y))]
    fy = [(a - b) / (2 * h) for a, b in zip(m.field(x, y + h), m.field(x, y - h))]
    for i in range(2):
        np.testing.assert_allclose(G[i][0], fx[i], atol=1e-7)
        np.testing.assert_allclose(G[i][1], fy[i], atol=1e-7)
    lap = m.laplacian(x, y)
    d = 1e-4
    fd = [(a + b + c + e - 4 * f) / d ** 2 for a, b, c, e, f in zip(
        m.field(x + d, y), m.field(x - d, y), m.field(x, y + d), m.field(x, y - d), m.field(x, y))]
    for i in range(2):
        np.testing.assert_allclose(lap[i], fd[i], rtol=1e-5, atol=1e-4)


def _edges(a, b, n=50):
    t = np.linspace(0, 1, n)
    z = np.zeros(n)
    # (x, y, normal)
    return [(t * a, z, (0.0, -1.0)), (z + a, t * b, (1.0, 0.0)),
            (t * a, z + b, (0.0, 1.0)), (z, t * b, (-1.0, 0.0))]


@given(mode=_modes, a=st.floats(0.5, 2), b=st.floats(0.5, 2), lam=st.floats(0.0, 5))
def test_boundary_slip_conditions(mode, a, b, lam):
    p = MaterialParams(1.0, lam)
    m = rectangle_mode(*mode, a, b, p)
    scale = max(abs(m.amplitudes[0]), abs(m.amplitudes[1])) * max(m.wavenumbers) * (lam + 2)
    for x, y, n in _edges(a, b):
        u = m.field(x, y)
        S = m.stress(x, y, p)
        un = u[0] * n[0] + u[1] * n[1]
        tx = S[0][0] * n[0] + S[0][1] * n[1]
        ty = S[1][0] * n[0] + S[1][1] * n[1]
        tangential = -tx * n[1] + ty * n[0]
        assert np.abs(un).max() <= 1e-10 * scale
        assert np.abs(tangential).max() <= 1e-10 * scale


def test_normal_traction_is_constraint_reaction():
    # the closed-form modes carry a non-zero normal stress on the walls
    p = MaterialParams(1.0, 1.0)
    m = rectangle_mode("s", 1, 1, 2, 1, p)
    y = np.linspace(0, 1, 50)
    S = m.stress(0 * y, y, p)
    assert np.abs(S[0][0]).max() == pytest.approx(2 * math.pi, rel=1e-12)


def test_purity(rng):
    p = MaterialParams(1.0, 1.0)
    x, y = rng.uniform(0, 2, 100), rng.uniform(0, 1, 100)
    assert np.abs(rectangle_mode("s", 3, 2, 2, 1, p).divergence(x, y)).max() <= 1e-12
    assert np.abs(rectangle_mode("p", 3, 2, 2, 1, p).rot(x, y)).max() <= 1e-12


def test_origin_shift():
    p = MaterialParams(1.0, 1.0)
    m0 = rectangle_mode("s", 1, 2, 2, 2, p)
    m1 = rectangle_mode("s", 1, 2, 2, 2, p, origin=(-1, -1))
    np.testing.assert_allclose(m1.field(-0.3, 0.2), m0.field(0.7, 1.2))


# -- rigid motions ----------------------------------------------------------

def test_disk_rotation(rng):
    (m,) = rigid_motion_basis(("disk", 1.0))
    t = rng.uniform(0, 2 * np.pi, 100)
    x, y = np.cos(t), np.sin(t)
    u = m.field(x, y)
    np.testing.assert_array_equal(u[0] * x + u[1] * y, 0.0)
    np.testing.assert_allclose(u[0], y)
    np.testing.assert_allclose(u[1], -x)


def test_square_has_no_rigid_jones_mode():
    assert rigid_motion_basis(DomainSpec("square")) == []
    assert rigid_motion_basis(("polygon", [(0, 0), (1, 0), (1, 1), (0, 1)])) == []
    # each traction rigid motion violates u.n = 0 on some edge of the unit square
    for m in traction_rigid_basis():
        worst = 0.0
        for x, y, n in _edges(1, 1):
            u = m.field(x, y)
            worst = max(worst, np.abs(u[0] * n[0] + u[1] * n[1]).max())
        assert worst > 0.1


def test_halfplanes():
    (m,) = rigid_motion_basis(("halfplane_x2", 0.5))
    assert m.field(3.0, 0.5) == (1.0, 0.0)
    (m,) = rigid_motion_basis(("halfplane_x1", 0.5))
    assert m.field(0.5, 3.0) == (0.0, 1.0)


def test_other_domains_have_none():
    assert rigid_motion_basis(DomainSpec("lshape")) == []
    for key in TRIANGLE_PRESETS:
        assert rigid_motion_basis(DomainSpec("triangle", vertices=TRIANGLE_PRESETS[key])) == []
    assert len(rigid_motion_basis(DomainSpec("disk"))) == 1


def test_rigid_modes_strain_free(rng):
    x, y = rng.standard_normal(50), rng.standard_normal(50)
    for m in traction_rigid_basis() + rigid_motion_basis(("disk", 2.0)):
        E = m.strain(x, y)
        for row in E:
            for e in row:
                assert np.abs(e).max() == 0


def test_3d_presets(rng):
    (t,) = rigid_motion_basis(("halfspace", 3), dimension=3)
    assert t.field3(1.0, 2.0, 3.0) == (0.0, 0.0, 1.0)
    x, y, z = rng.standard_normal((3, 30))
    for axis in (1, 2, 3):
        (r,) = rigid_motion_basis(("axisymmetric", axis), dimension=3)
        u = np.array(r.field3(x, y, z))
        X = np.array([x, y, z])
        # rotation about the axis: orthogonal to position and to the axis
        np.testing.assert_allclose(np.sum(u * X, axis=0), 0.0, atol=1e-14)
        np.testing.assert_array_equal(u[axis - 1], 0.0)
        with pytest.raises(OracleError):
            r.field(0.0, 0.0)
    with pytest.raises(OracleError):
        rigid_motion_basis(("sphere", 1.0))
    with pytest.raises(OracleError):
        rigid_motion_basis(("disk", 1.0), dimension=3)
