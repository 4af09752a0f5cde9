import warnings

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from jonesfem.assembly import (MaterialParams, SymmetricSystem, assemble_form, assemble_mixed,
                               assemble_penalty, reduce_system)
from jonesfem.eigensolve import (ConvergenceError, EigenPair, RotationLockingWarning,
                                 cluster_eigenvalues, solve_gevp, solve_jones, solve_saddle)
from jonesfem.fespace import build_constraint_operator, build_space, classify_boundary_nodes
from jonesfem.mesh import (TRIANGLE_PRESETS, generate_disk, generate_lshape, generate_rectangle,
                           generate_triangle_domain, refine_uniform)
from jonesfem.postprocess import match_to_oracle

P1 = MaterialParams(1.0, 1.0, 1.0)


def _system(mesh, k=1, params=P1, formulation="grad_div", shift=0.0):
    s = build_space(mesh, k)
    K, M = assemble_form(s, params, formulation)
    Z = build_constraint_operator(s, classify_boundary_nodes(s))
    return reduce_system(K, M, Z, formulation, shift)


def _plain(K, M):
    return SymmetricSystem(sp.csr_matrix(K), sp.csr_matrix(M), "grad_div", "reduction")


# -- brute-force oracle ---------------------------------------------------

def _count_below(K, M, x):
    """Eigenvalues of (K, M) below x, from the inertia of an LDL^T of K - x M."""
    _, D, _ = sla.ldl(K - x * M)
    return int(np.sum(np.linalg.eigvalsh(D) < 0))


def _bisect_eigenvalues(K, M):
    n = K.shape[0]
    hi = 1.0 + np.abs(np.linalg.solve(M, K)).sum()   # Gershgorin-type bound for M^-1 K
    out = []
    for j in range(1, n + 1):
        a, b = -hi, hi
        while b - a > 1e-13 * max(1.0, abs(b)):
            c = 0.5 * (a + b)
            if _count_below(K, M, c) >= j:
                b = c
            else:
                a = c
        out.append(0.5 * (a + b))
    return np.array(out)


def _check_against_oracle(K, M):
    K, M = np.asarray(K), np.asarray(M)
    ref = _bisect_eigenvalues(K, M)
    got = np.array([p.kappa for p in solve_gevp(_plain(K, M), K.shape[0])])
    scale = max(1.0, np.abs(ref).max())
    np.testing.assert_allclose(got, ref, rtol=0, atol=1e-8 * scale)


@given(n=st.integers(1, 12), seed=st.integers(0, 2**31), repeat=st.booleans())
def test_bruteforce_random_pencils(n, seed, repeat):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    K = A @ A.T
    if repeat and n >= 3:
        # force a double eigenvalue
        Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        d = rng.uniform(0, 5, n)
        d[1] = d[0]
        K = Q @ np.diag(d) @ Q.T
    B = rng.standard_normal((n, n))
    M = B @ B.T + n * np.eye(n)
    _check_against_oracle(0.5 * (K + K.T), M)


@pytest.mark.parametrize("mesh", [
    generate_rectangle(1, 1, 2, 2),
    generate_lshape(1),
    generate_triangle_domain(*TRIANGLE_PRESETS["triangle_prose"], 2),
    generate_rectangle(2, 1, 2, 1),
])
def test_bruteforce_fem_pencils(mesh):
    sys_ = _system(mesh, params=MaterialParams(1.3, 0.4, 2.0))
    assert 1 <= sys_.dim <= 12
    _check_against_oracle(sys_.K.toarray(), sys_.M.toarray())


# -- small exact cases ----------------------------------------------------

def test_identity_pencil():
    pairs = solve_gevp(_plain(np.eye(5), np.eye(5)), 5)
    np.testing.assert_allclose([p.kappa for p in pairs], 1.0, atol=1e-14)


def test_diagonal_pencil():
    pairs = solve_gevp(_plain(np.diag([2.0, 6.0]), np.diag([1.0, 2.0])), 2)
    np.testing.assert_allclose([p.kappa for p in pairs], [2.0, 3.0], rtol=1e-14)


def test_empty_system():
    sys_ = _system(generate_rectangle(1, 1, 1, 1))
    assert sys_.dim == 0
    assert solve_gevp(sys_, 3) == []
    rep = solve_jones(generate_rectangle(1, 1, 1, 1), P1, 1, k_want=3)
    assert len(rep.entries) == 0 and rep.meta["free_dofs"] == 0


def test_argument_checks():
    sys_ = _system(generate_rectangle(1, 1, 2, 2))
    with pytest.raises(ValueError):
        solve_gevp(sys_, sys_.dim + 1)
    with pytest.raises(ValueError):
        solve_gevp(sys_, 2, method="qr")
    with pytest.raises(ValueError):
        solve_jones(generate_rectangle(1, 1, 2, 2), P1, imposition="nitsche")
    with pytest.raises(ValueError):
        solve_jones(generate_rectangle(1, 1, 2, 2), P1, formulation="laplace")
    with pytest.raises(ValueError):
        solve_jones(generate_rectangle(1, 1, 2, 2), P1, k_want=0)


def test_singular_mass_is_convergence_error():
    sys_ = _plain(np.eye(3), np.diag([1.0, 0.0, 1.0]))
    with pytest.raises(ConvergenceError):
        solve_gevp(sys_, 2, method="dense")


# -- contracts on real pencils ----------------------------------------------

def test_square_first_eigenvalue():
    rep = solve_jones(generate_rectangle(1, 1, 32, 32), MaterialParams(1.0, 0.0), 1, k_want=4)
    assert rep.kappas[0] == pytest.approx(19.74, rel=1e-2)


def test_residual_and_normalization_contract():
    sys_ = _system(generate_lshape(4), 2)
    pairs = solve_gevp(sys_, 8)
    K, M = sys_.K, sys_.M
    Y = np.column_stack([p.reduced for p in pairs])
    np.testing.assert_allclose(Y.T @ (M @ Y), np.eye(8), atol=1e-8)
    for p in pairs:
        y = p.reduced
        r = np.linalg.norm(K @ y - p.kappa * (M @ y)) / np.linalg.norm(M @ y)
        assert r == pytest.approx(p.residual, rel=1e-6, abs=1e-12)
        assert p.backward_error <= 1e-8
        np.testing.assert_allclose(sys_.lift(y), p.coeffs)
        assert y[np.argmax(np.abs(y))] > 0
    assert all(a.kappa <= b.kappa for a, b in zip(pairs, pairs[1:]))


def test_dense_and_lanczos_agree():
    sys_ = _system(generate_rectangle(1, 1, 16, 16), 1, MaterialParams(1.0, 2.0, 3.0))
    assert 400 <= sys_.dim <= 600
    d = [p.kappa for p in solve_gevp(sys_, 10, method="dense")]
    l = [p.kappa for p in solve_gevp(sys_, 10, method="lanczos")]
    np.testing.assert_allclose(l, d, rtol=1e-8)


@pytest.mark.parametrize("make", [
    lambda n: generate_rectangle(1, 1, n, n),
    lambda n: generate_lshape(n),
    lambda n: generate_triangle_domain(*TRIANGLE_PRESETS["triangle_caption"], n),
])
def test_minmax_monotonicity(make):
    mesh = make(2)
    prev = None
    for _ in range(3):
        sys_ = _system(mesh, 1, MaterialParams(1.0, 0.5))
        k = min(6, sys_.dim)
        cur = np.array([p.kappa for p in solve_gevp(sys_, k)])
        if prev is not None:
            m = min(len(prev), len(cur))
            assert np.all(cur[:m] <= prev[:m] * (1 + 1e-9))
        prev = cur
        mesh = refine_uniform(mesh)


@pytest.mark.parametrize("imposition", ["reduction", "penalty", "mixed"])
def test_nonnegative(imposition):
    mesh = generate_disk(1, 24) if imposition == "mixed" else generate_lshape(3)
    rep = solve_jones(mesh, MaterialParams(1.0, 0.3), 1, imposition, "strain", k_want=6)
    assert np.all(rep.kappas >= -1e-8 * max(1.0, rep.kappas.max()))


@given(kind=st.sampled_from(["rect", "lshape", "triangle"]), k=st.sampled_from([1, 2]),
       mu=st.floats(0.2, 5), lam=st.floats(0.0, 5))
def test_graddiv_strain_spectra_agree(kind, k, mu, lam):
    mesh = {"rect": generate_rectangle(2, 1, 4, 2), "lshape": generate_lshape(2),
            "triangle": generate_triangle_domain(*TRIANGLE_PRESETS["triangle_prose"], 4)}[kind]
    p = MaterialParams(mu, lam)
    a = solve_jones(mesh, p, k, formulation="grad_div", k_want=6).kappas
    b = solve_jones(mesh, p, k, formulation="strain", k_want=6).kappas
    np.testing.assert_allclose(a, b, rtol=1e-8)


def test_shifted_adds_one_at_unit_density():
    mesh = generate_lshape(3)
    base = _system(mesh, 2)
    sh = _system(mesh, 2, formulation="shifted", shift=1.0)
    a = np.array([p.kappa for p in solve_gevp(base, 6)])
    raw = np.array([p.kappa + sh.shift for p in solve_gevp(sh, 6)])
    np.testing.assert_allclose(raw, a + 1.0, rtol=1e-10)


@given(rho=st.floats(0.1, 20))
def test_shifted_reports_unshifted_kappa(rho):
    mesh = generate_rectangle(2, 1, 4, 2)
    p = MaterialParams(1.0, 1.0, rho)
    a = solve_jones(mesh, p, 1, formulation="grad_div", k_want=5).kappas
    b = solve_jones(mesh, p, 1, formulation="shifted", k_want=5).kappas
    np.testing.assert_allclose(b, a, rtol=1e-10 * max(1.0, rho / a[0]))


def test_penalty_matches_reduction():
    mesh = generate_rectangle(1, 1, 4, 4)
    red = solve_jones(mesh, P1, 1, "reduction", k_want=3).kappas
    pen = solve_jones(mesh, P1, 1, "penalty", k_want=3).kappas
    np.testing.assert_allclose(pen[0], red[0], rtol=1e-6)


def test_penalty_zero_gamma_traction_modes():
    s = build_space(generate_rectangle(1, 1, 4, 4), 1)
    K, M = assemble_form(s, P1, "strain")
    sys_ = assemble_penalty(K, M, classify_boundary_nodes(s), gamma=0.0, formulation="strain")
    pairs = solve_gevp(sys_, 5, method="dense")
    ks = np.array([p.kappa for p in pairs])
    assert np.all(np.abs(ks[:3]) <= 1e-10) and ks[3] > 1.0


# -- mixed ----------------------------------------------------------------

def _mixed(mesh, eta, k=1, params=P1, method="auto"):
    S = assemble_mixed(build_space(mesh, k), build_space(mesh, 1), params, eta)
    return S, solve_saddle(S, 6, method=method)


def test_mixed_eta0_bounded_by_reduction():
    mesh = generate_rectangle(1, 1, 8, 8)
    S, pairs = _mixed(mesh, 0.0)
    red = solve_jones(mesh, P1, 1, "reduction", "strain", k_want=6).kappas
    mix = np.array([p.kappa for p in pairs])
    assert np.all(mix <= red * (1 + 1e-10))
    for p in pairs:
        assert np.linalg.norm(S.B @ p.coeffs) <= 1e-10


def test_mixed_eta0_converges_to_reduction_limit():
    gaps = []
    for n in (4, 8, 16):
        mesh = generate_rectangle(1, 1, n, n)
        mix = np.array([p.kappa for p in _mixed(mesh, 0.0)[1]])
        red = solve_jones(mesh, P1, 1, "reduction", "strain", k_want=6).kappas
        gaps.append(np.max((red - mix) / red))
    assert gaps[2] < gaps[1] < gaps[0]


def test_mixed_dense_and_lanczos_agree():
    mesh = generate_lshape(4)
    for eta in (0.0, 1e-2):
        d = [p.kappa for p in _mixed(mesh, eta, method="dense")[1]]
        l = [p.kappa for p in _mixed(mesh, eta, method="lanczos")[1]]
        np.testing.assert_allclose(l, d, rtol=1e-7, atol=1e-9)


def test_disk_mixed_zero_mode():
    mesh = generate_disk(1, 64)
    rep = solve_jones(mesh, MaterialParams(2.0, 1.0, 10.0), 1, "mixed", "strain", 4, eta=1e-8)
    k = rep.kappas
    assert abs(k[0]) <= 1e-4 * k[1]
    assert rep.entries[0].cls == "rigid"
    assert match_to_oracle(rep.space, rep.pairs[0], lambda x, y: (y, -x)) >= 0.99


def test_mixed_graddiv_switches_to_strain():
    with pytest.warns(UserWarning, match="strain"):
        rep = solve_jones(generate_disk(1, 16), P1, 1, "mixed", "grad_div", 3)
    assert rep.formulation == "strain"


def test_disk_reduction_locking_warning():
    with pytest.warns(RotationLockingWarning):
        solve_jones(generate_disk(1, 16), P1, 1, "reduction", k_want=2, angle_tol=1e-8)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        rep = solve_jones(generate_disk(1, 64), P1, 1, "reduction", "strain", k_want=2)
    assert rep.kappas[0] <= 1e-6


def test_coercivity_witness_triangle():
    mesh = generate_triangle_domain(*TRIANGLE_PRESETS["triangle_prose"], 4)
    first = []
    for _ in range(3):
        first.append(solve_jones(mesh, P1, 1, "reduction", "strain", 1).kappas[0])
        mesh = refine_uniform(mesh)
    assert min(first) >= 1e-3
    assert first[-1] >= 0.9 * first[0]


# -- clustering -----------------------------------------------------------

def test_cluster_examples():
    c = cluster_eigenvalues([19.70, 19.74, 19.78, 39.4], 5e-3)
    assert [x.multiplicity for x in c] == [3, 1]
    assert [x.multiplicity for x in cluster_eigenvalues([1.0, 2.0, 3.0])] == [1, 1, 1]
    with pytest.raises(ValueError):
        cluster_eigenvalues([2.0, 1.0])


def test_cluster_accepts_pairs():
    pairs = [EigenPair(v, np.zeros(1), 0.0) for v in (1.0, 1.0005, 3.0)]
    c = cluster_eigenvalues(pairs)
    assert c[0].members == (0, 1) and c[0].kappa == pytest.approx(1.00025)


def test_square_lambda0_triple_cluster():
    rep = solve_jones(generate_rectangle(1, 1, 64, 64), MaterialParams(1.0, 0.0), 1, k_want=4)
    c = cluster_eigenvalues(rep.pairs)
    assert c[0].multiplicity == 3
