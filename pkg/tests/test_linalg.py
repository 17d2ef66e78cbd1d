import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from cyclic_toda.grid import assemble_laplacian, assemble_stiffness, build_domain
from cyclic_toda.linalg import as_symmetric_csr, cg_solve, direct_solve, solve_spd, tridiag_solve


def test_identity_one_iteration(rng):
    b = rng.normal(size=20)
    x, rep = cg_solve(sp.identity(20, format="csr"), b)
    np.testing.assert_allclose(x, b)
    assert rep.iterations == 1 and rep.converged


def test_diagonal_example():
    x, rep = cg_solve(sp.diags([1.0, 2.0, 3.0]).tocsr(), np.array([1.0, 2.0, 3.0]))
    np.testing.assert_allclose(x, 1.0, rtol=1e-14)
    assert rep.converged and rep.residual <= 1e-12


def test_poisson_round_trip():
    d = build_domain("interval", 1.0, 129)
    (x,) = d.coordinates()
    L = assemble_laplacian(d)
    xs = np.sin(np.pi * x)[d.interior]
    x, rep = cg_solve(L, L @ xs, tol=1e-12)
    assert rep.converged
    assert np.abs(x - xs).max() <= 1e-9


def test_cg_energy_functional_monotone(rng):
    d = build_domain("rectangle", 1.0, 20)
    K = assemble_stiffness(d) + sp.diags(rng.uniform(0, 5, d.n_unknown_nodes))
    b = rng.normal(size=K.shape[0])
    x, rep = cg_solve(K.tocsr(), b, record=True)
    hist = np.array(rep.energy_history)
    assert rep.converged and hist.size > 5
    assert np.all(np.diff(hist) <= 1e-12 * np.abs(hist).max())


def test_torus_kernel_projection(rng):
    d = build_domain("torus2d", 1.0, 16)
    K = assemble_stiffness(d)
    b = rng.normal(size=K.shape[0])  # not orthogonal to constants
    x, rep = cg_solve(K, b, kernel=np.ones(K.shape[0]))
    assert rep.converged
    assert abs(x.sum()) <= 1e-10 * np.abs(x).max()
    bp = b - b.mean()
    np.testing.assert_allclose(K @ x, bp, atol=1e-9 * np.abs(bp).max())
    xd, _ = direct_solve(K, b, kernel=np.ones(K.shape[0]))
    np.testing.assert_allclose(xd, x, atol=1e-8)


def test_non_converged_report(rng):
    d = build_domain("rectangle", 1.0, 40)
    K = assemble_stiffness(d)
    x, rep = cg_solve(K, rng.normal(size=K.shape[0]), maxit=3)
    assert not rep.converged and rep.iterations == 3


def test_error_energy_nonnegative(rng):
    d = build_domain("rectangle", 1.0, 12)
    K = assemble_stiffness(d)
    xs = rng.normal(size=K.shape[0])
    x, _ = cg_solve(K, K @ xs, tol=1e-6)
    e = x - xs
    assert e @ (K @ e) >= 0


def test_deterministic(rng):
    d = build_domain("rectangle", 1.0, 15)
    K = assemble_stiffness(d)
    b = rng.normal(size=K.shape[0])
    x1, _ = cg_solve(K, b)
    x2, _ = cg_solve(K, b)
    assert np.array_equal(x1, x2)


def test_solve_spd_dispatch(rng):
    K = assemble_stiffness(build_domain("rectangle", 1.0, 9))
    b = rng.normal(size=K.shape[0])
    xc, _ = solve_spd(K, b, method="cg", tol=1e-13)
    xd, _ = solve_spd(K, b, method="direct", tol=1e-13)
    np.testing.assert_allclose(xc, xd, rtol=1e-10)
    with pytest.raises(ValueError):
        solve_spd(K, b, method="gmres")


def test_symmetry_assertion():
    with pytest.raises(ValueError):
        as_symmetric_csr(np.array([[1.0, 2.0], [0.0, 1.0]]))
    A = as_symmetric_csr(sp.coo_matrix(([1.0, 1.0, 2.0], ([0, 0, 1], [0, 0, 1])), shape=(2, 2)))
    assert A[0, 0] == 2.0 and A.has_sorted_indices


def test_tridiag_examples():
    np.testing.assert_allclose(tridiag_solve([0, 0], [1, 1, 1], [0, 0], [4, 5, 6]), [4, 5, 6])
    x = tridiag_solve([-1, -1], [2, 2, 2], [-1, -1], [1, 0, 0])
    np.testing.assert_allclose(x, [0.75, 0.5, 0.25], rtol=1e-15)
    with pytest.raises(ZeroDivisionError):
        tridiag_solve([1, 1], [0, 1, 1], [1, 1], [1, 1, 1])


@given(st.integers(3, 40), st.integers(0, 2**32 - 1))
def test_tridiag_matches_cg_and_banded(n, seed):
    rng = np.random.default_rng(seed)
    off = -rng.uniform(0.1, 1, n - 1)
    diag = np.abs(np.r_[off, 0]) + np.abs(np.r_[0, off]) + rng.uniform(0.1, 2, n)
    b = rng.normal(size=n)
    x = tridiag_solve(off, diag, off, b)
    A = sp.diags([off, diag, off], [-1, 0, 1]).tocsr()
    xc, _ = cg_solve(A, b, tol=1e-14)
    np.testing.assert_allclose(x, xc, atol=1e-10 * max(1, np.abs(x).max()))
    ab = np.vstack([np.r_[0, off], diag, np.r_[off, 0]])
    np.testing.assert_allclose(x, sla.solve_banded((1, 1), ab, b), rtol=1e-10, atol=1e-12)
