import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cyclic_toda.algebra import CyclicFrame, constant_solve, project_traceless
from cyclic_toda.coefficients import ProblemData, constant_coefficients, manufactured_problem
from cyclic_toda.corpus import degenerate_torus_entry, mms_entry
from cyclic_toda.grid import build_domain
from cyclic_toda.newton import (
    NewtonConfig,
    NonlinearSystem,
    cross_validate,
    discrete_energy,
    residual,
    solve,
    sup_residual,
)
from conftest import S_CLOSED_FORM


def test_energy_examples():
    sq = build_domain("rectangle", 1.0, 9)
    assert discrete_energy(constant_coefficients(sq, CyclicFrame(3), [1, 1, 1]),
                           np.zeros(sq.shape + (3,))) == pytest.approx(3.0, abs=1e-13)
    t = build_domain("torus2d", 1.0, 8)
    assert discrete_energy(constant_coefficients(t, CyclicFrame(2), [1, 1]),
                           np.zeros(t.shape + (2,))) == pytest.approx(2.0, abs=1e-14)


@pytest.mark.parametrize("kind", ["interval", "rectangle", "torus2d"])
def test_energy_gradient_is_weighted_residual(kind, rng):
    lam = None if kind == "interval" else (lambda x, y: 1.0 + 0.3 * np.cos(x + 2 * y))
    d = build_domain(kind, 1.0, 9, lam=lam)
    r = 3
    a = rng.uniform(0.5, 2.0, d.shape + (r,))
    w = project_traceless(rng.normal(size=d.shape + (r,)))
    prob = ProblemData(d, CyclicFrame(r), a, w)
    xi = project_traceless(rng.normal(size=d.shape + (r,)) * 0.3)
    direction = project_traceless(rng.normal(size=d.shape + (r,)))
    direction[d.boundary] = 0.0
    eps = 1e-6
    fd = (discrete_energy(prob, xi + eps * direction) - discrete_energy(prob, xi - eps * direction)) / (2 * eps)
    exact = d.cell_volume * np.sum(d.lam[..., None] * residual(prob, xi) * direction)
    assert fd == pytest.approx(exact, rel=1e-6)


def test_residual_examples(rng):
    d = build_domain("torus2d", 1.0, 8)
    prob = constant_coefficients(d, CyclicFrame(3), [1, 1, 1])
    np.testing.assert_array_equal(residual(prob, np.zeros(d.shape + (3,))), 0.0)
    sq = build_domain("rectangle", 1.0, 7)
    w = project_traceless(rng.normal(size=sq.shape + (3,)))
    p0 = ProblemData(sq, CyclicFrame(3), 1.0, 0.0)
    pw = p0.with_source(w)
    xi = project_traceless(rng.normal(size=sq.shape + (3,)))
    diff = residual(p0, xi) - residual(pw, xi)
    np.testing.assert_allclose(diff[sq.interior], w[sq.interior], atol=1e-12)
    assert np.all(residual(pw, xi)[sq.boundary] == 0)


def test_newton_constant_problem():
    d = build_domain("torus2d", 1.0, 16)
    prob = constant_coefficients(d, CyclicFrame(2), [1, 1], [-2, 2])
    xi, rep = solve(prob)
    assert rep.converged and rep.residual <= 1e-10
    np.testing.assert_allclose(xi, np.broadcast_to([-S_CLOSED_FORM, S_CLOSED_FORM], xi.shape), atol=1e-10)


def test_newton_constant_dirichlet_r4(rng):
    f = CyclicFrame(4)
    a = rng.uniform(0.5, 2, 4)
    w = project_traceless(rng.normal(size=4))
    c = constant_solve(f, a, w)
    d = build_domain("rectangle", 1.0, 12)
    prob = constant_coefficients(d, f, a, w)
    xi, rep = solve(prob, np.broadcast_to(c, d.shape + (4,)))
    assert rep.converged
    np.testing.assert_allclose(xi, np.broadcast_to(c, xi.shape), atol=1e-10)


def test_newton_mms_exact():
    e = mms_entry()
    xi, rep = solve(e.problem, e.boundary)
    assert rep.converged
    assert np.abs(xi - e.exact).max() <= 1e-10


def test_newton_energy_decreases_and_descends():
    e = mms_entry()
    _, rep = solve(e.problem, e.boundary)
    en = np.array(rep.energies)
    assert np.all(np.diff(en) < 0)
    # quadratic convergence at the end
    res = rep.residuals
    assert res[-1] <= 1e-10 and res[-2] <= 1e-3


def test_newton_uniqueness_random_starts(rng):
    e = degenerate_torus_entry(16)
    tol = 1e-10
    sols = []
    for _ in range(2):
        guess = project_traceless(rng.uniform(-1, 1, e.boundary.shape))
        xi, rep = solve(e.problem, config=NewtonConfig(tol=tol), initial=guess)
        assert rep.converged
        sols.append(xi)
    assert np.abs(sols[0] - sols[1]).max() <= 2 * tol


@given(st.integers(0, 2**32 - 1), st.sampled_from(["interval", "rectangle", "torus2d"]),
       st.integers(2, 4))
def test_newton_random_problems_converge(seed, kind, r):
    rng = np.random.default_rng(seed)
    d = build_domain(kind, 1.0, 7)
    a = rng.uniform(0.0, 3.0, d.shape + (r,))
    a[..., 0] += 0.1
    w = project_traceless(rng.normal(size=d.shape + (r,)))
    prob = ProblemData(d, CyclicFrame(r), a, w)
    eta = project_traceless(rng.normal(size=d.shape + (r,)))
    xi, rep = solve(prob, eta, NewtonConfig(tol=1e-9))
    assert rep.converged
    assert sup_residual(prob, xi) <= 1e-9
    assert np.array_equal(xi[d.boundary], eta[d.boundary])


def test_newton_config_validation():
    with pytest.raises(ValueError):
        NewtonConfig(tol=0)
    with pytest.raises(ValueError):
        NewtonConfig(backtrack=1.0)


def test_newton_max_iterations_reported():
    e = mms_entry(17)
    _, rep = solve(e.problem, e.boundary, NewtonConfig(maxit=1))
    assert not rep.converged and rep.message == "maximum iterations reached"


def test_direct_and_shifted_linear_paths():
    e = degenerate_torus_entry(16)
    x1, r1 = solve(e.problem, config=NewtonConfig(linear_solver="direct"))
    x2, r2 = solve(e.problem, config=NewtonConfig(singular_shift=True))
    assert r1.converged and r2.converged
    assert np.abs(x1 - x2).max() <= 1e-9


def test_system_matrix_symmetric_positive_definite(rng):
    e = mms_entry(9)
    sysm = NonlinearSystem(e.problem)
    A = sysm.matrix(e.exact).toarray()
    np.testing.assert_allclose(A, A.T, atol=1e-12 * np.abs(A).max())
    # positive definite on traceless vectors
    n, r = sysm.n, e.problem.r
    P = np.kron(np.eye(n), np.eye(r) - 1.0 / r)
    ev = np.linalg.eigvalsh(P @ A @ P)
    assert np.sum(ev > 1e-8) == n * (r - 1)


def test_cross_validate_constant_and_degenerate():
    d = build_domain("torus2d", 1.0, 12)
    rep = cross_validate(constant_coefficients(d, CyclicFrame(2), [1, 1], [-2, 2]))
    assert rep.passed and rep.difference <= 1e-9
    e = degenerate_torus_entry(16)
    rep = cross_validate(e.problem, e.boundary)
    assert rep.passed and rep.difference <= 1e-6


def test_cross_validate_mms_65():
    e = mms_entry(65)
    rep = cross_validate(e.problem, e.boundary)
    assert rep.passed and rep.difference <= 1e-8


def test_manufactured_problem_is_discrete_fixed_point(rng):
    d = build_domain("rectangle", (1.0, 2.0), (9, 11))
    f = CyclicFrame(3)
    xs = project_traceless(rng.normal(size=d.shape + (3,)) * 0.5)
    prob = manufactured_problem(d, f, rng.uniform(0.5, 2, d.shape + (3,)), xs)
    assert sup_residual(prob, xs) <= 1e-12
