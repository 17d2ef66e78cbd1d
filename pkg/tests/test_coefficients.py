import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cyclic_toda.algebra import CyclicFrame, constant_solve, nonlinearity
from cyclic_toda.coefficients import (
    HypothesisError,
    ProblemData,
    constant_coefficients,
    degenerate_torus_coefficients,
    higgs_coefficients,
    manufactured_rhs,
    polynomial_from_spec,
    smooth_term,
    subharmonic_coefficients,
    theorem4_hypothesis_check,
    validate,
    zero_exclusion_mask,
)
from cyclic_toda.grid import build_domain


@pytest.fixture
def square():
    return build_domain("rectangle", (2.0, 2.0), 33, origin=(-1.0, -1.0))


def test_constant_family():
    d = build_domain("torus2d", 1.0, 8)
    p = constant_coefficients(d, CyclicFrame(3), [1, 1, 1])
    assert p.a.shape == (8, 8, 3) and np.all(p.a == 1) and np.all(p.w == 0)
    with pytest.raises(ValueError):
        constant_coefficients(d, CyclicFrame(3), [1, -1, 1])
    with pytest.raises(ValueError):
        constant_coefficients(d, CyclicFrame(3), [1, 1])
    with pytest.raises(ValueError):
        constant_coefficients(d, CyclicFrame(2), [1, 1], [1, 1])


def test_constant_problem_solution_is_constant_solve():
    d = build_domain("torus2d", 1.0, 8)
    f = CyclicFrame(2)
    p = constant_coefficients(d, f, [1, 1], [-2, 2])
    xi = constant_solve(f, [1, 1], [-2, 2])
    np.testing.assert_allclose(nonlinearity(f, p.a, np.broadcast_to(xi, p.w.shape)), p.w, atol=1e-12)


def test_problem_data_invariants():
    d = build_domain("interval", 1.0, 5)
    with pytest.raises(ValueError):
        ProblemData(d, CyclicFrame(2), -1.0, 0.0)
    with pytest.raises(ValueError):
        ProblemData(d, CyclicFrame(2), 1.0, [1.0, 0.0])


def test_polynomial_specs():
    p = polynomial_from_spec([1, [0, 2], 3])  # 1 + 2i z + 3 z^2
    assert p(1j) == pytest.approx(1 - 2 - 3)
    q = polynomial_from_spec({"roots": [[1, 0], [0, 1]], "leading": 2})
    assert q(0) == pytest.approx(2 * 1j)
    assert polynomial_from_spec({"leading": 3})(5) == 3
    with pytest.raises(ValueError):
        polynomial_from_spec([])


def test_higgs_constant_polynomial(square):
    p = higgs_coefficients(square, CyclicFrame(3), [1.0])
    assert np.all(p.a == 4.0) and np.all(p.w == 0)


def test_higgs_z(square):
    p = higgs_coefficients(square, CyclicFrame(3), [0, 1])
    assert p.a[16, 16, 2] == 0.0
    assert p.a[-1, -1, 2] == pytest.approx(8.0)
    assert np.all(p.a[..., :2] == 4.0)
    x, y = square.coordinates()
    np.testing.assert_allclose(p.a[..., 2], 4 * (x**2 + y**2), rtol=1e-14)


def test_higgs_needs_2d():
    with pytest.raises(ValueError):
        higgs_coefficients(build_domain("interval", 1.0, 5), CyclicFrame(2), [1.0])


@given(st.lists(st.tuples(st.floats(-2, 2), st.floats(-2, 2)), min_size=1, max_size=3),
       st.lists(st.tuples(st.floats(-2, 2), st.floats(-2, 2)), min_size=1, max_size=3))
def test_higgs_product_rule(g, h):
    d = build_domain("rectangle", (2.0, 2.0), 9, origin=(-1.0, -1.0))
    f3 = CyclicFrame(3)
    pg = polynomial_from_spec([list(c) for c in g])
    ph = polynomial_from_spec([list(c) for c in h])
    ag = higgs_coefficients(d, f3, pg).a[..., 2]
    ah = higgs_coefficients(d, f3, ph).a[..., 2]
    agh = higgs_coefficients(d, f3, pg * ph).a[..., 2]
    np.testing.assert_allclose(agh, ag * ah / 4.0, rtol=1e-12, atol=1e-12 * max(1.0, np.abs(agh).max()))


def test_subharmonic_integer_power_reproduces_higgs(square):
    f3 = CyclicFrame(3)
    s = subharmonic_coefficients(square, f3, [(1, 0.0)])
    h = higgs_coefficients(square, f3, [0, 1])
    assert np.array_equal(s.a, h.a)
    s2 = subharmonic_coefficients(square, f3, [(2, 0.25 + 0.5j)])
    h2 = higgs_coefficients(square, f3, {"roots": [[0.25, 0.5], [0.25, 0.5]]})
    np.testing.assert_allclose(s2.a, h2.a, rtol=1e-13, atol=1e-15)


def test_subharmonic_half_power(square):
    p = subharmonic_coefficients(square, CyclicFrame(3), [(0.5, 0.0)])
    x, y = square.coordinates()
    np.testing.assert_allclose(p.a[..., 2], 4 * np.hypot(x, y), rtol=1e-14)
    assert p.a[16, 16, 2] == 0.0
    with pytest.raises(ValueError):
        subharmonic_coefficients(square, CyclicFrame(3), [(0.0, 0.0)])


def test_smooth_terms(square):
    x, y = square.coordinates()
    p = subharmonic_coefficients(square, CyclicFrame(3), [], smooth="re_z")
    np.testing.assert_allclose(p.a[..., 2], 4 * np.exp(x), rtol=1e-14)
    g = smooth_term(square, ("gaussian", 0.5, 0.0, 0.0))
    assert g[16, 16] == 1.0
    q = smooth_term(square, ("quadratic", 1.0, 0.0, 0.0))
    np.testing.assert_allclose(q, -(x**2 + y**2))
    np.testing.assert_array_equal(smooth_term(square, None), 0)
    with pytest.raises(ValueError):
        smooth_term(square, "bogus")
    with pytest.raises(ValueError):
        smooth_term(square, ("gaussian", 0.0, 0.0, 0.0))


def test_manufactured_rhs_examples():
    d = build_domain("rectangle", 1.0, 9)
    f = CyclicFrame(3)
    np.testing.assert_array_equal(manufactured_rhs(d, f, 1.0, np.zeros(d.shape + (3,))), 0)
    c = np.array([0.3, -0.1, -0.2])
    w = manufactured_rhs(d, f, 1.0, np.broadcast_to(c, d.shape + (3,)))
    np.testing.assert_allclose(w, np.broadcast_to(nonlinearity(f, np.ones(3), c), w.shape), atol=1e-13)


def test_manufactured_rhs_1d_sine():
    d = build_domain("interval", 1.0, 65)
    (x,) = d.coordinates()
    s = np.sin(np.pi * x)
    xi = s[:, None] * np.array([-1.0, 1.0])
    w = manufactured_rhs(d, CyclicFrame(2), 1.0, xi)
    # continuum value, independent scalar evaluation; the stencil error is O(h^2)
    ref = (np.pi**2 * s + 2 * np.sinh(2 * s))[:, None] * np.array([-1.0, 1.0])
    h = d.spacing[0]
    assert np.abs(w - ref)[d.interior].max() <= np.pi**4 * h**2 / 12 * 1.01


def test_hypothesis_constant_is_zero_margin():
    d = build_domain("torus2d", 1.0, 16)
    rep = theorem4_hypothesis_check(d, constant_coefficients(d, CyclicFrame(3), [1, 2, 3]))
    assert rep.holds
    np.testing.assert_array_equal(rep.margins, 0.0)


def test_hypothesis_higgs_z_harmonic(square):
    rep = theorem4_hypothesis_check(square, higgs_coefficients(square, CyclicFrame(3), [0, 1]))
    assert rep.holds
    # origin and its 2h neighbourhood are masked
    assert not rep.mask[16, 16, 2] and not rep.mask[18, 16, 2] and rep.mask[19, 16, 2]


def test_hypothesis_exp_plus_square_holds(square):
    p = subharmonic_coefficients(square, CyclicFrame(3), [], smooth=("quadratic", -1.0, 0.0, 0.0))
    rep = theorem4_hypothesis_check(square, p)
    assert rep.holds
    np.testing.assert_allclose(rep.margins[..., 2][rep.mask[..., 2]], 4.0, rtol=1e-9)


def test_hypothesis_counterexample_rejected(square):
    p = subharmonic_coefficients(square, CyclicFrame(3), [], smooth=("quadratic", 1.0, 0.0, 0.0))
    rep = theorem4_hypothesis_check(square, p)
    assert not rep.holds
    assert rep.failing_indices() == [3]
    assert rep.worst == pytest.approx(-4.0, rel=1e-9)


def test_zero_exclusion_wraps_on_torus():
    d = build_domain("torus2d", 1.0, 16)
    a = np.ones(d.shape)
    a[0, 0] = 0.0
    m = zero_exclusion_mask(d, a, radius=2.0)
    assert not m[15, 15] and not m[14, 0] and m[13, 0]
    assert m.sum() == 256 - 13  # lattice points with |k| <= 2


def test_validate_reports():
    d = build_domain("torus2d", 2.0, 64, origin=(-1.0, -1.0))
    rep = validate(higgs_coefficients(d, CyclicFrame(3), [0, 1]))
    assert rep.ok and rep.zero_fraction[2] == 1 / 4096
    assert rep.measure_zero_zero_set[2]
    assert np.isfinite(rep.log_integral[2])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert validate(constant_coefficients(d, CyclicFrame(2), [1, 1])).ok


def test_validate_identically_zero():
    d = build_domain("torus2d", 1.0, 8)
    p = constant_coefficients(d, CyclicFrame(3), [1, 1, 0])
    with pytest.raises(HypothesisError):
        validate(p)
    assert not validate(p, raise_on_error=False).ok


def test_validate_warns_on_large_zero_set():
    d = build_domain("torus2d", 1.0, 8)
    a = np.ones(d.shape + (2,))
    a[:4, :, 1] = 0.0
    with pytest.warns(UserWarning):
        rep = validate(ProblemData(d, CyclicFrame(2), a, 0.0))
    assert not rep.measure_zero_zero_set[1]


def test_degenerate_torus_family():
    d = build_domain("torus2d", 1.0, 16)
    p = degenerate_torus_coefficients(d, CyclicFrame(3))
    zeros = np.argwhere(p.a[..., 2] == 0)
    assert zeros.tolist() == [[0, 0]]
    assert validate(p).ok
