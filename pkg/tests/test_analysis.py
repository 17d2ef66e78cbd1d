import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cyclic_toda.algebra import CyclicFrame
from cyclic_toda.analysis import (
    CheckReport,
    _report,
    bump_perturbation,
    energy_monitor,
    energy_rate_discrepancy,
    lemma1_monitor,
    lemma2_monitor,
    max_principle_check,
    mms_order,
    mms_study,
    random_trig_field,
    theorem3_check,
    theorem3_corpus,
    theorem3_margins,
    theorem3_refinement,
    theorem4_check,
    uniqueness_check,
)
from cyclic_toda.coefficients import ProblemData, constant_coefficients, subharmonic_coefficients
from cyclic_toda.corpus import higgs_entry, mms_entry
from cyclic_toda.flow import paired_run
from cyclic_toda.grid import build_domain
from cyclic_toda.newton import residual, solve


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=20), st.floats(0, 5))
def test_report_pass_iff_margin_above_minus_tol(margins, tol):
    rep = _report("x", margins, tol)
    assert rep.passed == (min(margins) >= -tol)
    assert rep.worst_margin == min(margins)
    assert margins[rep.location] == rep.worst_margin


def test_report_line_format():
    rep = CheckReport("demo", False, -1.5, (2, 3), 0.1, message="why")
    assert rep.line().startswith("FAIL demo: worst margin -1.500000e+00 at (2, 3)")
    assert rep.line().endswith("- why")
    with pytest.raises(ValueError):
        _report("empty", [], 0.0)


def test_trig_field_derivatives_match_differences(rng):
    f = random_trig_field(rng, 3, lengths=(1.0, 2.0), degree=3)
    eps = 1e-5
    base = build_domain("torus2d", (1.0, 2.0), 8)
    gx, gy = f.gradient(base)
    dxx, dyy = f.second_derivatives(base)
    for axis, g, dd in ((0, gx, dxx), (1, gy, dyy)):
        shift = [0.0, 0.0]
        shift[axis] = eps
        plus = f.values(build_domain("torus2d", (1.0, 2.0), 8, origin=tuple(shift)))
        shift[axis] = -eps
        minus = f.values(build_domain("torus2d", (1.0, 2.0), 8, origin=tuple(shift)))
        v = f.values(base)
        np.testing.assert_allclose((plus - minus) / (2 * eps), g, atol=1e-6 * np.abs(g).max())
        np.testing.assert_allclose((plus - 2 * v + minus) / eps**2, dd, atol=2e-3 * np.abs(dd).max())
    assert np.abs(f.values(base).sum(-1)).max() < 1e-12


def test_theorem3_identity_case(rng):
    d = build_domain("torus2d", 1.0, 16)
    prob = ProblemData(d, CyclicFrame(3), rng.uniform(0.5, 2, d.shape + (3,)), 0.0)
    xi = random_trig_field(rng, 3).values(d)
    m = theorem3_margins(prob, xi, xi)
    np.testing.assert_allclose(m, 2 * np.linalg.norm(residual(prob, xi), axis=-1), rtol=1e-14)
    assert theorem3_check(prob, xi, xi).passed


def test_theorem3_on_solutions():
    e = higgs_entry(33)
    xi, _ = solve(e.problem, e.boundary)
    other = xi + bump_perturbation(e.problem.domain, np.random.default_rng(0), 3)
    rep = theorem3_check(e.problem, xi, other)
    assert rep.passed
    # boundary nodes carry no margin
    assert np.all(np.isnan(theorem3_margins(e.problem, xi, other)[e.problem.domain.boundary]))


def test_theorem3_small_corpus_reproducible():
    a = theorem3_corpus(n_pairs=5, nodes=33, seed=7)
    b = theorem3_corpus(n_pairs=5, nodes=33, seed=7)
    assert a.passed and a == b


def test_theorem3_refinement_defect_second_order():
    out = theorem3_refinement(levels=(33, 66, 132), n_pairs=2, seed=3)
    assert set(out) >= {"negative_part", "negative_order", "defect", "defect_order"}
    assert min(out["defect_order"]) >= 1.8


def test_theorem4_symmetric_equality():
    d = build_domain("torus2d", 1.0, 16)
    prob = constant_coefficients(d, CyclicFrame(3), [1, 1, 1])
    rep = theorem4_check(prob, np.zeros(d.shape + (3,)))
    assert rep.passed and rep.worst_margin == 0.0


def test_theorem4_higgs_passes():
    e = higgs_entry(33)
    xi, _ = solve(e.problem, e.boundary)
    rep = theorem4_check(e.problem, xi)
    assert rep.passed, rep.line()
    assert rep.details["masked_nodes"] > 0


def test_theorem4_gates():
    d = build_domain("rectangle", (2.0, 2.0), 33, origin=(-1.0, -1.0))
    bad = subharmonic_coefficients(d, CyclicFrame(3), [], smooth=("quadratic", 1.0, 0.0, 0.0))
    xi, _ = solve(bad)
    rep = theorem4_check(bad, xi)
    assert not rep.passed and rep.details["gate"] == "theorem4_hypothesis"
    assert rep.details["failing_j"] == [3]
    e = higgs_entry(17)
    rep = theorem4_check(e.problem, e.boundary + bump_perturbation(e.problem.domain, np.random.default_rng(1), 3))
    assert not rep.passed and rep.details["gate"] == "residual"


def _series(values, key="sup_F2"):
    return [{"step": k, "t": float(k), key: v} for k, v in enumerate(values)]


def test_monitors_detect_increase():
    assert lemma2_monitor(_series([4.0, 2.0, 1.0])).passed
    assert not lemma2_monitor(_series([4.0, 2.0, 2.1])).passed
    assert energy_monitor(_series([3.0, 2.0, 1.0], "energy")).passed
    rep = energy_monitor(_series([3.0, 2.0, 2.5], "energy"))
    assert not rep.passed and rep.location == 2
    mons = [{"step": k, "contraction_sup": v, "contraction_l2": v, "sigma_sup": v} for k, v in enumerate([1.0, 0.5, 0.6])]
    rep = lemma1_monitor(mons)
    assert not rep.passed
    for fn in (lemma1_monitor, lemma2_monitor, energy_monitor):
        with pytest.raises(ValueError):
            fn([])


def test_identical_paired_run_monitors():
    e = higgs_entry(9)
    pr = paired_run(e.problem, e.boundary, e.boundary.copy())
    rep = lemma1_monitor(pr.monitors)
    assert rep.passed and all(v == 0 for v in rep.details.values())


def test_energy_rate_identity_exact_series():
    t = np.linspace(0, 1, 11)
    # E = -t^2 / 2 with int|F|^2 = t: the trapezoid average is exact for a linear rate
    series = [{"t": s, "energy": -s * s / 2, "int_F2": s} for s in t]
    assert energy_rate_discrepancy(series) == pytest.approx(0.0, abs=1e-12)
    assert energy_rate_discrepancy(series, t_window=(0.5, 1.0)) == pytest.approx(0.0, abs=1e-12)


def test_max_principle_examples():
    assert max_principle_check([np.full(5, 2.0)] * 4).passed
    bump = np.sin(np.linspace(0, np.pi, 9))
    rep = max_principle_check([math.exp(-t) * bump for t in np.linspace(0, 2, 6)])
    assert rep.passed and rep.details["max_increase"] < 0
    assert not max_principle_check([bump, 2 * bump]).passed
    refused = max_principle_check([bump], certified=False)
    assert not refused.passed and refused.details["gate"] == "subsolution"


def test_max_principle_on_paired_run(rng):
    e = higgs_entry(17)
    dom = e.problem.domain
    eta2 = e.boundary + bump_perturbation(dom, rng, 3)
    pr = paired_run(e.problem, e.boundary, eta2)
    sups = [m["contraction_sup"] for m in pr.monitors]
    assert max_principle_check(sups, tol=1e-8 * max(sups)).passed


def test_mms_order_helper():
    assert mms_order([4e-2, 1e-2, 2.5e-3]) == pytest.approx(2.0)
    assert math.isnan(mms_order([1e-15, 1e-15, 1e-15]))
    with pytest.raises(ValueError):
        mms_order([1.0, 0.5])


def test_mms_study_1d_and_affine():
    study = mms_study("1d", levels=(17, 33, 65))
    assert 1.9 <= study["order"] <= 2.1
    e = study["errors"]
    assert 3.5 <= e[0] / e[1] <= 4.5 and 3.5 <= e[1] / e[2] <= 4.5
    aff = mms_study("affine", levels=(9, 17, 33))
    assert math.isnan(aff["order"]) and max(aff["errors"]) <= 1e-12


def test_uniqueness_check_passes():
    e = mms_entry(17)
    rep = uniqueness_check(e.problem, e.boundary)
    assert rep.passed and rep.details["sup_difference"] <= 2e-10


def test_bump_perturbation(rng):
    d = build_domain("rectangle", (2.0, 1.0), (9, 7), origin=(-1.0, 0.0))
    p = bump_perturbation(d, rng, 4)
    assert np.all(p[d.boundary] == 0)
    assert np.abs(p.sum(-1)).max() < 1e-14
    assert np.abs(p).max() > 0
