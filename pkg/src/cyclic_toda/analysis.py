"""Numerical verifiers for the contraction, decay, energy and inequality results.

Every check returns a :class:`CheckReport`. Inequalities that hold in the
continuum are evaluated with second-order stencils, so their pass threshold
is ``-tol_h`` with ``tol_h = c * scale * h^2`` rather than zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .algebra import CyclicFrame, nonlinearity, project_traceless, weighted_exponentials
from .coefficients import (
    ProblemData,
    theorem4_hypothesis_check,
    wide_laplacian,
    zero_exclusion_mask,
)
from .grid import Domain, build_domain, laplacian_apply
from .newton import NewtonConfig, residual, solve

__all__ = [
    "CheckReport",
    "TrigField",
    "bump_perturbation",
    "energy_identity_study",
    "energy_monitor",
    "energy_rate_discrepancy",
    "lemma1_monitor",
    "lemma2_monitor",
    "max_principle_check",
    "mms_order",
    "mms_study",
    "random_trig_field",
    "residual",
    "theorem3_check",
    "theorem3_corpus",
    "theorem3_refinement",
    "theorem4_check",
    "uniqueness_check",
]


@dataclass
class CheckReport:
    """Outcome of one verifier.

    ``passed`` is equivalent to ``worst_margin >= -tolerance``. Monitors whose
    allowance varies per step fold it into the margin and use ``tolerance = 0``.
    """

    name: str
    passed: bool
    worst_margin: float
    location: object
    tolerance: float
    details: dict = field(default_factory=dict)
    message: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: worst margin {self.worst_margin:.6e} at {self.location} "
                f"(tolerance {self.tolerance:.3e}){' - ' + self.message if self.message else ''}")


def _report(name, margins, tolerance, locations=None, **details) -> CheckReport:
    margins = np.asarray(margins, dtype=float)
    if margins.size == 0:
        raise ValueError(f"{name}: nothing to check")
    k = int(np.argmin(margins))
    loc = locations[k] if locations is not None else k
    worst = float(margins.ravel()[k])
    return CheckReport(name, bool(worst >= -tolerance), worst, loc, float(tolerance), details)


# --------------------------------------------------------------------------
# random smooth fields


@dataclass
class TrigField:
    """``sum_k c_k cos(2 pi k.x / L) + s_k sin(2 pi k.x / L)`` with vector coefficients.

    Periodic on the torus of side lengths ``lengths``; value, gradient and
    flat Laplacian are exact.
    """

    modes: np.ndarray  # (m, 2) integer wave numbers
    cos: np.ndarray  # (m, r)
    sin: np.ndarray  # (m, r)
    lengths: tuple

    def _phase(self, domain: Domain):
        x, y = domain.coordinates()
        kx = 2 * np.pi * self.modes[:, 0] / self.lengths[0]
        ky = 2 * np.pi * self.modes[:, 1] / self.lengths[1]
        return kx, ky, kx[:, None, None] * x + ky[:, None, None] * y

    def values(self, domain: Domain) -> np.ndarray:
        _, _, ph = self._phase(domain)
        return np.einsum("mxy,mr->xyr", np.cos(ph), self.cos) + np.einsum("mxy,mr->xyr", np.sin(ph), self.sin)

    def gradient(self, domain: Domain) -> tuple:
        kx, ky, ph = self._phase(domain)
        dc = -np.sin(ph)
        ds = np.cos(ph)
        gx = np.einsum("mxy,mr->xyr", dc, self.cos * kx[:, None]) + np.einsum("mxy,mr->xyr", ds, self.sin * kx[:, None])
        gy = np.einsum("mxy,mr->xyr", dc, self.cos * ky[:, None]) + np.einsum("mxy,mr->xyr", ds, self.sin * ky[:, None])
        return gx, gy

    def second_derivatives(self, domain: Domain) -> tuple:
        """``(d_xx, d_yy)`` of each component."""
        kx, ky, ph = self._phase(domain)
        c = np.cos(ph)
        s = np.sin(ph)
        out = []
        for k in (kx, ky):
            k2 = (k * k)[:, None]
            out.append(-(np.einsum("mxy,mr->xyr", c, self.cos * k2) + np.einsum("mxy,mr->xyr", s, self.sin * k2)))
        return tuple(out)

    def __sub__(self, other: "TrigField") -> "TrigField":
        return TrigField(np.concatenate([self.modes, other.modes]),
                         np.concatenate([self.cos, -other.cos]),
                         np.concatenate([self.sin, -other.sin]), self.lengths)


def random_trig_field(rng: np.random.Generator, r: int, lengths=(1.0, 1.0), degree: int = 2,
                      amplitude: float = 1.0, traceless: bool = True) -> TrigField:
    """Seeded trigonometric polynomial with coefficients decaying like ``1/(1+|k|^2)``."""
    modes = [(m, n) for m in range(-degree, degree + 1) for n in range(0, degree + 1)
             if not (n == 0 and m < 0)]
    modes = np.array(modes, dtype=int)
    scale = amplitude / (1.0 + np.sum(modes * modes, axis=1))[:, None]
    c = rng.normal(size=(len(modes), r)) * scale
    s = rng.normal(size=(len(modes), r)) * scale
    if traceless:
        c = project_traceless(c)
        s = project_traceless(s)
    return TrigField(modes, c, s, tuple(lengths))


# --------------------------------------------------------------------------
# main inequality estimates


def _log_sum_exp(d: np.ndarray) -> np.ndarray:
    m = d.max(axis=-1, keepdims=True)
    return (m + np.log(np.exp(d - m).sum(axis=-1, keepdims=True)))[..., 0]


def theorem3_margins(problem: ProblemData, xi, xi_prime) -> np.ndarray:
    """``|F(xi)| + |F(xi')| - Delta_g log sum_j e^{(xi - xi', u_j)}`` per node.

    The sum inside the log is at least ``r``, so no absolute value is taken.
    Boundary nodes are NaN.
    """
    dom = problem.domain
    lhs = laplacian_apply(dom, _log_sum_exp(np.asarray(xi) - np.asarray(xi_prime)))
    rhs = np.linalg.norm(residual(problem, xi), axis=-1) + np.linalg.norm(residual(problem, xi_prime), axis=-1)
    m = rhs - lhs
    m[dom.boundary] = np.nan
    return m


def _tol_h(domain: Domain, scale: float, c: float) -> float:
    h = max(domain.spacing)
    return c * scale * h * h


def theorem3_check(problem: ProblemData, xi, xi_prime, c: float = 10.0, scale: float | None = None) -> CheckReport:
    """Pointwise check of the log-sum-exp subsolution estimate for any pair of fields.

    ``tol_h = c * scale * h^2`` with ``scale`` defaulting to
    ``max(1, sup|xi|, sup|xi'|)``.
    """
    dom = problem.domain
    m = theorem3_margins(problem, xi, xi_prime)
    if scale is None:
        scale = max(1.0, float(np.abs(xi).max()), float(np.abs(xi_prime).max()))
    mask = dom.interior
    locs = np.argwhere(mask)
    rep = _report("theorem3", m[mask], _tol_h(dom, scale, c), [tuple(map(int, l)) for l in locs])
    rep.details["raw_negative_part"] = max(0.0, -rep.worst_margin)
    return rep


def _corpus_problem(domain: Domain, frame: CyclicFrame, rng: np.random.Generator):
    """Random ``(xi, xi', a, w)`` as trigonometric fields."""
    r = frame.r
    lengths = domain.lengths
    xi = random_trig_field(rng, r, lengths)
    xp = random_trig_field(rng, r, lengths)
    log_a = random_trig_field(rng, r, lengths, amplitude=0.5, traceless=False)
    w = random_trig_field(rng, r, lengths)
    return xi, xp, log_a, w


def theorem3_corpus(n_pairs: int = 100, nodes: int = 65, r: int = 3, seed: int = 0, c: float = 10.0) -> CheckReport:
    """Pairwise comparison check over seeded random smooth pairs on the unit torus."""
    dom = build_domain("torus2d", 1.0, nodes)
    frame = CyclicFrame(r)
    rng = np.random.default_rng(seed)
    reports = []
    for _ in range(n_pairs):
        xi, xp, log_a, w = _corpus_problem(dom, frame, rng)
        prob = ProblemData(dom, frame, np.exp(log_a.values(dom)), w.values(dom), "theorem3-random")
        reports.append(theorem3_check(prob, xi.values(dom), xp.values(dom), c=c))
    k = int(np.argmin([rep.worst_margin + rep.tolerance for rep in reports]))
    worst = reports[k]
    return CheckReport("theorem3_corpus", all(rep.passed for rep in reports), worst.worst_margin,
                       (k, worst.location), worst.tolerance,
                       {"pairs": n_pairs, "nodes": nodes, "seed": seed,
                        "min_raw_margin": min(rep.worst_margin for rep in reports)})


def _continuum_theorem3_margin(domain, frame, xi: TrigField, xp: TrigField, log_a: TrigField, w: TrigField):
    """The same margin with exact derivatives of the trigonometric fields."""
    d = xi - xp
    dv = d.values(domain)
    p = np.exp(dv - dv.max(axis=-1, keepdims=True))
    p /= p.sum(axis=-1, keepdims=True)
    lap = np.zeros(domain.shape)
    for g, dd in zip(d.gradient(domain), d.second_derivatives(domain)):
        mean_g = np.sum(p * g, axis=-1)
        lap += np.sum(p * dd, axis=-1) + np.sum(p * g * g, axis=-1) - mean_g * mean_g
    lhs = -lap / domain.lam
    a = np.exp(log_a.values(domain))
    wv = w.values(domain)

    def F(f: TrigField):
        dxx, dyy = f.second_derivatives(domain)
        v = f.values(domain)
        return -(dxx + dyy) / domain.lam[..., None] + nonlinearity(frame, a, v) - wv

    return np.linalg.norm(F(xi), axis=-1) + np.linalg.norm(F(xp), axis=-1) - lhs


def theorem3_refinement(levels=(65, 130, 260), n_pairs: int = 10, r: int = 3, seed: int = 1) -> dict:
    """Attribute pairwise-comparison margin deviations to discretisation error.

    For each level, records the worst negative discrete margin (clipped at
    zero) and the largest deviation of the discrete margin from the margin
    computed with exact derivatives. Orders are ``log2`` ratios between
    consecutive levels; the negative-part order is ``inf`` when no level has
    a negative margin.
    """
    frame = CyclicFrame(r)
    rng = np.random.default_rng(seed)
    fields = [_corpus_problem(build_domain("torus2d", 1.0, levels[0]), frame, rng) for _ in range(n_pairs)]
    negative, defect = [], []
    for n in levels:
        dom = build_domain("torus2d", 1.0, n)
        neg, dev = 0.0, 0.0
        for xi, xp, log_a, w in fields:
            prob = ProblemData(dom, frame, np.exp(log_a.values(dom)), w.values(dom))
            m_h = theorem3_margins(prob, xi.values(dom), xp.values(dom))
            m_c = _continuum_theorem3_margin(dom, frame, xi, xp, log_a, w)
            neg = max(neg, float(-np.nanmin(m_h)))
            dev = max(dev, float(np.nanmax(np.abs(m_h - m_c))))
        negative.append(max(neg, 0.0))
        defect.append(dev)

    def orders(vals):
        out = []
        for e0, e1, n0, n1 in zip(vals, vals[1:], levels, levels[1:]):
            if e0 == 0.0 and e1 == 0.0:
                out.append(math.inf)
            elif e1 == 0.0:
                out.append(math.inf)
            else:
                out.append(math.log(e0 / e1) / math.log(n1 / n0))
        return out

    return {"levels": list(levels), "negative_part": negative, "negative_order": orders(negative),
            "defect": defect, "defect_order": orders(defect)}


def theorem4_check(problem: ProblemData, xi, c: float = 10.0, residual_tol: float = 1e-8,
                   exclusion_radius: float = 2.0, safety: float = 2.0) -> CheckReport:
    """Check the ``log sum_j a_j e^{(v_j, xi)}`` estimate on a converged solution.

    Refuses to certify (``passed=False``, ``details['gate']`` set) when the
    hypothesis on ``Delta_g log a_j`` fails or when ``xi`` is not a solution
    to ``residual_tol``. Nodes within ``exclusion_radius * h`` of a zero of
    any ``a_j`` are excluded. The allowance per node is
    ``c h^2 + safety * (Richardson estimate of the stencil error) + sqrt(2) |F|``,
    the last term covering a residual that is not exactly zero.
    """
    dom = problem.domain
    frame = problem.frame
    hyp = theorem4_hypothesis_check(dom, problem, exclusion_radius=exclusion_radius)
    if not hyp.holds:
        failing = hyp.failing_indices()
        return CheckReport("theorem4", False, hyp.worst, "hypothesis", hyp.tol,
                           {"gate": "theorem4_hypothesis", "failing_j": failing},
                           f"hypothesis Delta log a_j <= -(v_j, w) fails for j = {failing}")
    F = residual(problem, xi)
    Fn = np.linalg.norm(F, axis=-1)
    if Fn.max() > residual_tol:
        return CheckReport("theorem4", False, float("nan"), "residual", residual_tol,
                           {"gate": "residual", "sup_F": float(Fn.max())},
                           f"xi is not a solution: sup|F| = {Fn.max():.3e}")
    cw = weighted_exponentials(frame, problem.a, xi)
    phi = cw.sum(axis=-1)
    psi = nonlinearity(frame, problem.a, xi)
    bound = -np.sum(psi * psi, axis=-1) / phi
    log_phi = np.log(phi)
    lhs = laplacian_apply(dom, log_phi)
    margin = bound - lhs
    mask = dom.interior.copy()
    for j in range(frame.r):
        mask &= zero_exclusion_mask(dom, problem.a[..., j], radius=exclusion_radius)
    if not mask.any():
        raise ValueError("theorem4_check: every node is masked")
    core = np.zeros(dom.shape, dtype=bool)
    if dom.periodic:
        core[:] = True
    else:
        core[tuple(slice(2, n - 2) for n in dom.shape)] = True
    richardson = np.where(core, np.abs(wide_laplacian(dom, log_phi) - lhs) / 3.0, 0.0)
    allowance = safety * richardson + math.sqrt(2.0) * Fn
    h = max(dom.spacing)
    tol_h = c * h * h
    locs = [tuple(map(int, l)) for l in np.argwhere(mask)]
    rep = _report("theorem4", (margin + allowance)[mask], tol_h, locs,
                  raw_worst=float(margin[mask].min()), masked_nodes=int((~mask & dom.interior).sum()))
    return rep


# --------------------------------------------------------------------------
# flow monitors


def _increase_report(name, values, allowed, steps) -> CheckReport:
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise ValueError(f"{name}: series too short")
    inc = np.diff(values)
    margins = np.asarray(allowed, dtype=float) - inc
    rep = _report(name, margins, 0.0, list(steps[1:]))
    rep.details["max_increase"] = float(inc.max())
    return rep


def bump_perturbation(domain: Domain, rng: np.random.Generator, r: int, amplitude: float = 2.0) -> np.ndarray:
    """Traceless random multiple of ``prod_k sin^2(pi (x_k - o_k) / L_k)``, zero on the boundary.

    Adding it to initial data keeps the Dirichlet trace bit-identical, as a
    paired run requires.
    """
    bump = np.ones(domain.shape)
    for c, L, o in zip(domain.coordinates(), domain.lengths, domain.origin):
        bump = bump * np.sin(np.pi * (c - o) / L) ** 2
    bump[domain.boundary] = 0.0
    return project_traceless(bump[..., None] * (amplitude * rng.normal(size=r)))


def lemma1_monitor(monitors: list, l2_rtol: float = 1e-12, sup_rtol: float = 1e-8) -> CheckReport:
    """Non-increase of the contraction monitors of a paired run.

    ``contraction_l2`` may grow by ``l2_rtol`` times its previous value per
    step; ``contraction_sup`` and ``sigma_sup`` by ``sup_rtol`` times the
    largest value seen in the run.
    """
    if not monitors:
        raise ValueError("lemma1_monitor: empty series")
    steps = [m["step"] for m in monitors]
    parts = {}
    l2 = np.array([m["contraction_l2"] for m in monitors])
    parts["contraction_l2"] = _increase_report("contraction_l2", l2, l2_rtol * l2[:-1], steps)
    for key in ("contraction_sup", "sigma_sup"):
        v = np.array([m[key] for m in monitors])
        scale = float(v.max())
        parts[key] = _increase_report(key, v, np.full(v.size - 1, sup_rtol * scale), steps)
    worst_key = min(parts, key=lambda k: parts[k].worst_margin)
    return CheckReport("lemma1", all(p.passed for p in parts.values()), parts[worst_key].worst_margin,
                       (worst_key, parts[worst_key].location), 0.0,
                       {k: p.details["max_increase"] for k, p in parts.items()})


def lemma2_monitor(series: list, rtol: float = 1e-10) -> CheckReport:
    """``sup|F|^2`` may grow by at most ``rtol * (1 + previous)`` per accepted step."""
    if not series:
        raise ValueError("lemma2_monitor: empty series")
    v = np.array([rec["sup_F2"] for rec in series])
    rep = _increase_report("lemma2", v, rtol * (1.0 + v[:-1]), [rec["step"] for rec in series])
    return rep


def energy_rate_discrepancy(series: list, t_window=None) -> float:
    """Largest ``|dE/dt + mean(int|F|^2)|`` over steps, trapezoid average in time."""
    worst = 0.0
    for prev, cur in zip(series, series[1:]):
        dt = cur["t"] - prev["t"]
        if dt <= 0:
            continue
        if t_window is not None and not (t_window[0] <= prev["t"] and cur["t"] <= t_window[1]):
            continue
        rate = (cur["energy"] - prev["energy"]) / dt
        worst = max(worst, abs(rate + 0.5 * (prev["int_F2"] + cur["int_F2"])))
    return worst


def energy_monitor(series: list, roundoff: float = 1e-14) -> CheckReport:
    """``E_h`` never increases; allowance ``roundoff * (1 + |E|)`` per step."""
    if not series:
        raise ValueError("energy_monitor: empty series")
    e = np.array([rec["energy"] for rec in series])
    rep = _increase_report("energy", e, roundoff * (1.0 + np.abs(e[:-1])), [rec["step"] for rec in series])
    if all("int_F2" in rec for rec in series):
        rep.details["rate_discrepancy"] = energy_rate_discrepancy(series)
    return rep


def max_principle_check(samples, tol: float = 0.0, certified: bool = True) -> CheckReport:
    """``sup_M f(t_n, .)`` must be non-increasing in ``n`` within ``tol``.

    ``samples`` is a sequence of arrays (the spatial samples at each time) or
    of precomputed suprema. ``certified`` records that the caller has checked
    ``(d/dt + Delta) f <= 0`` upstream; without it the check refuses.
    """
    sups = np.array([float(np.max(s)) for s in samples])
    if not certified:
        return CheckReport("max_principle", False, float("nan"), None, tol,
                           {"gate": "subsolution"}, "no subsolution certificate")
    if sups.size < 2:
        return CheckReport("max_principle", True, 0.0, None, tol)
    inc = np.diff(sups)
    return _report("max_principle", -inc, tol, list(range(1, sups.size)), max_increase=float(inc.max()))


# --------------------------------------------------------------------------
# uniqueness and MMS


def uniqueness_check(problem: ProblemData, boundary=None, config: NewtonConfig | None = None,
                     seeds=(1, 2), amplitude: float = 1.0) -> CheckReport:
    """Newton from two seeded random interior guesses must agree to ``2 tol``."""
    config = config or NewtonConfig()
    dom = problem.domain
    sols = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        guess = project_traceless(amplitude * rng.uniform(-1, 1, size=dom.shape + (problem.r,)))
        xi, rep = solve(problem, boundary, config, initial=guess, check=False)
        if not rep.converged:
            return CheckReport("uniqueness", False, float("nan"), seed, 2 * config.tol,
                               {"gate": "newton"}, f"Newton did not converge from seed {seed}: {rep.message}")
        sols.append(xi)
    diff = float(np.max(np.linalg.norm(sols[0] - sols[1], axis=-1)))
    return CheckReport("uniqueness", diff <= 2 * config.tol, -diff, "sup", 2 * config.tol,
                       {"sup_difference": diff})


def mms_order(errors, hs=None) -> float:
    """Observed order averaged over the two finest consecutive pairs.

    ``hs`` defaults to halving; NaN when the errors are at roundoff level.
    """
    errors = np.asarray(errors, dtype=float)
    if errors.size < 3:
        raise ValueError("need at least three grid levels")
    hs = 0.5 ** np.arange(errors.size) if hs is None else np.asarray(hs, dtype=float)
    if np.any(errors[-3:] < 1e-13):
        return float("nan")
    p = [math.log(errors[i] / errors[i + 1]) / math.log(hs[i] / hs[i + 1]) for i in (-3, -2)]
    return float(np.mean(p))


def _mms_1d(n: int):
    dom = build_domain("interval", 1.0, n)
    frame = CyclicFrame(2)
    (x,) = dom.coordinates()
    s = np.sin(np.pi * x)
    xi_star = s[:, None] * np.array([-1.0, 1.0])
    a = np.ones(dom.shape + (2,))
    w = (np.pi**2 * s + 2.0 * np.sinh(2.0 * s))[:, None] * np.array([-1.0, 1.0])
    return ProblemData(dom, frame, a, w, "mms-1d"), xi_star


def _mms_2d(n: int):
    dom = build_domain("rectangle", (1.0, 1.0), n)
    frame = CyclicFrame(3)
    x, y = dom.coordinates()
    s = np.sin(np.pi * x) * np.sin(np.pi * y)
    xi_star = s[..., None] * np.array([1.0, 0.0, -1.0])
    a = np.ones(dom.shape + (3,))
    w = 2.0 * np.pi**2 * xi_star + nonlinearity(frame, a, xi_star)
    return ProblemData(dom, frame, a, w, "mms-2d"), xi_star


def _mms_affine(n: int):
    dom = build_domain("interval", 1.0, n)
    frame = CyclicFrame(2)
    (x,) = dom.coordinates()
    xi_star = (0.5 * x - 0.25)[:, None] * np.array([-1.0, 1.0])
    a = np.ones(dom.shape + (2,))
    return ProblemData(dom, frame, a, nonlinearity(frame, a, xi_star), "mms-affine"), xi_star


MMS_FAMILIES = {"1d": _mms_1d, "2d": _mms_2d, "affine": _mms_affine}


def mms_study(family: str = "1d", levels=(33, 65, 129), config: NewtonConfig | None = None) -> dict:
    """Solve the manufactured problem on each level with the continuum ``w``.

    The exact solution supplies the Dirichlet data. Returns the sup-norm
    errors, spacings and observed order (NaN for the affine family, whose
    error is at roundoff level).
    """
    config = config or NewtonConfig()
    build = MMS_FAMILIES[family]
    errors, hs = [], []
    for n in levels:
        prob, xi_star = build(n)
        xi, rep = solve(prob, xi_star, config)
        if not rep.converged:
            raise RuntimeError(f"MMS solve on {n} nodes did not converge: {rep.message}")
        errors.append(float(np.max(np.abs(xi - xi_star))))
        hs.append(max(prob.domain.spacing))
    return {"family": family, "levels": list(levels), "h": hs, "errors": errors,
            "order": mms_order(errors, hs)}



# --------------------------------------------------------------------------
# energy identity under refinement


def energy_identity_study(nodes: int = 32, dt: float = 1e-4, t_end: float = 2e-3, r: int = 3,
                          seed: int = 0, amplitude: float = 0.5) -> dict:
    """Energy-rate discrepancy on a torus at ``(h, dt)`` and at ``(h/2, dt/2)``.

    The flow starts from a seeded smooth field and takes fixed steps up to
    ``t_end``. Backward Euler makes the discrepancy first order in ``dt``,
    so the ratio coarse/fine should be close to 2. The spatial part of the
    leading error coefficient converges like ``h^2``; on grids coarser than
    about 32 nodes per axis it visibly pulls the ratio below 2.
    """
    from .flow import FlowConfig, run

    rng = np.random.default_rng(seed)
    field_ = random_trig_field(rng, r, degree=2, amplitude=amplitude)
    frame = CyclicFrame(r)
    out = {"nodes": [], "dt": [], "discrepancy": []}
    for n, step in ((nodes, dt), (2 * nodes, dt / 2)):
        dom = build_domain("torus2d", 1.0, n)
        a = np.ones(dom.shape + (r,))
        prob = ProblemData(dom, frame, a, 0.0, "energy-identity")
        cfg = FlowConfig(dt_initial=step, dt_max=step, adaptive=False, t_max=t_end,
                         residual_tol=1e-14, max_steps=10 * int(round(t_end / step)))
        res = run(prob, field_.values(dom), cfg, check=False)
        out["nodes"].append(n)
        out["dt"].append(step)
        out["discrepancy"].append(energy_rate_discrepancy(res.series))
    d0, d1 = out["discrepancy"]
    out["ratio"] = d0 / d1 if d1 > 0 else math.inf
    return out
