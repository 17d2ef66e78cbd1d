"""Heat flow ``dxi/dt + Delta xi + N(xi) - w = 0`` with fixed boundary values.

Time stepping is backward Euler. Each step minimises the convex functional
``E_h(xi) + |xi - xi_n|^2 / (2 dt)`` with the Newton solver of
:mod:`cyclic_toda.newton`, which makes the energy decrease, the discrete
L2 contraction between two flows and the decay of ``sup |F|`` exact
properties of the scheme rather than approximations.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .algebra import sigma_distance
from .coefficients import ProblemData, validate
from .grid import integrate, l2_norm, pointwise_norm2
from .newton import NewtonConfig, NonlinearSystem, discrete_energy, newton_minimize, residual

log = logging.getLogger(__name__)


class StepFailure(RuntimeError):
    """The step size fell below ``dt_min`` without an accepted step."""


@dataclass
class FlowConfig:
    """Step-size control and stopping rule for :func:`run`.

    ``dt_initial=None`` means ``h^2`` with ``h`` the smallest grid spacing.
    """

    dt_initial: float | None = None
    dt_min: float = 1e-12
    dt_max: float = 1.0
    growth: float = 1.5
    easy_iterations: int = 3
    residual_tol: float = 1e-10
    t_max: float = 1e3
    max_steps: int = 100_000
    snapshot_stride: int = 0
    inner_tol: float = 1e-11
    inner_maxit: int = 30
    linear_solver: str = "cg"
    adaptive: bool = True
    explicit: bool = False

    def __post_init__(self):
        if self.residual_tol <= 0:
            raise ValueError("residual_tol must be positive")
        if self.dt_initial is not None and not (self.dt_min <= self.dt_initial <= self.dt_max):
            raise ValueError("need dt_min <= dt_initial <= dt_max")
        if self.dt_min <= 0 or self.growth < 1:
            raise ValueError("invalid step-size controls")

    def inner(self) -> NewtonConfig:
        return NewtonConfig(tol=self.inner_tol, maxit=self.inner_maxit, linear_solver=self.linear_solver)

    def resolved_dt(self, problem: ProblemData) -> float:
        if self.dt_initial is not None:
            return self.dt_initial
        h = min(problem.domain.spacing)
        return min(max(h * h, self.dt_min), self.dt_max)


@dataclass
class FlowState:
    t: float
    xi: np.ndarray
    dt: float
    steps: int = 0
    series: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)


def _record(problem: ProblemData, xi: np.ndarray, step: int, t: float, dt: float) -> dict:
    F = residual(problem, xi)
    F2 = pointwise_norm2(problem.domain, F)
    return {
        "step": step,
        "t": t,
        "dt": dt,
        "sup_F2": float(F2.max()),
        "int_F2": integrate(problem.domain, F2),
        "energy": discrete_energy(problem, xi),
    }


def _implicit_step(problem, xi, dt, config, system):
    return newton_minimize(problem, xi, config.inner(), dt=dt, xi_prev=xi, system=system)


def _explicit_step(problem, xi, dt):
    return xi - dt * residual(problem, xi)


def step(state: FlowState, problem: ProblemData, config: FlowConfig,
         system: NonlinearSystem | None = None) -> FlowState:
    """Advance by one accepted step, halving ``dt`` until the inner solve converges.

    Returns a new state whose ``dt`` is the size proposed for the next step.
    The series of the input state is shared, not copied.
    """
    system = system or NonlinearSystem(problem)
    dt = state.dt
    while True:
        if dt < config.dt_min:
            raise StepFailure(f"step size {dt:.3e} fell below dt_min at t={state.t:.6g}")
        if config.explicit:
            xi_new = _explicit_step(problem, state.xi, dt)
            iterations, ok = 0, True
        else:
            xi_new, rep = _implicit_step(problem, state.xi, dt, config, system)
            iterations, ok = rep.iterations, rep.converged
        if ok:
            break
        log.debug("inner solve failed at dt=%.3e; halving", dt)
        dt *= 0.5
    next_dt = dt
    if config.adaptive and iterations <= config.easy_iterations:
        next_dt = min(dt * config.growth, config.dt_max)
    # boundary values are copied, never recomputed
    xi_new[problem.domain.boundary] = state.xi[problem.domain.boundary]
    return FlowState(state.t + dt, xi_new, next_dt, state.steps + 1, state.series, state.snapshots)


def _converged(rec: dict, config: FlowConfig) -> bool:
    return math.sqrt(rec["sup_F2"]) <= config.residual_tol


@dataclass
class FlowResult:
    state: FlowState
    converged: bool

    @property
    def xi(self) -> np.ndarray:
        return self.state.xi

    @property
    def series(self) -> list:
        return self.state.series


def run(problem: ProblemData, eta, config: FlowConfig | None = None, check: bool = True) -> FlowResult:
    """Integrate from ``xi_0 = eta`` until ``sup |F| <= residual_tol`` or ``t >= t_max``.

    Running out of time is reported through ``converged=False``; a collapse of
    the step size raises :class:`StepFailure`.
    """
    config = config or FlowConfig()
    if check:
        validate(problem)
    xi = np.array(problem.domain.check_field(eta), dtype=float)
    state = FlowState(0.0, xi, config.resolved_dt(problem))
    system = NonlinearSystem(problem)
    rec = _record(problem, xi, 0, 0.0, 0.0)
    state.series.append(rec)
    while not _converged(rec, config):
        remaining = config.t_max - state.t
        # accumulated step sums can leave a sliver of t_max that no step should cover
        if remaining <= max(config.dt_min, 1e-12 * config.t_max) or state.steps >= config.max_steps:
            return FlowResult(state, False)
        state.dt = min(state.dt, remaining)
        t_prev = state.t
        state = step(state, problem, config, system)
        rec = _record(problem, state.xi, state.steps, state.t, state.t - t_prev)
        state.series.append(rec)
        if config.snapshot_stride and state.steps % config.snapshot_stride == 0:
            state.snapshots.append((state.t, state.xi.copy()))
    return FlowResult(state, True)


@dataclass
class PairedResult:
    first: FlowResult
    second: FlowResult
    monitors: list

    @property
    def converged(self) -> bool:
        return self.first.converged and self.second.converged


def contraction_monitors(problem: ProblemData, xi, xi_prime) -> dict:
    dom = problem.domain
    d2 = pointwise_norm2(dom, xi - xi_prime)
    return {
        "contraction_sup": float(d2.max()),
        "contraction_l2": l2_norm(dom, d2),
        "sigma_sup": float(sigma_distance(xi, xi_prime).max()),
    }


def paired_run(problem: ProblemData, eta, eta_prime, config: FlowConfig | None = None,
               check: bool = True) -> PairedResult:
    """Run two flows with one shared sequence of accepted step sizes.

    The boundary traces of ``eta`` and ``eta_prime`` must agree exactly.
    Contraction monitors are appended to each record of the first flow's
    series and collected in ``monitors``.
    """
    config = config or FlowConfig()
    dom = problem.domain
    if check:
        validate(problem)
    eta = np.array(dom.check_field(eta), dtype=float)
    eta_prime = np.array(dom.check_field(eta_prime), dtype=float)
    if not np.array_equal(eta[dom.boundary], eta_prime[dom.boundary]):
        raise ValueError("paired flows need identical boundary traces")
    system = NonlinearSystem(problem)
    dt = config.resolved_dt(problem)
    s1 = FlowState(0.0, eta, dt)
    s2 = FlowState(0.0, eta_prime, dt)
    monitors = []

    def record(step_no, t, dt_used):
        r1 = _record(problem, s1.xi, step_no, t, dt_used)
        r2 = _record(problem, s2.xi, step_no, t, dt_used)
        mon = contraction_monitors(problem, s1.xi, s2.xi)
        r1.update(mon)
        r2.update(mon)
        s1.series.append(r1)
        s2.series.append(r2)
        monitors.append({"step": step_no, "t": t, "dt": dt_used, **mon})
        return r1, r2

    r1, r2 = record(0, 0.0, 0.0)
    while not (_converged(r1, config) and _converged(r2, config)):
        if s1.t >= config.t_max or s1.steps >= config.max_steps:
            return PairedResult(FlowResult(s1, False), FlowResult(s2, False), monitors)
        dt = min(s1.dt, max(config.t_max - s1.t, config.dt_min))
        while True:
            a = step(replace(s1, dt=dt), problem, config, system)
            b = step(replace(s2, dt=dt), problem, config, system)
            used_a, used_b = a.t - s1.t, b.t - s2.t
            if used_a == used_b:
                break
            # one flow had to halve; redo both at the smaller step
            dt = min(used_a, used_b)
        t_prev = s1.t
        next_dt = min(a.dt, b.dt)
        s1 = FlowState(a.t, a.xi, next_dt, a.steps, s1.series, s1.snapshots)
        s2 = FlowState(b.t, b.xi, next_dt, b.steps, s2.series, s2.snapshots)
        r1, r2 = record(s1.steps, s1.t, s1.t - t_prev)
    return PairedResult(FlowResult(s1, True), FlowResult(s2, True), monitors)


def fit_decay_rate(series: list) -> float:
    """Least-squares slope of ``-log sup|F|^2`` against ``t`` over the tail.

    Uses the second half of the records with ``sup|F|^2 > 0``; NaN when
    fewer than three such records exist.
    """
    pts = [(rec["t"], rec["sup_F2"]) for rec in series if rec["sup_F2"] > 0]
    pts = pts[len(pts) // 2:]
    if len(pts) < 3:
        return float("nan")
    t, f = np.array(pts).T
    slope = np.polyfit(t, np.log(f), 1)[0]
    return float(-slope)
