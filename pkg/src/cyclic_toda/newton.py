"""Direct solution of ``F(xi) = 0`` by damped Newton on the discrete energy.

The discrete energy

    E_h(xi) = sum_edges |dxi|^2 / 2 + sum_nodes w_q lam (sum_j a_j e^{(v_j, xi)} - (w, xi))

has gradient ``h^d lam F(xi)`` at every unknown node, so Newton's method for
``F = 0`` is Newton's method for a strictly convex minimisation and a
backtracking line search on ``E_h`` makes it globally convergent.

The same machinery solves the backward-Euler step of the heat flow, which
minimises ``E_h(xi) + h^d sum lam |xi - xi_prev|^2 / (2 dt)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .algebra import (
    ExponentRangeError,
    nonlinearity,
    nonlinearity_jacobian,
    potential,
    project_traceless,
)
from .coefficients import ProblemData, validate
from .grid import Domain, assemble_stiffness, laplacian_apply
from .linalg import solve_spd

log = logging.getLogger(__name__)

#: Multiple of machine epsilon times the term magnitude below which a
#: residual that the line search cannot reduce counts as converged.
ROUNDOFF_FACTOR = 32.0


@dataclass
class NewtonConfig:
    tol: float = 1e-10
    maxit: int = 60
    backtrack: float = 0.5
    max_backtracks: int = 40
    singular_shift: bool = False
    linear_solver: str = "cg"
    linear_tol: float = 1e-12

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("Newton tolerance must be positive")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtracking factor must lie in (0, 1)")


@dataclass
class NewtonReport:
    converged: bool
    iterations: int
    residual: float
    energies: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    linear_iterations: list = field(default_factory=list)
    message: str = ""


class LineSearchError(RuntimeError):
    """Backtracking could not decrease the energy."""


def residual(problem: ProblemData, xi) -> np.ndarray:
    """``F(xi) = Delta_g xi + N(xi) - w`` on interior nodes, zero on the boundary."""
    dom = problem.domain
    xi = dom.check_field(xi)
    F = laplacian_apply(dom, xi) + nonlinearity(problem.frame, problem.a, xi) - problem.w
    F[dom.boundary] = 0.0
    return F


def sup_residual(problem: ProblemData, xi) -> float:
    F = residual(problem, xi)
    return float(np.sqrt(np.max(np.sum(F * F, axis=-1))))


def _gradient_energy(domain: Domain, xi: np.ndarray) -> float:
    total = 0.0
    vol = domain.cell_volume
    for ax, h in enumerate(domain.spacing):
        if domain.periodic:
            d = np.roll(xi, -1, axis=ax) - xi
        else:
            d = np.diff(xi, axis=ax)
        total += 0.5 * vol * float(np.sum((d * d).ravel())) / (h * h)
    return total


def discrete_energy(problem: ProblemData, xi) -> float:
    """``E_h(xi) = int (|dxi|^2 / 2 + sum_j a_j e^{(v_j, xi)} - (w, xi))``.

    One-sided differences on every grid edge for the Dirichlet term, node
    quadrature for the rest.
    """
    dom = problem.domain
    xi = dom.check_field(xi)
    pot = potential(problem.frame, problem.a, xi) - np.sum(problem.w * xi, axis=-1)
    weights = dom.quadrature_weights() * dom.lam
    return _gradient_energy(dom, xi) + float(np.sum((weights * pot).ravel()))


def _block_diagonal(blocks: np.ndarray) -> sp.csr_matrix:
    n, r, _ = blocks.shape
    base = np.arange(n)[:, None, None] * r
    rows = base + np.arange(r)[None, :, None]
    cols = base + np.arange(r)[None, None, :]
    rows, cols = np.broadcast_arrays(rows, cols)
    return sp.csr_matrix((blocks.ravel(), (rows.ravel(), cols.ravel())), shape=(n * r, n * r))


class NonlinearSystem:
    """Assembles the (scaled) Hessian of ``E_h`` on the unknown nodes.

    The linear system for a Newton step is
    ``(K (x) I_r + blockdiag(lam (DN + I / dt))) delta = -lam G`` with ``K``
    the flat stiffness matrix and ``G`` the gradient (``F`` or the implicit
    heat-step residual). It is symmetric, and positive definite on ``V``.
    """

    def __init__(self, problem: ProblemData):
        self.problem = problem
        dom = problem.domain
        r = problem.r
        self.unknown = dom.interior
        self.n = dom.n_unknown_nodes
        self.lam = dom.lam[self.unknown]
        self.KI = sp.csr_matrix(sp.kron(assemble_stiffness(dom), sp.identity(r, format="csr")))
        self.a_unknown = problem.a[self.unknown]
        # on a closed domain the field (1,...,1) is in the kernel of the full system
        self.kernel = np.ones(self.n * r) if dom.periodic else None

    def matrix(self, xi: np.ndarray, dt: float | None = None) -> sp.csr_matrix:
        r = self.problem.r
        blocks = nonlinearity_jacobian(self.problem.frame, self.a_unknown, xi[self.unknown])
        if dt is not None:
            blocks = blocks + np.eye(r) / dt
        blocks = blocks * self.lam[:, None, None]
        return (self.KI + _block_diagonal(blocks)).tocsr()


def newton_minimize(problem: ProblemData, xi0, config: NewtonConfig, *, dt: float | None = None,
                    xi_prev=None, system: NonlinearSystem | None = None):
    """Shared damped Newton iteration.

    Without ``dt`` this solves ``F(xi) = 0``; with ``dt`` it solves the
    implicit heat step ``(xi - xi_prev) / dt + F(xi) = 0``. Boundary nodes of
    ``xi0`` are never modified.
    """
    dom = problem.domain
    sys_ = system or NonlinearSystem(problem)
    mask = sys_.unknown
    r = problem.r
    weights = dom.quadrature_weights() * dom.lam
    vol = dom.cell_volume
    xi = np.array(dom.check_field(xi0), dtype=float)
    if dt is not None:
        xi_prev = np.asarray(xi_prev, dtype=float)

    def objective(x):
        e = discrete_energy(problem, x)
        if dt is not None:
            d = x - xi_prev
            e += 0.5 / dt * float(np.sum((weights * np.sum(d * d, axis=-1)).ravel()))
        return e

    def gradient(x):
        g = residual(problem, x)
        if dt is not None:
            g = g + (x - xi_prev) / dt
            g[dom.boundary] = 0.0
        return g

    def roundoff_floor(x):
        # the residual is a sum of terms of this size; its entries cannot be
        # resolved more finely than a few ulps of them
        xmax = np.abs(x).max()
        stencil = xmax * sum(4.0 / (h * h) for h in dom.spacing) / dom.lam.min()
        terms = stencil + 2.0 * potential(problem.frame, problem.a, x).max() + np.abs(problem.w).max()
        if dt is not None:
            terms += xmax / dt
        return ROUNDOFF_FACTOR * np.finfo(float).eps * terms

    report = NewtonReport(False, 0, float("inf"))
    g = gradient(xi)
    e = objective(xi)
    for it in range(config.maxit + 1):
        res = float(np.sqrt(np.max(np.sum(g * g, axis=-1))))
        report.residuals.append(res)
        report.energies.append(e)
        report.iterations = it
        report.residual = res
        if res <= config.tol:
            report.converged = True
            return xi, report
        if it == config.maxit:
            break
        A = sys_.matrix(xi, dt)
        rhs = -(sys_.lam[:, None] * g[mask]).ravel()
        shift = 1e-12 if config.singular_shift else 0.0
        delta, lrep = solve_spd(A, rhs, method=config.linear_solver, tol=config.linear_tol,
                                kernel=sys_.kernel, shift=shift)
        report.linear_iterations.append(lrep.iterations)
        step = np.zeros_like(xi)
        step[mask] = project_traceless(delta.reshape(-1, r))
        slope = vol * float(np.sum(sys_.lam[:, None] * g[mask] * step[mask]))
        if slope >= 0:
            report.message = f"non-descent Newton direction (slope {slope:.3e})"
            log.warning(report.message)
            break
        t = 1.0
        accepted = False
        for _ in range(config.max_backtracks):
            trial = xi + t * step
            try:
                e_trial = objective(trial)
                g_trial = gradient(trial)
            except ExponentRangeError:
                t *= config.backtrack
                continue
            # below roundoff the energy cannot resolve progress; fall back on the residual
            noise = 1e-13 * (abs(e) + 1.0)
            res_trial = float(np.sqrt(np.max(np.sum(g_trial * g_trial, axis=-1))))
            if e_trial < e or (e_trial <= e + noise and res_trial < res):
                accepted = True
                break
            t *= config.backtrack
        if not accepted:
            floor = roundoff_floor(xi)
            if res <= floor:
                # no representable progress left: converged to working precision
                report.converged = True
                report.message = f"residual {res:.3e} at roundoff floor {floor:.3e}"
                return xi, report
            report.message = "line search stalled"
            log.warning("line search stalled at residual %.3e (roundoff floor %.3e)", res, floor)
            break
        xi, g, e = trial, g_trial, e_trial
    if not report.message:
        report.message = "maximum iterations reached"
    return xi, report


def solve(problem: ProblemData, boundary=None, config: NewtonConfig | None = None, initial=None,
          check: bool = True):
    """Solve ``F(xi) = 0`` with Dirichlet data ``boundary`` (ignored on the torus).

    Parameters
    ----------
    boundary : ndarray, optional
        A full field whose boundary nodes give the Dirichlet data; zero if
        omitted.
    initial : ndarray, optional
        Initial guess; its interior values are used, the boundary is
        replaced by ``boundary``. Defaults to zero in the interior.

    Returns
    -------
    xi : ndarray
    report : NewtonReport
    """
    config = config or NewtonConfig()
    dom = problem.domain
    if check:
        validate(problem)
    shape = dom.shape + (problem.r,)
    xi = np.zeros(shape) if initial is None else np.array(dom.check_field(initial), dtype=float)
    if boundary is not None:
        xi[dom.boundary] = dom.check_field(boundary)[dom.boundary]
    else:
        xi[dom.boundary] = 0.0
    return newton_minimize(problem, xi, config)


@dataclass
class CrossValidationReport:
    passed: bool
    difference: float
    threshold: float
    flow_converged: bool
    newton_converged: bool
    xi_newton: np.ndarray | None = field(default=None, repr=False)
    xi_flow: np.ndarray | None = field(default=None, repr=False)
    series: list = field(default_factory=list, repr=False)


def cross_validate(problem: ProblemData, boundary=None, newton_config: NewtonConfig | None = None,
                   flow_config=None, factor: float = 10.0) -> CrossValidationReport:
    """Solve by heat flow and by Newton; pass iff ``sup|xi_flow - xi_newton| <= factor * max(tol)``.

    The flow starts from ``boundary`` with a zero interior.

    Raises
    ------
    RuntimeError
        If either solver fails to converge.
    """
    from .flow import FlowConfig, run

    newton_config = newton_config or NewtonConfig()
    flow_config = flow_config or FlowConfig(residual_tol=newton_config.tol,
                                            linear_solver=newton_config.linear_solver)
    dom = problem.domain
    eta = np.zeros(dom.shape + (problem.r,))
    if boundary is not None:
        eta[dom.boundary] = dom.check_field(boundary)[dom.boundary]
    xi_n, rep = solve(problem, boundary, newton_config)
    flow = run(problem, eta, flow_config)
    if not rep.converged or not flow.converged:
        raise RuntimeError(f"cross_validate: newton converged={rep.converged}, flow converged={flow.converged}")
    diff = float(np.max(np.linalg.norm(xi_n - flow.xi, axis=-1)))
    threshold = factor * max(newton_config.tol, flow_config.residual_tol)
    return CrossValidationReport(diff <= threshold, diff, threshold, flow.converged, rep.converged,
                                 xi_n, flow.xi, flow.series)
