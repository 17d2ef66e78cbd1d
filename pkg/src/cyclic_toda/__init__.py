"""Heat-flow and Newton solvers for the cyclic Toda system with verification tools.

The system is ``Delta xi + sum_j a_j e^{(v_j, xi)} v_j = w`` for a field
``xi`` with values in the trace-zero subspace of ``R^r``, posed on an
interval, a rectangle or a flat 2-torus.
"""

__version__ = "0.1.0"

from .algebra import CyclicFrame, constant_solve, nonlinearity, project_traceless, sigma_distance
from .coefficients import (
    ProblemData,
    constant_coefficients,
    degenerate_torus_coefficients,
    higgs_coefficients,
    manufactured_problem,
    subharmonic_coefficients,
    validate,
)
from .flow import FlowConfig, paired_run, run
from .grid import Domain, build_domain
from .newton import NewtonConfig, cross_validate, discrete_energy, residual, solve

__all__ = [
    "CyclicFrame",
    "Domain",
    "FlowConfig",
    "NewtonConfig",
    "ProblemData",
    "build_domain",
    "constant_coefficients",
    "constant_solve",
    "cross_validate",
    "degenerate_torus_coefficients",
    "discrete_energy",
    "higgs_coefficients",
    "manufactured_problem",
    "nonlinearity",
    "paired_run",
    "project_traceless",
    "residual",
    "run",
    "sigma_distance",
    "solve",
    "subharmonic_coefficients",
    "validate",
]
