"""The standard problem corpus used by the cross-checks and the acceptance suite."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import CyclicFrame
from .coefficients import (
    ProblemData,
    constant_coefficients,
    degenerate_torus_coefficients,
    higgs_coefficients,
    manufactured_problem,
    subharmonic_coefficients,
)
from .grid import build_domain


@dataclass(eq=False)
class CorpusEntry:
    name: str
    problem: ProblemData
    boundary: np.ndarray  # initial data: Dirichlet trace with zero interior
    exact: np.ndarray | None = None


def _zero(problem: ProblemData) -> np.ndarray:
    return np.zeros(problem.domain.shape + (problem.r,))


def constant_entry(nodes: int = 16) -> CorpusEntry:
    dom = build_domain("torus2d", 1.0, nodes)
    prob = constant_coefficients(dom, CyclicFrame(2), [1.0, 1.0], [-2.0, 2.0])
    return CorpusEntry("constant", prob, _zero(prob))


def mms_entry(nodes: int = 33) -> CorpusEntry:
    """Discrete manufactured problem: ``xi*`` is the exact grid solution."""
    dom = build_domain("rectangle", (1.0, 1.0), nodes)
    frame = CyclicFrame(3)
    x, y = dom.coordinates()
    # nonzero boundary values exercise the Dirichlet path
    xi_star = (np.sin(np.pi * x) * np.sin(np.pi * y) + 0.5 * x * y)[..., None] * np.array([1.0, 0.0, -1.0])
    a = np.stack([np.ones(dom.shape), 1.0 + x, 2.0 + np.cos(np.pi * y)], axis=-1)
    prob = manufactured_problem(dom, frame, a, xi_star, "mms")
    eta = _zero(prob)
    eta[dom.boundary] = xi_star[dom.boundary]
    return CorpusEntry("mms", prob, eta, xi_star)


def higgs_entry(nodes: int = 33) -> CorpusEntry:
    dom = build_domain("rectangle", (2.0, 2.0), nodes, origin=(-1.0, -1.0))
    prob = higgs_coefficients(dom, CyclicFrame(3), [0.0, 1.0], "higgs-z")
    return CorpusEntry("higgs-z", prob, _zero(prob))


def subharmonic_entry(nodes: int = 33) -> CorpusEntry:
    dom = build_domain("rectangle", (2.0, 2.0), nodes, origin=(-1.0, -1.0))
    prob = subharmonic_coefficients(dom, CyclicFrame(3), [(0.5, 0.0)], name="subharmonic-half")
    return CorpusEntry("subharmonic-half", prob, _zero(prob))


def degenerate_torus_entry(nodes: int = 32) -> CorpusEntry:
    """Closed-domain case: ``a_r = 4 (sin^2 pi x + sin^2 pi y)`` vanishes at the origin only."""
    dom = build_domain("torus2d", 1.0, nodes)
    prob = degenerate_torus_coefficients(dom, CyclicFrame(3))
    return CorpusEntry("degenerate-torus", prob, _zero(prob))


def standard_corpus() -> list[CorpusEntry]:
    return [constant_entry(), mms_entry(), higgs_entry(), subharmonic_entry(), degenerate_torus_entry()]
