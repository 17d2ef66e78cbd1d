"""Finite-dimensional algebra of the trace-zero space and the cyclic roots.

Everything here works pointwise but is vectorised over leading axes: a
"vector" is any array whose last axis has length ``r``, so the same calls
serve single points and whole grid fields.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

#: Largest admissible magnitude of an exponent ``(v_j, xi)``.
EXPONENT_LIMIT = 700.0


class ExponentRangeError(ArithmeticError):
    """An exponent in the nonlinearity left the representable range."""


class ConvergenceError(RuntimeError):
    """An iterative method failed to reach its tolerance."""


@dataclass(frozen=True)
class CyclicFrame:
    """Rank ``r`` together with the cyclic roots ``v_j = u_{j+1} - u_j``."""

    r: int

    def __post_init__(self):
        if int(self.r) != self.r or self.r < 2:
            raise ValueError(f"rank must be an integer >= 2, got {self.r!r}")

    @cached_property
    def roots(self) -> np.ndarray:
        """``(r, r)`` array whose row ``j`` is ``v_{j+1}`` (0-based rows)."""
        eye = np.eye(self.r)
        v = np.roll(eye, -1, axis=0) - eye
        v.setflags(write=False)
        return v

    def root(self, j: int) -> np.ndarray:
        """Return ``v_j`` for the 1-based index ``j``."""
        if not 1 <= j <= self.r:
            raise IndexError(f"root index {j} outside 1..{self.r}")
        return self.roots[j - 1].copy()

    def pairings(self, xi: np.ndarray) -> np.ndarray:
        """All pairings ``(v_j, xi)`` along the last axis."""
        xi = np.asarray(xi, dtype=float)
        _check_rank(xi, self.r)
        # (v_j, xi) = xi_{j+1} - xi_j, computed without a matmul so the
        # result is exact for integer-valued input
        return np.roll(xi, -1, axis=-1) - xi


def root(frame: CyclicFrame, j: int) -> np.ndarray:
    return frame.root(j)


def pairing(x, y) -> np.ndarray:
    """Euclidean inner product along the last axis."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1] != y.shape[-1]:
        raise ValueError(f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    return np.sum(x * y, axis=-1)


def project_traceless(x) -> np.ndarray:
    """Subtract the component mean, mapping ``R^r`` onto ``V``."""
    x = np.asarray(x, dtype=float)
    return x - x.mean(axis=-1, keepdims=True)


def is_traceless(x, rtol: float = 1e-12) -> bool:
    x = np.asarray(x, dtype=float)
    scale = np.maximum(1.0, np.abs(x).max(axis=-1))
    return bool(np.all(np.abs(x.sum(axis=-1)) <= rtol * scale))


def _check_rank(x: np.ndarray, r: int):
    if x.shape[-1] != r:
        raise ValueError(f"expected last axis of length {r}, got shape {x.shape}")


def _guarded_exp(p: np.ndarray) -> np.ndarray:
    worst = np.max(np.abs(p)) if p.size else 0.0
    if not np.isfinite(worst) or worst > EXPONENT_LIMIT:
        raise ExponentRangeError(f"exponent magnitude {worst:.4g} exceeds {EXPONENT_LIMIT}")
    return np.exp(p)


def weighted_exponentials(frame: CyclicFrame, a, xi) -> np.ndarray:
    """``a_j e^{(v_j, xi)}`` along the last axis."""
    a = np.asarray(a, dtype=float)
    _check_rank(a, frame.r)
    return a * _guarded_exp(frame.pairings(xi))


def nonlinearity(frame: CyclicFrame, a, xi) -> np.ndarray:
    """``N(xi) = sum_j a_j e^{(v_j, xi)} v_j``.

    ``a`` and ``xi`` broadcast against each other; both carry the rank on
    their last axis.
    """
    c = weighted_exponentials(frame, a, xi)
    # sum_j c_j v_j has component k equal to c_{k-1} - c_k (cyclically)
    return np.roll(c, 1, axis=-1) - c


def nonlinearity_jacobian(frame: CyclicFrame, a, xi) -> np.ndarray:
    """``DN(xi) = sum_j a_j e^{(v_j, xi)} v_j v_j^T``, shape ``(..., r, r)``."""
    c = weighted_exponentials(frame, a, xi)
    v = frame.roots
    return np.einsum("...j,jk,jl->...kl", c, v, v)


def potential(frame: CyclicFrame, a, xi) -> np.ndarray:
    """``sum_j a_j e^{(v_j, xi)}``, whose gradient is the nonlinearity."""
    return weighted_exponentials(frame, a, xi).sum(axis=-1)


def sigma_distance(xi, xi_prime) -> np.ndarray:
    """``sum_j (e^{d_j} + e^{-d_j}) - 2r`` with ``d = xi - xi'``.

    Evaluated as ``sum_j 4 sinh(d_j / 2)**2`` which is algebraically equal and
    keeps full relative accuracy for small differences.
    """
    xi = np.asarray(xi, dtype=float)
    xi_prime = np.asarray(xi_prime, dtype=float)
    if xi.shape[-1] != xi_prime.shape[-1]:
        raise ValueError("rank mismatch")
    d = xi - xi_prime
    worst = np.max(np.abs(d)) if d.size else 0.0
    if worst > EXPONENT_LIMIT:
        raise ExponentRangeError(f"exponent magnitude {worst:.4g} exceeds {EXPONENT_LIMIT}")
    return np.sum(4.0 * np.sinh(0.5 * d) ** 2, axis=-1)


def constant_solve(frame: CyclicFrame, a, w, tol: float = 1e-12, maxit: int = 100) -> np.ndarray:
    """Solve ``N(xi) = w`` for constant data by Newton's method on ``V``.

    The potential ``sum_j a_j e^{(v_j, xi)} - (w, xi)`` is strictly convex and
    coercive on ``V`` when every ``a_j > 0``, so the damped iteration from
    ``xi = 0`` converges globally.

    Raises
    ------
    ConvergenceError
        If the residual does not drop below ``tol`` within ``maxit`` steps.
    """
    r = frame.r
    a = np.asarray(a, dtype=float)
    w = np.asarray(w, dtype=float)
    _check_rank(a, r)
    _check_rank(w, r)
    if np.any(a <= 0):
        raise ValueError("constant_solve requires strictly positive coefficients")
    if not is_traceless(w):
        raise ValueError("w must be traceless")

    def phi(x):
        return potential(frame, a, x) - pairing(w, x)

    trace_dir = np.full((r, r), 1.0 / r)
    xi = np.zeros(r)
    for _ in range(maxit):
        res = nonlinearity(frame, a, xi) - w
        if np.max(np.abs(res)) <= tol:
            return xi
        # DN is singular along (1,...,1); adding that projector leaves the
        # V-component of the step unchanged
        step = np.linalg.solve(nonlinearity_jacobian(frame, a, xi) + trace_dir, -res)
        step = project_traceless(step)
        f0 = phi(xi)
        slack = 1e-14 * max(1.0, abs(f0))
        t = 1.0
        trial = xi + step
        while t > 1e-12:
            trial = xi + t * step
            try:
                if phi(trial) <= f0 + slack:
                    break
            except ExponentRangeError:
                pass
            t *= 0.5
        xi = trial
    res = nonlinearity(frame, a, xi) - w
    if np.max(np.abs(res)) <= tol:
        return xi
    raise ConvergenceError(f"constant_solve stalled at residual {np.max(np.abs(res)):.3e}")
