"""Symmetric positive (semi)definite linear solves."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


MAX_RESTARTS = 5


@dataclass
class SolveReport:
    iterations: int
    residual: float
    converged: bool
    # values of 0.5 x.A.x - b.x per iteration; CG decreases this monotonically
    energy_history: list = field(default_factory=list, repr=False)


def as_symmetric_csr(A, rtol: float = 1e-14) -> sp.csr_matrix:
    """Convert to sorted CSR and assert symmetry to ``rtol`` of the largest entry."""
    A = sp.csr_matrix(A, dtype=float)
    A.sum_duplicates()
    A.sort_indices()
    diff = A - A.T
    scale = abs(A).max() if A.nnz else 0.0
    if diff.nnz and abs(diff).max() > rtol * max(scale, 1.0):
        raise ValueError("matrix is not symmetric")
    return A


def _orthonormal(kernel, n):
    if kernel is None:
        return None
    Z = np.asarray(kernel, dtype=float).reshape(n, -1)
    q, _ = np.linalg.qr(Z)
    return q


def _project(x, Q):
    if Q is None:
        return x
    return x - Q @ (Q.T @ x)


def cg_solve(A, b, tol: float = 1e-12, maxit: int | None = None, kernel=None,
             shift: float = 0.0, x0=None, record: bool = False):
    """Jacobi-preconditioned conjugate gradients.

    Parameters
    ----------
    A : sparse matrix
        Symmetric positive semidefinite.
    b : ndarray
    tol : float
        Stop when ``||b - A x|| <= tol * ||b||``.
    maxit : int, optional
        Defaults to ``10 * n``.
    kernel : array_like, optional
        Columns spanning the null space of a singular ``A``. ``b`` and the
        iterates are projected onto its orthogonal complement.
    shift : float
        Tikhonov shift added to the diagonal.
    record : bool
        Keep the quadratic functional per iteration in the report.

    Returns
    -------
    x : ndarray
    report : SolveReport
        ``converged`` is False when ``maxit`` is exhausted; the caller decides.
    """
    n = A.shape[0]
    maxit = 10 * n if maxit is None else maxit
    Q = _orthonormal(kernel, n)
    b = _project(np.asarray(b, dtype=float), Q)
    diag = A.diagonal() + shift
    if np.any(diag <= 0):
        raise ValueError("Jacobi preconditioner needs a positive diagonal")
    minv = 1.0 / diag

    def matvec(v):
        out = A @ v
        if shift:
            out = out + shift * v
        return out

    bnorm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else _project(np.array(x0, dtype=float), Q)
    if bnorm == 0.0:
        return np.zeros(n), SolveReport(0, 0.0, True)
    r = b - matvec(x)
    r = _project(r, Q)
    z = _project(minv * r, Q)
    p = z.copy()
    rz = r @ z
    history = []
    it = 0
    res = np.linalg.norm(r) / bnorm
    restarts = 0
    while it < maxit:
        if res <= tol:
            # the recursive residual can drift below the true one; restart from the truth
            r = _project(b - matvec(x), Q)
            res = np.linalg.norm(r) / bnorm
            if res <= tol or restarts == MAX_RESTARTS:
                break
            restarts += 1
            z = _project(minv * r, Q)
            p = z.copy()
            rz = r @ z
        Ap = matvec(p)
        pAp = p @ Ap
        if pAp <= 0:
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if Q is not None:
            x = _project(x, Q)
            r = _project(r, Q)
        it += 1
        # cheap periodic refresh limits drift of the recursive residual
        if it % 50 == 0:
            r = _project(b - matvec(x), Q)
        res = np.linalg.norm(r) / bnorm
        if record:
            history.append(0.5 * (x @ matvec(x)) - b @ x)
        z = _project(minv * r, Q)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    true_res = np.linalg.norm(_project(b - matvec(x), Q)) / bnorm
    return x, SolveReport(it, float(true_res), bool(true_res <= tol), history)


def direct_solve(A, b, kernel=None, shift: float = 0.0):
    """Sparse LU solve; used where CG would be too slow for a test budget."""
    n = A.shape[0]
    Q = _orthonormal(kernel, n)
    b = _project(np.asarray(b, dtype=float), Q)
    M = sp.csc_matrix(A)
    if Q is not None:
        # pin the null space: for a consistent b the solution is unchanged
        if Q.shape[1] != 1:
            raise NotImplementedError("direct solve supports a one-dimensional kernel")
        M = sp.bmat([[M, sp.csc_matrix(Q)], [sp.csc_matrix(Q.T), None]], format="csc")
        b = np.concatenate([b, [0.0]])
    if shift:
        M = M + shift * sp.identity(M.shape[0], format="csc")
    x = spla.splu(M).solve(b)[:n]
    x = _project(x, Q)
    bnorm = np.linalg.norm(b[:n])
    res = np.linalg.norm(_project(b[:n] - A @ x - shift * x, Q)) / bnorm if bnorm else 0.0
    return x, SolveReport(1, float(res), True)


def solve_spd(A, b, method: str = "cg", **kwargs):
    if method == "cg":
        return cg_solve(A, b, **kwargs)
    if method == "direct":
        kwargs = {k: v for k, v in kwargs.items() if k in ("kernel", "shift")}
        return direct_solve(A, b, **kwargs)
    raise ValueError(f"unknown linear solver {method!r}")


def tridiag_solve(sub, diag, sup, b) -> np.ndarray:
    """Thomas algorithm for ``sub[i] x[i-1] + diag[i] x[i] + sup[i] x[i+1] = b[i]``.

    ``sub`` and ``sup`` have length ``n - 1``.
    """
    diag = np.asarray(diag, dtype=float)
    n = diag.size
    sub = np.asarray(sub, dtype=float)
    sup = np.asarray(sup, dtype=float)
    b = np.asarray(b, dtype=float)
    if sub.size != n - 1 or sup.size != n - 1 or b.shape[0] != n:
        raise ValueError("inconsistent tridiagonal system sizes")
    c = np.zeros(n)
    d = np.zeros(b.shape)
    piv = diag[0]
    if piv == 0:
        raise ZeroDivisionError("zero pivot in row 0")
    c[0] = sup[0] / piv if n > 1 else 0.0
    d[0] = b[0] / piv
    for i in range(1, n):
        piv = diag[i] - sub[i - 1] * c[i - 1]
        if piv == 0:
            raise ZeroDivisionError(f"zero pivot in row {i}")
        if i < n - 1:
            c[i] = sup[i] / piv
        d[i] = (b[i] - sub[i - 1] * d[i - 1]) / piv
    x = np.zeros(b.shape)
    x[-1] = d[-1]
    for i in range(n - 2, -1, -1):
        x[i] = d[i] - c[i] * x[i + 1]
    return x
