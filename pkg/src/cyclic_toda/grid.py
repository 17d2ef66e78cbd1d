"""Structured grids, the nonnegative Laplacian, quadrature and norms.

Fields are plain numpy arrays. A scalar field has the domain's ``shape``; a
vector field has ``shape + (r,)``. Node ordering is C order with ``x`` as
the first axis, so ``u[i, j]`` is the value at ``(x_i, y_j)``.

The geometric Laplacian is nonnegative, ``Delta = -div grad``. In 2D the
metric is conformally flat, ``g = lam (dx^2 + dy^2)``, which gives
``Delta_g = Delta_flat / lam`` and ``dvol = lam dx dy``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

KINDS = ("interval", "rectangle", "torus2d")


@dataclass(eq=False)
class Domain:
    """A uniform grid on an interval, a rectangle or a flat 2-torus.

    Use :func:`build_domain` rather than constructing this directly.
    """

    kind: str
    lengths: tuple
    shape: tuple
    origin: tuple
    lam: np.ndarray
    spacing: tuple = field(init=False)
    boundary: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.periodic:
            self.spacing = tuple(L / n for L, n in zip(self.lengths, self.shape))
        else:
            self.spacing = tuple(L / (n - 1) for L, n in zip(self.lengths, self.shape))
        mask = np.zeros(self.shape, dtype=bool)
        if not self.periodic:
            for ax in range(self.ndim):
                idx = [slice(None)] * self.ndim
                idx[ax] = 0
                mask[tuple(idx)] = True
                idx[ax] = -1
                mask[tuple(idx)] = True
        mask.setflags(write=False)
        self.boundary = mask

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def periodic(self) -> bool:
        return self.kind == "torus2d"

    @property
    def interior(self) -> np.ndarray:
        """Mask of the nodes carrying unknowns (every node on the torus)."""
        return ~self.boundary

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def n_unknown_nodes(self) -> int:
        return int(self.interior.sum())

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self) -> list[np.ndarray]:
        return [o + h * np.arange(n) for o, h, n in zip(self.origin, self.spacing, self.shape)]

    def coordinates(self) -> list[np.ndarray]:
        """Node coordinate arrays, each of the domain's shape."""
        return list(np.meshgrid(*self.axes(), indexing="ij"))

    def complex_coordinate(self) -> np.ndarray:
        if self.ndim != 2:
            raise ValueError(f"{self.kind} is not two-dimensional")
        x, y = self.coordinates()
        return x + 1j * y

    def quadrature_weights(self) -> np.ndarray:
        """Flat-measure weights: trapezoid on bounded axes, uniform on periodic."""
        w = np.ones(self.shape)
        for ax, (h, n) in enumerate(zip(self.spacing, self.shape)):
            wa = np.full(n, h)
            if not self.periodic:
                wa[0] = wa[-1] = 0.5 * h
            shape = [1] * self.ndim
            shape[ax] = n
            w = w * wa.reshape(shape)
        return w

    def check_field(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape[: self.ndim] != self.shape or u.ndim > self.ndim + 1:
            raise ValueError(f"field of shape {u.shape} does not live on grid {self.shape}")
        return u


def build_domain(kind: str, lengths, node_counts, lam=None, origin=None) -> Domain:
    """Build a :class:`Domain`.

    Parameters
    ----------
    kind : {"interval", "rectangle", "torus2d"}
    lengths : float or sequence of float
        Physical extent of each axis.
    node_counts : int or sequence of int
        Nodes per axis, at least 3.
    lam : float, array or callable, optional
        Conformal factor. A callable receives the coordinate arrays. 1D
        domains only accept ``lam = 1``.
    origin : sequence of float, optional
        Coordinates of node ``(0, ..., 0)``; defaults to zeros.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown domain kind {kind!r}; expected one of {KINDS}")
    ndim = 1 if kind == "interval" else 2
    lengths = tuple(float(x) for x in np.atleast_1d(lengths))
    counts = tuple(int(n) for n in np.atleast_1d(node_counts))
    if len(lengths) == 1 and ndim == 2:
        lengths = lengths * 2
    if len(counts) == 1 and ndim == 2:
        counts = counts * 2
    if len(lengths) != ndim or len(counts) != ndim:
        raise ValueError(f"{kind} needs {ndim} extents and node counts")
    if any(L <= 0 for L in lengths):
        raise ValueError(f"extents must be positive, got {lengths}")
    if any(n < 3 for n in counts):
        raise ValueError(f"need at least 3 nodes per axis, got {counts}")
    origin = tuple(float(x) for x in (origin if origin is not None else (0.0,) * ndim))
    if len(origin) != ndim:
        raise ValueError("origin has the wrong dimension")

    dom = Domain(kind, lengths, counts, origin, np.ones(counts))
    if lam is None:
        lam_arr = np.ones(counts)
    elif callable(lam):
        lam_arr = np.asarray(lam(*dom.coordinates()), dtype=float) * np.ones(counts)
    else:
        lam_arr = np.asarray(lam, dtype=float) * np.ones(counts)
    if lam_arr.shape != counts:
        raise ValueError(f"conformal factor has shape {lam_arr.shape}, expected {counts}")
    if not np.all(np.isfinite(lam_arr)) or np.any(lam_arr <= 0):
        raise ValueError("conformal factor must be strictly positive")
    if ndim == 1 and np.any(lam_arr != 1.0):
        raise ValueError("1D domains support lam = 1 only")
    lam_arr.setflags(write=False)
    dom.lam = lam_arr
    return dom


def _flat_second_difference(domain: Domain, u: np.ndarray) -> np.ndarray:
    """``-(sum of second differences)`` on the whole array, garbage at edges."""
    out = np.zeros_like(u)
    for ax, h in enumerate(domain.spacing):
        if domain.periodic:
            fwd = np.roll(u, -1, axis=ax)
            bwd = np.roll(u, 1, axis=ax)
        else:
            fwd = np.concatenate([np.take(u, range(1, u.shape[ax]), axis=ax),
                                  np.take(u, [-1], axis=ax)], axis=ax)
            bwd = np.concatenate([np.take(u, [0], axis=ax),
                                  np.take(u, range(0, u.shape[ax] - 1), axis=ax)], axis=ax)
        out += (2.0 * u - fwd - bwd) / (h * h)
    return out


def laplacian_apply(domain: Domain, u) -> np.ndarray:
    """Apply ``Delta_g`` with the 3-/5-point stencil.

    Works on scalar and vector fields (componentwise). Boundary nodes of
    bounded domains are returned as zero: Dirichlet data is never
    differentiated.
    """
    u = domain.check_field(u)
    out = _flat_second_difference(domain, u)
    lam = domain.lam if u.ndim == domain.ndim else domain.lam[..., None]
    out = out / lam
    out[domain.boundary] = 0.0
    return out


def _axis_operator(n: int, h: float, periodic: bool) -> sp.csr_matrix:
    main = np.full(n, 2.0 / (h * h))
    off = np.full(n - 1, -1.0 / (h * h))
    T = sp.diags([off, main, off], [-1, 0, 1], shape=(n, n), format="lil")
    if periodic:
        T[0, n - 1] += -1.0 / (h * h)
        T[n - 1, 0] += -1.0 / (h * h)
    return T.tocsr()


def assemble_stiffness(domain: Domain) -> sp.csr_matrix:
    """Flat (lam-free) Laplacian restricted to the unknown nodes; symmetric."""
    mats = []
    for ax, (n, h) in enumerate(zip(domain.shape, domain.spacing)):
        mats.append(_axis_operator(n, h, domain.periodic))
    if domain.ndim == 1:
        K = mats[0]
    else:
        Ix = sp.identity(domain.shape[0], format="csr")
        Iy = sp.identity(domain.shape[1], format="csr")
        K = sp.kron(mats[0], Iy) + sp.kron(Ix, mats[1])
    keep = np.flatnonzero(domain.interior.ravel())
    K = sp.csr_matrix(K)[keep][:, keep]
    K.sum_duplicates()
    K.sort_indices()
    return K.tocsr()


def assemble_laplacian(domain: Domain) -> sp.csr_matrix:
    """Matrix of :func:`laplacian_apply` on the unknown nodes.

    Symmetric when ``lam`` is constant; in general ``diag(lam) @ L`` is the
    symmetric stiffness matrix from :func:`assemble_stiffness`.
    """
    K = assemble_stiffness(domain)
    inv_lam = 1.0 / domain.lam[domain.interior]
    return sp.csr_matrix(sp.diags(inv_lam) @ K)


def integrate(domain: Domain, f) -> float:
    """Quadrature of a scalar field against ``dvol = lam dx``."""
    f = domain.check_field(f)
    if f.shape != domain.shape:
        raise ValueError("integrate expects a scalar field")
    # fixed summation order keeps results reproducible
    return float(np.sum((domain.quadrature_weights() * domain.lam * f).ravel()))


def pointwise_norm2(domain: Domain, u) -> np.ndarray:
    """``|u|^2`` per node (square for scalars, Euclidean for vectors)."""
    u = domain.check_field(u)
    return u * u if u.ndim == domain.ndim else np.sum(u * u, axis=-1)


def sup_norm(domain: Domain, u, interior_only: bool = False) -> float:
    n2 = pointwise_norm2(domain, u)
    if interior_only:
        n2 = n2[domain.interior]
    return float(np.sqrt(n2.max())) if n2.size else 0.0


def l2_norm(domain: Domain, u) -> float:
    return float(np.sqrt(integrate(domain, pointwise_norm2(domain, u))))


def boundary_trace(domain: Domain, u) -> np.ndarray:
    """Values at boundary nodes (empty on the torus)."""
    u = domain.check_field(u)
    return u[domain.boundary].copy()


def set_boundary(domain: Domain, u, trace) -> np.ndarray:
    """Copy of ``u`` with the boundary nodes overwritten by ``trace``."""
    u = domain.check_field(u).copy()
    trace = np.asarray(trace, dtype=float)
    expected = u[domain.boundary].shape
    if trace.shape != expected:
        raise ValueError(f"trace of shape {trace.shape}, expected {expected}")
    u[domain.boundary] = trace
    return u
