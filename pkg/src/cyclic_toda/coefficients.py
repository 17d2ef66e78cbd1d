"""Coefficient fields ``a_j`` and sources ``w`` for the problem families.

The factor 4 of the cyclic Higgs equation is folded into ``a_j`` so every
problem is posed as ``Delta xi + sum_j a_j e^{(v_j, xi)} v_j = w``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .algebra import CyclicFrame, is_traceless, nonlinearity
from .grid import Domain, integrate, laplacian_apply

ZERO_THRESHOLD = 1e-10


@dataclass(eq=False)
class ProblemData:
    """Coefficients ``a`` (shape ``grid + (r,)``, column ``j`` is ``a_{j+1}``) and source ``w``."""

    domain: Domain
    frame: CyclicFrame
    a: np.ndarray
    w: np.ndarray
    name: str = "problem"

    def __post_init__(self):
        expected = self.domain.shape + (self.frame.r,)
        self.a = np.asarray(self.a, dtype=float) * np.ones(expected)
        self.w = np.asarray(self.w, dtype=float) * np.ones(expected)
        if np.any(self.a < 0) or not np.all(np.isfinite(self.a)):
            raise ValueError("coefficients a_j must be finite and non-negative")
        if not is_traceless(self.w, rtol=1e-10):
            raise ValueError("w must be traceless at every node")

    @property
    def r(self) -> int:
        return self.frame.r

    def with_source(self, w) -> "ProblemData":
        return ProblemData(self.domain, self.frame, self.a, w, self.name)


def constant_coefficients(domain: Domain, frame: CyclicFrame, values, w_value=None,
                          name: str = "constant") -> ProblemData:
    values = np.asarray(values, dtype=float)
    if values.shape != (frame.r,):
        raise ValueError(f"need {frame.r} coefficient values, got {values.shape}")
    if np.any(values < 0):
        raise ValueError("coefficient values must be non-negative")
    w_value = np.zeros(frame.r) if w_value is None else np.asarray(w_value, dtype=float)
    if w_value.shape != (frame.r,) or not is_traceless(w_value):
        raise ValueError("w_value must be a traceless vector of length r")
    return ProblemData(domain, frame, values, w_value, name)


def polynomial_from_spec(spec) -> np.poly1d:
    """Complex polynomial from coefficients (constant term first) or roots.

    ``spec`` is either a sequence of coefficients or a mapping
    ``{"roots": [...], "leading": c}``. Complex entries may be given as
    ``[re, im]`` pairs.
    """

    def cplx(v):
        if isinstance(v, (list, tuple)):
            return complex(v[0], v[1])
        return complex(v)

    if isinstance(spec, dict):
        roots = [cplx(z) for z in spec.get("roots", [])]
        lead = cplx(spec.get("leading", 1.0))
        return np.poly1d(roots, r=True) * lead if roots else np.poly1d([lead])
    coeffs = [cplx(c) for c in spec]
    if not coeffs:
        raise ValueError("empty polynomial")
    return np.poly1d(coeffs[::-1])


def _modulus_squared(z: np.ndarray) -> np.ndarray:
    return z.real * z.real + z.imag * z.imag


def _require_2d(domain: Domain):
    if domain.ndim != 2:
        raise ValueError("this coefficient family needs a 2D domain")


def higgs_coefficients(domain: Domain, frame: CyclicFrame, poly, name: str = "higgs") -> ProblemData:
    """Cyclic Higgs data for ``q = f(z) dz^r`` in the flat normalisation.

    ``a_j = 4`` for ``j < r``, ``a_r = 4 |f(z)|^2`` and ``w = 0``.
    """
    _require_2d(domain)
    if not isinstance(poly, np.poly1d):
        poly = polynomial_from_spec(poly)
    f = poly(domain.complex_coordinate())
    a = np.full(domain.shape + (frame.r,), 4.0)
    a[..., -1] = 4.0 * _modulus_squared(f)
    return ProblemData(domain, frame, a, 0.0, name)


def smooth_term(domain: Domain, spec) -> np.ndarray:
    """Named smooth additive terms.

    ``None``, ``"re_z"``, ``("gaussian", sigma, cx, cy)`` or
    ``("quadratic", c, cx, cy)`` for ``-c |z - z0|^2``.
    """
    if spec is None or spec == "none":
        return np.zeros(domain.shape)
    x, y = domain.coordinates()
    if spec == "re_z":
        return x.copy()
    if isinstance(spec, (list, tuple)) and spec and spec[0] == "gaussian":
        _, sigma, cx, cy = spec
        if sigma <= 0:
            raise ValueError("gaussian width must be positive")
        return np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * sigma**2))
    if isinstance(spec, (list, tuple)) and spec and spec[0] == "quadratic":
        _, c, cx, cy = spec
        return -c * ((x - cx) ** 2 + (y - cy) ** 2)
    raise ValueError(f"unknown smooth term {spec!r}")


def subharmonic_coefficients(domain: Domain, frame: CyclicFrame, poles, smooth=None,
                             name: str = "subharmonic") -> ProblemData:
    """``a_r = 4 e^eta`` with ``eta = sum_i alpha_i log|z - z_i|^2 + smooth``.

    ``poles`` is a sequence of ``(alpha, z0)`` with ``alpha > 0`` and ``z0``
    complex. ``e^{alpha log s}`` is evaluated as ``s**alpha`` so a node on a
    pole gets ``a_r = 0`` and integer powers agree bit-for-bit with
    :func:`higgs_coefficients`.
    """
    _require_2d(domain)
    x, y = domain.coordinates()
    factor = np.ones(domain.shape)
    for alpha, z0 in poles:
        if alpha <= 0:
            raise ValueError(f"pole weights must be positive, got {alpha}")
        z0 = complex(z0)
        s = (x - z0.real) ** 2 + (y - z0.imag) ** 2
        factor = factor * (s if alpha == 1 else np.power(s, alpha))
    if smooth is not None and smooth != "none":
        factor = factor * np.exp(smooth_term(domain, smooth))
    a = np.full(domain.shape + (frame.r,), 4.0)
    a[..., -1] = 4.0 * factor
    return ProblemData(domain, frame, a, 0.0, name)


def degenerate_torus_coefficients(domain: Domain, frame: CyclicFrame,
                                  name: str = "degenerate-torus") -> ProblemData:
    """``a_j = 4`` and ``a_r = 4 (sin^2(pi x / L_x) + sin^2(pi y / L_y))``, ``w = 0``.

    On the torus ``a_r`` vanishes only at the origin.
    """
    _require_2d(domain)
    x, y = domain.coordinates()
    (lx, ly), (ox, oy) = domain.lengths, domain.origin
    a = np.full(domain.shape + (frame.r,), 4.0)
    a[..., -1] = 4.0 * (np.sin(np.pi * (x - ox) / lx) ** 2 + np.sin(np.pi * (y - oy) / ly) ** 2)
    return ProblemData(domain, frame, a, 0.0, name)


def manufactured_rhs(domain: Domain, frame: CyclicFrame, a, xi_star) -> np.ndarray:
    """``w = Delta_g xi* + N(xi*)`` so that ``xi*`` solves the discrete system.

    Boundary nodes get ``N(xi*)``; the equation is not imposed there.
    """
    xi_star = domain.check_field(xi_star)
    a = np.asarray(a, dtype=float) * np.ones(xi_star.shape)
    return laplacian_apply(domain, xi_star) + nonlinearity(frame, a, xi_star)


def manufactured_problem(domain: Domain, frame: CyclicFrame, a, xi_star,
                         name: str = "mms") -> ProblemData:
    a = np.asarray(a, dtype=float) * np.ones(domain.shape + (frame.r,))
    return ProblemData(domain, frame, a, manufactured_rhs(domain, frame, a, xi_star), name)


def log_mask(domain: Domain, a_j: np.ndarray, threshold: float = ZERO_THRESHOLD,
             reach: int = 1) -> np.ndarray:
    """Interior nodes whose stencil of radius ``reach`` avoids ``a_j <= threshold``."""
    bad = a_j <= threshold
    grown = bad.copy()
    for ax in range(domain.ndim):
        for k in range(1, reach + 1):
            for sgn in (1, -1):
                if domain.periodic:
                    grown |= np.roll(bad, sgn * k, axis=ax)
                else:
                    shifted = np.zeros_like(bad)
                    src = [slice(None)] * domain.ndim
                    dst = [slice(None)] * domain.ndim
                    if sgn > 0:
                        src[ax], dst[ax] = slice(0, -k), slice(k, None)
                    else:
                        src[ax], dst[ax] = slice(k, None), slice(0, -k)
                    shifted[tuple(dst)] = bad[tuple(src)]
                    grown |= shifted
    ok = ~grown & domain.interior
    if not domain.periodic and reach > 1:
        # the wide stencil needs nodes at distance `reach` inside the grid
        core = np.zeros(domain.shape, dtype=bool)
        core[tuple(slice(reach, n - reach) for n in domain.shape)] = True
        ok &= core
    return ok


def zero_exclusion_mask(domain: Domain, a_j: np.ndarray, threshold: float = ZERO_THRESHOLD,
                        radius: float = 2.0) -> np.ndarray:
    """Nodes farther than ``radius * h`` from every node with ``a_j <= threshold``.

    ``h`` is the largest grid spacing; distances wrap on the torus.
    """
    bad = a_j <= threshold
    if not bad.any():
        return np.ones(domain.shape, dtype=bool)
    if bad.all():
        return np.zeros(domain.shape, dtype=bool)
    h = max(domain.spacing)
    pad = int(np.ceil(radius * h / min(domain.spacing))) + 1
    if domain.periodic:
        field_ = np.pad(~bad, pad, mode="wrap")
    else:
        field_ = np.pad(~bad, pad, mode="constant", constant_values=True)
    dist = ndimage.distance_transform_edt(field_, sampling=domain.spacing)
    dist = dist[tuple(slice(pad, pad + n) for n in domain.shape)]
    return dist > radius * h * (1 + 1e-12)


def wide_laplacian(domain: Domain, u: np.ndarray) -> np.ndarray:
    """5-point Laplacian with doubled spacing; only meaningful two nodes inside."""
    out = np.zeros_like(u)
    for ax, h in enumerate(domain.spacing):
        fwd = np.roll(u, -2, axis=ax)
        bwd = np.roll(u, 2, axis=ax)
        out += (2.0 * u - fwd - bwd) / (4.0 * h * h)
    lam = domain.lam if u.ndim == domain.ndim else domain.lam[..., None]
    return out / lam


def _safe_log(a: np.ndarray, threshold: float) -> np.ndarray:
    return np.log(np.where(a > threshold, a, 1.0))


@dataclass
class HypothesisReport:
    """Per-node margins ``-(v_j, w) - Delta_g log a_j``; NaN where masked.

    ``slack`` is a local estimate of the stencil error of ``Delta_g log a_j``
    from comparing spacings ``h`` and ``2h`` (zero where the wide stencil is
    unavailable). ``tol`` already contains the ``c h^2`` allowance.
    """

    margins: np.ndarray
    slack: np.ndarray
    mask: np.ndarray
    tol: float

    @property
    def worst(self) -> float:
        vals = (self.margins + self.slack)[self.mask]
        return float(vals.min()) if vals.size else float("nan")

    @property
    def holds(self) -> bool:
        return bool(np.all((self.margins + self.slack)[self.mask] >= -self.tol))

    def failing_indices(self) -> list[int]:
        """1-based ``j`` whose hypothesis fails somewhere."""
        bad = (self.margins + self.slack < -self.tol) & self.mask
        return [j + 1 for j in range(bad.shape[-1]) if bad[..., j].any()]


def theorem4_hypothesis_check(domain: Domain, problem: ProblemData,
                              threshold: float = ZERO_THRESHOLD, tol: float = 1e-8,
                              safety: float = 2.0, exclusion_radius: float = 2.0,
                              h2_coefficient: float = 10.0) -> HypothesisReport:
    """Check ``Delta_g log a_j <= -(v_j, w)`` away from the zero sets.

    Nodes within ``exclusion_radius * h`` of a node with ``a_j <= threshold``
    are masked out, as are nodes whose stencil reaches such a node. The
    stencil error of the discrete Laplacian of ``log a_j`` is estimated
    locally by Richardson comparison with the ``2h`` stencil and granted as
    slack, scaled by ``safety``, on top of ``tol + h2_coefficient * h^2``.
    """
    frame = problem.frame
    r = frame.r
    margins = np.full(domain.shape + (r,), np.nan)
    slack = np.zeros(domain.shape + (r,))
    mask = np.zeros(domain.shape + (r,), dtype=bool)
    vw = frame.pairings(problem.w)
    for j in range(r):
        aj = problem.a[..., j]
        ok = log_mask(domain, aj, threshold) & zero_exclusion_mask(domain, aj, threshold, exclusion_radius)
        logs = _safe_log(aj, threshold)
        lap = laplacian_apply(domain, logs)
        m = -vw[..., j] - lap
        margins[..., j] = np.where(ok, m, np.nan)
        mask[..., j] = ok
        wide_ok = log_mask(domain, aj, threshold, reach=2)
        est = np.abs(wide_laplacian(domain, logs) - lap) / 3.0
        slack[..., j] = np.where(wide_ok, safety * est, 0.0)
    h = max(domain.spacing)
    return HypothesisReport(margins, slack, mask, tol + h2_coefficient * h * h)


@dataclass
class ValidationReport:
    errors: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    zero_fraction: list = field(default_factory=list)
    log_integral: list = field(default_factory=list)
    measure_zero_zero_set: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


class HypothesisError(ValueError):
    """Problem data violates a standing hypothesis."""


def validate(problem: ProblemData, raise_on_error: bool = True,
             max_zero_fraction: float = 0.2) -> ValidationReport:
    """Check the standing hypotheses on ``a_j`` and ``w``.

    Raises :class:`HypothesisError` if some ``a_j`` vanishes identically
    (unless ``raise_on_error`` is False).
    """
    dom = problem.domain
    rep = ValidationReport()
    for j in range(problem.r):
        aj = problem.a[..., j]
        pos = aj > 0
        frac = 1.0 - pos.mean()
        rep.zero_fraction.append(float(frac))
        rep.measure_zero_zero_set.append(bool(frac <= max_zero_fraction))
        if not pos.any():
            rep.errors.append(f"a_{j + 1} vanishes identically")
            rep.log_integral.append(float("inf"))
            continue
        if frac > max_zero_fraction:
            rep.warnings.append(f"a_{j + 1} vanishes on {frac:.1%} of the nodes")
        rep.log_integral.append(integrate(dom, np.where(pos, np.abs(_safe_log(aj, 0.0)), 0.0)))
    if rep.errors and raise_on_error:
        raise HypothesisError("; ".join(rep.errors))
    for msg in rep.warnings:
        warnings.warn(msg, stacklevel=2)
    return rep

