"""Run configuration: TOML text to a validated :class:`RunConfig`.

Unknown keys are errors, so a misspelt parameter never silently falls back
to its default. Semantic validation collects every violation before
raising.

Example::

    seed = 0
    solver = "newton"

    [problem]
    family = "constant"
    rank = 2

    [problem.domain]
    kind = "torus2d"
    lengths = [1.0, 1.0]
    nodes = [16, 16]

    [problem.coefficients]
    values = [1.0, 1.0]

    [problem.w]
    values = [-2.0, 2.0]
"""

from __future__ import annotations

import copy
import dataclasses
import sys
from dataclasses import dataclass, field

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .algebra import CyclicFrame
from .coefficients import (
    constant_coefficients,
    degenerate_torus_coefficients,
    higgs_coefficients,
    subharmonic_coefficients,
)
from .flow import FlowConfig
from .grid import KINDS, build_domain
from .newton import NewtonConfig

FAMILIES = ("constant", "higgs", "subharmonic", "degenerate-torus", "mms")
SOLVERS = ("flow", "newton", "both")
CHECKS = ("residual", "uniqueness", "theorem3", "theorem4", "lemma1", "lemma2", "energy")

# allowed keys per section; family-specific coefficient keys are checked separately
_TOP = {"seed", "solver", "output_dir", "problem", "flow", "newton", "verify", "mms"}
_PROBLEM = {"family", "rank", "name", "domain", "coefficients", "w", "boundary"}
_DOMAIN = {"kind", "lengths", "nodes", "origin", "lam"}
_COEFF = {
    "constant": {"values"},
    "higgs": {"polynomial", "roots", "leading"},
    "subharmonic": {"poles", "smooth"},
    "degenerate-torus": set(),
    "mms": {"variant"},
}
_VECTOR = {"values"}


class ConfigError(ValueError):
    """Malformed or inconsistent configuration; the message lists every problem."""

    def __init__(self, errors):
        self.errors = [errors] if isinstance(errors, str) else list(errors)
        super().__init__("\n".join(self.errors))


@dataclass
class VerifySpec:
    checks: list = field(default_factory=lambda: ["residual", "uniqueness"])
    c: float = 10.0
    exclusion_radius: float = 2.0
    safety: float = 2.0
    perturbation: float = 2.0


@dataclass
class MmsSpec:
    family: str = "2d"
    levels: list = field(default_factory=lambda: [33, 65, 129])
    min_order: float = 1.9


@dataclass
class RunConfig:
    problem: dict
    solver: str = "newton"
    flow: FlowConfig = field(default_factory=FlowConfig)
    newton: NewtonConfig = field(default_factory=NewtonConfig)
    verify: VerifySpec = field(default_factory=VerifySpec)
    mms: MmsSpec = field(default_factory=MmsSpec)
    output_dir: str = "output"
    seed: int = 0
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def rank(self) -> int:
        return int(self.problem["rank"])


def _unknown(section: dict, allowed: set, where: str, errors: list):
    for key in sorted(set(section) - allowed):
        errors.append(f"{where}: unknown key {key!r}")


def _table(doc: dict, key: str, where: str, errors: list) -> dict:
    val = doc.get(key, {})
    if not isinstance(val, dict):
        errors.append(f"{where}.{key}: expected a table")
        return {}
    return val


def _dataclass_block(cls, block: dict, where: str, errors: list):
    names = {f.name for f in dataclasses.fields(cls)}
    _unknown(block, names, where, errors)
    kwargs = {k: v for k, v in block.items() if k in names}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        errors.append(f"{where}: {exc}")
        return cls()


def _vector(block: dict, r, where: str, errors: list, traceless: bool = False):
    _unknown(block, _VECTOR, where, errors)
    if "values" not in block:
        return None
    vals = block["values"]
    if not isinstance(vals, list) or not all(isinstance(v, (int, float)) for v in vals):
        errors.append(f"{where}.values: expected a list of numbers")
        return None
    if isinstance(r, int) and len(vals) != r:
        errors.append(f"{where}.values: {len(vals)} entries but rank is {r}")
        return None
    if traceless and abs(sum(vals)) > 1e-12 * max(1.0, max(abs(v) for v in vals)):
        errors.append(f"{where}.values: must sum to zero")
    return vals


def _check_problem(prob: dict, errors: list):
    _unknown(prob, _PROBLEM, "problem", errors)
    family = prob.get("family")
    if family not in FAMILIES:
        errors.append(f"problem.family: expected one of {FAMILIES}, got {family!r}")
    r = prob.get("rank")
    if not isinstance(r, int) or isinstance(r, bool) or r < 2:
        errors.append(f"problem.rank: expected an integer >= 2, got {r!r}")
        r = None
    dom = _table(prob, "domain", "problem", errors)
    _unknown(dom, _DOMAIN, "problem.domain", errors)
    kind = dom.get("kind")
    if family != "mms":
        if kind not in KINDS:
            errors.append(f"problem.domain.kind: expected one of {KINDS}, got {kind!r}")
        for key in ("lengths", "nodes"):
            if key not in dom:
                errors.append(f"problem.domain.{key}: required")
        if "lam" in dom and not (isinstance(dom["lam"], (int, float)) and dom["lam"] > 0):
            errors.append("problem.domain.lam: expected a positive number")
    coeff = _table(prob, "coefficients", "problem", errors)
    if family in _COEFF:
        _unknown(coeff, _COEFF[family], "problem.coefficients", errors)
    if family == "constant":
        _vector(coeff, r, "problem.coefficients", errors)
        if "values" not in coeff:
            errors.append("problem.coefficients.values: required for the constant family")
        elif isinstance(coeff["values"], list) and any(
                isinstance(v, (int, float)) and v < 0 for v in coeff["values"]):
            errors.append("problem.coefficients.values: must be non-negative")
    if family in ("higgs", "subharmonic", "degenerate-torus") and kind is not None and kind == "interval":
        errors.append(f"problem.family: {family} needs a 2D domain")
    if family == "degenerate-torus" and kind not in (None, "torus2d"):
        errors.append("problem.family: degenerate-torus needs the torus2d domain")
    if family == "higgs" and not ("polynomial" in coeff or "roots" in coeff):
        errors.append("problem.coefficients: higgs needs 'polynomial' or 'roots'")
    if family == "mms":
        if coeff.get("variant", "2d") not in ("1d", "2d", "affine"):
            errors.append("problem.coefficients.variant: expected '1d', '2d' or 'affine'")
        if dom.keys() - {"nodes"}:
            errors.append("problem.domain: the mms family fixes its domain; only 'nodes' may be set")
    _vector(_table(prob, "w", "problem", errors), r, "problem.w", errors, traceless=True)
    if family in ("higgs", "subharmonic", "degenerate-torus", "mms") and "w" in prob:
        errors.append(f"problem.w: the {family} family defines its own source")
    if "boundary" in prob:
        if kind == "torus2d":
            errors.append("problem.boundary: a torus has no boundary")
        if family == "mms":
            errors.append("problem.boundary: the mms family takes its boundary from the exact solution")
        _vector(_table(prob, "boundary", "problem", errors), r, "problem.boundary", errors, traceless=True)


def parse_config(text: str) -> RunConfig:
    """Parse and validate TOML text.

    Raises
    ------
    ConfigError
        On a syntax error (the message carries the line number) or on any
        semantic violation (all of them are listed).
    """
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"parse error: {exc}") from None
    errors: list = []
    _unknown(doc, _TOP, "config", errors)
    prob = _table(doc, "problem", "config", errors)
    if "problem" not in doc:
        errors.append("config: missing [problem] table")
    _check_problem(prob, errors)
    solver = doc.get("solver", "newton")
    if solver not in SOLVERS:
        errors.append(f"solver: expected one of {SOLVERS}, got {solver!r}")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        errors.append(f"seed: expected a non-negative integer, got {seed!r}")
    output_dir = doc.get("output_dir", "output")
    if not isinstance(output_dir, str):
        errors.append("output_dir: expected a string")
    flow = _dataclass_block(FlowConfig, _table(doc, "flow", "config", errors), "flow", errors)
    newton = _dataclass_block(NewtonConfig, _table(doc, "newton", "config", errors), "newton", errors)
    verify = _dataclass_block(VerifySpec, _table(doc, "verify", "config", errors), "verify", errors)
    for chk in verify.checks if isinstance(verify.checks, list) else []:
        if chk not in CHECKS:
            errors.append(f"verify.checks: unknown check {chk!r}")
    mms = _dataclass_block(MmsSpec, _table(doc, "mms", "config", errors), "mms", errors)
    if mms.family not in ("1d", "2d", "affine"):
        errors.append(f"mms.family: expected '1d', '2d' or 'affine', got {mms.family!r}")
    if not isinstance(mms.levels, list) or len(mms.levels) < 3:
        errors.append("mms.levels: need at least three grid levels")
    if errors:
        raise ConfigError(errors)
    return RunConfig(problem=prob, solver=solver, flow=flow, newton=newton, verify=verify, mms=mms,
                     output_dir=output_dir, seed=seed, raw=copy.deepcopy(doc))


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _poles(spec) -> list:
    out = []
    for p in spec:
        z = p.get("z", [0.0, 0.0])
        out.append((float(p["alpha"]), complex(z[0], z[1]) if isinstance(z, list) else complex(z)))
    return out


def _smooth(spec):
    if spec is None or isinstance(spec, str):
        return spec
    if isinstance(spec, dict) and len(spec) == 1:
        (name, args), = spec.items()
        return (name, *args)
    raise ConfigError(f"problem.coefficients.smooth: cannot interpret {spec!r}")


def build_problem(cfg: RunConfig):
    """Construct ``(problem, boundary_field, exact)`` from a validated config.

    ``exact`` is the manufactured solution for the mms family and ``None``
    otherwise.
    """
    from .analysis import MMS_FAMILIES

    prob = cfg.problem
    family = prob["family"]
    r = cfg.rank
    frame = CyclicFrame(r)
    coeff = prob.get("coefficients", {})
    if family == "mms":
        variant = coeff.get("variant", "2d")
        nodes = prob.get("domain", {}).get("nodes", 33)
        nodes = nodes[0] if isinstance(nodes, list) else nodes
        problem, exact = MMS_FAMILIES[variant](int(nodes))
        if problem.r != r:
            raise ConfigError(f"problem.rank: the {variant} mms family has rank {problem.r}")
        return problem, exact.copy(), exact
    dspec = prob["domain"]
    lam = dspec.get("lam")
    try:
        dom = build_domain(dspec["kind"], dspec["lengths"], dspec["nodes"], lam=lam, origin=dspec.get("origin"))
    except ValueError as exc:
        raise ConfigError(f"problem.domain: {exc}") from None
    name = prob.get("name", family)
    try:
        if family == "constant":
            w = prob.get("w", {}).get("values")
            problem = constant_coefficients(dom, frame, coeff["values"], w, name)
        elif family == "higgs":
            spec = coeff["polynomial"] if "polynomial" in coeff else \
                {"roots": coeff["roots"], "leading": coeff.get("leading", 1.0)}
            problem = higgs_coefficients(dom, frame, spec, name)
        elif family == "subharmonic":
            problem = subharmonic_coefficients(dom, frame, _poles(coeff.get("poles", [])),
                                               _smooth(coeff.get("smooth")), name)
        else:
            problem = degenerate_torus_coefficients(dom, frame, name)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"problem: {exc}") from None
    boundary = np.zeros(dom.shape + (r,))
    values = prob.get("boundary", {}).get("values")
    if values is not None:
        boundary[dom.boundary] = np.asarray(values, dtype=float)
    return problem, boundary, None


__all__ = ["CHECKS", "ConfigError", "MmsSpec", "RunConfig", "VerifySpec", "build_problem", "load_config",
           "parse_config"]
