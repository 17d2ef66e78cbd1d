"""Command-line entry point.

Usage::

    cyclic-toda SUBCOMMAND CONFIG.toml [--output DIR]

Subcommands are ``solve-flow``, ``solve-newton``, ``cross-validate``,
``verify``, ``mms`` and ``report``. The output directory is taken from
``--output``, then the ``CYCLIC_TODA_OUTPUT`` environment variable, then
``output_dir`` in the config.

Exit codes: 0 success, 1 usage or configuration error, 2 solver did not
converge, 3 a verifier failed.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from .analysis import (
    CheckReport,
    bump_perturbation,
    energy_monitor,
    lemma1_monitor,
    lemma2_monitor,
    mms_study,
    theorem3_check,
    theorem4_check,
    uniqueness_check,
)
from .coefficients import validate
from .config import ConfigError, RunConfig, build_problem, load_config
from .flow import StepFailure, paired_run, run
from .io import (
    field_bundle,
    write_field_csv,
    write_manifest,
    write_report_csv,
    write_series_csv,
    write_table_csv,
    write_vtk,
)
from .newton import cross_validate, residual, solve

log = logging.getLogger(__name__)

OUTPUT_ENV = "CYCLIC_TODA_OUTPUT"
SUBCOMMANDS = ("solve-flow", "solve-newton", "cross-validate", "verify", "mms", "report")

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_VERIFY = 0, 1, 2, 3


class SolverFailure(RuntimeError):
    pass


class _Run:
    """Output directory, stage timings and the list of files written."""

    def __init__(self, cfg: RunConfig | None, outdir: Path, out):
        self.cfg = cfg
        self.outdir = outdir
        self.out = out
        self.files: list[Path] = []
        self.timings: dict = {}

    def path(self, name: str) -> Path:
        p = self.outdir / name
        self.files.append(p)
        return p

    def timed(self, stage, fn, *args, **kwargs):
        t0 = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        finally:
            self.timings[stage] = time.perf_counter() - t0

    def say(self, text: str):
        print(text, file=self.out)

    def manifest(self, command: str, extra=None):
        raw = self.cfg.raw if self.cfg is not None else {}
        write_manifest(self.outdir / "manifest.json", raw, self.files, self.timings,
                       {"command": command, **(extra or {})})


def _initial(problem, boundary):
    eta = np.zeros(problem.domain.shape + (problem.r,))
    eta[problem.domain.boundary] = boundary[problem.domain.boundary]
    return eta


def _write_fields(ctx: _Run, name: str, problem, xi):
    F = residual(problem, xi)
    write_field_csv(ctx.path(f"{name}.csv"), problem.domain, xi, F, problem.a, problem.w)
    write_vtk(ctx.path(f"{name}.vtk"), problem.domain, field_bundle(problem, xi, F), title=problem.name)


def _flow(ctx: _Run, problem, eta):
    try:
        result = ctx.timed("flow", run, problem, eta, ctx.cfg.flow, check=False)
    except StepFailure as exc:
        raise SolverFailure(f"heat flow failed: {exc}") from None
    if not result.converged:
        raise SolverFailure(f"heat flow stopped at t={result.state.t:.6g} before reaching the residual tolerance")
    return result


def _newton(ctx: _Run, problem, boundary):
    xi, rep = ctx.timed("newton", solve, problem, boundary, ctx.cfg.newton, check=False)
    if not rep.converged:
        raise SolverFailure(f"Newton did not converge: {rep.message} (residual {rep.residual:.3e})")
    return xi, rep


def cmd_solve_flow(ctx: _Run, problem, boundary, exact) -> int:
    result = _flow(ctx, problem, _initial(problem, boundary))
    _write_fields(ctx, "fields", problem, result.xi)
    write_series_csv(ctx.path("series.csv"), result.series)
    last = result.series[-1]
    ctx.say(f"solve-flow: converged at t={last['t']:.6g} after {result.state.steps} steps, "
            f"sup|F|={math.sqrt(last['sup_F2']):.3e}")
    return EXIT_OK


def cmd_solve_newton(ctx: _Run, problem, boundary, exact) -> int:
    xi, rep = _newton(ctx, problem, boundary)
    _write_fields(ctx, "fields", problem, xi)
    rows = [(k, res, e, rep.linear_iterations[k] if k < len(rep.linear_iterations) else None)
            for k, (res, e) in enumerate(zip(rep.residuals, rep.energies))]
    write_table_csv(ctx.path("newton.csv"), ("iteration", "residual", "energy", "linear_iterations"), rows)
    ctx.say(f"solve-newton: converged in {rep.iterations} iterations, sup|F|={rep.residual:.3e}")
    return EXIT_OK


def cmd_cross_validate(ctx: _Run, problem, boundary, exact) -> int:
    try:
        cv = ctx.timed("cross-validate", cross_validate, problem, boundary, ctx.cfg.newton, ctx.cfg.flow)
    except (RuntimeError, StepFailure) as exc:
        raise SolverFailure(str(exc)) from None
    _write_fields(ctx, "fields_newton", problem, cv.xi_newton)
    _write_fields(ctx, "fields_flow", problem, cv.xi_flow)
    write_series_csv(ctx.path("series.csv"), cv.series)
    rep = CheckReport("cross_validate", cv.passed, -cv.difference, "sup", cv.threshold,
                      {"difference": cv.difference})
    write_report_csv(ctx.path("report.csv"), [rep])
    ctx.say(rep.line())
    return EXIT_OK if cv.passed else EXIT_VERIFY


def _residual_report(problem, xi, tol) -> CheckReport:
    Fn = np.linalg.norm(residual(problem, xi), axis=-1)
    k = np.unravel_index(int(np.argmax(Fn)), Fn.shape)
    sup = float(Fn.max())
    return CheckReport("residual", sup <= tol, -sup, tuple(int(i) for i in k), tol)


def cmd_verify(ctx: _Run, problem, boundary, exact) -> int:
    cfg = ctx.cfg
    spec = cfg.verify
    dom = problem.domain
    rng = np.random.default_rng(cfg.seed)
    xi, _ = _newton(ctx, problem, boundary)
    reports = []
    flow_series = None
    for chk in spec.checks:
        if chk == "residual":
            reports.append(_residual_report(problem, xi, cfg.newton.tol))
        elif chk == "uniqueness":
            reports.append(ctx.timed("uniqueness", uniqueness_check, problem, boundary, cfg.newton,
                                     seeds=(cfg.seed + 1, cfg.seed + 2)))
        elif chk == "theorem3":
            other = xi + bump_perturbation(dom, rng, problem.r, spec.perturbation)
            reports.append(theorem3_check(problem, xi, other, c=spec.c))
        elif chk == "theorem4":
            reports.append(ctx.timed("theorem4", theorem4_check, problem, xi, c=spec.c,
                                     residual_tol=max(1e-8, 10 * cfg.newton.tol),
                                     exclusion_radius=spec.exclusion_radius, safety=spec.safety))
        elif chk == "lemma1":
            eta = _initial(problem, boundary)
            eta2 = eta + bump_perturbation(dom, rng, problem.r, spec.perturbation)
            try:
                pr = ctx.timed("paired-flow", paired_run, problem, eta, eta2, cfg.flow, check=False)
            except StepFailure as exc:
                raise SolverFailure(f"paired flow failed: {exc}") from None
            if not pr.converged:
                raise SolverFailure("paired flow did not reach the residual tolerance")
            reports.append(lemma1_monitor(pr.monitors))
            flow_series = pr.first.series
        elif chk in ("lemma2", "energy"):
            if flow_series is None:
                flow_series = _flow(ctx, problem, _initial(problem, boundary)).series
            reports.append(lemma2_monitor(flow_series) if chk == "lemma2" else energy_monitor(flow_series))
    _write_fields(ctx, "fields", problem, xi)
    if flow_series is not None:
        write_series_csv(ctx.path("series.csv"), flow_series)
    write_report_csv(ctx.path("report.csv"), reports)
    for rep in reports:
        ctx.say(rep.line())
        if "gate" in rep.details:
            ctx.say(f"  failing gate: {rep.details['gate']}")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_VERIFY


def cmd_mms(ctx: _Run, problem, boundary, exact) -> int:
    spec = ctx.cfg.mms
    try:
        study = ctx.timed("mms", mms_study, spec.family, tuple(spec.levels), ctx.cfg.newton)
    except RuntimeError as exc:
        raise SolverFailure(str(exc)) from None
    rows = list(zip(study["levels"], study["h"], study["errors"]))
    write_table_csv(ctx.path("mms.csv"), ("nodes", "h", "error"), rows)
    order = study["order"]
    if math.isnan(order):
        # errors at roundoff level: nothing to measure, the stencil is exact
        worst = max(study["errors"])
        rep = CheckReport("mms_order", worst <= 1e-10, -worst, "roundoff", 1e-10,
                          {"order": order}, "errors at roundoff level, order not measured")
    else:
        rep = CheckReport("mms_order", order >= spec.min_order, order - spec.min_order, "order", 0.0,
                          {"order": order}, f"observed order {order:.4f}")
    write_report_csv(ctx.path("report.csv"), [rep])
    ctx.say(rep.line())
    return EXIT_OK if rep.passed else EXIT_VERIFY


def cmd_report(ctx: _Run) -> int:
    """Summarise the reports already present in the output directory."""
    path = ctx.outdir / "report.csv"
    if not path.exists():
        ctx.say(f"report: no report.csv in {ctx.outdir}")
        return EXIT_USAGE
    with path.open(newline="", encoding="ascii") as fh:
        rows = list(csv.DictReader(fh))
    failed = [r for r in rows if r["passed"] != "true"]
    lines = [f"{'PASS' if r['passed'] == 'true' else 'FAIL'} {r['name']}: worst margin {r['worst_margin']} "
             f"at {r['location']} (tolerance {r['tolerance']})" for r in rows]
    lines.append(f"{len(rows) - len(failed)}/{len(rows)} checks passed")
    summary = ctx.outdir / "summary.txt"
    summary.write_text("\n".join(lines) + "\n", encoding="ascii")
    for line in lines:
        ctx.say(line)
    return EXIT_VERIFY if failed else EXIT_OK


_COMMANDS = {
    "solve-flow": cmd_solve_flow,
    "solve-newton": cmd_solve_newton,
    "cross-validate": cmd_cross_validate,
    "verify": cmd_verify,
    "mms": cmd_mms,
}


def resolve_output_dir(cfg: RunConfig | None, override=None) -> Path:
    if override:
        return Path(override)
    env = os.environ.get(OUTPUT_ENV)
    if env:
        return Path(env)
    return Path(cfg.output_dir if cfg is not None else "output")


def run_command(subcommand: str, cfg: RunConfig | None, output_dir=None, out=None) -> int:
    """Execute one subcommand and return its exit code."""
    out = out or sys.stdout
    if subcommand not in SUBCOMMANDS:
        print(f"unknown subcommand {subcommand!r}", file=sys.stderr)
        return EXIT_USAGE
    ctx = _Run(cfg, resolve_output_dir(cfg, output_dir), out)
    if subcommand == "report":
        return cmd_report(ctx)
    if cfg is None:
        print(f"{subcommand} needs a config file", file=sys.stderr)
        return EXIT_USAGE
    try:
        problem, boundary, exact = build_problem(cfg)
        if subcommand != "mms":
            validate(problem)
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    ctx.outdir.mkdir(parents=True, exist_ok=True)
    try:
        code = _COMMANDS[subcommand](ctx, problem, boundary, exact)
    except SolverFailure as exc:
        print(f"{subcommand}: {exc}", file=sys.stderr)
        code = EXIT_SOLVER
    ctx.manifest(subcommand, {"exit_code": code})
    return code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"usage error: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cyclic-toda", description="Heat-flow and Newton solvers for the cyclic Toda system.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("config", nargs="?", help="TOML run configuration")
    p.add_argument("-o", "--output", help=f"output directory (overrides ${OUTPUT_ENV} and the config)")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = None
    if args.config is not None:
        try:
            cfg = load_config(args.config)
        except (ConfigError, OSError) as exc:
            print(f"configuration error: {exc}", file=sys.stderr)
            return EXIT_USAGE
    return run_command(args.subcommand, cfg, args.output)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
