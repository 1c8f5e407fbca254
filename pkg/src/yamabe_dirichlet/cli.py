"""Command-line front end: ``yamabe-dirichlet <subcommand> ...``.

Exit codes: 0 success, 1 usage or config error, 2 certificate failure without
override, 3 non-convergence, 4 verification failure.
"""

from __future__ import annotations

import argparse
import itertools
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import analysis
from .config import ConfigError, load_config
from .geometry import DomainError, check_admissibility
from .iteration import (
    CertificateError,
    ProblemSpec,
    ProblemSpecError,
    chain_rule_defect,
    constant_curvature_deform,
    run_iteration,
    solve_shifted,
    standard_residual,
)
from .output import to_json, write_csv, write_json
from .poisson import GridError, SolverError, write_field_csv

EXIT_OK, EXIT_USAGE, EXIT_CERTIFICATE, EXIT_NONCONVERGED, EXIT_VERIFY = 0, 1, 2, 3, 4
WORKERS_ENV = "YAMABE_WORKERS"
TRACE_HEADER = ["k", "sup_grad", "diff_h10", "diff_l2", "poincare_ratio", "ratio", "residual"]


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# building problems from a config


def _bounds(cfg):
    if cfg.Lam is None or cfg.gamma is None:
        raise UsageError("Lambda and gamma are required (or give R and S so they can be estimated)")
    return cfg.Lam, cfg.gamma


def _problem(cfg):
    Lam, gamma = _bounds(cfg)
    return ProblemSpec(cfg.domain, cfg.R, cfg.S, Lam, gamma, coefficient=cfg.coefficient)


def _execute(cfg):
    """Run the pipeline for ``cfg.mode``; returns ``(solution, extra summary dict, extra fields)``."""
    kwargs = dict(seed=cfg.seed)
    if cfg.mode == "solve":
        spec = _problem(cfg)
        sol = run_iteration(spec, cfg.mesh_size, cfg.tol, cfg.max_iter, override_certificate=cfg.override_certificate,
                            theorem=cfg.theorem, check_resolution=cfg.check_resolution, **kwargs)
        return sol, {}, {}
    if cfg.mode == "shifted":
        S = cfg.S if cfg.S is not None else "0"
        gamma = cfg.gamma if cfg.gamma is not None else 0.0
        spec = ProblemSpec(cfg.domain, 0.0, S, 0.0, gamma, boundary_c=cfg.c, curvature=cfg.lam,
                           coefficient=cfg.coefficient)
        sol = solve_shifted(spec, cfg.mesh_size, cfg.tol, cfg.max_iter, override_certificate=cfg.override_certificate,
                            check_resolution=cfg.check_resolution, **kwargs)
        extra = {"c": cfg.c, "lambda": cfg.lam, "effective_curvature": cfg.lam * math.exp(2.0 * cfg.c)}
        return sol, extra, {}
    if cfg.mode == "deform":
        res = constant_curvature_deform(cfg.domain, cfg.d, cfg.lam, cfg.mesh_size, cfg.tol, cfg.max_iter,
                                        seed=cfg.seed, coefficient=cfg.coefficient)
        extra = {
            "d": res.d,
            "lambda": res.lam,
            "stated_curvature": res.stated_curvature,
            "pullback_curvature": res.pullback_curvature,
            "residual_domain": res.residual_domain,
            "residual_pulled_back": res.residual_pulled_back,
            "residual_stated": res.residual_stated,
            "amplification_estimate": res.amplification_estimate,
        }
        return res.solution, extra, {"pulled_back_f.csv": res.pulled_back}
    raise UsageError(f"mode {cfg.mode!r} does not produce a solution")


def _summary(cfg, sol, extra):
    cert = sol.certificate
    spec = sol.spec
    out = {
        "mode": cfg.mode,
        "config": cfg.as_dict(),
        "config_text": cfg.to_text(),
        "status": sol.label,
        "override_certificate": sol.override,
        "bounds_estimated": cfg.bounds_estimated,
        "clause": cert.clause,
        "certificate_passed": cert.passed,
        "K": cert.K,
        "K_bound": cert.K_bound,
        "q": cert.q,
        "contraction_q": cert.contraction_q,
        "iterations": sol.iterations,
        "converged": sol.converged,
        "stop_reason": sol.trace.stop_reason,
        "residual": sol.residual,
        "residual_eq3": sol.residual_eq3,
        "tolerance": sol.tol,
        "residual_tolerance": 10.0 * sol.tol,
        "max_ratio": sol.trace.max_ratio(2),
        "max_sup_grad": sol.trace.max_sup_grad,
        "gradient_violations": len(sol.gradient_violations),
        "min_u": float(sol.u.values.min()),
        "grid": sol.grid.metadata(),
    }
    if cfg.mode != "deform":
        out["standard_residual"] = {
            "substituted": standard_residual(sol.u, spec),
            "substituted_regular_nodes": standard_residual(sol.u, spec, region="regular"),
            "printed": standard_residual(sol.u, spec, form="printed"),
            "chain_rule_defect": chain_rule_defect(sol.f),
            "chain_rule_defect_regular_nodes": chain_rule_defect(sol.f, "regular"),
        }
    out.update(extra)
    return out


def _write_run(cfg, sol, extra, fields, outdir):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_csv(outdir / "trace.csv", TRACE_HEADER, sol.trace.rows())
    write_field_csv(sol.f, outdir / "solution_f.csv")
    write_field_csv(sol.u, outdir / "solution_u.csv")
    for name, fld in fields.items():
        write_field_csv(fld, outdir / name)
    write_json(sol.certificate.to_dict(), outdir / "certificate.json")
    summary = _summary(cfg, sol, extra)
    write_json(summary, outdir / "summary.json")
    return summary


def _output_dir(cfg, args):
    out = args.output_dir or cfg.output_dir
    if out is None:
        raise UsageError("no output directory: pass --output-dir or set output_dir in [run]")
    return Path(out)


def _apply_flags(cfg, args):
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.override_certificate:
        changes["override_certificate"] = True
    return replace(cfg, **changes) if changes else cfg


# --------------------------------------------------------------------------
# subcommands


def cmd_certify(cfg, args):
    Lam, gamma = _bounds(cfg) if cfg.theorem == "T1" else (cfg.Lam or 0.0, cfg.gamma or 0.0)
    rep = check_admissibility(cfg.domain, Lam, gamma, theorem=cfg.theorem, seed=cfg.seed)
    data = rep.to_dict()
    data["bounds_estimated"] = cfg.bounds_estimated
    sys.stdout.write(to_json(data))
    out = args.output_dir or cfg.output_dir
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        write_json(data, Path(out) / "certificate.json")
    return EXIT_OK if rep.passed else EXIT_CERTIFICATE


def cmd_pipeline(cfg, args):
    outdir = _output_dir(cfg, args)
    t0 = time.perf_counter()
    sol, extra, fields = _execute(cfg)
    summary = _write_run(cfg, sol, extra, fields, outdir)
    write_json({"wall_time_seconds": time.perf_counter() - t0}, outdir / "timing.json")
    print(f"{cfg.mode}: {sol.label}, {'converged' if sol.converged else 'NOT converged'} "
          f"({sol.trace.stop_reason}) after {sol.iterations} steps, residual {sol.residual:.3e}, "
          f"K = {summary['K']}, q = {summary['q']}; artifacts in {outdir}")
    if "stated_curvature" in extra:
        print(f"curvature lambda/d^2 = {extra['stated_curvature']:.17g}; "
              f"pulled-back field solves curvature lambda*d^2 = {extra['pullback_curvature']:.17g}")
    return EXIT_OK if sol.converged else EXIT_NONCONVERGED


SWEEP_HEADER = ["row", "status", "certified", "converged", "iterations", "residual", "K", "q", "max_ratio"]


def _sweep_row(job):
    index, cfg, params, outdir = job
    row_cfg = replace(cfg.with_values(**params), mode=cfg.sweep_base, sweep=())
    status = "ok"
    try:
        sol, extra, fields = _execute(row_cfg)
        _write_run(row_cfg, sol, extra, fields, Path(outdir) / f"row_{index:04d}")
        values = [sol.label, sol.certified, sol.converged, sol.iterations, sol.residual, sol.K, sol.q,
                  sol.trace.max_ratio(2)]
    except CertificateError as exc:
        status = "rejected"
        rep = exc.report
        values = ["uncertified", False, False, None, None, rep.K if rep else None, rep.q if rep else None, None]
    except (ProblemSpecError, GridError, SolverError, DomainError) as exc:
        status = f"error: {exc}".replace(",", ";").replace("\n", " ")
        values = [None, None, None, None, None, None, None, None]
    return [index] + [params[k] for k in sorted(params)] + [status if status != "ok" else values[0]] + values[1:]


def cmd_sweep(cfg, args):
    outdir = _output_dir(cfg, args)
    outdir.mkdir(parents=True, exist_ok=True)
    names = [name for name, _ in cfg.sweep]
    grid = list(itertools.product(*[vals for _, vals in cfg.sweep]))
    jobs = [(i, cfg, dict(zip(names, combo)), str(outdir)) for i, combo in enumerate(grid)]
    workers = int(os.environ.get(WORKERS_ENV, "1") or 1)
    t0 = time.perf_counter()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_row, jobs))
    else:
        rows = [_sweep_row(job) for job in jobs]
    rows.sort(key=lambda r: r[0])
    header = ["row"] + sorted(names) + SWEEP_HEADER[1:]
    write_csv(outdir / "sweep.csv", header, rows)
    write_json({"wall_time_seconds": time.perf_counter() - t0, "workers": workers}, outdir / "timing.json")
    print(f"sweep: {len(rows)} rows written to {outdir / 'sweep.csv'}")
    return EXIT_OK


def cmd_estimate_green(args):
    est = analysis.ball_green_constant(args.n, rtol=args.rtol, scan_points=args.scan_points)
    summary = {
        "n": est.n,
        "Cn": est.value,
        "argmax_radius": est.argmax_radius,
        "evans_bound": est.evans_bound,
        "evans_check": None if est.evans_bound is None else bool(est.value <= est.evans_bound),
        "tolerance": est.tolerance,
        "refinement_history": list(est.history),
    }
    if args.output_dir:
        out = Path(args.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "green.csv", ["radius", "integral"], est.samples)
        write_json(summary, out / "green.json")
    sys.stdout.write(to_json(summary))
    return EXIT_OK


def cmd_verify(args):
    from .verify import run_suite

    results = run_suite(fast=args.fast, report=lambda r: print(r.line(), flush=True))
    failed = [r for r in results if not r.passed]
    total = sum(r.seconds for r in results)
    print(f"{len(results) - len(failed)}/{len(results)} checks passed in {total:.1f} s")
    if args.output_dir:
        out = Path(args.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_json([{"name": r.name, "criterion": r.criterion, "passed": r.passed, "detail": r.detail,
                     "seconds": r.seconds} for r in results], out / "verify_report.json")
    return EXIT_VERIFY if failed else EXIT_OK


# --------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="yamabe-dirichlet",
                                     description="Picard solver for the gradient-form Yamabe Dirichlet problem.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None, help="seed for Monte-Carlo volumes")
        p.add_argument("--output-dir", default=None, help="directory for artifacts")
        p.add_argument("--override-certificate", action="store_true",
                       help="run even if the size conditions fail (result labelled uncertified)")

    for name, text in (("certify", "print the admissibility certificate"),
                       ("solve", "run the Picard iteration"),
                       ("shifted", "solve with boundary constant c and curvature lambda"),
                       ("deform", "constant curvature by domain scaling"),
                       ("sweep", "run a parameter sweep"),
                       ("run", "run the mode named in the config")):
        p = sub.add_parser(name, help=text)
        p.add_argument("config", help="path to the config file")
        common(p)

    p = sub.add_parser("estimate-green", help="Green gradient-integral constant of the unit ball")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--rtol", type=float, default=1e-4)
    p.add_argument("--scan-points", type=int, default=21)
    p.add_argument("--output-dir", default=None)

    p = sub.add_parser("verify", help="run the verification suite")
    p.add_argument("--fast", action="store_true", help="reduced suite")
    p.add_argument("--output-dir", default=None)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "verify":
            return cmd_verify(args)
        if args.command == "estimate-green":
            return cmd_estimate_green(args)
        mode = None if args.command == "run" else args.command
        cfg = _apply_flags(load_config(args.config, mode=mode), args)
        if cfg.mode == "verify":
            return cmd_verify(argparse.Namespace(fast=False, output_dir=args.output_dir))
        if cfg.mode == "estimate-green":
            ns = argparse.Namespace(n=cfg.n, rtol=cfg.green_rtol, scan_points=21, output_dir=args.output_dir
                                    or cfg.output_dir)
            return cmd_estimate_green(ns)
        if cfg.mode == "certify":
            return cmd_certify(cfg, args)
        if cfg.mode == "sweep":
            return cmd_sweep(cfg, args)
        return cmd_pipeline(cfg, args)
    except CertificateError as exc:
        print(f"certificate failure: {exc}", file=sys.stderr)
        return EXIT_CERTIFICATE
    except (ConfigError, UsageError, ProblemSpecError, GridError, DomainError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
