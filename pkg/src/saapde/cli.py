"""Command-line entry point: ``saapde <command> --config PATH``.

Exit status: 0 when every asserted criterion holds, 1 on a failed
criterion, 2 on configuration errors, 3 on numerical failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import mesh_fem, random_field, saa_solver, stability_stats
from . import results as res
from .config import ConfigError, ExperimentConfig, build_problem, default_config, load_config

log = logging.getLogger("saapde")

COMMANDS = ("validate", "solve", "fem-verify", "rate", "clt", "ci", "coverage", "stability")
OUTPUT_ENV = "SAAPDE_OUTPUT_DIR"
EXIT_OK, EXIT_ASSERTION, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
CI_STREAM = 7


def _oracle(cfg, prob, box):
    q = None if cfg.quadrature.nodes == "auto" else cfg.quadrature.nodes
    return saa_solver.solve_oracle(prob, box, q, cfg.quadrature.value_tol, cfg.solver.oracle_tol)


def cmd_validate(cfg, prob, box, threads):
    rep = random_field.validate_ellipticity(prob.coefficient, box, dim=prob.mesh.dim,
                                           grid_resolution=256 if prob.mesh.dim == 1 else 64)
    x = random_field.verification_grid(prob.mesh.dim, 256 if prob.mesh.dim == 1 else 64)
    comp = prob.coefficient.components(x)
    header = [f"xi_{j}" for j in range(box.dim)] + ["min_b", "max_b"]
    rows = []
    for corner in box.corners():
        b = comp[:, 0] + comp[:, 1:] @ corner
        rows.append([*corner, b.min(), b.max()])
    summary = {
        "gamma_observed": rep.gamma_observed, "L_observed": rep.L_observed,
        "gamma_declared": prob.coefficient.gamma, "L_declared": prob.coefficient.L,
        "vertices": prob.mesh.n_vertices, "interior": prob.mesh.n_interior, "parameters": box.dim,
    }
    return res.ResultRecord("validate", cfg.hash(), cfg.seed, header, rows, summary)


def cmd_solve(cfg, prob, box, threads):
    oracle = _oracle(cfg, prob, box)
    Q = random_field.sample(box, cfg.solve.n, cfg.seed, (0,))
    sol = saa_solver.solve(prob, Q, cfg.solver.saa_tol, cfg.solver.max_iters)
    cert = saa_solver.quadratic_growth_certificate(prob, oracle.measure, oracle.solution,
                                                   cfg.solve.growth_trials, cfg.seed)
    cert_n = saa_solver.quadratic_growth_certificate(prob, Q, sol, cfg.solve.growth_trials, cfg.seed)
    header = [f"x_{i}" for i in range(prob.mesh.dim)] + ["lower", "upper", "oracle_control", "saa_control"]
    rows = [[*x, lo, hi, zo, zn] for x, lo, hi, zo, zn in
            zip(prob.mesh.vertices, prob.lower, prob.upper, oracle.control, sol.control)]
    summary = {
        "oracle_value": oracle.value, "oracle_nodes_per_dim": oracle.nodes_per_dim,
        "oracle_history": oracle.history, "oracle_iterations": oracle.solution.iterations,
        "oracle_residual": oracle.solution.residual,
        "n": cfg.solve.n, "saa_value": sol.value, "saa_iterations": sol.iterations,
        "saa_residual": sol.residual, "value_error": abs(sol.value - oracle.value),
        "solution_error": prob.norm(sol.control - oracle.control),
        "growth_min_slack": cert.min_slack, "growth_strong_variant_holds": cert.strong_variant_holds,
        "growth_min_slack_saa": cert_n.min_slack, "growth_strong_variant_holds_saa": cert_n.strong_variant_holds,
    }
    return res.ResultRecord("solve", cfg.hash(), cfg.seed, header, rows, summary)


def cmd_fem_verify(cfg, prob, box, threads):
    header = ["domain", "resolution", "h", "l2_error", "order"]
    rows, orders = [], {}
    for domain in ("interval", "square"):
        table = mesh_fem.convergence_table(domain, getattr(cfg.fem, domain))
        rows += [[t[k] for k in header] for t in table]
        orders[domain] = min((t["order"] for t in table[1:]), default=float("nan"))
    passed = all(o >= cfg.fem.min_order for o in orders.values())
    summary = {"min_observed_order": orders, "min_order": cfg.fem.min_order}
    return res.ResultRecord("fem-verify", cfg.hash(), cfg.seed, header, rows, summary, passed)


def cmd_rate(cfg, prob, box, threads):
    oracle = _oracle(cfg, prob, box)
    rep = stability_stats.rate_experiment(prob, box, cfg.rate.n_list, cfg.rate.replications, cfg.seed,
                                          oracle, cfg.solver.saa_tol, threads)
    rec = res.rate_record(rep, cfg.hash(), cfg.seed)
    rec.summary["slope_band"] = cfg.rate.slope_band
    rec.passed = rep.degenerate or rep.slopes_within(tuple(cfg.rate.slope_band))
    return rec


def cmd_clt(cfg, prob, box, threads):
    oracle = _oracle(cfg, prob, box)
    rep = stability_stats.clt_probe(prob, box, cfg.clt.n_list, cfg.clt.replications, cfg.seed, oracle,
                                    cfg.solver.saa_tol, threads, cfg.clt.max_ratio)
    return res.clt_record(rep, cfg.hash(), cfg.seed)


def _b(cfg):
    s = cfg.subsample
    return s.b if s.b is not None else stability_stats.default_subsample_size(s.n)


def cmd_ci(cfg, prob, box, threads):
    s = cfg.subsample
    oracle = _oracle(cfg, prob, box)
    Q = random_field.sample(box, s.n, cfg.seed, (CI_STREAM,))
    rep = stability_stats.subsample_ci(prob, Q, _b(cfg), s.m, s.kappa,
                                       random_field.make_rng(cfg.seed, CI_STREAM, 1), cfg.solver.saa_tol)
    return res.subsample_record(rep, cfg.hash(), cfg.seed, oracle.value)


def cmd_coverage(cfg, prob, box, threads):
    s = cfg.subsample
    oracle = _oracle(cfg, prob, box)
    rep = stability_stats.coverage_experiment(prob, box, s.n, _b(cfg), s.m, s.kappa, s.replications,
                                              cfg.seed, oracle, cfg.solver.saa_tol, threads)
    return res.coverage_record(rep, cfg.hash(), cfg.seed, s.min_coverage)


def cmd_stability(cfg, prob, box, threads):
    oracle = _oracle(cfg, prob, box)
    sweep = stability_stats.stability_sweep(prob, box, cfg.stability.n_list, cfg.stability.seeds, cfg.seed,
                                            oracle, cfg.solver.oracle_tol, threads)
    return res.stability_record(sweep, cfg.hash(), cfg.seed)


HANDLERS = {
    "validate": cmd_validate, "solve": cmd_solve, "fem-verify": cmd_fem_verify, "rate": cmd_rate,
    "clt": cmd_clt, "ci": cmd_ci, "coverage": cmd_coverage, "stability": cmd_stability,
}


def run(command: str, cfg: ExperimentConfig, out_dir, threads: int = 1, base_dir=None):
    """Run one command; returns ``(exit status, record, written paths)``."""
    if command not in HANDLERS:
        raise ValueError(f"unknown command {command!r}")
    prob, box = build_problem(cfg, base_dir)
    t0 = time.perf_counter()
    record = HANDLERS[command](cfg, prob, box, threads)
    elapsed = time.perf_counter() - t0
    paths = res.emit_csv(record, out_dir)
    paths.append(res.emit_json(record, out_dir, cfg.to_dict(), {"seconds": elapsed, "threads": threads}))
    return (EXIT_OK if record.passed else EXIT_ASSERTION), record, paths


def _parser():
    p = argparse.ArgumentParser(prog="saapde", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON config, or a result JSON embedding one (default: shipped instance)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--threads", type=int, default=1, help="worker threads for replications")
    p.add_argument("--out", help=f"output directory (default: ${OUTPUT_ENV} or config output_dir)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _fail(category, message, code):
    print(json.dumps({"error": category, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config) if args.config else default_config()
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed", "must be nonnegative")
            cfg.seed = args.seed
        if args.threads < 1:
            raise ConfigError("--threads", "must be >= 1")
        out = args.out or os.environ.get(OUTPUT_ENV) or cfg.output_dir
        base_dir = Path(args.config).parent if args.config else None
        status, record, paths = run(args.command, cfg, out, args.threads, base_dir)
    except ConfigError as exc:
        return _fail("config", str(exc), EXIT_CONFIG)
    except (random_field.EllipticityViolation, saa_solver.CertificateViolation,
            stability_stats.InequalityViolation) as exc:
        return _fail("assertion", str(exc), EXIT_ASSERTION)
    except (mesh_fem.LinearSolveError, saa_solver.MaxItersExceeded, np.linalg.LinAlgError,
            ValueError, RuntimeError, OSError) as exc:
        return _fail("numeric", str(exc), EXIT_NUMERIC)
    log.info("wrote %s", ", ".join(map(str, paths)))
    print(json.dumps({"command": args.command, "passed": record.passed, "outputs": [str(p) for p in paths],
                      "summary": res._jsonable(record.summary)}, sort_keys=True))
    return status


if __name__ == "__main__":
    sys.exit(main())
