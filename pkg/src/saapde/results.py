"""Result records and their CSV/JSON serialization."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class ResultRecord:
    """One experiment's raw table plus its summary.

    Every CSV row leads with the config hash and seed, so a table on its own
    identifies the run that produced it.
    """

    kind: str
    config_hash: str
    seed: int
    header: list[str]
    rows: list[list] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    passed: bool = True
    extra_tables: dict = field(default_factory=dict)  # name -> (header, rows)


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, header, rows, config_hash: str, seed: int) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)  # RFC 4180 quoting and CRLF line ends
            w.writerow(["config_hash", "seed", *header])
            for row in rows:
                w.writerow([config_hash, seed, *map(format_value, row)])
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write CSV {path}: {exc.strerror}") from exc
    return path


def emit_csv(record: ResultRecord, out_dir) -> list[Path]:
    """Write the main table as ``<kind>.csv`` plus any extra tables."""
    out_dir = Path(out_dir)
    paths = [write_csv(out_dir / f"{record.kind}.csv", record.header, record.rows,
                       record.config_hash, record.seed)]
    for name, (header, rows) in sorted(record.extra_tables.items()):
        paths.append(write_csv(out_dir / f"{record.kind}_{name}.csv", header, rows,
                               record.config_hash, record.seed))
    return paths


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer, int)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        return None if not math.isfinite(v) else float(v)
    return v


def emit_json(record: ResultRecord, out_dir, config: dict, timings: dict | None = None) -> Path:
    path = Path(out_dir) / f"{record.kind}.json"
    doc = {
        "command": record.kind,
        "config_hash": record.config_hash,
        "seed": record.seed,
        "passed": record.passed,
        "rows": len(record.rows),
        "summary": _jsonable(record.summary),
        "timings": _jsonable(timings or {}),
        "config": config,
    }
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write JSON {path}: {exc.strerror}") from exc
    return path


# --------------------------------------------------------------------------
# report -> record adapters


def rate_record(report, config_hash, seed) -> ResultRecord:
    header = ["n", "replication", "value", "value_error", "solution_error", "iterations"]
    rows = [[r.n, r.replication, r.value, r.value_error, r.solution_error, r.iterations] for r in report.rows]
    summary = {
        "n_list": report.n_list,
        "replications": report.replications,
        "oracle_value": report.oracle_value,
        "mean_value_error": report.mean_value_error,
        "mean_solution_error": report.mean_solution_error,
        "value_slope": report.value_slope,
        "value_slope_se": report.value_slope_se,
        "solution_slope": report.solution_slope,
        "solution_slope_se": report.solution_slope_se,
        "degenerate": report.degenerate,
        "monotone_within_2se": report.monotone_within(2.0),
    }
    return ResultRecord("rate", config_hash, seed, header, rows, summary)


def clt_record(report, config_hash, seed) -> ResultRecord:
    header = ["n", "replication", "value", "scaled_deviation"]
    rows = []
    M = report.replications
    for j, n in enumerate(report.n_list):
        for r in range(M):
            row = report.rows[j * M + r]
            rows.append([n, r, row.value, report.scaled[n][r]])
    summary = {
        "n_list": report.n_list,
        "std_scaled": {str(n): s for n, s in report.std.items()},
        "ratio": report.ratio,
        "max_ratio": report.max_ratio,
        "degenerate": report.degenerate,
        "oracle_value": report.oracle_value,
    }
    return ResultRecord("clt", config_hash, seed, header, rows, summary, report.passed)


def subsample_record(report, config_hash, seed, oracle_value=None) -> ResultRecord:
    """One row per subsample draw and a closing summary row."""
    header = ["row", "index", "value", "scaled_deviation"]
    rows = [["draw", j, v, s] for j, (v, s) in enumerate(zip(report.subsample_values, report.scaled))]
    rows.append(["summary", -1, report.value, report.quantile])
    summary = {
        "n": report.n, "b": report.b, "m": report.m, "kappa": report.kappa,
        "value": report.value, "quantile": report.quantile,
        "one_sided": [report.lower_bound, None],
        "two_sided": list(report.two_sided),
    }
    if oracle_value is not None:
        summary["oracle_value"] = oracle_value
        summary["covers_oracle"] = report.covers(oracle_value)
    return ResultRecord("ci", config_hash, seed, header, rows, summary)


def coverage_record(report, config_hash, seed, min_coverage=None) -> ResultRecord:
    header = ["replication", "value", "quantile", "lower_bound", "two_sided_low", "two_sided_high",
              "covered", "covered_two_sided"]
    rows = [[r.replication, r.value, r.quantile, r.lower_bound, r.two_sided_low, r.two_sided_high,
             r.covered, r.covered_two_sided] for r in report.rows]
    q_rows = [[r, j, s] for r, scaled in enumerate(report.quantiles) for j, s in enumerate(scaled)]
    summary = {
        "n": report.n, "b": report.b, "m": report.m, "kappa": report.kappa,
        "replications": report.replications, "oracle_value": report.oracle_value,
        "coverage": report.coverage, "coverage_two_sided": report.coverage_two_sided,
        "mean_two_sided_width": report.mean_width, "min_coverage": min_coverage,
    }
    passed = min_coverage is None or report.coverage >= min_coverage
    return ResultRecord("coverage", config_hash, seed, header, rows, summary, passed,
                        {"scaled": (["replication", "draw", "scaled_deviation"], q_rows)})


def stability_record(sweep, config_hash, seed) -> ResultRecord:
    header = ["n", "seed_index", "value_gap", "d_mi", "solution_gap", "gradient_gap",
              "lipschitz_bound", "d_mi_grid", "holder_bound", "value_ok", "lipschitz_ok", "holder_ok"]
    rows = []
    for (n, s), r in zip(sweep.pairs, sweep.reports):
        rows.append([n, s, r.value_gap, r.d_mi, r.solution_gap, r.gradient_gap, r.lipschitz_bound,
                     r.d_mi_grid, r.holder_bound, r.checks["value"], r.checks["lipschitz"], r.checks["holder"]])
    summary = {"pairs": len(sweep.pairs), "min_slack": sweep.min_slack, "all_hold": sweep.passed}
    return ResultRecord("stability", config_hash, seed, header, rows, summary, sweep.passed)
