"""Distance estimates, stability checks and Monte Carlo experiments.

All experiment drivers derive one random stream per task from
``(seed, experiment tag, ...)`` and gather results by index, so outputs do
not depend on the number of worker threads.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .random_field import DiscreteMeasure, UniformBox, make_rng, sample
from .reduced_objective import AtomCache, ProblemInstance, QuadraticObjective, quadratic_objective
from .saa_solver import ORACLE_TOL, SAA_TOL, OracleSolution, SaaSolution, minimize, random_feasible, solve

# stream tags
RATE, CLT, COVERAGE, SUBSAMPLE, STABILITY, GRID = 1, 2, 3, 4, 5, 6

#: Slack allowed in the stability inequalities.
INEQUALITY_ATOL = 1e-7


class InequalityViolation(AssertionError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


def _qobj(prob, Q) -> QuadraticObjective:
    return Q if isinstance(Q, QuadraticObjective) else quadratic_objective(prob, Q)


def _gather(fn, tasks, threads: int):
    if threads <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))


# --------------------------------------------------------------------------
# distances


@dataclass
class DistanceEstimate:
    """Lower bound of a problem-based distance from a finite witness set."""

    kind: str
    value: float
    witness: np.ndarray
    n_witnesses: int
    values: np.ndarray = field(repr=False, default=None)


def distance_lower_bound(prob: ProblemInstance, Q1, Q2, witnesses, kind: str = "mi") -> DistanceEstimate:
    """Max over witness controls of ``|F1 - F2|`` (mi) or ``|grad F1 - grad F2|_M`` (di).

    For ``di`` the supremum over unit directions of the derivative pairing is
    attained along the normalized gradient difference, so the norm is exact.
    """
    W = [np.asarray(w, dtype=float) for w in witnesses]
    if not W:
        raise ValueError("witness set is empty")
    if kind not in ("mi", "di"):
        raise ValueError(f"unknown distance class {kind!r}")
    q1, q2 = _qobj(prob, Q1), _qobj(prob, Q2)
    if kind == "mi":
        vals = np.array([abs(q1.value(w) - q2.value(w)) for w in W])
    else:
        vals = np.array([prob.norm(q1.gradient(w) - q2.gradient(w)) for w in W])
    i = int(np.argmax(vals))
    return DistanceEstimate(kind, float(vals[i]), W[i], len(W), vals)


def feasible_grid(prob: ProblemInstance, size: int = 50, seed: int = 0) -> list[np.ndarray]:
    """Seeded uniform random feasible controls."""
    rng = make_rng(seed, GRID)
    return [random_feasible(prob, rng) for _ in range(size)]


@dataclass
class StabilityReport:
    value_gap: float
    d_mi: float
    solution_gap: float
    gradient_gap: float
    lipschitz_bound: float
    d_mi_grid: float
    holder_bound: float
    checks: dict

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    @property
    def slacks(self) -> dict:
        return {
            "value": self.d_mi - self.value_gap,
            "lipschitz": self.lipschitz_bound - self.solution_gap,
            "holder": self.holder_bound - self.solution_gap,
        }


def verify_stability(
    prob: ProblemInstance,
    Q1,
    Q2,
    tol: float = ORACLE_TOL,
    grid_size: int = 50,
    seed: int = 0,
    sol1: SaaSolution | None = None,
    sol2: SaaSolution | None = None,
    raise_on_violation: bool = True,
) -> StabilityReport:
    """Check the value, Lipschitz and Hoelder stability estimates for a pair.

    (a) ``|v1 - v2| <= d_mi`` with witnesses ``{z1, z2}``;
    (b) ``|z1 - z2| <= (8/alpha) max_{z in {z1, z2}} |grad F1(z) - grad F2(z)|``,
        the endpoint maximum being exact since the gradient difference is
        affine in z;
    (c) ``|z1 - z2| <= 2 sqrt(2/alpha) sqrt(d_mi)`` with ``d_mi`` taken over a
        random feasible grid together with ``{z1, z2}``.
    """
    q1, q2 = _qobj(prob, Q1), _qobj(prob, Q2)
    s1 = sol1 or minimize(q1, prob.lower, prob.upper, tol)
    s2 = sol2 or minimize(q2, prob.lower, prob.upper, tol)
    ends = [s1.control, s2.control]
    value_gap = abs(s1.value - s2.value)
    d_mi = distance_lower_bound(prob, q1, q2, ends, "mi").value
    d_di = distance_lower_bound(prob, q1, q2, ends, "di").value
    solution_gap = prob.norm(s1.control - s2.control)
    lip = 8.0 / prob.alpha * d_di
    d_grid = distance_lower_bound(prob, q1, q2, ends + feasible_grid(prob, grid_size, seed), "mi").value
    holder = 2.0 * math.sqrt(2.0 / prob.alpha) * math.sqrt(d_grid)
    checks = {
        "value": value_gap <= d_mi + INEQUALITY_ATOL,
        "lipschitz": solution_gap <= lip + INEQUALITY_ATOL,
        "holder": solution_gap <= holder + INEQUALITY_ATOL,
    }
    report = StabilityReport(value_gap, d_mi, solution_gap, d_di, lip, d_grid, holder, checks)
    if raise_on_violation and not report.passed:
        failed = [k for k, ok in checks.items() if not ok]
        raise InequalityViolation(f"stability inequalities violated: {failed}", report)
    return report


# --------------------------------------------------------------------------
# rates and CLT


def _check_oracle(oracle):
    if not isinstance(oracle, OracleSolution):
        raise TypeError("an OracleSolution is required (see saa_solver.solve_oracle)")


@dataclass
class ReplicationRow:
    n: int
    replication: int
    value: float
    value_error: float
    solution_error: float
    iterations: int


def _replicate(prob, box, oracle, seed, tag, tol):
    def run(task):
        n, r = task
        Q = sample(box, n, seed, (tag, n, r))
        try:
            sol = solve(prob, Q, tol)
        except Exception as exc:
            raise RuntimeError(f"replication (n={n}, r={r}) failed: {exc}") from exc
        return ReplicationRow(
            n, r, sol.value, abs(sol.value - oracle.value),
            prob.norm(sol.control - oracle.control), sol.iterations,
        )
    return run


def loglog_slope(n, y):
    """Least-squares slope of log y against log n, with its standard error."""
    fit = stats.linregress(np.log(np.asarray(n, float)), np.log(np.asarray(y, float)))
    return float(fit.slope), float(fit.stderr)


@dataclass
class RateReport:
    n_list: list[int]
    replications: int
    seed: int
    oracle_value: float
    rows: list[ReplicationRow]
    mean_value_error: np.ndarray
    mean_solution_error: np.ndarray
    se_value_error: np.ndarray
    se_solution_error: np.ndarray
    value_slope: float
    value_slope_se: float
    solution_slope: float
    solution_slope_se: float
    degenerate: bool

    def monotone_within(self, k: float = 2.0) -> bool:
        """Means nonincreasing in n up to ``k`` standard errors."""
        ok = True
        for mean, se in ((self.mean_value_error, self.se_value_error),
                         (self.mean_solution_error, self.se_solution_error)):
            for j in range(1, len(mean)):
                ok &= mean[j] <= mean[j - 1] + k * math.hypot(se[j], se[j - 1])
        return bool(ok)

    def slopes_within(self, band=(-0.65, -0.35)) -> bool:
        lo, hi = band
        return lo <= self.value_slope <= hi and lo <= self.solution_slope <= hi


def rate_experiment(
    prob: ProblemInstance,
    box: UniformBox,
    n_list,
    M: int,
    seed: int,
    oracle: OracleSolution,
    tol: float = SAA_TOL,
    threads: int = 1,
) -> RateReport:
    """Mean value and solution errors of SAA solutions versus sample size."""
    _check_oracle(oracle)
    n_list = [int(n) for n in n_list]
    if len(n_list) < 3:
        raise ValueError("need at least 3 sample sizes")
    if M < 20:
        raise ValueError("need at least 20 replications")
    tasks = [(n, r) for n in n_list for r in range(M)]
    rows = _gather(_replicate(prob, box, oracle, seed, RATE, tol), tasks, threads)
    ve = np.array([row.value_error for row in rows]).reshape(len(n_list), M)
    se = np.array([row.solution_error for row in rows]).reshape(len(n_list), M)
    # solutions are only pinned down to the residual scale 2 tol / (alpha/8)
    z_scale = 2 * tol * (8.0 / prob.alpha) * (1.0 + prob.norm(oracle.control))
    degenerate = ve.max() <= 2 * tol and se.max() <= z_scale
    if degenerate:
        vs = vse = ss = sse = float("nan")
    else:
        vs, vse = loglog_slope(n_list, ve.mean(axis=1))
        ss, sse = loglog_slope(n_list, se.mean(axis=1))
    sqm = math.sqrt(M)
    return RateReport(
        n_list, M, seed, oracle.value, rows,
        ve.mean(axis=1), se.mean(axis=1), ve.std(axis=1, ddof=1) / sqm, se.std(axis=1, ddof=1) / sqm,
        vs, vse, ss, sse, bool(degenerate),
    )


@dataclass
class CltReport:
    n_list: list[int]
    replications: int
    seed: int
    oracle_value: float
    rows: list[ReplicationRow]
    scaled: dict[int, np.ndarray]
    std: dict[int, float]
    ratio: float
    degenerate: bool
    max_ratio: float = 2.0

    @property
    def passed(self) -> bool:
        return self.degenerate or self.ratio <= self.max_ratio


def clt_probe(
    prob: ProblemInstance,
    box: UniformBox,
    n_list,
    M: int,
    seed: int,
    oracle: OracleSolution,
    tol: float = SAA_TOL,
    threads: int = 1,
    max_ratio: float = 2.0,
) -> CltReport:
    """Spread of ``sqrt(n) (v(P_n) - v(P))`` across sample sizes."""
    _check_oracle(oracle)
    n_list = [int(n) for n in n_list]
    if M < 20:
        raise ValueError("need at least 20 replications")
    if len(n_list) < 2 or max(n_list) < 16 * min(n_list):
        raise ValueError("sample sizes must span a factor of at least 16")
    tasks = [(n, r) for n in n_list for r in range(M)]
    rows = _gather(_replicate(prob, box, oracle, seed, CLT, tol), tasks, threads)
    scaled, std = {}, {}
    for j, n in enumerate(n_list):
        vals = np.array([row.value for row in rows[j * M:(j + 1) * M]])
        scaled[n] = math.sqrt(n) * (vals - oracle.value)
        std[n] = float(np.std(scaled[n], ddof=1))
    degenerate = all(std[n] <= 2 * math.sqrt(n) * tol for n in n_list)
    ratio = float("nan") if degenerate else max(std.values()) / min(std.values())
    return CltReport(n_list, M, seed, oracle.value, rows, scaled, std, ratio, bool(degenerate), max_ratio)


# --------------------------------------------------------------------------
# subsampling


def empirical_quantile(values, level: float) -> float:
    """``inf{t : L(t) >= level}`` for the empirical distribution ``L`` of ``values``."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("no values")
    k = math.ceil(level * v.size - 1e-9)
    return float(v[min(max(k, 1), v.size) - 1])


def default_subsample_size(n: int) -> int:
    return math.ceil(n ** (2.0 / 3.0))


def _check_subsample_args(n, b, m, kappa):
    if not (2 <= b < n):
        raise ValueError(f"need 2 <= b < n, got b={b}, n={n}")
    if m < 50:
        raise ValueError(f"need m >= 50 subsamples, got {m}")
    if not 0 < kappa < 1:
        raise ValueError(f"kappa must lie in (0, 1), got {kappa}")
    if b > n / 4:
        warnings.warn(f"subsample size b={b} is not small relative to n={n}", RuntimeWarning, stacklevel=3)


@dataclass
class SubsampleReport:
    n: int
    b: int
    m: int
    kappa: float
    value: float
    subsample_values: np.ndarray
    scaled: np.ndarray
    quantile: float
    lower_bound: float
    two_sided: tuple[float, float]
    subsets: np.ndarray = field(repr=False, default=None)

    def covers(self, v) -> bool:
        return bool(v >= self.lower_bound)

    def covers_two_sided(self, v) -> bool:
        return bool(self.two_sided[0] <= v <= self.two_sided[1])


def subsample_ci(
    prob: ProblemInstance,
    sample_measure: DiscreteMeasure,
    b: int,
    m: int,
    kappa: float,
    seed=0,
    tol: float = SAA_TOL,
    cache: AtomCache | None = None,
) -> SubsampleReport:
    """Subsampling confidence interval for the optimal value.

    Draws ``m`` independent size-``b`` subsets without replacement, solves
    each subsample problem, and takes the ``1 - kappa`` empirical quantile of
    ``sqrt(b) (v* - v_n)``. Returns the one-sided interval
    ``[v_n - q / sqrt(n), inf)`` and an equal-tailed two-sided variant.
    """
    if sample_measure.kind != "empirical":
        raise ValueError("subsampling needs an empirical measure")
    n = sample_measure.n_atoms
    _check_subsample_args(n, b, m, kappa)
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed, SUBSAMPLE)
    cache = cache or AtomCache.build(prob, sample_measure.points)
    full = minimize(cache.objective(), prob.lower, prob.upper, tol)
    subsets = np.empty((m, b), dtype=np.int64)
    sub_values = np.empty(m)
    for j in range(m):
        subsets[j] = rng.choice(n, size=b, replace=False)  # partial Fisher-Yates
        sol = minimize(cache.objective(subsets[j]), prob.lower, prob.upper, tol, z0=full.control)
        sub_values[j] = sol.value
    scaled = math.sqrt(b) * (sub_values - full.value)
    q = empirical_quantile(scaled, 1.0 - kappa)
    q_lo = empirical_quantile(scaled, kappa / 2)
    q_hi = empirical_quantile(scaled, 1.0 - kappa / 2)
    rn = math.sqrt(n)
    return SubsampleReport(
        n, b, m, kappa, full.value, sub_values, scaled, q,
        full.value - q / rn, (full.value - q_hi / rn, full.value - q_lo / rn), subsets,
    )


@dataclass
class CoverageRow:
    replication: int
    value: float
    quantile: float
    lower_bound: float
    two_sided_low: float
    two_sided_high: float
    covered: bool
    covered_two_sided: bool


@dataclass
class CoverageReport:
    n: int
    b: int
    m: int
    kappa: float
    replications: int
    seed: int
    oracle_value: float
    rows: list[CoverageRow]
    quantiles: np.ndarray = field(repr=False, default=None)

    @property
    def coverage(self) -> float:
        return float(np.mean([r.covered for r in self.rows]))

    @property
    def coverage_two_sided(self) -> float:
        return float(np.mean([r.covered_two_sided for r in self.rows]))

    @property
    def mean_width(self) -> float:
        return float(np.mean([r.two_sided_high - r.two_sided_low for r in self.rows]))


def coverage_experiment(
    prob: ProblemInstance,
    box: UniformBox,
    n: int,
    b: int,
    m: int,
    kappa: float,
    R: int,
    seed: int,
    oracle: OracleSolution,
    tol: float = SAA_TOL,
    threads: int = 1,
) -> CoverageReport:
    """Empirical coverage of the oracle value by repeated subsampling intervals."""
    _check_oracle(oracle)
    if R < 100:
        raise ValueError(f"need at least 100 replications, got {R}")
    _check_subsample_args(n, b, m, kappa)

    def run(r):
        Q = sample(box, n, seed, (COVERAGE, r))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            rep = subsample_ci(prob, Q, b, m, kappa, make_rng(seed, SUBSAMPLE, r), tol)
        row = CoverageRow(
            r, rep.value, rep.quantile, rep.lower_bound, *rep.two_sided,
            rep.covers(oracle.value), rep.covers_two_sided(oracle.value),
        )
        return row, rep.scaled

    out = _gather(run, range(R), threads)
    rows = [o[0] for o in out]
    return CoverageReport(n, b, m, kappa, R, seed, oracle.value, rows, np.array([o[1] for o in out]))


# --------------------------------------------------------------------------
# stability sweep


@dataclass
class StabilitySweep:
    pairs: list[tuple[int, int]]
    reports: list[StabilityReport]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)

    @property
    def min_slack(self) -> dict:
        keys = ("value", "lipschitz", "holder")
        return {k: min(r.slacks[k] for r in self.reports) for k in keys}


def stability_sweep(
    prob: ProblemInstance,
    box: UniformBox,
    n_list,
    n_seeds: int,
    seed: int,
    oracle: OracleSolution,
    tol: float = ORACLE_TOL,
    threads: int = 1,
) -> StabilitySweep:
    """Oracle versus empirical measures for every ``(n, seed index)`` pair."""
    _check_oracle(oracle)
    oq = quadratic_objective(prob, oracle.measure)
    pairs = [(int(n), s) for n in n_list for s in range(n_seeds)]

    def run(pair):
        n, s = pair
        Q = sample(box, n, seed, (STABILITY, n, s))
        return verify_stability(prob, oq, quadratic_objective(prob, Q), tol, seed=seed,
                                sol1=oracle.solution, raise_on_violation=False)

    return StabilitySweep(pairs, _gather(run, pairs, threads))
