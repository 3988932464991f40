import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from saapde.random_field import DiscreteMeasure, quadrature_measure, sample
from saapde.reduced_objective import quadratic_objective
from saapde.saa_solver import solve
from saapde.stability_stats import (
    clt_probe,
    coverage_experiment,
    default_subsample_size,
    distance_lower_bound,
    empirical_quantile,
    feasible_grid,
    loglog_slope,
    rate_experiment,
    stability_sweep,
    subsample_ci,
    verify_stability,
)

# -- distances


def test_distance_zero_for_equal_measures(small_problem):
    prob, box = small_problem
    Q = sample(box, 30, 1)
    W = feasible_grid(prob, 10)
    for kind in ("mi", "di"):
        assert distance_lower_bound(prob, Q, Q, W, kind).value == 0.0


def test_distance_bounds_value_gap(small_problem, small_oracle):
    prob, box = small_problem
    Q = sample(box, 64, 2)
    sol = solve(prob, Q)
    d = distance_lower_bound(prob, small_oracle.measure, Q, [sol.control, small_oracle.control])
    assert abs(sol.value - small_oracle.value) <= d.value + 1e-12


def test_distance_monotone_in_witnesses(small_problem):
    prob, box = small_problem
    Q1, Q2 = sample(box, 20, 3), sample(box, 20, 4)
    W = feasible_grid(prob, 30, seed=1)
    for kind in ("mi", "di"):
        vals = [distance_lower_bound(prob, Q1, Q2, W[:k], kind).value for k in (1, 5, 30)]
        assert vals[0] <= vals[1] <= vals[2]


def test_distance_empty_witnesses(small_problem):
    prob, box = small_problem
    Q = sample(box, 5, 0)
    with pytest.raises(ValueError):
        distance_lower_bound(prob, Q, Q, [])
    with pytest.raises(ValueError):
        distance_lower_bound(prob, Q, Q, feasible_grid(prob, 2), kind="wasserstein")


@pytest.fixture(scope="module")
def three_measures(small_problem):
    prob, box = small_problem
    return prob, [quadratic_objective(prob, sample(box, 15, s)) for s in (5, 6, 7)]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["mi", "di"]))
def test_distance_pseudometric(three_measures, seed, kind):
    prob, (a, b, c) = three_measures
    W = feasible_grid(prob, 5, seed)
    d = lambda p, q: distance_lower_bound(prob, p, q, W, kind).value  # noqa: E731
    assert d(a, b) == pytest.approx(d(b, a), rel=1e-12, abs=1e-15)
    assert d(a, c) <= d(a, b) + d(b, c) + 1e-12


def test_feasible_grid(small_problem):
    prob, _ = small_problem
    W = feasible_grid(prob, 50, seed=3)
    assert len(W) == 50
    assert all(np.all(w >= prob.lower) and np.all(w <= prob.upper) for w in W)
    np.testing.assert_array_equal(W[7], feasible_grid(prob, 50, seed=3)[7])


# -- stability inequalities


def test_verify_equal_measures(small_problem):
    prob, box = small_problem
    Q = sample(box, 40, 8)
    rep = verify_stability(prob, Q, Q)
    assert rep.value_gap == 0.0 and rep.solution_gap == 0.0 and rep.passed


def test_verify_oracle_vs_sample(default_problem, default_oracle):
    prob, box = default_problem
    rep = verify_stability(prob, default_oracle.measure, sample(box, 256, 7), sol1=default_oracle.solution)
    assert rep.passed
    assert rep.value_gap <= rep.d_mi + 1e-7
    assert rep.solution_gap <= rep.lipschitz_bound + 1e-7
    assert rep.solution_gap <= rep.holder_bound + 1e-7
    assert rep.d_mi_grid >= rep.d_mi


def test_verify_point_mass(small_problem, small_oracle):
    prob, box = small_problem
    rep = verify_stability(prob, small_oracle.measure, DiscreteMeasure.point_mass(box.center))
    assert rep.passed and rep.solution_gap > 0


def test_stability_sweep(small_problem, small_oracle):
    prob, box = small_problem
    sweep = stability_sweep(prob, box, [64, 256], 3, 11, small_oracle)
    assert len(sweep.reports) == 6 and sweep.passed
    assert all(v >= -1e-7 for v in sweep.min_slack.values())


# -- rates and CLT


def test_loglog_slope_exact():
    n = np.array([10, 100, 1000])
    slope, se = loglog_slope(n, 3 * n**-0.5)
    assert slope == pytest.approx(-0.5, abs=1e-12) and se == pytest.approx(0.0, abs=1e-12)


def test_rate_degenerate(degenerate):
    prob, box, oracle = degenerate
    rep = rate_experiment(prob, box, [16, 32, 64], 20, 0, oracle)
    assert rep.degenerate and math.isnan(rep.value_slope)
    assert max(r.value_error for r in rep.rows) <= 2e-7


def test_rate_rejects(small_problem, small_oracle):
    prob, box = small_problem
    with pytest.raises(ValueError):
        rate_experiment(prob, box, [16, 32, 64], 19, 0, small_oracle)
    with pytest.raises(ValueError):
        rate_experiment(prob, box, [16, 32], 20, 0, small_oracle)
    with pytest.raises(TypeError):
        rate_experiment(prob, box, [16, 32, 64], 20, 0, small_oracle.solution)


def test_rate_threads_bitwise(small_problem, small_oracle):
    prob, box = small_problem
    a = rate_experiment(prob, box, [16, 32, 64], 20, 5, small_oracle, threads=1)
    b = rate_experiment(prob, box, [16, 32, 64], 20, 5, small_oracle, threads=3)
    assert [(r.n, r.replication, r.value) for r in a.rows] == [(r.n, r.replication, r.value) for r in b.rows]
    assert a.value_slope == b.value_slope


def test_clt_degenerate(degenerate):
    prob, box, oracle = degenerate
    rep = clt_probe(prob, box, [8, 32, 128], 20, 0, oracle)
    assert rep.degenerate and rep.passed


def test_clt_rejects_short_span(small_problem, small_oracle):
    prob, box = small_problem
    with pytest.raises(ValueError):
        clt_probe(prob, box, [64, 512], 20, 0, small_oracle)


# -- subsampling


def test_quantile_example():
    assert empirical_quantile([-1, 0, 1, 2], 0.75) == 1.0
    assert empirical_quantile([2, -1, 1, 0], 0.5) == 0.0
    assert empirical_quantile([3.0], 0.9) == 3.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=50), st.floats(0.01, 0.99))
def test_quantile_is_generalized_inverse(values, level):
    q = empirical_quantile(values, level)
    v = np.array(values)
    assert np.mean(v <= q) >= level - 1e-9
    below = v[v < q]
    if below.size:
        assert np.mean(v <= below.max()) < level + 1e-9


def test_default_subsample_size():
    assert default_subsample_size(4096) == 256
    assert default_subsample_size(1000) == 100


def test_subsample_degenerate(degenerate):
    prob, box, oracle = degenerate
    rep = subsample_ci(prob, sample(box, 256, 0), 16, 50, 0.1)
    assert rep.two_sided[1] - rep.two_sided[0] <= 1e-9
    assert abs(rep.value - oracle.value) <= 2e-7
    assert abs(rep.lower_bound - oracle.value) <= 2e-7


def test_subsample_subsets(small_problem):
    prob, box = small_problem
    rep = subsample_ci(prob, sample(box, 200, 1), 20, 50, 0.1, seed=4)
    assert rep.subsets.shape == (50, 20)
    assert all(len(set(row)) == 20 for row in rep.subsets)
    assert rep.subsets.min() >= 0 and rep.subsets.max() < 200
    assert rep.two_sided[0] <= rep.value - rep.quantile / math.sqrt(200) <= rep.two_sided[1] + 1e-15
    again = subsample_ci(prob, sample(box, 200, 1), 20, 50, 0.1, seed=4)
    np.testing.assert_array_equal(rep.subsets, again.subsets)
    assert rep.lower_bound == again.lower_bound


@pytest.mark.parametrize("b,m,kappa", [(1, 50, 0.1), (200, 50, 0.1), (20, 49, 0.1), (20, 50, 0.0), (20, 50, 1.0)])
def test_subsample_rejects(small_problem, b, m, kappa):
    prob, box = small_problem
    with pytest.raises(ValueError):
        subsample_ci(prob, sample(box, 200, 1), b, m, kappa)


def test_subsample_rejects_quadrature(small_problem):
    prob, box = small_problem
    with pytest.raises(ValueError):
        subsample_ci(prob, quadrature_measure(box, 4), 4, 50, 0.1)


def test_subsample_warns_large_b(small_problem):
    prob, box = small_problem
    with pytest.warns(RuntimeWarning):
        subsample_ci(prob, sample(box, 60, 1), 59, 50, 0.1)


def test_coverage_rejects_few_replications(small_problem, small_oracle):
    prob, box = small_problem
    with pytest.raises(ValueError):
        coverage_experiment(prob, box, 256, 32, 50, 0.1, 10, 0, small_oracle)


def test_coverage_threads_bitwise(small_problem, small_oracle):
    prob, box = small_problem
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        runs = [coverage_experiment(prob, box, 128, 16, 50, 0.1, 100, 2, small_oracle, threads=t) for t in (1, 2)]
    assert [r.lower_bound for r in runs[0].rows] == [r.lower_bound for r in runs[1].rows]
    np.testing.assert_array_equal(runs[0].quantiles, runs[1].quantiles)


@pytest.mark.slow
def test_coverage_at_median_level(default_problem, default_oracle):
    prob, box = default_problem
    rep = coverage_experiment(prob, box, 4096, 256, 200, 0.5, 200, 13, default_oracle)
    assert 0.35 <= rep.coverage <= 0.65
