import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_problem
from saapde.config import ExperimentConfig, build_problem
from saapde.random_field import quadrature_measure, sample
from saapde.reduced_objective import ProblemInstance, objective, objective_gradient, quadratic_objective
from saapde.saa_solver import (
    CertificateViolation,
    MaxItersExceeded,
    project,
    quadratic_growth_certificate,
    solve,
)


def test_singleton_feasible_set(small_problem):
    prob, box = small_problem
    pinned = ProblemInstance(prob.mesh, prob.coefficient, prob.source, prob.target, prob.alpha, 0.0, 0.0)
    Q = sample(box, 10, 0)
    sol = solve(pinned, Q)
    np.testing.assert_array_equal(sol.control, 0.0)
    assert sol.value == pytest.approx(objective(pinned, Q, np.zeros(prob.n_controls)), rel=1e-12)


def test_degenerate_randomness(degenerate):
    prob, box, oracle = degenerate
    tol = 1e-7
    for n in (1, 10, 100):
        sol = solve(prob, sample(box, n, n), tol)
        assert abs(sol.value - oracle.value) <= 2 * tol


def test_first_order_condition_wide_bounds(small_problem):
    prob, box = small_problem
    wide = ProblemInstance(prob.mesh, prob.coefficient, prob.source, prob.target, prob.alpha, -100, 100)
    Q = sample(box, 50, 1)
    tol = 1e-9
    sol = solve(wide, Q, tol)
    grad = quadratic_objective(wide, Q).gradient(sol.control)
    assert wide.norm(grad) <= 10 * tol


def test_matches_dense_kkt():
    # independent oracle: Hessian columns from per-atom adjoint gradients, then a dense solve
    cfg = ExperimentConfig()
    cfg.mesh.resolution = 16
    cfg.parameters.lower, cfg.parameters.upper = [-1.0], [1.0]
    cfg.coefficient.modes = cfg.coefficient.modes[:1]
    cfg.source.modes = [0.5]
    prob, box = build_problem(cfg.check())
    Q = quadrature_measure(box, 4)
    N = prob.n_controls
    g0 = objective_gradient(prob, Q, np.zeros(N))
    K = np.column_stack([objective_gradient(prob, Q, e) - g0 for e in np.eye(N)])
    z_star = np.linalg.solve(K, -g0)
    assert np.all(z_star >= prob.lower) and np.all(z_star <= prob.upper)
    sol = solve(prob, Q, 1e-10)
    assert prob.norm(sol.control - z_star) <= 1e-6
    assert sol.value == pytest.approx(objective(prob, Q, z_star), abs=1e-10)


def test_active_bounds_feasible_and_stationary():
    prob, box = make_problem(resolution=16, lower=-0.2, upper=0.25)
    Q = sample(box, 64, 3)
    sol = solve(prob, Q, 1e-9)
    z = sol.control
    assert np.all(z >= prob.lower) and np.all(z <= prob.upper)
    assert np.any(z == prob.upper)
    # box KKT conditions on the Euclidean derivative F'(z) = Hz - c
    qo = quadratic_objective(prob, Q)
    d = (qo.hessian @ z - qo.linear) / prob.lumped_mass
    at_lo, at_hi = z == prob.lower, z == prob.upper
    free = ~(at_lo | at_hi)
    assert np.abs(d[free]).max() <= 1e-7
    assert np.all(d[at_hi] <= 1e-7) and np.all(d[at_lo] >= -1e-7)


def test_restart_values_nonincreasing():
    prob, box = make_problem(resolution=16, lower=-0.2, upper=0.25)
    sol = solve(prob, sample(box, 64, 3), 1e-10)
    assert np.all(np.diff(sol.restart_values) <= 0)


def test_deterministic(small_problem):
    prob, box = small_problem
    a = solve(prob, sample(box, 100, 4), 1e-7)
    b = solve(prob, sample(box, 100, 4), 1e-7)
    assert a.value == b.value and np.array_equal(a.control, b.control)


def test_uniqueness_from_opposite_starts():
    prob, box = make_problem(resolution=16, lower=-0.2, upper=0.25)
    Q = sample(box, 64, 5)
    tol = 1e-9
    lo = solve(prob, Q, tol, z0=prob.lower)
    hi = solve(prob, Q, tol, z0=prob.upper)
    scale = 1 + max(prob.norm(lo.control), prob.norm(hi.control))
    assert prob.norm(lo.control - hi.control) <= 2 * tol * scale / (prob.alpha / 8)


def test_max_iters_carries_best(small_problem):
    prob, box = small_problem
    with pytest.raises(MaxItersExceeded) as exc:
        solve(prob, sample(box, 20, 0), 1e-15, max_iters=1)
    best = exc.value.best
    assert best.iterations == 1 and np.all(best.control <= prob.upper)


def test_project_examples():
    lo, hi = np.array([-1.0, 0.0, 2.0]), np.array([1.0, 0.5, 3.0])
    z = np.array([0.2, 0.1, 2.5])
    np.testing.assert_array_equal(project(z, lo, hi), z)
    np.testing.assert_array_equal(project(lo - 1, lo, hi), lo)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=3), st.floats(-10, 10), st.floats(0, 10))
def test_project_idempotent(z, lo, width):
    lo, hi = np.full(3, lo), np.full(3, lo + width)
    p = project(z, lo, hi)
    np.testing.assert_array_equal(project(p, lo, hi), p)
    assert np.all(p >= lo) and np.all(p <= hi)


@pytest.mark.parametrize("alpha", [0.1, 1.0])
def test_growth_certificate_random_trials(alpha):
    prob, box = make_problem(alpha=alpha)
    Q = sample(box, 512, 9)
    sol = solve(prob, Q, 1e-9)
    cert = quadratic_growth_certificate(prob, Q, sol, 100, seed=1)
    assert cert.trials == 100 and cert.min_slack >= 0
    assert cert.strong_variant_holds


def test_growth_certificate_detects_wrong_value(small_problem, small_oracle):
    prob, _ = small_problem
    fake = solve(prob, small_oracle.measure, 1e-9)
    fake.value += 1.0  # overstated optimal value makes the gap negative
    with pytest.raises(CertificateViolation) as exc:
        quadratic_growth_certificate(prob, small_oracle.measure, fake, 100)
    assert exc.value.witness is not None


def test_oracle_history(default_oracle):
    (q1, v1), (q2, v2) = default_oracle.history[-2:]
    assert q2 == 2 * q1 and abs(v1 - v2) < 1e-8
    assert default_oracle.measure.kind == "quadrature"
