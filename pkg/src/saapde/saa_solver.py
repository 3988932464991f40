"""Box-constrained minimization of measure-averaged objectives."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .random_field import DiscreteMeasure, UniformBox, make_rng, quadrature_measure
from .reduced_objective import ProblemInstance, QuadraticObjective, quadratic_objective

ORACLE_TOL = 1e-9
SAA_TOL = 1e-7
POWER_ITERATIONS = 20
STEP_SAFETY = 0.95


class MaxItersExceeded(RuntimeError):
    """Iteration budget exhausted; ``best`` holds the best iterate found."""

    def __init__(self, message, best: "SaaSolution"):
        super().__init__(message)
        self.best = best


class CertificateViolation(AssertionError):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


@dataclass
class SaaSolution:
    value: float
    control: np.ndarray
    iterations: int
    residual: float
    wall_time: float
    step: float = float("nan")
    restart_values: list[float] = field(default_factory=list)


def project(z, lower, upper) -> np.ndarray:
    """Nodewise clamp onto ``[lower, upper]``."""
    return np.minimum(np.maximum(np.asarray(z, dtype=float), lower), upper)


def _power_estimate(qobj: QuadraticObjective, iterations: int = POWER_ITERATIONS) -> float:
    """Largest eigenvalue of ``D^-1 H`` with ``D`` the lumped mass."""
    D = qobj.prob.lumped_mass
    h = 1.0 + 0.5 * np.cos(np.arange(len(D)) * 0.7)  # fixed start
    lam = 0.0
    for _ in range(iterations):
        h = h / np.sqrt(h @ (D * h))
        Hh = qobj.hessian @ h
        lam = h @ Hh
        h = Hh / D
    return lam


def minimize(
    qobj: QuadraticObjective,
    lower,
    upper,
    tol: float = ORACLE_TOL,
    max_iters: int = 10_000,
    z0=None,
) -> SaaSolution:
    """Accelerated projected gradient with function-value restart.

    Iterates in the lumped-mass metric ``D`` so that nodal clipping is the
    exact projection and fixed points satisfy the box KKT conditions. Stops
    when ``|z - P(z - s D^-1 F'(z))|_M <= tol (1 + |z|_M)``. The step ``s``
    starts at ``safety / lambda_max(D^-1 H)`` and is halved if the quadratic
    upper model is ever violated.
    """
    prob = qobj.prob
    t0 = time.perf_counter()
    lower = np.broadcast_to(lower, (prob.n_controls,))
    upper = np.broadcast_to(upper, (prob.n_controls,))
    if tol <= 0:
        raise ValueError("tol must be positive")
    s = STEP_SAFETY / _power_estimate(qobj)
    D = prob.lumped_mass

    z = project(0.5 * (lower + upper) if z0 is None else z0, lower, upper)
    fz = qobj.value(z)
    y, t = z, 1.0
    restarts = [fz]

    def residual(x):
        return prob.norm(x - project(x - s * qobj.lumped_gradient(x), lower, upper))

    res = residual(z)
    it = 0
    while res > tol * (1.0 + prob.norm(z)):
        if it >= max_iters:
            best = SaaSolution(fz, z, it, res, time.perf_counter() - t0, s, restarts)
            raise MaxItersExceeded(f"no convergence in {max_iters} iterations (residual {res:.3e})", best)
        it += 1
        fy = qobj.value(y)
        gy = qobj.lumped_gradient(y)
        while True:
            z_new = project(y - s * gy, lower, upper)
            d = z_new - y
            model = fy + (D * gy) @ d + (D * d) @ d / (2 * s)
            f_new = qobj.value(z_new)
            if f_new <= model + 1e-13 * (1.0 + abs(fy)):
                break
            s *= 0.5
        if f_new > fz and t > 1.0:  # a plain gradient step from z always descends
            y, t = z, 1.0
            restarts.append(fz)
            continue
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = z_new + ((t - 1.0) / t_new) * (z_new - z)
        z, fz, t = z_new, f_new, t_new
        res = residual(z)
    return SaaSolution(fz, z, it, res, time.perf_counter() - t0, s, restarts)


def solve(
    prob: ProblemInstance,
    Q: DiscreteMeasure | QuadraticObjective,
    tol: float = ORACLE_TOL,
    max_iters: int = 10_000,
    z0=None,
) -> SaaSolution:
    """Minimize ``F_Q`` over the control box of ``prob``."""
    qobj = Q if isinstance(Q, QuadraticObjective) else quadratic_objective(prob, Q)
    return minimize(qobj, prob.lower, prob.upper, tol, max_iters, z0)


@dataclass
class OracleSolution:
    """Reference solution for the uniform measure via tensor quadrature."""

    solution: SaaSolution
    nodes_per_dim: int
    measure: DiscreteMeasure
    history: list[tuple[int, float]]

    @property
    def value(self) -> float:
        return self.solution.value

    @property
    def control(self) -> np.ndarray:
        return self.solution.control


def solve_oracle(
    prob: ProblemInstance,
    box: UniformBox,
    q=None,
    value_tol: float = 1e-8,
    tol: float = ORACLE_TOL,
    q_start: int = 2,
) -> OracleSolution:
    """Solve on Gauss-Legendre measures, doubling ``q`` until values settle.

    With an explicit ``q`` no refinement is attempted.
    """
    if q is not None:
        Q = quadrature_measure(box, q)
        sol = solve(prob, Q, tol)
        return OracleSolution(sol, int(q), Q, [(int(q), sol.value)])
    q = q_start
    Q = quadrature_measure(box, q)
    sol = solve(prob, Q, tol)
    history = [(q, sol.value)]
    while True:
        Q2 = quadrature_measure(box, 2 * q)  # raises once the node cap is hit
        sol2 = solve(prob, Q2, tol)
        history.append((2 * q, sol2.value))
        if abs(sol2.value - sol.value) < value_tol:
            return OracleSolution(sol2, 2 * q, Q2, history)
        q, Q, sol = 2 * q, Q2, sol2


@dataclass
class GrowthCertificate:
    trials: int
    min_slack: float
    max_slack: float
    strong_variant_holds: bool
    slacks: np.ndarray


def random_feasible(prob: ProblemInstance, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(prob.lower, prob.upper)


def quadratic_growth_certificate(
    prob: ProblemInstance,
    Q: DiscreteMeasure | QuadraticObjective,
    solution: SaaSolution,
    trial_count: int = 100,
    seed: int = 0,
    atol: float = 1e-8,
) -> GrowthCertificate:
    """Check ``|z - z(Q)|^2 <= (8/alpha)(F_Q(z) - v(Q))`` at random feasible z.

    Also records, without asserting, whether the sharper constant ``2/alpha``
    holds on the same trials.
    """
    qobj = Q if isinstance(Q, QuadraticObjective) else quadratic_objective(prob, Q)
    rng = make_rng(seed)
    slacks = np.empty(trial_count)
    strong = True
    for i in range(trial_count):
        z = random_feasible(prob, rng)
        lhs = prob.norm(z - solution.control) ** 2
        gap = qobj.value(z) - solution.value
        slacks[i] = (8.0 / prob.alpha) * gap + atol - lhs
        strong &= lhs <= (2.0 / prob.alpha) * gap + atol
        if slacks[i] < 0:
            raise CertificateViolation(
                f"quadratic growth fails: |z - z(Q)|^2 = {lhs:.6g} > 8/alpha * {gap:.6g}", witness=z
            )
    return GrowthCertificate(
        trial_count,
        float(slacks.min()) if trial_count else float("nan"),
        float(slacks.max()) if trial_count else float("nan"),
        bool(strong),
        slacks,
    )
