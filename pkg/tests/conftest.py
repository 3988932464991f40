import numpy as np
import pytest

from saapde.config import ExperimentConfig, build_problem
from saapde.mesh_fem import build_mesh
from saapde.random_field import CoefficientModel, SourceModel, UniformBox, constant
from saapde.reduced_objective import ProblemInstance
from saapde.saa_solver import solve_oracle

ACCEPTANCE_LINES = []


def make_problem(resolution=32, alpha=0.1, lower=-2.0, upper=2.0):
    cfg = ExperimentConfig()
    cfg.mesh.resolution = resolution
    cfg.alpha = alpha
    cfg.bounds.lower, cfg.bounds.upper = lower, upper
    return build_problem(cfg.check())


def degenerate_problem(resolution=16, d=2):
    """Coefficient and source do not depend on the parameters."""
    mesh = build_mesh("interval", resolution)
    coef = CoefficientModel(constant(2.0), tuple(constant(0.0) for _ in range(d)), 1.0, 3.0)
    src = SourceModel(constant(1.0), tuple(constant(0.0) for _ in range(d)))
    target = np.sin(np.pi * mesh.vertices[:, 0])
    return ProblemInstance(mesh, coef, src, target, 0.1, -2.0, 2.0), UniformBox.symmetric(d)


@pytest.fixture(scope="session")
def default_problem():
    return make_problem()


@pytest.fixture(scope="session")
def small_problem():
    return make_problem(resolution=8)


@pytest.fixture(scope="session")
def default_oracle(default_problem):
    prob, box = default_problem
    return solve_oracle(prob, box)


@pytest.fixture(scope="session")
def small_oracle(small_problem):
    prob, box = small_problem
    return solve_oracle(prob, box)


@pytest.fixture(scope="session")
def degenerate():
    prob, box = degenerate_problem()
    return prob, box, solve_oracle(prob, box)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
