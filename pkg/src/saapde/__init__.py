"""Sample average approximation for a random elliptic control problem.

Finite elements, reduced objectives, a box-constrained SAA solver and the
Monte Carlo experiments (rates, CLT spread, subsampling intervals) built
on them.
"""

from .mesh_fem import Mesh, assemble_load, assemble_mass, assemble_stiffness, build_mesh, solve_linear
from .random_field import (
    CoefficientModel,
    DiscreteMeasure,
    EllipticityViolation,
    Field,
    SourceModel,
    Term,
    UniformBox,
    kl_model,
    quadrature_measure,
    sample,
    validate_ellipticity,
)
from .reduced_objective import (
    AtomCache,
    ProblemInstance,
    integrand_gradient,
    integrand_value,
    objective,
    objective_gradient,
    quadratic_objective,
    state_solve,
)
from .saa_solver import SaaSolution, project, quadratic_growth_certificate, solve, solve_oracle
from .stability_stats import (
    clt_probe,
    coverage_experiment,
    distance_lower_bound,
    rate_experiment,
    subsample_ci,
    verify_stability,
)

__version__ = "0.1.0"
