"""Solver for the stochastic linear-quadratic control of a 1D stochastic wave
equation: P1 finite elements in space, implicit midpoint in time, and gradient
descent whose conditional expectations are computed exactly for additive noise."""

from .fem import FemMatrices, FemSpace, Mesh1D, assemble
from .noise import (
    RngConfig,
    TimeGrid,
    coarsen_path,
    sample_gaussian_path,
    sample_two_point_path,
    truncate_noise,
)
from .forward import (
    DiscreteProblem,
    ProblemData,
    StatePath,
    discretize,
    energy,
    solve_auxiliary,
    solve_forward,
)
from .backward import AdjointPath, residual_check, solve_artificial_backward
from .cost import CostBreakdown, cost_per_path, directional_derivative, monte_carlo_cost
from .descent import (
    DescentResult,
    GradientConfig,
    IterationReport,
    UnsupportedConfigurationError,
    fixed_point_residual,
    lipschitz_bound,
    run_gradient_descent,
)
from .oracle import ScenarioTree, TreeSolution, build_tree, compare_with_descent, solve_exact
from .presets import ConfigError, ExperimentConfig, build_problem, preset

__all__ = [
    "AdjointPath",
    "ConfigError",
    "CostBreakdown",
    "DescentResult",
    "DiscreteProblem",
    "ExperimentConfig",
    "FemMatrices",
    "FemSpace",
    "GradientConfig",
    "IterationReport",
    "Mesh1D",
    "ProblemData",
    "RngConfig",
    "ScenarioTree",
    "StatePath",
    "TimeGrid",
    "TreeSolution",
    "UnsupportedConfigurationError",
    "assemble",
    "build_problem",
    "build_tree",
    "coarsen_path",
    "compare_with_descent",
    "cost_per_path",
    "directional_derivative",
    "discretize",
    "energy",
    "fixed_point_residual",
    "lipschitz_bound",
    "monte_carlo_cost",
    "preset",
    "residual_check",
    "run_gradient_descent",
    "sample_gaussian_path",
    "sample_two_point_path",
    "solve_auxiliary",
    "solve_exact",
    "solve_forward",
    "truncate_noise",
]
