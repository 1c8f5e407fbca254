"""Numerical Picard solver for the gradient-form Yamabe equation with Dirichlet data.

Subpackages of interest: :mod:`.geometry` (domains and the admissibility
certificate), :mod:`.poisson` (embedded-boundary Poisson solver),
:mod:`.analysis` (majorant, fixed points, Green-function constants) and
:mod:`.iteration` (the nonlinear iteration and its variants).
"""

from .analysis import ball_green_constant, majorant, smallest_fixed_point
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .geometry import Ball, Box, CertificateReport, DomainError, Polytope, check_admissibility, scale_domain
from .iteration import (
    CertificateError,
    ProblemSpec,
    Solution,
    constant_curvature_deform,
    run_iteration,
    solve_shifted,
)
from .poisson import Grid, ScalarField, build_grid, gradient, norms, solve_dirichlet

__version__ = "0.1.0"

__all__ = [
    "Ball",
    "Box",
    "Polytope",
    "DomainError",
    "CertificateReport",
    "check_admissibility",
    "scale_domain",
    "Grid",
    "ScalarField",
    "build_grid",
    "solve_dirichlet",
    "gradient",
    "norms",
    "majorant",
    "smallest_fixed_point",
    "ball_green_constant",
    "ProblemSpec",
    "Solution",
    "CertificateError",
    "run_iteration",
    "solve_shifted",
    "constant_curvature_deform",
    "ConfigError",
    "ExperimentConfig",
    "parse_config",
    "load_config",
]
