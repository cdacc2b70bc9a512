"""Borel summation of trans-series for rank-one nonlinear ODE systems.

The pipeline: formal trans-series coefficients -> Borel germs -> convolution
equations solved on rays in the Borel plane -> Stokes data and balanced
averaging across the singular direction -> Laplace resummation to true
solutions, cross-checked against a direct ODE integrator.
"""

from .systems import (
    SystemSpec,
    SystemValidationError,
    load_system,
    emit_system,
    validate_system,
)
from .transseries import (
    FormalSeries,
    TransSeries,
    compute_y0_series,
    compute_transseries,
    transseries_residuals,
)
from .borel import BorelGerm, borel_transform, germ_eval
from .mesh import PanelMesh, build_graded_mesh
from .convolution import convolve
from .volterra import solve_branch_family, solve_levels_ray
from .stokes import (
    StokesReport,
    balanced_average,
    check_balanced_average,
    check_resurgence,
    estimate_stokes_constant,
)
from .laplace import ResumSolution, laplace_ray, ode_oracle, sum_transseries
from .cases import OracleCase, build_case, builtin_cases, load_case
from .pipeline import PipelineSettings, case_summary, solve_case

__version__ = "0.1.0"

__all__ = [
    "SystemSpec",
    "SystemValidationError",
    "load_system",
    "emit_system",
    "validate_system",
    "FormalSeries",
    "TransSeries",
    "compute_y0_series",
    "compute_transseries",
    "transseries_residuals",
    "BorelGerm",
    "borel_transform",
    "germ_eval",
    "PanelMesh",
    "build_graded_mesh",
    "convolve",
    "solve_branch_family",
    "solve_levels_ray",
    "StokesReport",
    "balanced_average",
    "check_balanced_average",
    "check_resurgence",
    "estimate_stokes_constant",
    "ResumSolution",
    "laplace_ray",
    "ode_oracle",
    "sum_transseries",
    "OracleCase",
    "build_case",
    "builtin_cases",
    "load_case",
    "PipelineSettings",
    "case_summary",
    "solve_case",
    "__version__",
]
