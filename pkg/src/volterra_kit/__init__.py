"""Solvers for backward stochastic Volterra integral equations with diagonal dependence."""

from __future__ import annotations

from .bsvie import (
    BmoEstimate,
    BsdeSolution,
    BsvieSolution,
    CrossValidationReport,
    DerivativeSolution,
    estimate_bmo_norm,
    feynman_kac_check,
    picard_solve,
    reconstruct_diagonal,
    solve_bsde_mc,
    solve_bsvie_mc,
    solve_derivative_bsvie,
)
from .catalog import CATALOG, CatalogModel, build_catalog_model
from .errors import *  # noqa: F401,F403
from .forward import (
    PathEnsemble,
    TangentField,
    malliavin_derivative_x,
    simulate_paths,
    tangent_process,
)
from .model import (
    MarkovianModel,
    SpatialGrid,
    TriangularGrid,
    build_grid,
    node_index,
    scalar_model,
    validate_model,
)
from .mv import (
    MVModel,
    MVSolution,
    PolicyDecomposition,
    StateModelSpec,
    build_state_model,
    constant_coefficient_oracle,
    constant_mv,
    equilibrium_policy,
    solve_mv_system,
    validate_mv,
)
from .pde import PDESolverConfig, TwoTimeField, solve_local_pde, solve_nonlocal_pde
from .regression import Projector, RegressionBasis

__version__ = "0.1.0"
