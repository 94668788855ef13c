"""Model-function conditional gradient solvers for constrained non-smooth
non-convex minimization, with proximal baselines and a regression benchmark.
"""

from .geometry import (
    Box,
    ConstraintSet,
    L1Ball,
    L2Ball,
    NuclearBall,
    PowerGrowth,
    ProductSet,
    Simplex,
    psd_projection,
)
from .inner import PiecewiseLinearSubproblem, pdhg_solve, primal_dual_gap
from .models import (
    AdditiveCompositeOracle,
    BlockHybridOracle,
    GaussNewtonOracle,
    L1Loss,
    LinearModelOracle,
    NewtonModelOracle,
    WeightedL1,
    ZeroPenalty,
    model_improvement,
    verify_model_error,
)
from .baselines import ProxLinearConfig, prox_linear_bt_solve, prox_linear_ls_solve
from .solver import (
    InnerTolerance,
    LineSearchParams,
    SolverConfig,
    SolverTrace,
    armijo_search,
    mcgm_solve,
    rate_certificate,
    stationarity_measure,
)
from .regression import generate_regression_data, load_dataset, save_dataset
from .runner import run_comparison

__all__ = [
    "Box",
    "ConstraintSet",
    "L1Ball",
    "L2Ball",
    "NuclearBall",
    "PowerGrowth",
    "ProductSet",
    "Simplex",
    "psd_projection",
    "PiecewiseLinearSubproblem",
    "pdhg_solve",
    "primal_dual_gap",
    "AdditiveCompositeOracle",
    "BlockHybridOracle",
    "GaussNewtonOracle",
    "L1Loss",
    "LinearModelOracle",
    "NewtonModelOracle",
    "WeightedL1",
    "ZeroPenalty",
    "model_improvement",
    "verify_model_error",
    "ProxLinearConfig",
    "prox_linear_bt_solve",
    "prox_linear_ls_solve",
    "InnerTolerance",
    "LineSearchParams",
    "SolverConfig",
    "SolverTrace",
    "armijo_search",
    "mcgm_solve",
    "rate_certificate",
    "stationarity_measure",
    "generate_regression_data",
    "load_dataset",
    "save_dataset",
    "run_comparison",
]

__version__ = "0.1.0"
