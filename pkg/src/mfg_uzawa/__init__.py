"""Generalized Uzawa iterations for monotone variational-inequality systems,
specialized to stationary mean field games of optimal stopping, impulse
control and continuous control on the 2-D periodic grid."""

from .costs import RunningCost, eval_cost
from .errors import (
    BreakdownDetected,
    Infeasible,
    LineSearchStalled,
    MaxIterationsExceeded,
    NonContraction,
    NonMonotoneCost,
    SolverError,
)
from .grid import (
    DerivativeStencil,
    EllipticOperator,
    Field,
    GridMismatchError,
    JumpOperator,
    TorusGrid,
    apply_elliptic,
    apply_jump,
    derivative_stencil,
    grad_numerical_hamiltonian,
    inner_product,
    norm,
    numerical_hamiltonian,
    solve_elliptic,
)
from .krylov import KrylovConfig, KrylovResult, LinearMap, bicgstab_solve, cg_solve
from .mfg import (
    ErrorBound,
    IterationTrace,
    MFGIterationState,
    MFGProblem,
    MFGSolution,
    UzawaConfig,
    error_bound,
    newton_hjb,
    run,
    solve_fp_adjoint,
    transport_adjoint_apply,
    transport_apply,
    uzawa_step_continuous,
    uzawa_step_impulse,
    uzawa_step_stopping,
)
from .obstacle import (
    ComplementaritySolution,
    ConstraintSet,
    ProjectionResult,
    project_multiplier,
    solve_density_vi,
)
from .uzawa import (
    Box,
    GeneralVIProblem,
    UzawaGeneralState,
    check_step,
    inner_vi_solve,
    nonneg_orthant,
    operator_norm,
    uzawa_iterate,
    whole_space,
)

__version__ = "0.1.0"

__all__ = [
    "BreakdownDetected",
    "Box",
    "ComplementaritySolution",
    "ConstraintSet",
    "DerivativeStencil",
    "EllipticOperator",
    "ErrorBound",
    "Field",
    "GeneralVIProblem",
    "GridMismatchError",
    "Infeasible",
    "IterationTrace",
    "JumpOperator",
    "KrylovConfig",
    "KrylovResult",
    "LineSearchStalled",
    "LinearMap",
    "MFGIterationState",
    "MFGProblem",
    "MFGSolution",
    "MaxIterationsExceeded",
    "NonContraction",
    "NonMonotoneCost",
    "ProjectionResult",
    "RunningCost",
    "SolverError",
    "TorusGrid",
    "UzawaConfig",
    "UzawaGeneralState",
    "apply_elliptic",
    "apply_jump",
    "bicgstab_solve",
    "cg_solve",
    "check_step",
    "derivative_stencil",
    "error_bound",
    "eval_cost",
    "grad_numerical_hamiltonian",
    "inner_product",
    "inner_vi_solve",
    "newton_hjb",
    "nonneg_orthant",
    "norm",
    "numerical_hamiltonian",
    "operator_norm",
    "project_multiplier",
    "run",
    "solve_density_vi",
    "solve_elliptic",
    "solve_fp_adjoint",
    "transport_adjoint_apply",
    "transport_apply",
    "uzawa_iterate",
    "uzawa_step_continuous",
    "uzawa_step_impulse",
    "uzawa_step_stopping",
    "whole_space",
]
