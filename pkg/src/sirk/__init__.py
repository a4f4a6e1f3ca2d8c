"""Symmetric symplectic implicit Runge-Kutta integration.

Gauss collocation schemes with bitwise-enforced symplecticity, a
real-arithmetic block decomposition that solves every simplified-Newton
stage system from floor(s/2) + 1 small LU factorizations, and a
round-off-minimizing step built on compensated summation.
"""

from .integrator import (
    NoConvergence,
    ODESystem,
    StepStats,
    TrajectoryResult,
    fixed_point_step,
    integrate,
    newton_step,
)
from .linalg import (
    DimensionMismatch,
    LUFactorization,
    SingularMatrix,
    SVDResult,
    lu_decompose,
    lu_solve,
    svd_small,
)
from .problems import (
    DoublePendulumParams,
    double_pendulum,
    harmonic_exact,
    harmonic_oscillator,
    initial_state,
)
from .stagesolver import (
    CompensatedState,
    ConvergenceMonitor,
    StageLinearSolver,
    build_solver,
    continue_iterating,
    fl32_project,
    kahan_step,
    solve_stage_system,
)
from .tableau import (
    IRKTableau,
    StageDecomposition,
    SymplecticRoundingFailure,
    UnsupportedStageCount,
    compute_decomposition,
    gauss_tableau,
    round_mu,
    stage_setup,
    verify_mu,
)

__version__ = "1.0.0"

__all__ = [
    "CompensatedState",
    "ConvergenceMonitor",
    "DimensionMismatch",
    "DoublePendulumParams",
    "IRKTableau",
    "LUFactorization",
    "NoConvergence",
    "ODESystem",
    "SVDResult",
    "SingularMatrix",
    "StageDecomposition",
    "StageLinearSolver",
    "StepStats",
    "SymplecticRoundingFailure",
    "TrajectoryResult",
    "UnsupportedStageCount",
    "build_solver",
    "compute_decomposition",
    "continue_iterating",
    "double_pendulum",
    "fixed_point_step",
    "fl32_project",
    "gauss_tableau",
    "harmonic_exact",
    "harmonic_oscillator",
    "initial_state",
    "integrate",
    "kahan_step",
    "lu_decompose",
    "lu_solve",
    "newton_step",
    "round_mu",
    "solve_stage_system",
    "stage_setup",
    "svd_small",
    "verify_mu",
]
