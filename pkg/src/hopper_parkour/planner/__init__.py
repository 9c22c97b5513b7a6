"""Minimum-flight-time jump planning: problem model, leaf solver, search."""

from .horizon import (
    HorizonConfig,
    RecedingPlanner,
    StepResult,
    max_jump_reach,
    min_jumps,
)
from .nlp import (
    SolveOutcome,
    SolverConfig,
    WarmStart,
    WindowedChain,
    solve_windowed_chain,
    two_point_jump,
)
from .oracle import OracleConfig, OracleResult, grid_plan
from .problem import (
    BinaryAssignment,
    DecisionVars,
    Limits,
    OffsetModel,
    PlannerError,
    ResidualReport,
    Trajectory,
    clearance_heights,
    constraint_residuals,
    residual_jacobians,
)
from .search import (
    Infeasible,
    JumpSpec,
    Plan,
    SolveStats,
    assignment_from_intervals,
    initial_guess,
    plan_jumps,
    snap_target,
    solve_assignment,
)

__all__ = [
    "BinaryAssignment",
    "DecisionVars",
    "HorizonConfig",
    "Infeasible",
    "JumpSpec",
    "Limits",
    "OffsetModel",
    "OracleConfig",
    "OracleResult",
    "Plan",
    "PlannerError",
    "RecedingPlanner",
    "ResidualReport",
    "SolveOutcome",
    "SolveStats",
    "SolverConfig",
    "StepResult",
    "Trajectory",
    "WarmStart",
    "WindowedChain",
    "assignment_from_intervals",
    "clearance_heights",
    "constraint_residuals",
    "grid_plan",
    "initial_guess",
    "max_jump_reach",
    "min_jumps",
    "plan_jumps",
    "residual_jacobians",
    "snap_target",
    "solve_assignment",
    "solve_windowed_chain",
    "two_point_jump",
]
