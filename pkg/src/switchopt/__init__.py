"""Switching-time and mode-insertion optimization for switched semilinear systems."""

from .adjoint import AdjointTrajectory, solve_adjoint
from .errors import (
    BadParams,
    BlowUp,
    ChainPropertyViolation,
    ConfigError,
    MissingReset,
    MonotonicityViolation,
    NonFiniteState,
    OutOfDomain,
    OutOfHorizon,
    ScheduleMismatch,
    SwitchingError,
    UnknownScenario,
)
from .forward import (
    HybridTrajectory,
    cost_breakdown,
    eval_trajectory,
    evaluate_cost,
    reduced_cost,
    solve_forward,
    step_segment,
)
from .gradients import (
    GradientReport,
    InsertionScan,
    compare_gradients,
    compute_gradient,
    insertion_gradient,
    insertion_scan,
    kkt_residual,
    switching_gradient,
    variational_gradient,
)
from .model import (
    CostSpec,
    HybridSystemSpec,
    ModeSpec,
    SwitchingSchedule,
    check_chain_property,
    coincidence_groups,
    validate_schedule,
)
from .optimize import OptimizerOptions, optimize_sequence, optimize_times, project_schedule
from .scenarios import ScenarioParams, build_scenario
from .sensitivity import fd_gradient, seed_variation, solve_variational
from .steppers import SolverOptions

__version__ = "0.1.0"

__all__ = [
    "AdjointTrajectory",
    "BadParams",
    "BlowUp",
    "ChainPropertyViolation",
    "ConfigError",
    "CostSpec",
    "GradientReport",
    "HybridSystemSpec",
    "HybridTrajectory",
    "InsertionScan",
    "MissingReset",
    "ModeSpec",
    "MonotonicityViolation",
    "NonFiniteState",
    "OptimizerOptions",
    "OutOfDomain",
    "OutOfHorizon",
    "ScenarioParams",
    "ScheduleMismatch",
    "SolverOptions",
    "SwitchingError",
    "SwitchingSchedule",
    "UnknownScenario",
    "build_scenario",
    "check_chain_property",
    "coincidence_groups",
    "compare_gradients",
    "compute_gradient",
    "cost_breakdown",
    "eval_trajectory",
    "evaluate_cost",
    "fd_gradient",
    "insertion_gradient",
    "insertion_scan",
    "kkt_residual",
    "optimize_sequence",
    "optimize_times",
    "project_schedule",
    "reduced_cost",
    "seed_variation",
    "solve_adjoint",
    "solve_forward",
    "solve_variational",
    "step_segment",
    "switching_gradient",
    "validate_schedule",
    "variational_gradient",
]
