"""Potential-field occupancy toolkit.

Builds physically grounded supervision maps from driving scenarios, trains
a small conv-recurrent network to reproduce them, plans trajectories by
descending either field, and benchmarks both with driving safety metrics.
"""

from .apf import ApfParams, FieldFrame, build_ideal_frame, build_ideal_sequence
from .errors import NumericError
from .evaluation import EvalReport, evaluate_suite
from .generate import generate_suite
from .network import (
    ForwardTrace,
    ModelParameters,
    finite_difference_check,
    load_checkpoint,
    model_backward,
    model_forward,
    save_checkpoint,
)
from .planner import (
    AnalyticField,
    LearnedField,
    PlannerConfig,
    Trajectory,
    plan_trajectory,
)
from .scenario import (
    GridSpec,
    Obstacle,
    OccupancyGrid,
    Scenario,
    load_scenarios,
    rasterize,
    save_suite,
)
from .training import TrainConfig, fit, make_training_sequences

__all__ = [
    "ApfParams",
    "AnalyticField",
    "EvalReport",
    "FieldFrame",
    "ForwardTrace",
    "GridSpec",
    "LearnedField",
    "ModelParameters",
    "NumericError",
    "Obstacle",
    "OccupancyGrid",
    "PlannerConfig",
    "Scenario",
    "TrainConfig",
    "Trajectory",
    "build_ideal_frame",
    "build_ideal_sequence",
    "evaluate_suite",
    "finite_difference_check",
    "fit",
    "generate_suite",
    "load_checkpoint",
    "load_scenarios",
    "make_training_sequences",
    "model_backward",
    "model_forward",
    "plan_trajectory",
    "rasterize",
    "save_checkpoint",
    "save_suite",
]
