"""Model predictive contouring control solved by SQP."""
from .planner import MpccPlanner, build_problem, plan_cycle
from .solver import collision_margin, load_problem, save_problem, solve, stage_cost
from .types import DiscConfig, MpccProblem, MpccSolution, MpccWeights, ObstacleEllipse, SolveStatus

__all__ = [
    "DiscConfig", "MpccPlanner", "MpccProblem", "MpccSolution", "MpccWeights", "ObstacleEllipse",
    "SolveStatus", "build_problem", "collision_margin", "load_problem", "plan_cycle", "save_problem",
    "solve", "stage_cost",
]
