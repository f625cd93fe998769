"""Precedence-constrained task assignment and pathfinding for robot teams."""

from .gridworld import GridEnvironment, Path, RoutePlan, detect_conflicts, parse_environment
from .instance import Instance
from .nbs import ConfigError, Solution, SolverConfig, solve_pctapf
from .schedule import ObjectSpec, Operation, ProjectSpec

__all__ = [
    "ConfigError", "GridEnvironment", "Instance", "ObjectSpec", "Operation", "Path",
    "ProjectSpec", "RoutePlan", "Solution", "SolverConfig", "detect_conflicts",
    "parse_environment", "solve_pctapf",
]
