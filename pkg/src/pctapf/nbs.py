"""Next-best assignment search: the top-level solve loop."""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from . import assignment as asg
from .cbs import DEFAULT_BRANCH_CAP, run_cbs
from .gridworld import INF, RoutePlan
from .instance import Instance
from .schedule import InfeasibleError, OperatingSchedule, build_schedule

logger = logging.getLogger(__name__)

ProgressSink = Callable[[dict], None]


class ConfigError(ValueError):
    pass


def _env_time_limit() -> Optional[float]:
    raw = os.environ.get("PCTAPF_TIME_LIMIT")
    if not raw:
        return None
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"PCTAPF_TIME_LIMIT={raw!r} is not a number") from None


@dataclass
class SolverConfig:
    time_limit: Optional[float] = field(default_factory=_env_time_limit)
    milp_time_limit: Optional[float] = 100.0
    milp_node_limit: Optional[int] = None
    branch_cap: int = DEFAULT_BRANCH_CAP
    horizon_factor: float = 4.0
    repair_rounds: int = 1
    seed: int = 0                   # accepted for reproducible configs; the search has no randomness

    def validate(self) -> None:
        for name in ("time_limit", "milp_time_limit"):
            val = getattr(self, name)
            if val is not None and val <= 0:
                raise ConfigError(f"{name} must be positive, got {val}")
        if self.milp_node_limit is not None and self.milp_node_limit <= 0:
            raise ConfigError("milp_node_limit must be positive")
        if self.branch_cap < 0:
            raise ConfigError("branch_cap must be non-negative")
        if self.horizon_factor < 1:
            raise ConfigError("horizon_factor must be at least 1")
        if self.repair_rounds < 0:
            raise ConfigError("repair_rounds must be non-negative")


@dataclass
class Solution:
    schedule: OperatingSchedule
    plan: RoutePlan
    makespan: int
    optimal: bool
    lower_bound: float
    assignment: asg.AssignmentMatrix
    stats: dict = field(default_factory=dict)


def solve_pctapf(
    instance: Instance,
    config: Optional[SolverConfig] = None,
    progress: Optional[ProgressSink] = None,
) -> Optional[Solution]:
    """Optimal (when flagged) PC-TAPF solution, or None if none was found."""
    config = config or SolverConfig()
    config.validate()
    t_start = time.perf_counter()
    deadline = None if config.time_limit is None else t_start + config.time_limit
    env, spec, starts = instance.env, instance.spec, instance.robot_starts

    milp_limit = config.milp_time_limit
    try:
        problem = asg.formulate(spec, env, starts, time_limit=milp_limit, node_limit=config.milp_node_limit)
    except InfeasibleError as exc:
        logger.info("infeasible: %s", exc)
        if progress is not None:
            progress({"event": "infeasible", "reason": str(exc)})
        return None
    stats = dict(
        milp_solves=0, milp_time=0.0, milp_nodes=0, cbs_calls=0, cbs_branches=0,
        cbs_max_branches=0, isps_first_time=None, isps_segments=0, isps_failures=0, capped=False,
        milp_timed_out=False, timed_out=False,
    )
    best: Optional[Solution] = None
    upper = INF
    lower = 0.0
    complete = True
    # cheapest assignment whose routing search was cut short; the optimum
    # may hide behind it, so the certified bound can never pass it
    unresolved = INF
    horizon = None
    first = True

    def emit(**event):
        if progress is not None:
            event.setdefault("elapsed", time.perf_counter() - t_start)
            progress({k: (None if v == INF else v) for k, v in event.items()})

    while upper > lower:
        if deadline is not None and time.perf_counter() > deadline and not first:
            stats["timed_out"] = True
            complete = False
            break
        if deadline is not None:
            remaining = max(deadline - time.perf_counter(), 1e-3)
            limit = remaining if milp_limit is None else min(milp_limit, remaining)
            problem = replace(problem, time_limit=limit)
        try:
            sol = asg.solve(problem, incumbent_bound=upper, floor=lower)
        except asg.AssignmentExhausted:
            if first:
                emit(event="infeasible")
                return None
            lower = upper
            break
        first = False
        stats["milp_solves"] += 1
        stats["milp_time"] += sol.runtime
        stats["milp_nodes"] += sol.nodes
        lower = max(lower, sol.lower_bound)
        if not sol.proven_optimal:
            stats["milp_timed_out"] = True
            complete = False
        if horizon is None:
            horizon = int(config.horizon_factor * max(sol.makespan, 1)) + env.width + env.height
        emit(event="assignment", iteration=stats["milp_solves"], lower=lower, upper=upper,
             makespan=sol.makespan, proven=sol.proven_optimal)
        if upper > lower:
            G = build_schedule(spec, env, sol.A, starts)
            res = run_cbs(
                env, G, upper,
                branch_cap=config.branch_cap, deadline=deadline,
                horizon=horizon, repair_rounds=config.repair_rounds,
            )
            stats["cbs_calls"] += 1
            stats["cbs_branches"] += res.branches
            stats["isps_failures"] += res.isps_failures
            stats["cbs_max_branches"] = max(stats["cbs_max_branches"], res.branches)
            if stats["isps_first_time"] is None:
                stats["isps_first_time"] = res.root_time
            if res.root_outcome is not None:
                stats["isps_segments"] += res.root_outcome.segments
            if not res.complete:
                complete = False
                unresolved = min(unresolved, sol.makespan)
                stats["capped"] = stats["capped"] or res.capped
                stats["timed_out"] = stats["timed_out"] or res.timed_out
            if res.outcome is not None and res.makespan < upper:
                upper = res.makespan
                best = Solution(res.outcome.schedule, res.outcome.plan, int(res.makespan),
                                False, lower, sol.A, stats)
            emit(event="route", iteration=stats["milp_solves"], lower=lower, upper=upper,
                 branches=res.branches, found=res.outcome is not None)
            problem = asg.add_exclusion(problem, sol.A)
        if not sol.proven_optimal and best is not None:
            # a timed-out assignment bound cannot certify anything further
            break

    if best is None:
        emit(event="no-solution")
        return None
    best.lower_bound = min(lower, upper, unresolved)
    best.optimal = complete and upper <= lower
    stats["wall_time"] = time.perf_counter() - t_start
    best.stats = stats
    emit(event="done", makespan=best.makespan, optimal=best.optimal, lower=best.lower_bound)
    return best
