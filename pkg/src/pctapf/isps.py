"""Incremental slack-prioritized route planning over an operating schedule."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .astar_sc import (
    AgentConstraints,
    BoundExceeded,
    ConflictTable,
    RoutingConstraint,
    SearchFailed,
    SearchStats,
    plan_segment,
)
from .gridworld import INF, Conflict, GridEnvironment, Path, RoutePlan, detect_conflicts
from .schedule import (
    OperatingSchedule,
    ScheduleInvalidError,
    VertexKind,
    makespan,
    update_schedule,
    validate_schedule,
)

logger = logging.getLogger(__name__)


@dataclass
class IspsOutcome:
    plan: Optional[RoutePlan]
    schedule: OperatingSchedule
    makespan: float
    conflict_count: int = 0
    conflicts: list[Conflict] = field(default_factory=list)
    reason: str = ""
    order: list[int] = field(default_factory=list)
    segments: int = 0
    expanded: int = 0
    repaired: bool = False

    @property
    def feasible(self) -> bool:
        return self.plan is not None


class _Infeasible(Exception):
    pass


def run_isps(
    G: OperatingSchedule,
    constraints: Iterable[RoutingConstraint],
    env: GridEnvironment,
    upper_bound: float = INF,
    *,
    horizon: Optional[int] = None,
    repair_rounds: int = 1,
    check: bool = True,
) -> IspsOutcome:
    """Plan every schedule vertex in minimum-slack order, then repair.

    Returns an outcome whose plan is None when a segment cannot be planned
    or the running makespan reaches ``upper_bound`` (exclusive).
    """
    if check:
        problems = validate_schedule(G)
        if problems:
            raise ScheduleInvalidError("; ".join(problems[:5]))
    constraints = tuple(constraints)
    outcome = _plan_pass(G, constraints, env, upper_bound, horizon, background=None)
    rounds = 0
    while outcome.feasible and outcome.conflict_count > 0 and rounds < repair_rounds:
        rounds += 1
        repaired = repair_plan(G, outcome.plan, constraints, env, upper_bound, horizon=horizon)
        if not repaired.feasible:
            break
        if (repaired.makespan, repaired.conflict_count) < (outcome.makespan, outcome.conflict_count):
            repaired.segments += outcome.segments
            repaired.expanded += outcome.expanded
            outcome = repaired
        else:
            break
    return outcome


def repair_plan(
    G: OperatingSchedule,
    plan: RoutePlan,
    constraints: Iterable[RoutingConstraint],
    env: GridEnvironment,
    upper_bound: float = INF,
    *,
    horizon: Optional[int] = None,
) -> IspsOutcome:
    """Second planning pass with the full prior plan in the conflict table.

    A conflict-free ``plan`` is returned untouched (with ``G`` as given).
    """
    conflicts = detect_conflicts(plan)
    if not conflicts:
        return IspsOutcome(plan, G, makespan(G), 0, [])
    out = _plan_pass(G, tuple(constraints), env, upper_bound, horizon, background=plan.paths)
    out.repaired = True
    return out


def _plan_pass(
    G_in: OperatingSchedule,
    constraints: Sequence[RoutingConstraint],
    env: GridEnvironment,
    upper_bound: float,
    horizon: Optional[int],
    background: Optional[Sequence[Path]],
) -> IspsOutcome:
    G = G_in.copy()
    update_schedule(G)
    V = G.vertices
    robot_at = sorted(G.find(VertexKind.ROBOT_AT), key=lambda v: v.robot)
    n = len(robot_at)
    paths: list[list] = [[v.start_cell] for v in robot_at]
    table = ConflictTable(background=background)
    for r in range(n):
        table.set_path(r, paths[r])
    cons = {r: AgentConstraints(r, constraints) for r in range(n)}
    max_ct = max((c.time for c in constraints), default=0)
    base = makespan(G)
    if horizon is None:
        horizon = 4 * max(base, 1) + env.width + env.height
    horizon = max(horizon, max_ct + 1)
    stats = SearchStats()
    order: list[int] = []
    seg_start: dict[int, int] = {}
    segments = 0

    def fail(reason: str) -> IspsOutcome:
        return IspsOutcome(None, G, INF, reason=reason, order=order, segments=segments,
                           expanded=stats.expanded)

    if base >= upper_bound:
        return fail("lower bound reaches upper bound")

    def delay_cap() -> float:
        if upper_bound == INF:
            return INF
        return upper_bound - makespan(G) - 1

    def plan_nav(v, release: int, hold: float) -> None:
        nonlocal segments
        r = v.robot
        path = paths[r]
        t_now = len(path) - 1
        if t_now > v.t0:
            v.t0 = t_now
        while len(path) - 1 < v.t0:
            _wait(path, cons[r], table, r)
        start = (path[-1], len(path) - 1)
        try:
            seg = plan_segment(
                table, v, cons[r], env, release,
                start=start, hold=hold, horizon=horizon, delay_cap=delay_cap(), stats=stats,
            )
        except BoundExceeded as exc:
            raise _Infeasible(f"bound: {exc}") from None
        except SearchFailed as exc:
            raise _Infeasible(str(exc)) from None
        segments += 1
        seg_start[v.id] = start[1]
        path.extend(seg.cells[1:])
        table.extend(r, seg.cells[1:])
        v.T = max(v.T, seg.completion_time)

    def collect_of(go) -> Optional[int]:
        for s in G.succs[go.id]:
            if V[s].kind is VertexKind.COLLECT:
                return s
        return None

    def handling_after(v) -> float:
        if v.is_trailing:
            return INF
        nxt = V[G.succs[v.id][0]]
        return nxt.dt

    def release_of(v) -> int:
        if v.is_trailing:
            return max(v.t0, makespan(G))
        if v.kind is VertexKind.GO:
            c = collect_of(v)
            obj = next(V[p] for p in G.preds[c] if V[p].kind is VertexKind.OBJECT_AT)
            return obj.T
        return 0

    closed: set[int] = set()
    eligible = {v for v in V if not G.preds[v]}
    try:
        while eligible:
            vid = min(eligible, key=lambda x: (V[x].slack, x))
            eligible.discard(vid)
            v = V[vid]
            order.append(vid)
            if v.kind in (VertexKind.GO, VertexKind.CARRY):
                plan_nav(v, release_of(v), handling_after(v))
            elif v.kind in (VertexKind.COLLECT, VertexKind.DEPOSIT):
                r = v.robot
                if v.kind is VertexKind.COLLECT:
                    go = next(V[p] for p in G.preds[vid] if V[p].kind is VertexKind.GO)
                    if v.t0 > go.T:
                        # object released later than the GO assumed: replan it
                        del paths[r][seg_start[go.id] + 1:]
                        table.set_path(r, paths[r])
                        plan_nav(go, v.t0, v.dt)
                        update_schedule(G)
                path = paths[r]
                if path[-1] != v.start_cell:
                    raise _Infeasible(f"robot {r} not at {v.start_cell} for {v.label()}")
                end = v.t0 + v.dt
                while len(path) - 1 < end:
                    _wait(path, cons[r], table, r)
                v.T = max(v.T, end)
            else:
                v.T = max(v.T, v.t0 + v.dt)
            closed.add(vid)
            update_schedule(G)
            if makespan(G) >= upper_bound:
                raise _Infeasible("makespan reaches upper bound")
            for s in G.succs[vid]:
                if all(p in closed for p in G.preds[s]):
                    eligible.add(s)
    except _Infeasible as exc:
        logger.debug("ISPS infeasible: %s", exc)
        return fail(str(exc))

    ms = makespan(G)
    for r in range(n):
        del paths[r][ms + 1:]
    for v in V.values():
        if v.is_trailing:
            v.T = max(v.t0, min(v.T, ms))
    plan = RoutePlan([Path(r, 0, paths[r]) for r in range(n)])
    conflicts = detect_conflicts(plan)
    return IspsOutcome(plan, G, ms, len(conflicts), conflicts, order=order,
                       segments=segments, expanded=stats.expanded)


def _wait(path: list, cons: AgentConstraints, table: ConflictTable, r: int) -> None:
    t = len(path) - 1
    if not cons.allows(path[-1], t, path[-1]):
        raise _Infeasible(f"robot {r} cannot wait on {path[-1]} at t={t + 1}")
    path.append(path[-1])
    table.extend(r, [path[-1]])
