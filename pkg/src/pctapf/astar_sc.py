"""Space-time A* ordered by the cascading (delay, conflicts, f, h) cost."""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, NamedTuple, Optional, Sequence

from .gridworld import INF, MOVES, Cell, GridEnvironment, Path, RoutePlan

logger = logging.getLogger(__name__)


class SearchFailed(Exception):
    """Open set exhausted without reaching the goal."""


class BoundExceeded(SearchFailed):
    """Every remaining route delays the project past the caller's cap."""


class UnreachableGoal(SearchFailed):
    pass


class ConstraintKind(str, Enum):
    STATE = "STATE"
    ACTION = "ACTION"


@dataclass(frozen=True, order=True)
class RoutingConstraint:
    agent: int
    time: int
    kind: ConstraintKind
    cells: tuple[Cell, ...]

    def __str__(self) -> str:
        where = "->".join(map(str, self.cells))
        return f"<{self.kind.value} r{self.agent} {where} t={self.time}>"


class AgentConstraints:
    """Constraints of one agent, indexed for O(1) checks."""

    def __init__(self, agent: int, constraints: Iterable[RoutingConstraint] = ()):
        self.agent = agent
        self.states: set[tuple[Cell, int]] = set()
        self.actions: set[tuple[Cell, Cell, int]] = set()
        self.last_state_time: dict[Cell, int] = {}
        self.max_time = -1
        for c in constraints:
            if c.agent != agent:
                continue
            self.max_time = max(self.max_time, c.time)
            if c.kind is ConstraintKind.STATE:
                cell = c.cells[0]
                self.states.add((cell, c.time))
                self.last_state_time[cell] = max(self.last_state_time.get(cell, -1), c.time)
            else:
                self.actions.add((c.cells[0], c.cells[1], c.time))

    def allows(self, a: Cell, t: int, b: Cell) -> bool:
        """Is the move a@t -> b@t+1 permitted?"""
        if (b, t + 1) in self.states:
            return False
        return (a, b, t) not in self.actions

    def can_hold(self, cell: Cell, t: int, until: float) -> bool:
        """Can the agent stay on ``cell`` over (t, until]?"""
        last = self.last_state_time.get(cell, -1)
        if last <= t:
            return True
        if until == INF:
            return False
        return not any((cell, s) in self.states for s in range(t + 1, int(until) + 1))


def index_constraints(constraints: Iterable[RoutingConstraint], agent: int) -> AgentConstraints:
    return AgentConstraints(agent, constraints)


class CostTuple(NamedTuple):
    delay: float
    conflicts: int
    f: float
    h: float


class ConflictTable:
    """Occupancy of other robots, queried by (cell, time).

    Robots persist on their final cell after their path ends.  An optional
    background path per robot stands in for the part of its trajectory not
    yet replanned (used by the repair pass).
    """

    def __init__(self, paths: Iterable[Path] = (), background: Optional[Sequence[Path]] = None):
        self.occ: dict[tuple[Cell, int], set[int]] = {}
        self.end: dict[int, int] = {}
        self.final: dict[int, Cell] = {}
        self.parked: dict[Cell, set[int]] = {}
        self.bg_occ: dict[tuple[Cell, int], set[int]] = {}
        self.bg_end: dict[int, int] = {}
        self.bg_parked: dict[Cell, set[int]] = {}
        self.horizon = 0
        if background is not None:
            for p in background:
                self._add_background(p)
        for p in paths:
            self.set_path(p.agent, p.cells, p.start_time)

    def _add_background(self, path: Path) -> None:
        a = path.agent
        for k, cell in enumerate(path.cells):
            self.bg_occ.setdefault((cell, path.start_time + k), set()).add(a)
        self.bg_end[a] = path.completion_time
        self.bg_parked.setdefault(path.cells[-1], set()).add(a)
        self.horizon = max(self.horizon, path.completion_time)

    def set_path(self, agent: int, cells: Sequence[Cell], start_time: int = 0) -> None:
        self.remove(agent)
        for k, cell in enumerate(cells):
            self.occ.setdefault((cell, start_time + k), set()).add(agent)
        self.end[agent] = start_time + len(cells) - 1
        self.final[agent] = cells[-1]
        self.parked.setdefault(cells[-1], set()).add(agent)
        self.horizon = max(self.horizon, self.end[agent])

    def extend(self, agent: int, cells: Sequence[Cell]) -> None:
        """Append cells after the agent's current end."""
        if not cells:
            return
        t = self.end[agent]
        self.parked[self.final[agent]].discard(agent)
        for k, cell in enumerate(cells, start=1):
            self.occ.setdefault((cell, t + k), set()).add(agent)
        self.end[agent] = t + len(cells)
        self.final[agent] = cells[-1]
        self.parked.setdefault(cells[-1], set()).add(agent)
        self.horizon = max(self.horizon, self.end[agent])

    def truncate(self, agent: int, new_end: int, cells_from_zero: Sequence[Cell]) -> None:
        self.set_path(agent, cells_from_zero[: new_end + 1], 0)

    def remove(self, agent: int) -> None:
        if agent not in self.end:
            return
        for key in [k for k, s in self.occ.items() if agent in s]:
            self.occ[key].discard(agent)
            if not self.occ[key]:
                del self.occ[key]
        self.parked[self.final[agent]].discard(agent)
        del self.end[agent]
        del self.final[agent]

    def occupants(self, cell: Cell, t: int) -> set[int]:
        out = set(self.occ.get((cell, t), ()))
        for a in self.parked.get(cell, ()):
            if t > self.end[a] and a not in self.bg_end:
                out.add(a)
        if self.bg_end:
            for a in self.bg_occ.get((cell, t), ()):
                if t > self.end.get(a, -1):
                    out.add(a)
            for a in self.bg_parked.get(cell, ()):
                if t > self.bg_end[a] and t > self.end.get(a, -1):
                    out.add(a)
        return out

    def step_conflicts(self, agent: int, a: Cell, t: int, b: Cell) -> int:
        """Other robots in conflict with the move a@t -> b@t+1."""
        hit = self.occupants(b, t + 1)
        if a != b:
            swap = self.occupants(b, t)
            if swap:
                hit |= swap & self.occupants(a, t + 1)
        hit.discard(agent)
        return len(hit)


def count_conflicts(path: Path, table: ConflictTable) -> int:
    total = 0
    for k in range(len(path.cells) - 1):
        total += table.step_conflicts(path.agent, path.cells[k], path.start_time + k, path.cells[k + 1])
    return total


def heuristic_cost(path: Path, table: ConflictTable, v, env: GridEnvironment, release: int = 0) -> CostTuple:
    """Cost tuple of a (partial) path toward navigation vertex ``v``."""
    end = path.cells[-1]
    T = path.completion_time
    h = 0 if v.goal_cell is None else env.dist(end, v.goal_cell)
    if h == INF:
        raise UnreachableGoal(f"{v.goal_cell} unreachable from {end}")
    h = max(h, release - T)
    c1 = max(0, T + h - (v.T + v.slack))
    return CostTuple(c1, count_conflicts(path, table), len(path.cells) - 1 + h, h)


def expand(
    cell: Cell,
    t: int,
    env: GridEnvironment,
    constraints: AgentConstraints,
) -> list[tuple[Cell, int]]:
    """Successor (cell, time) states under the agent's constraints."""
    out = []
    for dr, dc in MOVES:
        nb = (cell[0] + dr, cell[1] + dc)
        if env.is_free(nb) and constraints.allows(cell, t, nb):
            out.append((nb, t + 1))
    return out


@dataclass
class SearchStats:
    expanded: int = 0
    generated: int = 0


def plan_segment(
    table: ConflictTable | RoutePlan,
    v,
    constraints: AgentConstraints | Iterable[RoutingConstraint],
    env: GridEnvironment,
    release_time: int = 0,
    *,
    start: Optional[tuple[Cell, int]] = None,
    hold: float = 0,
    horizon: Optional[int] = None,
    delay_cap: float = INF,
    stats: Optional[SearchStats] = None,
    trace: Optional[list] = None,
) -> Path:
    """Cost-minimal path for navigation vertex ``v``.

    Starts at ``start`` (default: ``v.start_cell`` at ``v.t0``) and ends on
    ``v.goal_cell`` (any cell when the goal is None) at a time no earlier
    than ``release_time``, from where the robot can stay put for ``hold``
    further steps without violating a constraint.
    """
    agent = v.robot
    if isinstance(table, RoutePlan):
        table = ConflictTable([p for p in table.paths if p.agent != agent])
    if not isinstance(constraints, AgentConstraints):
        constraints = AgentConstraints(agent, constraints)
    start_cell, t0 = start if start is not None else (v.start_cell, v.t0)
    deadline = v.T + v.slack
    goal = v.goal_cell
    if goal is not None and env.dist(start_cell, goal) == INF:
        raise UnreachableGoal(f"{goal} unreachable from {start_cell}")
    if horizon is None:
        horizon = t0 + release_time + 4 * (env.width + env.height) + constraints.max_time + 1
    horizon = max(horizon, release_time, constraints.max_time + 1)

    cells = env.free_cells
    cell_id = env.cell_id
    nbrs = env._neighbors
    dist_row = env.dist_row(goal) if goal is not None else None
    goal_id = cell_id(goal) if goal is not None else -1
    hold_until_rel = hold

    def heur(cid: int, t: int) -> float:
        d = 0 if dist_row is None else int(dist_row[cid])
        if d < 0:
            return INF
        r = release_time - t
        return d if d >= r else r

    def is_goal(cid: int, t: int) -> bool:
        if t < release_time:
            return False
        if goal_id >= 0 and cid != goal_id:
            return False
        until = INF if hold_until_rel == INF else t + hold_until_rel
        return constraints.can_hold(cells[cid], t, until)

    sid = cell_id(start_cell)
    h0 = heur(sid, t0)
    best: dict[tuple[int, int], int] = {(sid, t0): 0}
    parent: dict[tuple[int, int], Optional[int]] = {(sid, t0): None}
    counter = 0
    open_: list = [(max(0, t0 + h0 - deadline), 0, h0, h0, -t0, sid, counter, t0)]
    capped = False
    expanded = 0
    while open_:
        c1, c2, c3, h, _, cid, _, t = heapq.heappop(open_)
        if best.get((cid, t), INF) < c2:
            continue
        expanded += 1
        if trace is not None:
            trace.append((cells[cid], t, (c1, c2, c3, h)))
        if is_goal(cid, t):
            if stats is not None:
                stats.expanded += expanded
                stats.generated += counter
            out = [cells[cid]]
            key = (cid, t)
            while parent[key] is not None:
                prev = parent[key]
                key = (prev, key[1] - 1)
                out.append(cells[prev])
            out.reverse()
            return Path(agent, t0, out)
        if t >= horizon:
            continue
        here = cells[cid]
        for nid in (cid, *nbrs[cid]):
            there = cells[nid]
            if not constraints.allows(here, t, there):
                continue
            t2 = t + 1
            h2 = heur(nid, t2)
            if h2 == INF:
                continue
            d1 = t2 + h2 - deadline
            if d1 < 0:
                d1 = 0
            if d1 > delay_cap:
                capped = True
                continue
            n2 = c2 + table.step_conflicts(agent, here, t, there)
            key = (nid, t2)
            if best.get(key, INF) <= n2:
                continue
            best[key] = n2
            parent[key] = cid
            counter += 1
            heapq.heappush(open_, (d1, n2, t2 - t0 + h2, h2, -t2, nid, counter, t2))
    if stats is not None:
        stats.expanded += expanded
        stats.generated += counter
    if capped:
        raise BoundExceeded(f"robot {agent}: every route to {goal} exceeds the delay cap")
    raise SearchFailed(f"robot {agent}: no route to {goal} from {start_cell}@{t0}")
