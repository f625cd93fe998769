"""Conflict-based search over routing constraints, one ISPS call per node."""

from __future__ import annotations

import heapq
import itertools
import logging
import time
from dataclasses import dataclass, field
from typing import Optional

from .astar_sc import ConstraintKind, RoutingConstraint
from .gridworld import INF, Conflict, ConflictKind, GridEnvironment
from .isps import IspsOutcome, run_isps
from .schedule import OperatingSchedule

logger = logging.getLogger(__name__)

DEFAULT_BRANCH_CAP = 100


@dataclass
class CbsNode:
    id: int
    constraints: frozenset[RoutingConstraint]
    outcome: IspsOutcome
    depth: int = 0

    @property
    def cost(self) -> float:
        return self.outcome.makespan

    @property
    def conflicts(self) -> list[Conflict]:
        return self.outcome.conflicts

    def key(self) -> tuple:
        return (self.cost, len(self.conflicts), self.depth, self.id)


@dataclass
class CbsResult:
    outcome: Optional[IspsOutcome]
    makespan: float
    branches: int = 0
    nodes: int = 0
    # ISPS passes that failed for a reason other than the upper bound
    isps_failures: int = 0
    capped: bool = False
    timed_out: bool = False
    root_outcome: Optional[IspsOutcome] = None
    root_time: float = 0.0
    stats: dict = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        """True unless a budget cut the search short."""
        return not (self.capped or self.timed_out)


def branch_constraints(node_agent_constraints: frozenset, conflict: Conflict):
    """The two mutually exclusive constraint sets that resolve ``conflict``."""
    i, j = conflict.agents
    if conflict.kind is ConflictKind.STATE:
        cell = conflict.cells[0]
        a = RoutingConstraint(i, conflict.time, ConstraintKind.STATE, (cell,))
        b = RoutingConstraint(j, conflict.time, ConstraintKind.STATE, (cell,))
    else:
        x, y = conflict.cells
        a = RoutingConstraint(i, conflict.time, ConstraintKind.ACTION, (x, y))
        b = RoutingConstraint(j, conflict.time, ConstraintKind.ACTION, (y, x))
    return node_agent_constraints | {a}, node_agent_constraints | {b}


class ConflictBasedSearch:
    def __init__(
        self,
        env: GridEnvironment,
        G: OperatingSchedule,
        upper_bound: float = INF,
        *,
        branch_cap: int = DEFAULT_BRANCH_CAP,
        deadline: Optional[float] = None,
        horizon: Optional[int] = None,
        repair_rounds: int = 1,
    ):
        self.env = env
        self.G = G
        self.upper_bound = upper_bound
        self.branch_cap = branch_cap
        self.deadline = deadline
        self.horizon = horizon
        self.repair_rounds = repair_rounds
        self._ids = itertools.count()
        self.nodes = 0
        self.branches = 0
        self.isps_failures = 0

    def _node(self, constraints: frozenset, depth: int, check: bool = False) -> Optional[CbsNode]:
        outcome = run_isps(
            self.G, constraints, self.env, self.upper_bound,
            horizon=self.horizon, repair_rounds=self.repair_rounds, check=check,
        )
        self.nodes += 1
        if not outcome.feasible:
            if "upper bound" not in outcome.reason:
                self.isps_failures += 1
            return None
        return CbsNode(next(self._ids), constraints, outcome, depth)

    def branch(self, node: CbsNode, conflict: Conflict) -> tuple[Optional[CbsNode], Optional[CbsNode]]:
        """Children for ``conflict``; an infeasible child comes back as None."""
        self.branches += 1
        left, right = branch_constraints(node.constraints, conflict)
        return self._node(left, node.depth + 1), self._node(right, node.depth + 1)

    def run(self) -> CbsResult:
        t0 = time.perf_counter()
        root = self._node(frozenset(), 0, check=True)
        root_time = time.perf_counter() - t0
        res = CbsResult(None, INF, root_outcome=root.outcome if root else None, root_time=root_time)
        if root is None:
            return self._finish(res)
        heap = [(root.key(), root)]
        best_valid: Optional[CbsNode] = root if not root.conflicts else None
        while heap:
            _, node = heapq.heappop(heap)
            if node.cost >= self.upper_bound:
                break
            if not node.conflicts:
                res.outcome, res.makespan = node.outcome, node.cost
                return self._finish(res)
            if self.branches >= self.branch_cap:
                res.capped = True
                break
            if self.deadline is not None and time.perf_counter() > self.deadline:
                res.timed_out = True
                break
            for child in self.branch(node, node.conflicts[0]):
                if child is None:
                    continue
                heapq.heappush(heap, (child.key(), child))
                if not child.conflicts and (best_valid is None or child.key() < best_valid.key()):
                    best_valid = child
        if (res.capped or res.timed_out) and best_valid is not None and best_valid.cost < self.upper_bound:
            res.outcome, res.makespan = best_valid.outcome, best_valid.cost
        return self._finish(res)

    def _finish(self, res: CbsResult) -> CbsResult:
        res.branches = self.branches
        res.nodes = self.nodes
        res.isps_failures = self.isps_failures
        logger.debug("CBS done: makespan=%s branches=%d nodes=%d capped=%s",
                     res.makespan, res.branches, res.nodes, res.capped)
        return res


def run_cbs(
    env: GridEnvironment,
    G: OperatingSchedule,
    upper_bound: float = INF,
    **limits,
) -> CbsResult:
    return ConflictBasedSearch(env, G, upper_bound, **limits).run()
