"""Sequential task assignment with precedence constraints.

The relaxed (collision-free) assignment problem is solved exactly by a
depth-first branch-and-bound over the deliverer of each object.  Row ``i < n``
of the assignment matrix is a real robot; row ``n + k`` is "the robot that
just delivered object k".  Once every column has a deliverer the task times
follow from a longest-path propagation, so the node bound is the same
propagation with every undecided column taking its cheapest still-eligible
deliverer (capacity relaxed).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .gridworld import INF, Cell, GridEnvironment
from .schedule import InfeasibleError, ProjectSpec, ScheduleInvalidError

logger = logging.getLogger(__name__)


class AssignmentExhausted(Exception):
    """No admissible assignment remains (all excluded or none beats the bound)."""

    def __init__(self, bound: float = INF):
        super().__init__(f"no admissible assignment below {bound}")
        self.bound = bound


@dataclass(frozen=True)
class AssignmentMatrix:
    n: int
    deliverer: tuple[int, ...]

    @property
    def m(self) -> int:
        return len(self.deliverer)

    def to_array(self) -> np.ndarray:
        A = np.zeros((self.n + self.m, self.m), dtype=np.int8)
        for j, row in enumerate(self.deliverer):
            A[row, j] = 1
        return A

    @classmethod
    def from_array(cls, A: np.ndarray, n: int) -> "AssignmentMatrix":
        A = np.asarray(A)
        rows, m = A.shape
        if rows != n + m:
            raise ValueError(f"matrix has {rows} rows, expected {n + m}")
        if not np.array_equal(A.sum(axis=0), np.ones(m)):
            raise ValueError("every column must contain exactly one 1")
        if (A.sum(axis=1) > 1).any():
            raise ValueError("a row serves more than one object")
        return cls(n, tuple(int(np.argmax(A[:, j])) for j in range(m)))

    def row_major_key(self) -> tuple[int, ...]:
        return tuple(int(x) for x in self.to_array().ravel())

    def is_dummy(self, row: int) -> bool:
        return row >= self.n


@dataclass(frozen=True)
class AssignmentProblem:
    n: int
    m: int
    robot_starts: tuple[Cell, ...]
    pickup: tuple[Cell, ...]
    dropoff: tuple[Cell, ...]
    robot_travel: tuple[tuple[int, ...], ...]   # [i][j] start_i -> pickup_j
    dummy_travel: tuple[tuple[int, ...], ...]   # [k][j] dropoff_k -> pickup_j
    carry: tuple[int, ...]
    collect_dt: tuple[int, ...]
    deposit_dt: tuple[int, ...]
    # (inputs, output or -1, dt) per operation
    operations: tuple[tuple[tuple[int, ...], int, int], ...]
    predecessors: tuple[frozenset[int], ...]
    robot_start_times: tuple[int, ...]
    exclusions: frozenset[tuple[int, ...]] = frozenset()
    time_limit: Optional[float] = None
    node_limit: Optional[int] = None

    def allowed_rows(self, j: int) -> list[int]:
        """Rows that may serve object ``j`` (dummy rows barred per precedence)."""
        rows = list(range(self.n))
        rows += [self.n + k for k in range(self.m) if k != j and j not in self.predecessors[k]]
        return rows

    def travel(self, row: int, j: int) -> int:
        if row < self.n:
            return self.robot_travel[row][j]
        return self.dummy_travel[row - self.n][j]

    def task_duration(self, j: int) -> int:
        return self.collect_dt[j] + self.carry[j] + self.deposit_dt[j]

    def describe(self) -> str:
        """Structured text dump of the model, for debugging."""
        lines = [f"assignment model n={self.n} m={self.m}"]
        for j in range(self.m):
            lines.append(
                f"  task {j}: pickup={self.pickup[j]} dropoff={self.dropoff[j]} "
                f"carry={self.carry[j]} handling=({self.collect_dt[j]},{self.deposit_dt[j]}) "
                f"preds={sorted(self.predecessors[j])} rows={self.allowed_rows(j)}"
            )
        for inputs, out, dt in self.operations:
            lines.append(f"  op {list(inputs)} -> {out if out >= 0 else 'terminal'} dt={dt}")
        for cut in sorted(self.exclusions):
            lines.append(f"  exclude {list(cut)}")
        return "\n".join(lines)


@dataclass
class AssignmentSolution:
    A: AssignmentMatrix
    task_start_times: list[int]
    task_completion_times: list[int]
    makespan: int
    lower_bound: float
    proven_optimal: bool
    nodes: int = 0
    runtime: float = 0.0
    stats: dict = field(default_factory=dict)


def formulate(
    spec: ProjectSpec,
    env: GridEnvironment,
    robot_starts: Sequence[Cell],
    time_limit: Optional[float] = None,
    node_limit: Optional[int] = None,
) -> AssignmentProblem:
    n = len(robot_starts)
    m = len(spec.objects)
    pickup = tuple(o.initial_cell for o in spec.objects)
    dropoff = tuple(o.dropoff_cell for o in spec.objects)
    for cell in (*robot_starts, *pickup, *dropoff):
        if not env.is_free(cell):
            raise InfeasibleError(f"cell {cell} is not a free cell")

    def d(a, b):
        # unreachable legs stay infinite so the search never picks them
        x = env.dist(a, b)
        return x if x == INF else int(x)

    robot_travel = tuple(tuple(d(s, pickup[j]) for j in range(m)) for s in robot_starts)
    dummy_travel = tuple(tuple(d(dropoff[k], pickup[j]) for j in range(m)) for k in range(m))
    carry = tuple(d(pickup[j], dropoff[j]) for j in range(m))
    for j, c in enumerate(carry):
        if c == INF:
            raise InfeasibleError(f"object {j} cannot be carried from {pickup[j]} to {dropoff[j]}")
    ops = tuple(
        (tuple(sorted(op.inputs)), (next(iter(op.outputs)) if op.outputs else -1), op.dt)
        for op in sorted(spec.operations, key=lambda o: o.id)
    )
    return AssignmentProblem(
        n=n,
        m=m,
        robot_starts=tuple(robot_starts),
        pickup=pickup,
        dropoff=dropoff,
        robot_travel=robot_travel,
        dummy_travel=dummy_travel,
        carry=carry,
        collect_dt=tuple(o.collect_dt for o in spec.objects),
        deposit_dt=tuple(o.deposit_dt for o in spec.objects),
        operations=ops,
        predecessors=tuple(spec.predecessors()),
        robot_start_times=(0,) * n,
        time_limit=time_limit,
        node_limit=node_limit,
    )


def add_exclusion(problem: AssignmentProblem, A: AssignmentMatrix) -> AssignmentProblem:
    return replace(problem, exclusions=problem.exclusions | {tuple(A.deliverer)})


class _Evaluator:
    """Earliest task times for per-column deliverer candidate lists.

    Label-setting in increasing start time: a task is fixed once its
    producing operation's inputs are fixed and no cheaper deliverer option
    can still appear.  Dummy options only become available when the task
    they stand for is fixed, so cyclic choices never ground and yield None.
    """

    def __init__(self, p: AssignmentProblem):
        self.p = p
        m = p.m
        self.duration = [p.task_duration(j) for j in range(m)]
        self.producer: list[Optional[tuple[tuple[int, ...], int]]] = [None] * m
        self.consumer_output: list[tuple[int, int]] = [(-1, 0)] * m
        self.terminal_inputs: tuple[int, ...] = ()
        self.terminal_dt = 0
        for inputs, out, dt in p.operations:
            if out >= 0:
                self.producer[out] = (inputs, dt)
            else:
                self.terminal_inputs, self.terminal_dt = inputs, dt
            for k in inputs:
                self.consumer_output[k] = (out, dt)
        self.n_inputs = [len(self.producer[j][0]) if self.producer[j] else 0 for j in range(m)]

    def run(self, eligible: Sequence[Sequence[int]]):
        p = self.p
        n, m = p.n, p.m
        best = [INF] * m
        waiting: list[list[tuple[int, int]]] = [[] for _ in range(m)]
        for j, rows in enumerate(eligible):
            if not rows:
                return None
            b = INF
            for row in rows:
                if row < n:
                    v = p.robot_start_times[row] + p.robot_travel[row][j]
                    if v < b:
                        b = v
                else:
                    waiting[row - n].append((j, p.dummy_travel[row - n][j]))
            best[j] = b
        pending = list(self.n_inputs)
        release = [0] * m
        start = [0] * m
        comp = [0] * m
        done = [False] * m
        for _ in range(m):
            pick, pick_val = -1, INF
            for j in range(m):
                if not done[j] and pending[j] == 0:
                    v = best[j] if best[j] > release[j] else release[j]
                    if v < pick_val:
                        pick, pick_val = j, v
            if pick < 0:
                return None
            j = pick
            done[j] = True
            start[j] = pick_val
            c = pick_val + self.duration[j]
            comp[j] = c
            for j2, tr in waiting[j]:
                if c + tr < best[j2]:
                    best[j2] = c + tr
            out, dt = self.consumer_output[j]
            if out >= 0:
                pending[out] -= 1
                if c + dt > release[out]:
                    release[out] = c + dt
        makespan = max(comp[k] for k in self.terminal_inputs) + self.terminal_dt
        return start, comp, makespan


def propagate_times(problem: AssignmentProblem, A: AssignmentMatrix) -> tuple[list[int], list[int], int]:
    """Minimal pickup/delivery times and makespan for a fixed assignment."""
    used = set()
    for j, row in enumerate(A.deliverer):
        if row in used:
            raise ScheduleInvalidError(f"row {row} serves more than one object")
        used.add(row)
        if row not in problem.allowed_rows(j):
            raise ScheduleInvalidError(f"row {row} may not serve object {j}")
    res = _Evaluator(problem).run([[row] for row in A.deliverer])
    if res is None:
        raise ScheduleInvalidError("assignment induces a cyclic task chain")
    return res


class _Clock:
    def __init__(self, time_limit: Optional[float], node_limit: Optional[int]):
        self.t_start = time.perf_counter()
        self.deadline = None if time_limit is None else self.t_start + time_limit
        self.node_limit = node_limit
        self.nodes = 0

    def expired(self) -> bool:
        if self.node_limit is not None and self.nodes >= self.node_limit:
            return True
        return self.deadline is not None and (self.nodes & 63) == 0 and time.perf_counter() > self.deadline

    @property
    def elapsed(self) -> float:
        return time.perf_counter() - self.t_start


LEX_NODE_CAP = 20000


def solve(
    problem: AssignmentProblem,
    incumbent_bound: float = INF,
    floor: float = 0,
) -> AssignmentSolution:
    """Minimum-makespan admissible assignment.

    ``incumbent_bound`` prunes every assignment that cannot beat it;
    ``floor`` is a known lower bound (e.g. the previous next-best value)
    that lets the search stop as soon as it is met.  Budgets are only
    enforced once an incumbent exists.
    """
    ev = _Evaluator(problem)
    clock = _Clock(problem.time_limit, problem.node_limit)
    n, m = problem.n, problem.m
    allowed = [problem.allowed_rows(j) for j in range(m)]
    order = _column_order(problem)

    def eligible_for(assigned: dict[int, int], used: set[int]):
        return [
            [assigned[j]] if j in assigned else [r for r in allowed[j] if r not in used]
            for j in range(m)
        ]

    root = ev.run(eligible_for({}, set()))
    if root is None or root[2] == INF:
        raise AssignmentExhausted()
    best_cost = incumbent_bound
    best_vec: Optional[tuple[int, ...]] = None
    stack: list[tuple[float, dict[int, int]]] = [(root[2], {})]
    timed_out = False
    while stack:
        bound, assigned = stack.pop()
        if bound >= best_cost:
            continue
        if best_vec is not None and clock.expired():
            timed_out = True
            stack.append((bound, assigned))
            break
        clock.nodes += 1
        depth = len(assigned)
        if depth == m:
            vec = tuple(assigned[j] for j in range(m))
            if vec in problem.exclusions:
                continue
            best_cost, best_vec = bound, vec
            if best_cost <= floor:
                stack.clear()
            continue
        j = order[depth]
        used = set(assigned.values())
        children = []
        for row in allowed[j]:
            if row in used:
                continue
            child = dict(assigned)
            child[j] = row
            used.add(row)
            res = ev.run(eligible_for(child, used))
            used.discard(row)
            if res is None or res[2] >= best_cost:
                continue
            children.append((res[2], row, child))
        children.sort(key=lambda x: (x[0], x[1]))
        for b, _, child in reversed(children):
            stack.append((b, child))

    if best_vec is None:
        raise AssignmentExhausted(incumbent_bound)
    if timed_out:
        open_bound = min((b for b, _ in stack), default=best_cost)
        lower = max(floor, min(best_cost, open_bound))
        proven = False
    else:
        lower = best_cost
        proven = True
        lex = _lex_min(problem, ev, allowed, best_cost)
        if lex is not None:
            best_vec = lex
    A = AssignmentMatrix(n, best_vec)
    start, comp, ms = ev.run([[r] for r in best_vec])
    logger.debug("assignment solve: makespan=%s lb=%s nodes=%d proven=%s", ms, lower, clock.nodes, proven)
    return AssignmentSolution(
        A=A,
        task_start_times=list(start),
        task_completion_times=list(comp),
        makespan=ms,
        lower_bound=lower,
        proven_optimal=proven,
        nodes=clock.nodes,
        runtime=clock.elapsed,
    )


def _column_order(problem: AssignmentProblem) -> list[int]:
    """Objects in precedence order (prerequisites first), ties by index."""
    m = problem.m
    depth = [len(problem.predecessors[j]) for j in range(m)]
    return sorted(range(m), key=lambda j: (depth[j], j))


def _lex_min(problem: AssignmentProblem, ev: _Evaluator, allowed, target: float) -> Optional[tuple[int, ...]]:
    """Row-major lexicographically smallest admissible matrix of cost ``target``.

    Rows are decided in order; a row prefers serving nothing, then the
    highest-index object (a later 1 in the flattened row is smaller).
    Gives up after a fixed node budget so results stay deterministic.
    """
    n, m = problem.n, problem.m
    rows = n + m
    allowed_sets = [set(a) for a in allowed]
    nodes = 0

    def eligible(col_of_row: dict[int, int], next_row: int):
        taken = {}
        for r, j in col_of_row.items():
            if j >= 0:
                taken[j] = r
        return [
            [taken[j]] if j in taken else [r for r in allowed[j] if r >= next_row]
            for j in range(m)
        ]

    stack: list[dict[int, int]] = [{}]
    while stack:
        nodes += 1
        if nodes > LEX_NODE_CAP:
            return None
        partial = stack.pop()
        r = len(partial)
        res = ev.run(eligible(partial, r))
        if res is None or res[2] > target:
            continue
        if r == rows:
            vec = [0] * m
            for row, j in partial.items():
                if j >= 0:
                    vec[j] = row
            t = tuple(vec)
            if t not in problem.exclusions:
                return t
            continue
        taken_cols = {j for j in partial.values() if j >= 0}
        options = [-1] + [j for j in range(m - 1, -1, -1) if j not in taken_cols and r in allowed_sets[j]]
        for j in reversed(options):
            child = dict(partial)
            child[r] = j
            stack.append(child)
    return None
