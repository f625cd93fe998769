"""Project specifications and operating-schedule DAGs."""

from __future__ import annotations

import copy
import heapq
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from .gridworld import INF, Cell, GridEnvironment


class SpecError(ValueError):
    """Malformed project specification."""


class ScheduleInvalidError(ValueError):
    """Schedule graph is cyclic or structurally broken."""


class InfeasibleError(ValueError):
    """A required cell pair is unreachable."""


@dataclass(frozen=True)
class ObjectSpec:
    id: int
    initial_cell: Cell
    dropoff_cell: Cell
    collect_dt: int = 0
    deposit_dt: int = 0


@dataclass(frozen=True)
class Operation:
    id: int
    inputs: frozenset[int]
    outputs: frozenset[int]
    dt: int = 0

    @property
    def is_terminal(self) -> bool:
        return not self.outputs


@dataclass(frozen=True)
class ProjectSpec:
    objects: tuple[ObjectSpec, ...]
    operations: tuple[Operation, ...]

    def __post_init__(self):
        m = len(self.objects)
        if m == 0:
            raise SpecError("project has no objects")
        if [o.id for o in self.objects] != list(range(m)):
            raise SpecError("object ids must be 0..m-1 in order")
        seen_ops = set()
        for op in self.operations:
            if op.id in seen_ops:
                raise SpecError(f"duplicate operation id {op.id}")
            seen_ops.add(op.id)
            if not op.inputs:
                raise SpecError(f"operation {op.id} has no inputs")
            if len(op.outputs) > 1:
                raise SpecError(f"operation {op.id} has more than one output")
            if op.dt < 0:
                raise SpecError(f"operation {op.id} has negative duration")
            for j in op.inputs | op.outputs:
                if not 0 <= j < m:
                    raise SpecError(f"operation {op.id} references unknown object {j}")
        terminals = [op for op in self.operations if op.is_terminal]
        if len(terminals) != 1:
            raise SpecError(f"expected exactly one terminal operation, found {len(terminals)}")
        producers: dict[int, int] = {}
        consumers: dict[int, int] = {}
        for op in self.operations:
            for j in op.outputs:
                if j in producers:
                    raise SpecError(f"object {j} produced by more than one operation")
                producers[j] = op.id
            for j in op.inputs:
                if j in consumers:
                    raise SpecError(f"object {j} consumed by more than one operation")
                consumers[j] = op.id
        missing = [j for j in range(m) if j not in consumers]
        if missing:
            raise SpecError(f"objects {missing} are never consumed")
        for obj in self.objects:
            if obj.collect_dt < 0 or obj.deposit_dt < 0:
                raise SpecError(f"object {obj.id} has negative handling duration")
        # acyclicity of object dependencies
        order = self._topological_objects(producers)
        if len(order) != m:
            raise SpecError("operation graph has a cycle")

    def _topological_objects(self, producers: dict[int, int]) -> list[int]:
        ops = {op.id: op for op in self.operations}
        indeg = {j: (len(ops[producers[j]].inputs) if j in producers else 0) for j in range(len(self.objects))}
        consumer_out = {}
        for op in self.operations:
            for k in op.inputs:
                consumer_out[k] = list(op.outputs)
        ready = sorted(j for j, d in indeg.items() if d == 0)
        out = []
        while ready:
            j = ready.pop(0)
            out.append(j)
            for nxt in consumer_out.get(j, []):
                indeg[nxt] -= 1
                if indeg[nxt] == 0:
                    ready.append(nxt)
                    ready.sort()
        return out

    @property
    def terminal(self) -> Operation:
        return next(op for op in self.operations if op.is_terminal)

    def producer(self, j: int) -> Optional[Operation]:
        for op in self.operations:
            if j in op.outputs:
                return op
        return None

    def consumer(self, j: int) -> Operation:
        for op in self.operations:
            if j in op.inputs:
                return op
        raise SpecError(f"object {j} is never consumed")

    def initial_objects(self) -> list[int]:
        produced = {j for op in self.operations for j in op.outputs}
        return [o.id for o in self.objects if o.id not in produced]

    def predecessors(self) -> list[frozenset[int]]:
        """Transitive prerequisite objects of every object."""
        m = len(self.objects)
        direct: list[set[int]] = [set() for _ in range(m)]
        for op in self.operations:
            for out in op.outputs:
                direct[out] |= op.inputs
        closure: list[Optional[frozenset[int]]] = [None] * m

        def visit(j: int) -> frozenset[int]:
            if closure[j] is None:
                acc = set(direct[j])
                for k in direct[j]:
                    acc |= visit(k)
                closure[j] = frozenset(acc)
            return closure[j]

        return [visit(j) for j in range(m)]

    def topological_objects(self) -> list[int]:
        producers = {j: op.id for op in self.operations for j in op.outputs}
        return self._topological_objects(producers)


class VertexKind(str, Enum):
    ROBOT_AT = "ROBOT_AT"
    OBJECT_AT = "OBJECT_AT"
    GO = "GO"
    COLLECT = "COLLECT"
    CARRY = "CARRY"
    DEPOSIT = "DEPOSIT"
    OPERATION = "OPERATION"


NAVIGATION = (VertexKind.GO, VertexKind.CARRY)


@dataclass
class ScheduleVertex:
    id: int
    kind: VertexKind
    robot: Optional[int] = None
    object: Optional[int] = None
    operation: Optional[int] = None
    start_cell: Optional[Cell] = None
    goal_cell: Optional[Cell] = None
    t0: int = 0
    dt: int = 0
    T: int = 0
    slack: float = INF
    fixed_start: bool = False

    @property
    def is_navigation(self) -> bool:
        return self.kind in NAVIGATION

    @property
    def is_trailing(self) -> bool:
        """A GO with no goal, appended after a robot's last task."""
        return self.kind is VertexKind.GO and self.goal_cell is None

    def label(self) -> str:
        bits = [self.kind.value]
        if self.robot is not None:
            bits.append(f"r{self.robot}")
        if self.object is not None:
            bits.append(f"o{self.object}")
        if self.operation is not None:
            bits.append(f"op{self.operation}")
        return f"{self.id}:{'/'.join(bits)}"


@dataclass
class OperatingSchedule:
    vertices: dict[int, ScheduleVertex] = field(default_factory=dict)
    preds: dict[int, list[int]] = field(default_factory=dict)
    succs: dict[int, list[int]] = field(default_factory=dict)

    def add_vertex(self, kind: VertexKind, **fields) -> ScheduleVertex:
        vid = len(self.vertices)
        v = ScheduleVertex(vid, kind, **fields)
        self.vertices[vid] = v
        self.preds[vid] = []
        self.succs[vid] = []
        return v

    def add_edge(self, a: int, b: int) -> None:
        if b not in self.succs[a]:
            self.succs[a].append(b)
            self.preds[b].append(a)

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(a, b) for a in sorted(self.succs) for b in sorted(self.succs[a])]

    def copy(self) -> "OperatingSchedule":
        return OperatingSchedule(
            {k: copy.copy(v) for k, v in self.vertices.items()},
            {k: list(v) for k, v in self.preds.items()},
            {k: list(v) for k, v in self.succs.items()},
        )

    def find(self, kind: VertexKind, **match) -> list[ScheduleVertex]:
        out = []
        for v in self.vertices.values():
            if v.kind is kind and all(getattr(v, k) == val for k, val in match.items()):
                out.append(v)
        return out

    def terminal(self) -> ScheduleVertex:
        ops = [
            v
            for v in self.vertices.values()
            if v.kind is VertexKind.OPERATION and not any(
                self.vertices[s].kind is VertexKind.OBJECT_AT for s in self.succs[v.id]
            )
        ]
        if len(ops) != 1:
            raise SpecError(f"schedule has {len(ops)} terminal operations")
        return ops[0]

    def topological_order(self) -> list[int]:
        """Kahn's algorithm with smallest-id tie-breaking."""
        indeg = {v: len(p) for v, p in self.preds.items()}
        heap = [v for v, d in indeg.items() if d == 0]
        heapq.heapify(heap)
        order = []
        while heap:
            v = heapq.heappop(heap)
            order.append(v)
            for s in self.succs[v]:
                indeg[s] -= 1
                if indeg[s] == 0:
                    heapq.heappush(heap, s)
        if len(order) != len(self.vertices):
            raise ScheduleInvalidError("schedule contains a cycle")
        return order


def robot_chains(n: int, deliverer: Sequence[int]) -> list[list[int]]:
    """Task sequence of every real robot implied by a deliverer vector.

    ``deliverer[j]`` is a row of the assignment matrix: ``< n`` for a real
    robot, ``n + k`` for the robot that just delivered object ``k``.
    """
    m = len(deliverer)
    follower: dict[int, int] = {}
    for j, d in enumerate(deliverer):
        if d in follower:
            raise ScheduleInvalidError(f"deliverer row {d} assigned twice")
        follower[d] = j
    chains = []
    seen: set[int] = set()
    for i in range(n):
        chain = []
        row = i
        while row in follower:
            j = follower[row]
            if j in seen:
                raise ScheduleInvalidError("assignment induces a cyclic task chain")
            seen.add(j)
            chain.append(j)
            row = n + j
        chains.append(chain)
    if len(seen) != m:
        raise ScheduleInvalidError("assignment induces a cyclic task chain")
    return chains


def build_schedule(
    spec: ProjectSpec,
    env: GridEnvironment,
    assignment,
    robot_starts: Sequence[Cell],
) -> OperatingSchedule:
    """Operating schedule for an assignment (matrix object or deliverer vector)."""
    deliverer = list(getattr(assignment, "deliverer", assignment))
    n = len(robot_starts)
    m = len(spec.objects)
    if len(deliverer) != m:
        raise ScheduleInvalidError(f"assignment covers {len(deliverer)} objects, expected {m}")
    preds = spec.predecessors()
    for j, d in enumerate(deliverer):
        if d >= n and (d - n == j or d - n in _successors_of(preds, j)):
            # dummy of j (or of something downstream of j) serving j
            raise ScheduleInvalidError(f"dummy robot {d - n} cannot deliver object {j}")
    chains = robot_chains(n, deliverer)

    G = OperatingSchedule()
    robot_at = [
        G.add_vertex(VertexKind.ROBOT_AT, robot=i, start_cell=c, goal_cell=c, fixed_start=True)
        for i, c in enumerate(robot_starts)
    ]
    initial = set(spec.initial_objects())
    object_at = [
        G.add_vertex(
            VertexKind.OBJECT_AT,
            object=o.id,
            start_cell=o.initial_cell,
            goal_cell=o.initial_cell,
            fixed_start=o.id in initial,
        )
        for o in spec.objects
    ]
    owner = {j: i for i, chain in enumerate(chains) for j in chain}
    task: dict[int, dict[str, ScheduleVertex]] = {}
    for j, obj in enumerate(spec.objects):
        i = owner[j]
        d = deliverer[j]
        origin = robot_starts[i] if d < n else spec.objects[d - n].dropoff_cell
        carry_d = _checked_dist(env, obj.initial_cell, obj.dropoff_cell)
        go_d = _checked_dist(env, origin, obj.initial_cell)
        task[j] = dict(
            go=G.add_vertex(VertexKind.GO, robot=i, object=j, start_cell=origin,
                            goal_cell=obj.initial_cell, dt=go_d),
            collect=G.add_vertex(VertexKind.COLLECT, robot=i, object=j, start_cell=obj.initial_cell,
                                 goal_cell=obj.initial_cell, dt=obj.collect_dt),
            carry=G.add_vertex(VertexKind.CARRY, robot=i, object=j, start_cell=obj.initial_cell,
                               goal_cell=obj.dropoff_cell, dt=carry_d),
            deposit=G.add_vertex(VertexKind.DEPOSIT, robot=i, object=j, start_cell=obj.dropoff_cell,
                                 goal_cell=obj.dropoff_cell, dt=obj.deposit_dt),
        )
    op_vertex = {}
    for op in spec.operations:
        op_vertex[op.id] = G.add_vertex(VertexKind.OPERATION, operation=op.id, dt=op.dt)
    trailing = []
    for i, chain in enumerate(chains):
        last_cell = spec.objects[chain[-1]].dropoff_cell if chain else robot_starts[i]
        trailing.append(G.add_vertex(VertexKind.GO, robot=i, start_cell=last_cell, goal_cell=None))

    for j in range(m):
        t = task[j]
        G.add_edge(t["go"].id, t["collect"].id)
        G.add_edge(object_at[j].id, t["collect"].id)
        G.add_edge(t["collect"].id, t["carry"].id)
        G.add_edge(t["carry"].id, t["deposit"].id)
        d = deliverer[j]
        source = robot_at[d] if d < n else task[d - n]["deposit"]
        G.add_edge(source.id, t["go"].id)
    for op in spec.operations:
        for k in sorted(op.inputs):
            G.add_edge(task[k]["deposit"].id, op_vertex[op.id].id)
        for k in sorted(op.outputs):
            G.add_edge(op_vertex[op.id].id, object_at[k].id)
    for i, chain in enumerate(chains):
        source = task[chain[-1]]["deposit"] if chain else robot_at[i]
        G.add_edge(source.id, trailing[i].id)

    G.topological_order()
    update_schedule(G)
    return G


def _successors_of(preds: Sequence[frozenset[int]], j: int) -> set[int]:
    return {k for k, p in enumerate(preds) if j in p}


def _checked_dist(env: GridEnvironment, a: Cell, b: Cell) -> int:
    d = env.dist(a, b)
    if d == INF:
        raise InfeasibleError(f"cell {b} unreachable from {a}")
    return int(d)


def validate_schedule(G: OperatingSchedule) -> list[str]:
    """Every degree-rule violation and cycle witness; empty means valid."""
    problems: list[str] = []
    V = G.vertices

    def kinds(ids):
        return [V[x].kind for x in ids]

    for vid in sorted(V):
        v = V[vid]
        pk = kinds(G.preds[vid])
        sk = kinds(G.succs[vid])
        name = v.label()
        if v.kind is VertexKind.ROBOT_AT:
            if pk:
                problems.append(f"{name}: ROBOT_AT must have no predecessors")
            if sk.count(VertexKind.GO) != 1 or len(sk) != 1:
                problems.append(f"{name}: ROBOT_AT must precede exactly one GO")
        elif v.kind is VertexKind.OBJECT_AT:
            if len(pk) > 1 or any(k is not VertexKind.OPERATION for k in pk):
                problems.append(f"{name}: OBJECT_AT may only follow one OPERATION")
            if v.fixed_start and pk:
                problems.append(f"{name}: initial OBJECT_AT must be a root")
            if not v.fixed_start and not pk:
                problems.append(f"{name}: produced OBJECT_AT missing its OPERATION predecessor")
            if sk != [VertexKind.COLLECT]:
                problems.append(f"{name}: OBJECT_AT must precede exactly one COLLECT")
        elif v.kind is VertexKind.GO:
            if len(pk) != 1 or pk[0] not in (VertexKind.ROBOT_AT, VertexKind.DEPOSIT):
                problems.append(f"{name}: GO must follow exactly one ROBOT_AT or DEPOSIT")
            if v.is_trailing:
                if sk:
                    problems.append(f"{name}: trailing GO must be a sink")
            elif sk != [VertexKind.COLLECT]:
                problems.append(f"{name}: GO must precede exactly one COLLECT")
        elif v.kind is VertexKind.COLLECT:
            if sorted(k.value for k in pk) != ["GO", "OBJECT_AT"]:
                problems.append(f"{name}: COLLECT needs one GO and one OBJECT_AT predecessor")
            if sk != [VertexKind.CARRY]:
                problems.append(f"{name}: COLLECT must precede exactly one CARRY")
        elif v.kind is VertexKind.CARRY:
            if pk != [VertexKind.COLLECT]:
                problems.append(f"{name}: CARRY must follow exactly one COLLECT")
            if sk != [VertexKind.DEPOSIT]:
                problems.append(f"{name}: CARRY must precede exactly one DEPOSIT")
        elif v.kind is VertexKind.DEPOSIT:
            if pk != [VertexKind.CARRY]:
                problems.append(f"{name}: DEPOSIT must follow exactly one CARRY")
            if sk.count(VertexKind.OPERATION) != 1 or sk.count(VertexKind.GO) != 1 or len(sk) != 2:
                problems.append(f"{name}: DEPOSIT must precede one OPERATION and one GO")
        elif v.kind is VertexKind.OPERATION:
            if not pk or any(k is not VertexKind.DEPOSIT for k in pk):
                problems.append(f"{name}: OPERATION must follow one DEPOSIT per input")
            if len(sk) > 1 or any(k is not VertexKind.OBJECT_AT for k in sk):
                problems.append(f"{name}: OPERATION may only release one OBJECT_AT")
        # per-object chain coherence
        if v.kind in (VertexKind.COLLECT, VertexKind.CARRY, VertexKind.DEPOSIT):
            for p in G.preds[vid]:
                u = V[p]
                if u.kind in (VertexKind.GO, VertexKind.COLLECT, VertexKind.CARRY, VertexKind.OBJECT_AT):
                    if u.object != v.object:
                        problems.append(f"{name}: predecessor {u.label()} belongs to another object")
    problems.extend(f"cycle: {' -> '.join(V[x].label() for x in cyc)}" for cyc in _find_cycles(G))
    return problems


def _find_cycles(G: OperatingSchedule) -> list[list[int]]:
    """One witness cycle per strongly connected component with a cycle."""
    index: dict[int, int] = {}
    low: dict[int, int] = {}
    on_stack: set[int] = set()
    stack: list[int] = []
    comps: list[list[int]] = []
    counter = [0]

    def strong(root: int) -> None:
        work = [(root, iter(sorted(G.succs[root])))]
        index[root] = low[root] = counter[0]
        counter[0] += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter[0]
                    counter[0] += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(sorted(G.succs[w]))))
                    advanced = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                low[work[-1][0]] = min(low[work[-1][0]], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                if len(comp) > 1 or v in G.succs[v]:
                    comps.append(sorted(comp))

    for v in sorted(G.vertices):
        if v not in index:
            strong(v)

    witnesses = []
    for comp in comps:
        members = set(comp)
        start = comp[0]
        # BFS inside the component back to start
        parent = {start: None}
        queue = [start]
        found = None
        while queue and found is None:
            u = queue.pop(0)
            for w in sorted(G.succs[u]):
                if w == start:
                    found = u
                    break
                if w in members and w not in parent:
                    parent[w] = u
                    queue.append(w)
        cyc = [start]
        node = found
        rev = []
        while node is not None and node != start:
            rev.append(node)
            node = parent[node]
        cyc.extend(reversed(rev))
        cyc.append(start)
        witnesses.append(cyc)
    return witnesses


def is_sink_anchor(G: OperatingSchedule, vid: int) -> bool:
    return not G.succs[vid] and not G.vertices[vid].is_trailing


def update_schedule(G: OperatingSchedule) -> OperatingSchedule:
    """Forward start/completion propagation, then backward slack."""
    order = G.topological_order()
    V = G.vertices
    for vid in order:
        v = V[vid]
        for p in G.preds[vid]:
            v.t0 = max(v.t0, V[p].T)
        v.T = max(v.t0 + v.dt, v.T)
    for vid in reversed(order):
        v = V[vid]
        succ = G.succs[vid]
        if not succ:
            v.slack = INF if v.is_trailing else 0
            continue
        slack = INF
        for s in succ:
            w = V[s]
            slack = min(slack, w.t0 + w.slack - v.T)
        v.slack = slack
    return G


def init_queue(G: OperatingSchedule, closed: set[int]) -> list[tuple[float, int]]:
    """Eligible vertices as a heap keyed by (slack, id)."""
    q = [
        (G.vertices[v].slack, v)
        for v in G.vertices
        if v not in closed and all(p in closed for p in G.preds[v])
    ]
    heapq.heapify(q)
    return q


def makespan(G: OperatingSchedule) -> int:
    return G.terminal().T


def critical_vertices(G: OperatingSchedule) -> list[int]:
    return sorted(v for v, x in G.vertices.items() if x.slack == 0)

