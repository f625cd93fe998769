"""End-to-end solution checking against the instance it claims to solve."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..gridworld import InconsistencyError, adjacent_or_same, detect_conflicts, object_trace
from ..instance import Instance
from ..nbs import Solution
from ..schedule import ScheduleInvalidError, VertexKind, robot_chains, validate_schedule


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, msg: str) -> None:
        self.violations.append(msg)


def validate_solution(instance: Instance, solution: Solution) -> ValidationReport:
    """Every violation found; never raises on malformed solutions."""
    rep = ValidationReport()
    G = solution.schedule
    V = G.vertices
    env = instance.env
    spec = instance.spec

    for msg in validate_schedule(G):
        rep.add(f"schedule: {msg}")
    if any(msg.startswith("schedule: cycle") for msg in rep.violations):
        return rep

    # schedule contents must describe this instance
    for i, start in enumerate(instance.robot_starts):
        found = G.find(VertexKind.ROBOT_AT, robot=i)
        if len(found) != 1:
            rep.add(f"schedule: robot {i} has {len(found)} ROBOT_AT vertices")
        elif found[0].start_cell != start:
            rep.add(f"schedule: {found[0].label()} starts at {found[0].start_cell}, instance says {start}")
    for o in spec.objects:
        for kind, cell, attr in (
            (VertexKind.OBJECT_AT, o.initial_cell, "start_cell"),
            (VertexKind.COLLECT, o.initial_cell, "start_cell"),
            (VertexKind.DEPOSIT, o.dropoff_cell, "start_cell"),
        ):
            found = G.find(kind, object=o.id)
            if len(found) != 1:
                rep.add(f"schedule: object {o.id} has {len(found)} {kind.value} vertices")
            elif getattr(found[0], attr) != cell:
                rep.add(f"schedule: {found[0].label()} at {getattr(found[0], attr)}, expected {cell}")

    # time arithmetic on every vertex and edge
    for vid in sorted(V):
        v = V[vid]
        if v.t0 < 0:
            rep.add(f"timing: {v.label()} starts at negative time {v.t0}")
        if v.T < v.t0 + v.dt:
            rep.add(f"timing: {v.label()} completes at {v.T} before t0 + dt = {v.t0 + v.dt}")
        for p in G.preds[vid]:
            if v.t0 < V[p].T:
                rep.add(f"timing: {v.label()} starts at {v.t0} before predecessor {V[p].label()} ends at {V[p].T}")
    for v in V.values():
        if v.kind is VertexKind.OPERATION and v.operation is not None and v.operation < len(spec.operations):
            want = spec.operations[v.operation].dt
            if v.dt != want:
                rep.add(f"timing: {v.label()} has duration {v.dt}, instance says {want}")
        if v.kind is VertexKind.COLLECT and v.object is not None and v.object < instance.m:
            if v.dt != spec.objects[v.object].collect_dt:
                rep.add(f"timing: {v.label()} has duration {v.dt}, instance says {spec.objects[v.object].collect_dt}")
        if v.kind is VertexKind.DEPOSIT and v.object is not None and v.object < instance.m:
            if v.dt != spec.objects[v.object].deposit_dt:
                rep.add(f"timing: {v.label()} has duration {v.dt}, instance says {spec.objects[v.object].deposit_dt}")

    # assignment agrees with who actually does the work
    try:
        chains = robot_chains(instance.n, solution.assignment.deliverer)
    except ScheduleInvalidError as exc:
        rep.add(f"assignment: {exc}")
        chains = None
    if chains is not None:
        for i, chain in enumerate(chains):
            for j in chain:
                for v in G.find(VertexKind.COLLECT, object=j):
                    if v.robot != i:
                        rep.add(f"assignment: object {j} belongs to robot {i} but {v.label()} uses robot {v.robot}")

    # route plan: one path per robot, legal moves, starting in place at t=0
    paths = {}
    for p in solution.plan.paths:
        if p.agent in paths:
            rep.add(f"route: robot {p.agent} has more than one path")
        paths[p.agent] = p
        for msg in p.check(env):
            rep.add(f"route: {msg}")
        if p.start_time != 0:
            rep.add(f"route: robot {p.agent} path starts at t={p.start_time}, expected 0")
    for i in range(instance.n):
        if i not in paths:
            rep.add(f"route: robot {i} has no path")
        elif paths[i].cells[0] != instance.robot_starts[i]:
            rep.add(f"route: robot {i} starts at {paths[i].cells[0]}, expected {instance.robot_starts[i]}")
    extra = set(paths) - set(range(instance.n))
    for i in sorted(extra):
        rep.add(f"route: path for unknown robot {i}")

    # boundary conditions of the schedule
    for vid in sorted(V):
        v = V[vid]
        if v.robot is None or v.robot not in paths:
            continue
        p = paths[v.robot]
        if v.kind in (VertexKind.GO, VertexKind.CARRY):
            if v.start_cell is not None and p.at(v.t0) != v.start_cell:
                rep.add(f"consistency: {v.label()} expects {v.start_cell} at t={v.t0}, robot is at {p.at(v.t0)}")
            if v.goal_cell is not None and p.at(v.T) != v.goal_cell:
                rep.add(f"consistency: {v.label()} expects {v.goal_cell} at t={v.T}, robot is at {p.at(v.T)}")
        elif v.kind in (VertexKind.COLLECT, VertexKind.DEPOSIT):
            for t in range(v.t0, v.T + 1):
                if p.at(t) != v.start_cell:
                    rep.add(f"consistency: {v.label()} requires robot at {v.start_cell} at t={t}, found {p.at(t)}")
                    break
            if v.T > p.completion_time:
                rep.add(f"consistency: {v.label()} ends at t={v.T} after robot {v.robot}'s path ends")

    for c in detect_conflicts([paths[i] for i in sorted(paths)]):
        rep.add(f"conflict: {c.kind.value} between robots {c.agents} at t={c.time} on {c.cells}")

    # objects travel with their robot from pickup to dropoff
    for o in spec.objects:
        try:
            trace = object_trace(solution.plan, G, o.id)
        except InconsistencyError as exc:
            rep.add(f"object: {exc}")
            continue
        cells = trace.cells
        if cells[0] != o.initial_cell:
            rep.add(f"object: {o.id} trace starts at {cells[0]}, expected {o.initial_cell}")
        if cells[-1] != o.dropoff_cell:
            rep.add(f"object: {o.id} never reaches dropoff {o.dropoff_cell}")
        for t in range(len(cells) - 1):
            if not adjacent_or_same(cells[t], cells[t + 1]):
                rep.add(f"object: {o.id} jumps {cells[t]}->{cells[t + 1]} at t={t}")
                break

    # makespan arithmetic
    try:
        term = G.terminal()
    except Exception as exc:  # any structural failure is already a violation above
        rep.add(f"makespan: {exc}")
        return rep
    deposits = [V[p].T for p in G.preds[term.id]]
    expect = max(deposits, default=0) + term.dt
    if term.T != expect:
        rep.add(f"makespan: terminal completes at {term.T}, inputs imply {expect}")
    if solution.makespan != term.T:
        rep.add(f"makespan: reported {solution.makespan}, schedule says {term.T}")
    if solution.lower_bound > solution.makespan:
        rep.add(f"makespan: lower bound {solution.lower_bound} exceeds makespan {solution.makespan}")
    if solution.optimal and solution.lower_bound != solution.makespan:
        rep.add(f"makespan: flagged optimal but lower bound {solution.lower_bound} != {solution.makespan}")
    return rep
