"""Versioned JSON formats for instances and solutions.

Instance file::

    {"format": "pctapf-instance", "version": 1, "name": "...",
     "environment": ["W H", "row", ...],          # optional with an external env
     "robots": [[r, c], ...],
     "objects": [{"id": 0, "start": [r, c], "goal": [r, c],
                  "collect_dt": 0, "deposit_dt": 0}, ...],
     "operations": [{"id": 0, "inputs": [0, 1], "outputs": [2], "dt": 0}, ...]}

Solution file::

    {"format": "pctapf-solution", "version": 1, "instance": "name",
     "makespan": 17, "optimal": true, "lower_bound": 17,
     "assignment": [deliverer row per object],
     "schedule": {"vertices": [...], "edges": [[a, b], ...]},
     "plan": [{"robot": 0, "start_time": 0, "cells": [[r, c], ...]}, ...],
     "stats": {...}}

Slack values of infinity are written as null.
"""

from __future__ import annotations

import json
from typing import Any, Optional

from ..assignment import AssignmentMatrix
from ..gridworld import INF, GridEnvironment, GridFormatError, Path, RoutePlan, parse_environment
from ..instance import Instance
from ..nbs import Solution
from ..schedule import ObjectSpec, Operation, OperatingSchedule, ProjectSpec, ScheduleVertex, SpecError, VertexKind

FORMAT_VERSION = 1
INSTANCE_FORMAT = "pctapf-instance"
SOLUTION_FORMAT = "pctapf-solution"

# stats that vary run to run and would break byte-identical output
_VOLATILE_STATS = ("milp_time", "isps_first_time", "wall_time")


class SchemaError(ValueError):
    pass


class VersionError(SchemaError):
    pass


class CrossReferenceError(SchemaError):
    pass


def _need(obj: Any, key: str, where: str) -> Any:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object")
    if key not in obj:
        raise SchemaError(f"{where}: missing field '{key}'")
    return obj[key]


def _int(value: Any, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"{where}: expected an integer, got {value!r}")
    return value


def _cell(value: Any, where: str) -> tuple[int, int]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise SchemaError(f"{where}: expected [row, col], got {value!r}")
    return (_int(value[0], f"{where}[0]"), _int(value[1], f"{where}[1]"))


def _list(value: Any, where: str) -> list:
    if not isinstance(value, list):
        raise SchemaError(f"{where}: expected a list")
    return value


def _load(text: str, fmt: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise SchemaError("top level must be a JSON object")
    got = _need(doc, "format", "header")
    if got != fmt:
        raise SchemaError(f"header: format is {got!r}, expected {fmt!r}")
    version = _need(doc, "version", "header")
    if version != FORMAT_VERSION:
        raise VersionError(f"header: version {version!r} is not supported (expected {FORMAT_VERSION})")
    return doc


def _format(value: Any, indent: int) -> str:
    """JSON with one line per record; coordinate lists stay inline."""
    pad = " " * indent
    inner = " " * (indent + 1)
    flat = isinstance(value, dict) and not any(
        isinstance(v, dict) or (isinstance(v, list) and v and isinstance(v[0], (dict, str)))
        for v in value.values()
    )
    if flat and indent > 1:
        return json.dumps(value, separators=(", ", ": "))
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{inner}{json.dumps(k)}: {_format(v, indent + 1)}" for k, v in value.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(value, list) and value and all(isinstance(x, (dict, str)) for x in value):
        items = [inner + _format(x, indent + 1) for x in value]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    return json.dumps(value, separators=(", ", ": "))


def _dump(doc: dict) -> str:
    return _format(doc, 0) + "\n"


def serialize_instance(inst: Instance, embed_environment: bool = True) -> str:
    doc: dict[str, Any] = {"format": INSTANCE_FORMAT, "version": FORMAT_VERSION, "name": inst.name}
    if embed_environment:
        doc["environment"] = inst.env.to_text().rstrip("\n").split("\n")
    doc["robots"] = [list(c) for c in inst.robot_starts]
    doc["objects"] = [
        {"id": o.id, "start": list(o.initial_cell), "goal": list(o.dropoff_cell),
         "collect_dt": o.collect_dt, "deposit_dt": o.deposit_dt}
        for o in inst.spec.objects
    ]
    doc["operations"] = [
        {"id": op.id, "inputs": sorted(op.inputs), "outputs": sorted(op.outputs), "dt": op.dt}
        for op in inst.spec.operations
    ]
    return _dump(doc)


def parse_instance(text: str, env: Optional[GridEnvironment] = None) -> Instance:
    doc = _load(text, INSTANCE_FORMAT)
    if env is None:
        lines = _list(_need(doc, "environment", "instance"), "environment")
        try:
            env = parse_environment("\n".join(lines))
        except GridFormatError as exc:
            raise SchemaError(f"environment: {exc}") from None
    robots = tuple(_cell(c, f"robots[{k}]") for k, c in enumerate(_list(_need(doc, "robots", "instance"), "robots")))
    objects = []
    for k, o in enumerate(_list(_need(doc, "objects", "instance"), "objects")):
        w = f"objects[{k}]"
        objects.append(ObjectSpec(
            _int(_need(o, "id", w), f"{w}.id"),
            _cell(_need(o, "start", w), f"{w}.start"),
            _cell(_need(o, "goal", w), f"{w}.goal"),
            _int(o.get("collect_dt", 0), f"{w}.collect_dt"),
            _int(o.get("deposit_dt", 0), f"{w}.deposit_dt"),
        ))
    ops = []
    for k, op in enumerate(_list(_need(doc, "operations", "instance"), "operations")):
        w = f"operations[{k}]"
        ins = [_int(x, f"{w}.inputs") for x in _list(_need(op, "inputs", w), f"{w}.inputs")]
        outs = [_int(x, f"{w}.outputs") for x in _list(op.get("outputs", []), f"{w}.outputs")]
        ops.append(Operation(_int(_need(op, "id", w), f"{w}.id"), frozenset(ins), frozenset(outs),
                             _int(op.get("dt", 0), f"{w}.dt")))
    name = doc.get("name", "")
    try:
        return Instance(env, robots, ProjectSpec(tuple(objects), tuple(ops)), str(name))
    except SpecError as exc:
        raise SchemaError(f"instance: {exc}") from None


def _vertex_doc(v: ScheduleVertex) -> dict:
    return {
        "id": v.id, "kind": v.kind.value, "robot": v.robot, "object": v.object,
        "operation": v.operation,
        "start": None if v.start_cell is None else list(v.start_cell),
        "goal": None if v.goal_cell is None else list(v.goal_cell),
        "t0": v.t0, "dt": v.dt, "T": v.T,
        "slack": None if v.slack == INF else v.slack,
        "fixed_start": v.fixed_start,
    }


def serialize_solution(sol: Solution, instance_name: str = "") -> str:
    G = sol.schedule
    stats = {k: v for k, v in sorted(sol.stats.items()) if k not in _VOLATILE_STATS}
    doc = {
        "format": SOLUTION_FORMAT, "version": FORMAT_VERSION, "instance": instance_name,
        "makespan": sol.makespan, "optimal": sol.optimal,
        "lower_bound": None if sol.lower_bound == INF else sol.lower_bound,
        "robots": sol.assignment.n,
        "assignment": list(sol.assignment.deliverer),
        "schedule": {
            "vertices": [_vertex_doc(G.vertices[k]) for k in sorted(G.vertices)],
            "edges": [list(e) for e in G.edges],
        },
        "plan": [{"robot": p.agent, "start_time": p.start_time, "cells": [list(c) for c in p.cells]}
                 for p in sol.plan.paths],
        "stats": stats,
    }
    return _dump(doc)


def _opt_int(value: Any, where: str) -> Optional[int]:
    return None if value is None else _int(value, where)


def parse_solution(text: str, instance: Optional[Instance] = None) -> Solution:
    """Parse a solution; with ``instance`` given, robot and object ids are cross-checked."""
    doc = _load(text, SOLUTION_FORMAT)
    n_robots = _int(_need(doc, "robots", "solution"), "robots")
    if instance is not None and n_robots != instance.n:
        raise CrossReferenceError(f"robots: solution has {n_robots} robots, instance has {instance.n}")
    kinds = {k.value: k for k in VertexKind}

    def robot_ref(value: Any, where: str) -> Optional[int]:
        r = _opt_int(value, where)
        if r is not None and not 0 <= r < n_robots:
            raise CrossReferenceError(f"{where}: unknown robot id {r}")
        return r

    sched = _need(doc, "schedule", "solution")
    G = OperatingSchedule()
    for k, vd in enumerate(_list(_need(sched, "vertices", "schedule"), "schedule.vertices")):
        w = f"schedule.vertices[{k}]"
        kind = _need(vd, "kind", w)
        if kind not in kinds:
            raise SchemaError(f"{w}.kind: unknown vertex kind {kind!r}")
        obj = _opt_int(vd.get("object"), f"{w}.object")
        if instance is not None and obj is not None and not 0 <= obj < instance.m:
            raise CrossReferenceError(f"{w}.object: unknown object id {obj}")
        slack = vd.get("slack")
        v = G.add_vertex(
            kinds[kind],
            robot=robot_ref(vd.get("robot"), f"{w}.robot"),
            object=obj,
            operation=_opt_int(vd.get("operation"), f"{w}.operation"),
            start_cell=None if vd.get("start") is None else _cell(vd["start"], f"{w}.start"),
            goal_cell=None if vd.get("goal") is None else _cell(vd["goal"], f"{w}.goal"),
            t0=_int(_need(vd, "t0", w), f"{w}.t0"),
            dt=_int(_need(vd, "dt", w), f"{w}.dt"),
            T=_int(_need(vd, "T", w), f"{w}.T"),
            slack=INF if slack is None else slack,
            fixed_start=bool(vd.get("fixed_start", False)),
        )
        if _int(_need(vd, "id", w), f"{w}.id") != v.id:
            raise SchemaError(f"{w}.id: vertices must be listed in id order")
    for k, e in enumerate(_list(_need(sched, "edges", "schedule"), "schedule.edges")):
        a, b = _cell(e, f"schedule.edges[{k}]")
        if a not in G.vertices or b not in G.vertices:
            raise CrossReferenceError(f"schedule.edges[{k}]: unknown vertex in edge {e}")
        G.add_edge(a, b)
    paths = []
    for k, pd in enumerate(_list(_need(doc, "plan", "solution"), "plan")):
        w = f"plan[{k}]"
        cells = [_cell(c, f"{w}.cells[{t}]") for t, c in enumerate(_list(_need(pd, "cells", w), f"{w}.cells"))]
        if not cells:
            raise SchemaError(f"{w}.cells: empty path")
        paths.append(Path(robot_ref(_need(pd, "robot", w), f"{w}.robot"),
                          _int(pd.get("start_time", 0), f"{w}.start_time"), cells))
    deliverer = tuple(_int(x, f"assignment[{k}]")
                      for k, x in enumerate(_list(_need(doc, "assignment", "solution"), "assignment")))
    if instance is not None and len(deliverer) != instance.m:
        raise CrossReferenceError(f"assignment: {len(deliverer)} entries for {instance.m} objects")
    for k, row in enumerate(deliverer):
        if not 0 <= row < n_robots + len(deliverer):
            raise CrossReferenceError(f"assignment[{k}]: row {row} out of range")
    lb = doc.get("lower_bound")
    stats = doc.get("stats", {})
    if not isinstance(stats, dict):
        raise SchemaError("stats: expected an object")
    return Solution(
        G, RoutePlan(paths),
        _int(_need(doc, "makespan", "solution"), "makespan"),
        bool(_need(doc, "optimal", "solution")),
        INF if lb is None else lb,
        AssignmentMatrix(n_robots, deliverer),
        dict(stats),
    )
