"""Small builders shared by the test modules."""

from pctapf import Instance, ObjectSpec, Operation, ProjectSpec, parse_environment


def make_instance(grid, robots, objects, ops, durations=None, name="t"):
    """``objects`` is [(pickup, dropoff)], ``ops`` is [(inputs, outputs[, dt])]."""
    env = parse_environment(grid) if isinstance(grid, str) else grid
    durations = durations or {}
    objs = tuple(
        ObjectSpec(k, a, b, *durations.get(k, (0, 0))) for k, (a, b) in enumerate(objects)
    )
    operations = tuple(
        Operation(k, frozenset(op[0]), frozenset(op[1]), op[2] if len(op) > 2 else 0)
        for k, op in enumerate(ops)
    )
    return Instance(env, tuple(robots), ProjectSpec(objs, operations), name)


def open_grid(width, height, pickups=(), dropoffs=(), walls=()):
    rows = []
    for r in range(height):
        row = []
        for c in range(width):
            cell = (r, c)
            row.append("#" if cell in walls else "P" if cell in pickups else "D" if cell in dropoffs else ".")
        rows.append("".join(row))
    return f"{width} {height}\n" + "\n".join(rows)
