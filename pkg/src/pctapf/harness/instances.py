"""Random instance generation on procedurally built factory grids."""

from __future__ import annotations

import random
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

from ..gridworld import Cell, GridEnvironment
from ..instance import Instance
from ..schedule import ObjectSpec, Operation, ProjectSpec

SHAPES = ("chain", "tree", "random")


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class InstanceParams:
    n: int
    m: int
    width: int = 32
    height: int = 32
    station: int = 2
    period: int = 5
    margin: int = 2
    shape: str = "random"
    max_arity: int = 2
    collect_dt: int = 0
    deposit_dt: int = 0
    op_dt: int = 0
    seed: int = 0

    def validate(self) -> None:
        if self.n < 1 or self.m < 1:
            raise ParameterError("need at least one robot and one object")
        if self.shape not in SHAPES:
            raise ParameterError(f"unknown shape {self.shape!r}; choose from {SHAPES}")
        if self.max_arity < 2:
            raise ParameterError("max_arity must be at least 2")
        if min(self.collect_dt, self.deposit_dt, self.op_dt) < 0:
            raise ParameterError("durations must be non-negative")


@lru_cache(maxsize=32)
def factory_environment(
    width: int = 32, height: int = 32, station: int = 2, period: int = 5, margin: int = 2
) -> GridEnvironment:
    """Grid with square station blocks, each ringed by pickup and dropoff cells.

    The north and west faces of a station are pickup zones, the south and
    east faces dropoff zones.  Stations repeat every ``period`` cells.
    """
    if margin < 1 or period < station + 2:
        raise ParameterError("stations need a one-cell ring and a margin of at least 1")
    obstacles: set[Cell] = set()
    pickup: set[Cell] = set()
    dropoff: set[Cell] = set()
    r0 = margin
    while r0 + station < height:
        c0 = margin
        while c0 + station < width:
            for r in range(r0, r0 + station):
                for c in range(c0, c0 + station):
                    obstacles.add((r, c))
            for k in range(station):
                pickup.add((r0 - 1, c0 + k))
                pickup.add((r0 + k, c0 - 1))
                dropoff.add((r0 + station, c0 + k))
                dropoff.add((r0 + k, c0 + station))
            c0 += period
        r0 += period
    return GridEnvironment(width, height, obstacles, pickup, dropoff)


def operation_graph(m: int, shape: str, rng: random.Random, max_arity: int = 2, op_dt: int = 0):
    """Operations over objects 0..m-1 (prerequisites get smaller ids)."""
    ops: list[Operation] = []
    pool: list[int] = []
    created = 0

    def new_op(inputs: list[int], output: Optional[int]) -> None:
        ops.append(Operation(len(ops), frozenset(inputs), frozenset() if output is None else frozenset({output}), op_dt))

    if shape == "chain":
        while created < m:
            if len(pool) >= 2 and m - created >= 1:
                new_op(pool, created)
                pool = [created]
            else:
                pool.append(created)
            created += 1
    elif shape == "tree":
        n_init = (m + 1) // 2 if m % 2 else (m + 2) // 2
        pool = list(range(n_init))
        created = n_init
        while created < m:
            a, b = pool.pop(0), pool.pop(0)
            new_op([a, b], created)
            pool.append(created)
            created += 1
    else:
        while created < m:
            r = m - created
            p = len(pool)
            options = []
            if r >= p:
                options.append("init")
            if p >= 1 and r - 1 >= p - max_arity:
                options.append("unary")
            if p >= 2 and r - 1 >= p - max_arity - 1:
                options.append("merge")
            choice = rng.choice(options)
            if choice == "init":
                pool.append(created)
            elif choice == "unary":
                k = pool.pop(rng.randrange(p))
                new_op([k], created)
                pool.append(created)
            else:
                arity = rng.randint(2, min(max_arity, p))
                picks = sorted(rng.sample(range(p), arity), reverse=True)
                inputs = [pool.pop(i) for i in picks]
                new_op(sorted(inputs), created)
                pool.append(created)
            created += 1
    new_op(sorted(pool), None)
    return ops


def generate_instance(params: InstanceParams) -> Instance:
    params.validate()
    rng = random.Random(params.seed)
    env = factory_environment(params.width, params.height, params.station, params.period, params.margin)
    pickups = sorted(env.pickup_zones)
    dropoffs = sorted(env.dropoff_zones)
    if params.m > len(pickups) or params.m > len(dropoffs):
        raise ParameterError(
            f"{params.m} objects exceed zone capacity ({len(pickups)} pickup, {len(dropoffs)} dropoff)"
        )
    plain = [c for c in env.free_cells if c not in env.pickup_zones and c not in env.dropoff_zones]
    candidates = plain if len(plain) >= params.n else list(env.free_cells)
    if params.n > len(candidates):
        raise ParameterError(f"{params.n} robots exceed {len(candidates)} free cells")
    robots = tuple(rng.sample(candidates, params.n))
    starts = rng.sample(pickups, params.m)
    goals = rng.sample(dropoffs, params.m)
    objects = tuple(
        ObjectSpec(j, starts[j], goals[j], params.collect_dt, params.deposit_dt) for j in range(params.m)
    )
    ops = operation_graph(params.m, params.shape, rng, params.max_arity, params.op_dt)
    name = f"n{params.n}_m{params.m}_{params.shape}_{params.width}x{params.height}_s{params.seed}"
    return Instance(env, robots, ProjectSpec(objects, tuple(ops)), name)
