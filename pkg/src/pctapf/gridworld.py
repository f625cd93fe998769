"""Grid factory model: environment, distances, paths, conflicts, object traces."""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

Cell = tuple[int, int]

INF = math.inf

# wait, N, S, W, E
MOVES: tuple[Cell, ...] = ((0, 0), (-1, 0), (1, 0), (0, -1), (0, 1))


class GridFormatError(ValueError):
    pass


class InconsistencyError(ValueError):
    pass


def adjacent_or_same(a: Cell, b: Cell) -> bool:
    return abs(a[0] - b[0]) + abs(a[1] - b[1]) <= 1


class GridEnvironment:
    """Static 4-connected grid with obstacles and pickup/dropoff zones.

    The all-pairs distance table is filled by one BFS per free cell at
    construction time; the instance is never mutated afterwards.
    """

    def __init__(
        self,
        width: int,
        height: int,
        obstacles: Iterable[Cell] = (),
        pickup_zones: Iterable[Cell] = (),
        dropoff_zones: Iterable[Cell] = (),
    ):
        if width <= 0 or height <= 0:
            raise GridFormatError(f"grid dimensions must be positive, got {width}x{height}")
        self.width = width
        self.height = height
        self.obstacles = frozenset(obstacles)
        self.pickup_zones = frozenset(pickup_zones)
        self.dropoff_zones = frozenset(dropoff_zones)
        for group in (self.obstacles, self.pickup_zones, self.dropoff_zones):
            for cell in group:
                if not self.in_bounds(cell):
                    raise GridFormatError(f"cell {cell} outside {width}x{height} grid")
        if self.obstacles & self.pickup_zones or self.obstacles & self.dropoff_zones:
            raise GridFormatError("zone cell coincides with an obstacle")
        if self.pickup_zones & self.dropoff_zones:
            raise GridFormatError("pickup and dropoff zones overlap")

        self.free_cells: tuple[Cell, ...] = tuple(
            (r, c)
            for r in range(height)
            for c in range(width)
            if (r, c) not in self.obstacles
        )
        self._index = {cell: k for k, cell in enumerate(self.free_cells)}
        self._neighbors = [
            [self._index[nb] for nb in self._raw_neighbors(cell)] for cell in self.free_cells
        ]
        self._dist = self._all_pairs_bfs()
        self._check_zone_connectivity()

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.height and 0 <= cell[1] < self.width

    def is_free(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and cell not in self.obstacles

    def cell_id(self, cell: Cell) -> int:
        return self._index[cell]

    def _raw_neighbors(self, cell: Cell) -> list[Cell]:
        out = []
        for dr, dc in MOVES[1:]:
            nb = (cell[0] + dr, cell[1] + dc)
            if self.is_free(nb):
                out.append(nb)
        return out

    def neighbors(self, cell: Cell) -> list[Cell]:
        """Free 4-neighbours of ``cell`` (wait excluded)."""
        return [self.free_cells[k] for k in self._neighbors[self._index[cell]]]

    def _all_pairs_bfs(self) -> np.ndarray:
        size = len(self.free_cells)
        dist = np.full((size, size), -1, dtype=np.int32)
        for src in range(size):
            row = dist[src]
            row[src] = 0
            queue = deque([src])
            while queue:
                u = queue.popleft()
                du = row[u] + 1
                for v in self._neighbors[u]:
                    if row[v] < 0:
                        row[v] = du
                        queue.append(v)
        return dist

    def _check_zone_connectivity(self) -> None:
        zones = sorted(self.pickup_zones | self.dropoff_zones)
        if not zones:
            return
        ids = [self._index[z] for z in zones]
        sub = self._dist[np.ix_(ids, ids)]
        if (sub < 0).any():
            logger.warning("some pickup/dropoff zones are mutually unreachable")

    def dist(self, a: Cell, b: Cell) -> float:
        """Shortest travel time from ``a`` to ``b``; ``INF`` if unreachable."""
        d = int(self._dist[self._index[a], self._index[b]])
        return INF if d < 0 else d

    def dist_row(self, goal: Cell) -> np.ndarray:
        """Distances from every free cell to ``goal`` (-1 where unreachable)."""
        return self._dist[:, self._index[goal]]

    def to_text(self) -> str:
        rows = [f"{self.width} {self.height}"]
        for r in range(self.height):
            chars = []
            for c in range(self.width):
                cell = (r, c)
                if cell in self.obstacles:
                    chars.append("#")
                elif cell in self.pickup_zones:
                    chars.append("P")
                elif cell in self.dropoff_zones:
                    chars.append("D")
                else:
                    chars.append(".")
            rows.append("".join(chars))
        return "\n".join(rows) + "\n"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GridEnvironment):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.obstacles == other.obstacles
            and self.pickup_zones == other.pickup_zones
            and self.dropoff_zones == other.dropoff_zones
        )

    def __hash__(self) -> int:
        return hash((self.width, self.height, self.obstacles, self.pickup_zones, self.dropoff_zones))

    def __repr__(self) -> str:
        return (
            f"GridEnvironment({self.width}x{self.height}, obstacles={len(self.obstacles)}, "
            f"pickup={len(self.pickup_zones)}, dropoff={len(self.dropoff_zones)})"
        )


def parse_environment(text: str) -> GridEnvironment:
    lines = [line.rstrip("\r") for line in text.splitlines()]
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise GridFormatError("empty environment description")
    header = lines[0].split()
    if len(header) != 2:
        raise GridFormatError(f"line 1: expected 'width height', got {lines[0]!r}")
    try:
        width, height = int(header[0]), int(header[1])
    except ValueError:
        raise GridFormatError(f"line 1: non-integer dimensions {lines[0]!r}") from None
    rows = lines[1:]
    if len(rows) != height:
        raise GridFormatError(f"expected {height} grid rows, got {len(rows)}")
    obstacles, pickups, dropoffs = [], [], []
    for r, row in enumerate(rows):
        if len(row) != width:
            raise GridFormatError(f"line {r + 2}: expected {width} characters, got {len(row)}")
        for c, ch in enumerate(row):
            if ch == "#":
                obstacles.append((r, c))
            elif ch == "P":
                pickups.append((r, c))
            elif ch == "D":
                dropoffs.append((r, c))
            elif ch != ".":
                raise GridFormatError(f"line {r + 2}: unknown cell character {ch!r}")
    return GridEnvironment(width, height, obstacles, pickups, dropoffs)


@dataclass
class Path:
    """Trajectory of one robot, one cell per timestep starting at ``start_time``."""

    agent: int
    start_time: int
    cells: list[Cell]

    @property
    def completion_time(self) -> int:
        return self.start_time + len(self.cells) - 1

    def at(self, t: int) -> Cell:
        """Cell at time ``t``; holds the first/last cell outside the covered range."""
        k = t - self.start_time
        if k <= 0:
            return self.cells[0]
        if k >= len(self.cells):
            return self.cells[-1]
        return self.cells[k]

    def check(self, env: GridEnvironment) -> list[str]:
        problems = []
        for k, cell in enumerate(self.cells):
            if not env.is_free(cell):
                problems.append(f"robot {self.agent} at t={self.start_time + k} on blocked cell {cell}")
        for k in range(len(self.cells) - 1):
            if not adjacent_or_same(self.cells[k], self.cells[k + 1]):
                problems.append(
                    f"robot {self.agent} jumps {self.cells[k]}->{self.cells[k + 1]} "
                    f"at t={self.start_time + k}"
                )
        return problems


@dataclass
class RoutePlan:
    paths: list[Path] = field(default_factory=list)

    @property
    def horizon(self) -> int:
        return max((p.completion_time for p in self.paths), default=0)

    def positions(self, t: int) -> list[Cell]:
        return [p.at(t) for p in self.paths]


class ConflictKind(str, Enum):
    STATE = "STATE"
    ACTION = "ACTION"


@dataclass(frozen=True, order=True)
class Conflict:
    time: int
    agents: tuple[int, int]
    kind: ConflictKind
    cells: tuple[Cell, ...]


def detect_conflicts(plan: RoutePlan | Sequence[Path]) -> list[Conflict]:
    """All state and action conflicts, sorted by (time, agent pair)."""
    paths = plan.paths if isinstance(plan, RoutePlan) else list(plan)
    if len(paths) < 2:
        return []
    horizon = max(p.completion_time for p in paths)
    agents = [p.agent for p in paths]
    found: list[Conflict] = []
    prev = [p.at(0) for p in paths]
    for t in range(horizon + 1):
        cur = prev if t == 0 else [p.at(t) for p in paths]
        occupied: dict[Cell, list[int]] = {}
        for k, cell in enumerate(cur):
            occupied.setdefault(cell, []).append(k)
        for cell, ks in occupied.items():
            if len(ks) > 1:
                for x in range(len(ks)):
                    for y in range(x + 1, len(ks)):
                        i, j = sorted((agents[ks[x]], agents[ks[y]]))
                        found.append(Conflict(t, (i, j), ConflictKind.STATE, (cell,)))
        if t > 0:
            # swaps across (t-1, t)
            moved = {(prev[k], cur[k]): k for k in range(len(paths)) if prev[k] != cur[k]}
            for (a, b), k in moved.items():
                other = moved.get((b, a))
                if other is not None and agents[k] < agents[other]:
                    found.append(
                        Conflict(t - 1, (agents[k], agents[other]), ConflictKind.ACTION, (a, b))
                    )
        prev = cur
    found.sort(key=lambda c: (c.time, c.agents, c.kind.value))
    return found


@dataclass
class ObjectTrace:
    object: int
    cells: list[Cell]


def object_trace(plan: RoutePlan, schedule, j: int) -> ObjectTrace:
    """Cell of object ``j`` at every timestep up to its delivery."""
    from .schedule import VertexKind

    start_cell = None
    collect = deposit = None
    for v in schedule.vertices.values():
        if v.object != j:
            continue
        if v.kind is VertexKind.OBJECT_AT:
            start_cell = v.start_cell
        elif v.kind is VertexKind.COLLECT:
            collect = v
        elif v.kind is VertexKind.DEPOSIT:
            deposit = v
    if start_cell is None:
        raise InconsistencyError(f"object {j} has no OBJECT_AT vertex")
    horizon = plan.horizon
    if collect is None or deposit is None or collect.T > horizon:
        return ObjectTrace(j, [start_cell] * (horizon + 1))
    robot = deposit.robot
    path = next((p for p in plan.paths if p.agent == robot), None)
    if path is None or path.completion_time < deposit.T:
        raise InconsistencyError(f"robot {robot} path ends before deposit of object {j}")
    cells = [start_cell] * (collect.T + 1)
    cells += [path.at(t) for t in range(collect.T + 1, deposit.T + 1)]
    return ObjectTrace(j, cells)
