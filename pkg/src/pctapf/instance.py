from __future__ import annotations

from dataclasses import dataclass

from .gridworld import Cell, GridEnvironment
from .schedule import ProjectSpec, SpecError


@dataclass(frozen=True)
class Instance:
    """A PC-TAPF problem: environment, robot start cells, project spec."""

    env: GridEnvironment
    robot_starts: tuple[Cell, ...]
    spec: ProjectSpec
    name: str = ""

    def __post_init__(self):
        if not self.robot_starts:
            raise SpecError("instance has no robots")
        if len(set(self.robot_starts)) != len(self.robot_starts):
            raise SpecError("robot start cells must be distinct")
        for c in self.robot_starts:
            if not self.env.is_free(c):
                raise SpecError(f"robot start {c} is not a free cell")
        for o in self.spec.objects:
            for c in (o.initial_cell, o.dropoff_cell):
                if not self.env.is_free(c):
                    raise SpecError(f"object {o.id} cell {c} is not a free cell")

    @property
    def n(self) -> int:
        return len(self.robot_starts)

    @property
    def m(self) -> int:
        return len(self.spec.objects)
