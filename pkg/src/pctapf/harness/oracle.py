"""Exhaustive optimum for tiny instances, sharing no code with the solver.

Every way of handing the m tasks to the n robots as ordered sequences is
enumerated.  All of them seed one best-first search over joint states
(time, robot cells, robot task phases, delivery times).  A state's cost
so far is its time, so a lower bound on the remaining time (robots
teleport along shortest paths, ignoring each other) makes the first goal
popped optimal.
"""

from __future__ import annotations

import heapq
import itertools
from collections import deque
from dataclasses import dataclass
from typing import Optional

from ..instance import Instance

DEFAULT_BUDGET = 10_000_000

# robot phase stages
HEADING, COLLECTING, CARRYING, DEPOSITING = 0, 1, 2, 3
_INF = float("inf")


class OracleTooLarge(RuntimeError):
    """The search hit its expansion budget; the answer is unknown."""

    def __init__(self, expanded: int):
        super().__init__(f"oracle budget exhausted after {expanded} expansions")
        self.expanded = expanded


@dataclass
class OracleResult:
    makespan: Optional[int]       # None means infeasible within the horizon
    expanded: int
    assignments: int
    sequences: Optional[tuple[tuple[int, ...], ...]] = None

    @property
    def feasible(self) -> bool:
        return self.makespan is not None


class _Graph:
    def __init__(self, instance: Instance):
        env = instance.env
        cells = [(r, c) for r in range(env.height) for c in range(env.width) if env.is_free((r, c))]
        self.index = {c: k for k, c in enumerate(cells)}
        self.adj: list[tuple[int, ...]] = []
        for r, c in cells:
            nb = [self.index[x] for x in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)) if x in self.index]
            self.adj.append(tuple(nb))
        self._rows: dict[int, list[float]] = {}

    def dist_from(self, src: int) -> list[float]:
        row = self._rows.get(src)
        if row is None:
            row = [_INF] * len(self.adj)
            row[src] = 0
            q = deque([src])
            while q:
                u = q.popleft()
                for v in self.adj[u]:
                    if row[v] == _INF:
                        row[v] = row[u] + 1
                        q.append(v)
            self._rows[src] = row
        return row


def _task_sequences(n: int, m: int):
    """Every split of the tasks into n ordered (possibly empty) sequences, once each."""
    for perm in itertools.permutations(range(m)):
        for bars in itertools.combinations_with_replacement(range(m + 1), n - 1):
            cuts = (0,) + bars + (m,)
            yield tuple(tuple(perm[cuts[k]:cuts[k + 1]]) for k in range(n))


class _Model:
    def __init__(self, instance: Instance):
        self.g = _Graph(instance)
        spec = instance.spec
        self.n, self.m = instance.n, instance.m
        ix = self.g.index
        self.start = tuple(ix[c] for c in instance.robot_starts)
        self.pick = [ix[o.initial_cell] for o in spec.objects]
        self.drop = [ix[o.dropoff_cell] for o in spec.objects]
        self.cdt = [o.collect_dt for o in spec.objects]
        self.ddt = [o.deposit_dt for o in spec.objects]
        self.producer: list[Optional[tuple[tuple[int, ...], int]]] = [None] * self.m
        self.terminal: tuple[tuple[int, ...], int] = ((), 0)
        for op in spec.operations:
            entry = (tuple(sorted(op.inputs)), op.dt)
            if op.outputs:
                for j in op.outputs:
                    self.producer[j] = entry
            else:
                self.terminal = entry
        self.carry = [self.g.dist_from(self.pick[j])[self.drop[j]] for j in range(self.m)]

    def d(self, a: int, b: int) -> float:
        return self.g.dist_from(a)[b]

    def task_order(self, seqs) -> Optional[list[tuple[int, int, int]]]:
        """(task, robot, position) in an order respecting both the robot
        sequences and object precedence, or None when they deadlock."""
        where = {}
        for r, seq in enumerate(seqs):
            for k, j in enumerate(seq):
                where[j] = (r, k)
        deps: dict[int, set[int]] = {j: set() for j in range(self.m)}
        for j in range(self.m):
            r, k = where[j]
            if k > 0:
                deps[j].add(seqs[r][k - 1])
            if self.producer[j] is not None:
                deps[j].update(self.producer[j][0])
        order, done = [], set()
        while len(order) < self.m:
            ready = [j for j in range(self.m) if j not in done and deps[j] <= done]
            if not ready:
                return None
            for j in ready:
                done.add(j)
                order.append((j, *where[j]))
        return order

    def available_at(self, j: int, delivered: tuple) -> float:
        prod = self.producer[j]
        if prod is None:
            return 0
        inputs, dt = prod
        latest = 0
        for x in inputs:
            if delivered[x] < 0:
                return _INF
            latest = max(latest, delivered[x])
        return latest + dt

    def relaxed_end(self, seqs, order, t, pos, phases, delivered) -> float:
        comp = [0.0] * self.m
        for j, r, k in order:
            if delivered[j] >= 0:
                comp[j] = delivered[j]
                continue
            prod = self.producer[j]
            avail = 0.0
            if prod is not None:
                avail = max(comp[x] for x in prod[0]) + prod[1]
            cur, stage, wait = phases[r]
            if k == cur:
                if stage == HEADING:
                    begin = max(t + self.d(pos[r], self.pick[j]), avail)
                    comp[j] = begin + self.cdt[j] + self.carry[j] + self.ddt[j]
                elif stage == COLLECTING:
                    comp[j] = t + wait + self.carry[j] + self.ddt[j]
                elif stage == CARRYING:
                    comp[j] = t + self.d(pos[r], self.drop[j]) + self.ddt[j]
                else:
                    comp[j] = t + wait
            else:
                prev = seqs[r][k - 1]
                begin = max(comp[prev] + self.d(self.drop[prev], self.pick[j]), avail)
                comp[j] = begin + self.cdt[j] + self.carry[j] + self.ddt[j]
        inputs, dt = self.terminal
        return max(comp[x] for x in inputs) + dt

    def settle(self, seqs, t, pos, phases, delivered):
        """Apply every zero-duration transition possible at time t."""
        phases = list(phases)
        delivered = list(delivered)
        changed = True
        while changed:
            changed = False
            for r, seq in enumerate(seqs):
                cur, stage, wait = phases[r]
                if cur >= len(seq):
                    continue
                j = seq[cur]
                if stage == HEADING and self.cdt[j] == 0 and pos[r] == self.pick[j] \
                        and self.available_at(j, tuple(delivered)) <= t:
                    phases[r] = (cur, CARRYING, 0)
                    changed = True
                elif stage == COLLECTING and wait == 0:
                    phases[r] = (cur, CARRYING, 0)
                    changed = True
                elif stage == CARRYING and self.ddt[j] == 0 and pos[r] == self.drop[j]:
                    delivered[j] = t
                    phases[r] = (cur + 1, HEADING, 0)
                    changed = True
                elif stage == DEPOSITING and wait == 0:
                    delivered[j] = t
                    phases[r] = (cur + 1, HEADING, 0)
                    changed = True
        return tuple(phases), tuple(delivered)

    def finished(self, delivered) -> Optional[int]:
        inputs, dt = self.terminal
        if any(delivered[x] < 0 for x in inputs):
            return None
        return max(delivered[x] for x in inputs) + dt

    def robot_options(self, seqs, r, t, pos, phase, delivered):
        """(next cell, next phase) choices for one robot over one step."""
        cur, stage, wait = phase
        cell = pos[r]
        if stage in (COLLECTING, DEPOSITING):
            return [(cell, (cur, stage, wait - 1))]
        opts = [(cell, phase)] + [(c, phase) for c in self.g.adj[cell]]
        if cur < len(seqs[r]):
            j = seqs[r][cur]
            if stage == HEADING and self.cdt[j] > 0 and cell == self.pick[j] \
                    and self.available_at(j, delivered) <= t:
                opts.append((cell, (cur, COLLECTING, self.cdt[j] - 1)))
            elif stage == CARRYING and self.ddt[j] > 0 and cell == self.drop[j]:
                opts.append((cell, (cur, DEPOSITING, self.ddt[j] - 1)))
        return opts


def _joint_moves(pos, options):
    """Collision-free combinations of per-robot options."""
    n = len(options)
    chosen: list = [None] * n

    def rec(r, used):
        if r == n:
            yield tuple(chosen)
            return
        for cell, ph in options[r]:
            if cell in used:
                continue
            # swap with an earlier robot
            if any(chosen[q][0] == pos[r] and pos[q] == cell and cell != pos[r] for q in range(r)):
                continue
            chosen[r] = (cell, ph)
            used.add(cell)
            yield from rec(r + 1, used)
            used.discard(cell)

    yield from rec(0, set())


def brute_force_oracle(
    instance: Instance, horizon: Optional[int] = None, budget: int = DEFAULT_BUDGET
) -> OracleResult:
    """Optimal makespan by exhaustive joint search, or infeasible within ``horizon``."""
    M = _Model(instance)
    heap: list = []
    counter = itertools.count()
    seeds = []
    for seqs in _task_sequences(M.n, M.m):
        order = M.task_order(seqs)
        if order is None:
            continue
        phases0 = tuple((0, HEADING, 0) for _ in range(M.n))
        phases, delivered = M.settle(seqs, 0, M.start, phases0, tuple([-1] * M.m))
        bound = M.relaxed_end(seqs, order, 0, M.start, phases, delivered)
        if bound == _INF:
            continue
        seeds.append((bound, seqs, order, phases, delivered))
    if horizon is None:
        lowest = min((s[0] for s in seeds), default=0)
        horizon = int(2 * lowest) + instance.env.width * instance.env.height
    for bound, seqs, order, phases, delivered in seeds:
        heapq.heappush(heap, (bound, 0, next(counter), None, seqs, order, M.start, phases, delivered))

    seen: set = set()
    expanded = 0
    while heap:
        f, neg_t, _, goal, seqs, order, pos, phases, delivered = heapq.heappop(heap)
        if goal is not None:
            return OracleResult(goal, expanded, len(seeds), seqs)
        t = -neg_t
        key = (seqs, t, pos, phases, delivered)
        if key in seen:
            continue
        seen.add(key)
        expanded += 1
        if expanded > budget:
            raise OracleTooLarge(expanded)
        if t >= horizon:
            continue
        options = [M.robot_options(seqs, r, t, pos, phases[r], delivered) for r in range(M.n)]
        for combo in _joint_moves(pos, options):
            npos = tuple(c for c, _ in combo)
            nph, ndel = M.settle(seqs, t + 1, npos, tuple(p for _, p in combo), delivered)
            done = M.finished(ndel)
            if done is not None:
                if done <= horizon:
                    heapq.heappush(heap, (done, -(t + 1), next(counter), done, seqs, order, npos, nph, ndel))
                continue
            if (seqs, t + 1, npos, nph, ndel) in seen:
                continue
            end = M.relaxed_end(seqs, order, t + 1, npos, nph, ndel)
            if end > horizon:
                continue
            heapq.heappush(heap, (end, -(t + 1), next(counter), None, seqs, order, npos, nph, ndel))
    return OracleResult(None, expanded, len(seeds))
