import itertools
import random

import pytest

from pctapf.astar_sc import (
    AgentConstraints,
    BoundExceeded,
    ConflictTable,
    ConstraintKind,
    RoutingConstraint,
    SearchFailed,
    UnreachableGoal,
    plan_segment,
)
from pctapf.gridworld import GridEnvironment, Path, parse_environment
from pctapf.harness.instances import factory_environment
from pctapf.schedule import ScheduleVertex, VertexKind


def go(start, goal, t0=0, slack=0, env=None, dt=None):
    d = dt if dt is not None else int(env.dist(start, goal))
    return ScheduleVertex(0, VertexKind.GO, robot=0, start_cell=start, goal_cell=goal,
                          t0=t0, dt=d, T=t0 + d, slack=slack)


def test_empty_table_gives_shortest_paths_on_100_pairs():
    env = factory_environment(16, 16)
    rng = random.Random(3)
    cells = list(env.free_cells)
    for _ in range(100):
        a, b = rng.sample(cells, 2)
        t0 = rng.randint(0, 5)
        path = plan_segment(ConflictTable(), go(a, b, t0, env=env), (), env)
        assert path.cells[0] == a and path.cells[-1] == b
        assert path.start_time == t0
        assert len(path.cells) - 1 == env.dist(a, b)
        assert not path.check(env)


def step_cost(path_cells, others, t0):
    """Conflicts a path collects against parked-at-end background paths."""
    total = 0
    for k in range(len(path_cells) - 1):
        t = t0 + k
        a, b = path_cells[k], path_cells[k + 1]
        for o in others:
            if o.at(t + 1) == b:
                total += 1
            elif o.at(t) == b and o.at(t + 1) == a:
                total += 1
    return total


def brute_force_best(env, start, goal, t0, deadline, max_len, others):
    best = None
    frontier = [[start]]
    for _ in range(max_len + 1):
        nxt = []
        for cells in frontier:
            t = t0 + len(cells) - 1
            if cells[-1] == goal:
                key = (max(0, t - deadline), step_cost(cells, others, t0))
                if best is None or key < best:
                    best = key
            here = cells[-1]
            for b in [here, *env.neighbors(here)]:
                nxt.append(cells + [b])
        frontier = nxt
    return best


@pytest.mark.parametrize("seed", range(12))
def test_lexicographic_optimality_against_enumeration(seed):
    rng = random.Random(seed)
    env = GridEnvironment(4, 3, [rng.choice([(1, 1), (1, 2)])])
    cells = list(env.free_cells)
    start, goal = rng.sample(cells, 2)
    d = int(env.dist(start, goal))
    slack = rng.randint(0, 2)
    others = []
    for agent in (1, 2):
        a = rng.choice(cells)
        walk = [a]
        for _ in range(rng.randint(1, 5)):
            walk.append(rng.choice([walk[-1], *env.neighbors(walk[-1])]))
        others.append(Path(agent, 0, walk))
    table = ConflictTable(others)
    v = go(start, goal, 0, slack, env=env)
    path = plan_segment(table, v, (), env)
    got = (max(0, path.completion_time - (v.T + v.slack)), step_cost(path.cells, others, 0))
    want = brute_force_best(env, start, goal, 0, v.T + v.slack, d + slack + 1, others)
    assert got == want


def test_state_constraint_forces_a_detour_or_wait():
    env = parse_environment("3 1\n...")
    c = RoutingConstraint(0, 1, ConstraintKind.STATE, ((0, 1),))
    path = plan_segment(ConflictTable(), go((0, 0), (0, 2), slack=5, env=env), [c], env)
    assert path.at(1) != (0, 1)
    assert path.cells[-1] == (0, 2) and path.completion_time == 3


def test_action_constraint_blocks_one_direction():
    env = parse_environment("2 1\n..")
    c = RoutingConstraint(0, 0, ConstraintKind.ACTION, ((0, 0), (0, 1)))
    path = plan_segment(ConflictTable(), go((0, 0), (0, 1), slack=5, env=env), [c], env)
    assert path.cells == [(0, 0), (0, 0), (0, 1)]


def test_goal_requires_holding_through_handling():
    env = parse_environment("3 1\n...")
    # the goal cell is forbidden at t=3, so arriving at t=2 and holding 1 step fails
    c = RoutingConstraint(0, 3, ConstraintKind.STATE, ((0, 2),))
    path = plan_segment(ConflictTable(), go((0, 0), (0, 2), slack=9, env=env), [c], env, hold=1)
    t_end = path.completion_time
    assert t_end >= 4


def test_release_time_delays_arrival():
    env = parse_environment("3 1\n...")
    path = plan_segment(ConflictTable(), go((0, 0), (0, 2), slack=9, env=env), (), env, release_time=5)
    assert path.completion_time == 5 and path.cells[-1] == (0, 2)


def test_delay_cap_raises_bound_exceeded():
    env = parse_environment("3 1\n...")
    c = RoutingConstraint(0, 2, ConstraintKind.STATE, ((0, 2),))
    with pytest.raises(BoundExceeded):
        plan_segment(ConflictTable(), go((0, 0), (0, 2), slack=0, env=env), [c], env, delay_cap=0)


def test_unreachable_goal():
    env = parse_environment("3 1\n.#.")
    with pytest.raises(UnreachableGoal):
        plan_segment(ConflictTable(), go((0, 0), (0, 2), dt=0), (), env)


def test_horizon_never_cuts_below_last_constraint():
    env = parse_environment("3 1\n...")
    cons = [RoutingConstraint(0, t, ConstraintKind.STATE, ((0, 2),)) for t in range(0, 40)]
    path = plan_segment(ConflictTable(), go((0, 0), (0, 2), slack=0, env=env), cons, env, horizon=10)
    assert path.completion_time == 40


def test_search_fails_when_goal_is_walled_in_time():
    env = parse_environment("3 1\n...")
    # the middle cell is blocked at every step the search may take
    cons = [RoutingConstraint(0, t, ConstraintKind.STATE, ((0, 1),)) for t in range(1, 12)]
    with pytest.raises(SearchFailed):
        plan_segment(ConflictTable(), go((0, 0), (0, 2), slack=0, env=env), cons, env, horizon=11)


def test_agent_constraints_filtering():
    cons = AgentConstraints(1, [
        RoutingConstraint(0, 1, ConstraintKind.STATE, ((0, 0),)),
        RoutingConstraint(1, 1, ConstraintKind.STATE, ((0, 1),)),
    ])
    assert cons.allows((0, 0), 0, (0, 0))
    assert not cons.allows((0, 0), 0, (0, 1))
    assert not cons.can_hold((0, 1), 0, 3)
    assert cons.can_hold((0, 1), 2, 5)


def test_conflict_table_counts_swaps_and_parking():
    table = ConflictTable([Path(1, 0, [(0, 2), (0, 1)])])
    assert table.step_conflicts(0, (0, 0), 0, (0, 1)) == 1      # both at (0,1) at t=1
    assert table.step_conflicts(0, (0, 1), 0, (0, 2)) == 1      # swap
    assert table.step_conflicts(0, (0, 0), 5, (0, 1)) == 1      # parked forever
    assert table.step_conflicts(1, (0, 0), 5, (0, 1)) == 0      # never against itself


def test_grid_paths_exhaustive_on_tiny_grid():
    # every (start, goal) pair on a 3x3 grid with a centre wall: length equals distance
    env = GridEnvironment(3, 3, [(1, 1)])
    for a, b in itertools.permutations(env.free_cells, 2):
        p = plan_segment(ConflictTable(), go(a, b, env=env), (), env)
        assert len(p.cells) - 1 == env.dist(a, b)
