import itertools
import random

import numpy as np
import pytest

from pctapf import assignment as asg
from pctapf.harness.instances import InstanceParams, generate_instance
from pctapf.schedule import build_schedule, makespan

from helpers import make_instance


def sequences(n, m):
    for perm in itertools.permutations(range(m)):
        for bars in itertools.combinations_with_replacement(range(m + 1), n - 1):
            cuts = (0,) + bars + (m,)
            yield [list(perm[cuts[k]:cuts[k + 1]]) for k in range(n)]


def reference_cost(inst, seqs):
    """Collision-free makespan of fixed robot task sequences, or None if they deadlock."""
    env, spec = inst.env, inst.spec
    objs = spec.objects
    producer = {j: op for op in spec.operations for j in op.outputs}
    where = {j: (r, k) for r, seq in enumerate(seqs) for k, j in enumerate(seq)}
    comp = {}
    while len(comp) < inst.m:
        progressed = False
        for j in range(inst.m):
            if j in comp:
                continue
            r, k = where[j]
            prev = seqs[r][k - 1] if k else None
            if prev is not None and prev not in comp:
                continue
            op = producer.get(j)
            if op is not None and any(x not in comp for x in op.inputs):
                continue
            release = 0 if op is None else max(comp[x] for x in op.inputs) + op.dt
            if prev is None:
                arrive = env.dist(inst.robot_starts[r], objs[j].initial_cell)
            else:
                arrive = comp[prev] + env.dist(objs[prev].dropoff_cell, objs[j].initial_cell)
            begin = max(arrive, release)
            comp[j] = begin + objs[j].collect_dt + env.dist(objs[j].initial_cell, objs[j].dropoff_cell) + objs[j].deposit_dt
            progressed = True
        if not progressed:
            return None
    term = spec.terminal
    return max(comp[x] for x in term.inputs) + term.dt


def all_costs(inst):
    costs = []
    for seqs in sequences(inst.n, inst.m):
        c = reference_cost(inst, seqs)
        if c is not None:
            costs.append(c)
    return sorted(costs)


def small_instances(count=30):
    rng = random.Random(7)
    out = []
    for k in range(count):
        n, m = rng.randint(1, 3), rng.randint(1, 4)
        shape = rng.choice(["chain", "tree", "random"])
        out.append(generate_instance(InstanceParams(n=n, m=m, width=8, height=8, shape=shape, seed=k)))
    return out


@pytest.mark.parametrize("inst", small_instances(), ids=lambda i: i.name)
def test_optimum_matches_enumeration(inst):
    problem = asg.formulate(inst.spec, inst.env, inst.robot_starts)
    sol = asg.solve(problem)
    assert sol.proven_optimal
    assert sol.makespan == all_costs(inst)[0] == sol.lower_bound
    # the schedule built from the matrix agrees with the solver's arithmetic
    G = build_schedule(inst.spec, inst.env, sol.A, inst.robot_starts)
    assert makespan(G) == sol.makespan


@pytest.mark.parametrize("inst", small_instances(8), ids=lambda i: i.name)
def test_exclusion_cuts_enumerate_in_cost_order(inst):
    expected = all_costs(inst)
    problem = asg.formulate(inst.spec, inst.env, inst.robot_starts)
    seen = []
    for _ in range(min(6, len(expected))):
        sol = asg.solve(problem)
        seen.append(sol.makespan)
        problem = asg.add_exclusion(problem, sol.A)
    assert seen == expected[: len(seen)]


def test_exhausted_after_every_assignment_is_cut():
    inst = make_instance("4 1\n.PD.", [(0, 0)], [((0, 1), (0, 2))], [([0], [])])
    problem = asg.formulate(inst.spec, inst.env, inst.robot_starts)
    sol = asg.solve(problem)
    assert sol.makespan == 2
    with pytest.raises(asg.AssignmentExhausted):
        asg.solve(asg.add_exclusion(problem, sol.A))


def test_incumbent_bound_prunes_everything():
    inst = small_instances(1)[0]
    problem = asg.formulate(inst.spec, inst.env, inst.robot_starts)
    best = asg.solve(problem).makespan
    with pytest.raises(asg.AssignmentExhausted):
        asg.solve(problem, incumbent_bound=best)


def test_dummy_rows_respect_precedence():
    inst = make_instance(
        "8 1\n.PPDDDP.", [(0, 0), (0, 7)],
        [((0, 1), (0, 3)), ((0, 6), (0, 4)), ((0, 2), (0, 5))],
        [([0, 1], [2]), ([2], [])],
    )
    problem = asg.formulate(inst.spec, inst.env, inst.robot_starts)
    n = inst.n
    assert n + 2 not in problem.allowed_rows(0)   # o2's deliverer cannot go back for o0
    assert n + 0 not in problem.allowed_rows(0)   # nobody follows itself
    assert n + 0 in problem.allowed_rows(2)


def test_matrix_roundtrip():
    A = asg.AssignmentMatrix(2, (0, 3, 1))
    arr = A.to_array()
    assert arr.shape == (5, 3) and arr.sum() == 3
    assert (arr.sum(axis=0) == 1).all() and (arr.sum(axis=1) <= 1).all()
    assert asg.AssignmentMatrix.from_array(arr, 2) == A
    assert A.is_dummy(3) and not A.is_dummy(1)


def test_matrix_rejects_double_column():
    bad = np.zeros((3, 1), dtype=int)
    bad[0, 0] = bad[1, 0] = 1
    with pytest.raises(ValueError, match="exactly one"):
        asg.AssignmentMatrix.from_array(bad, 2)


def test_propagate_times_matches_reference():
    inst = small_instances(3)[2]
    problem = asg.formulate(inst.spec, inst.env, inst.robot_starts)
    sol = asg.solve(problem)
    start, comp, ms = asg.propagate_times(problem, sol.A)
    assert ms == sol.makespan
    assert all(c >= s for s, c in zip(start, comp))


def test_node_budget_gives_unproven_answer_with_valid_bound():
    inst = generate_instance(InstanceParams(n=2, m=10, seed=0))
    problem = asg.formulate(inst.spec, inst.env, inst.robot_starts, node_limit=5)
    sol = asg.solve(problem)
    full = asg.solve(asg.formulate(inst.spec, inst.env, inst.robot_starts))
    assert not sol.proven_optimal
    assert sol.lower_bound <= full.makespan <= sol.makespan


def test_unreachable_object_is_infeasible():
    from pctapf.schedule import InfeasibleError

    inst = make_instance("3 1\nP#D", [(0, 0)], [((0, 0), (0, 2))], [([0], [])])
    with pytest.raises(InfeasibleError):
        asg.formulate(inst.spec, inst.env, inst.robot_starts)
