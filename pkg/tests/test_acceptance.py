"""End-to-end acceptance checks.

Each test records one PASS/FAIL line, printed in the pytest terminal summary
under "acceptance criteria".  The expensive suites are computed once and
shared: the validity and bound checks look at every solve made here.
"""

import functools
import itertools
import random
import statistics
import time

from pctapf import SolverConfig, solve_pctapf
from pctapf.astar_sc import ConflictTable, plan_segment
from pctapf.cli import main as cli_main
from pctapf.harness.bench import run_benchmark
from pctapf.harness.instances import InstanceParams, factory_environment, generate_instance
from pctapf.harness.io import serialize_solution
from pctapf.harness.oracle import OracleTooLarge, brute_force_oracle
from pctapf.harness.validate import validate_solution
from pctapf.schedule import OperatingSchedule, ScheduleVertex, VertexKind, update_schedule

from helpers import make_instance

ORACLE_SEEDS = 25
ORACLE_MIN_INSTANCES = 200
ORACLE_TIME_LIMIT = 300.0          # seconds, whole cross-check
ZERO_BRANCH_SHARE = 0.90
FULL_MEDIAN_LIMIT = 10.0           # seconds
ISPS_MEDIAN_LIMIT = 1.0            # seconds
A_STAR_PAIRS = 100

# every (instance, solution-or-row) produced below, for the validity and bound checks
SOLVES: list = []


def _record(inst, sol):
    SOLVES.append(("solve", inst.name, inst, sol))
    return sol


@functools.cache
def oracle_suite():
    """Solver and oracle side by side on tiny instances."""
    out = []
    t0 = time.perf_counter()
    for seed in range(ORACLE_SEEDS):
        shape = ("chain", "tree", "random")[seed % 3]
        for w, n, m in itertools.product((6, 8), (1, 2, 3), (1, 2, 3)):
            inst = generate_instance(InstanceParams(n=n, m=m, width=w, height=w, shape=shape, seed=seed))
            if len(inst.spec.operations) > 2:
                continue
            sol = _record(inst, solve_pctapf(inst))
            try:
                truth = brute_force_oracle(inst).makespan
            except OracleTooLarge:
                truth = "too large"
            out.append((inst, sol, truth))
    return out, time.perf_counter() - t0


@functools.cache
def rarity_suite():
    suite = {"name": "rarity", "robots": [5, 10], "objects": [5, 10, 15], "trials": 16,
             "solver": {"time_limit": 120}}
    rows = run_benchmark(suite).rows
    SOLVES.extend(("row", r["id"], None, r) for r in rows)
    return rows


@functools.cache
def runtime_suite():
    suite = {"name": "runtime", "robots": [10], "objects": [10], "trials": 16}
    rows = run_benchmark(suite).rows
    SOLVES.extend(("row", r["id"], None, r) for r in rows)
    return rows


def corridor_stress():
    # one-wide corridor with a single passing pocket; both robots start at the
    # far end and must carry objects past each other
    top = "PP" + "." * 6 + "DD"
    bottom = "####.#####"
    env_text = f"10 2\n{top}\n{bottom}"
    return make_instance(
        env_text, [(0, 9), (0, 8)],
        [((0, 0), (0, 9)), ((0, 1), (0, 8))], [([0, 1], [])], name="corridor_stress",
    )


def test_criterion_1_oracle_optimality(verdict):
    results, elapsed = oracle_suite()
    compared = [(i, s, t) for i, s, t in results if t != "too large" and s is not None and s.optimal]
    both_infeasible = sum(1 for _, s, t in results if s is None and t is None)
    mismatches = [i.name for i, s, t in compared if s.makespan != t]
    mismatches += [i.name for i, s, t in results if (s is None) != (t is None) and t != "too large"]
    ok = len(compared) + both_infeasible >= ORACLE_MIN_INSTANCES and not mismatches and elapsed < ORACLE_TIME_LIMIT
    verdict("criterion 1 (oracle optimality)", ok,
            f"{len(compared)} optimal solves compared, {both_infeasible} jointly infeasible, "
            f"{len(mismatches)} mismatches {mismatches[:5]}, {elapsed:.1f}s")


def test_criterion_4_branching_rarity(verdict):
    rows = rarity_suite()
    errors = [r["id"] for r in rows if r["error"]]
    zero = sum(1 for r in rows if r["branches"] == 0)
    share = zero / len(rows)
    ok = len(rows) == 96 and not errors and share >= ZERO_BRANCH_SHARE
    verdict("criterion 4 (CBS branching rarity)", ok,
            f"{zero}/{len(rows)} instances with zero branches ({share:.1%}), errors: {errors}")


def test_criterion_5_desk_scale_runtime(verdict):
    rows = runtime_suite()
    full = statistics.median(r["full_time"] for r in rows)
    isps = statistics.median(r["isps_time"] for r in rows)
    ok = len(rows) == 16 and full < FULL_MEDIAN_LIMIT and isps < ISPS_MEDIAN_LIMIT
    verdict("criterion 5 (desk-scale runtime)", ok,
            f"n=10 m=10 on 32x32, median full {full:.3f}s, median first ISPS pass {isps:.4f}s")


def test_criterion_6_timeout_semantics(verdict, tmp_path):
    inst_path, sol_path = tmp_path / "hard.json", tmp_path / "sol.json"
    cli_main(["generate", "--robots", "2", "--objects", "15", "--seed", "3", "--out", str(inst_path)])
    code = cli_main(["solve", str(inst_path), "--milp-limit", "0.000001", "--out", str(sol_path)])
    valid = sol_path.exists() and cli_main(["validate", str(inst_path), str(sol_path)]) == 0
    verdict("criterion 6 (timeout semantics)", code == 2 and valid,
            f"n=2 m=15 with near-zero assignment budget: exit {code}, solution valid={valid}")


def test_criterion_7_branch_cap(verdict):
    inst = corridor_stress()
    try:
        sol = _record(inst, solve_pctapf(inst, SolverConfig(branch_cap=100)))
        crash = None
    except Exception as exc:  # the point is that this never happens
        sol, crash = None, repr(exc)
    capped = bool(sol and sol.stats["capped"])
    valid = bool(sol and validate_solution(inst, sol).ok)
    ok = crash is None and capped and valid and not sol.optimal
    detail = crash or (f"capped={capped} valid={valid} optimal={sol.optimal if sol else None} "
                       f"makespan={sol.makespan if sol else None} bound={sol.lower_bound if sol else None}")
    verdict("criterion 7 (branch-cap semantics)", ok, detail)


def _slack_fixture(durations, edges):
    G = OperatingSchedule()
    for dt in durations:
        G.add_vertex(VertexKind.OPERATION, dt=dt)
    for a, b in edges:
        G.add_edge(a, b)
    update_schedule(G)
    return {k: (v.t0, v.T, v.slack) for k, v in G.vertices.items()}


def test_criterion_8_slack_and_single_agent_paths(verdict):
    chain = _slack_fixture([2, 3, 1], [(0, 1), (1, 2)])
    diamond = _slack_fixture([1, 4, 2, 1], [(0, 1), (0, 2), (1, 3), (2, 3)])
    slack_ok = chain == {0: (0, 2, 0), 1: (2, 5, 0), 2: (5, 6, 0)} and \
        diamond == {0: (0, 1, 0), 1: (1, 5, 0), 2: (1, 3, 2), 3: (5, 6, 0)}

    env = factory_environment()
    rng = random.Random(8)
    cells = sorted(env.free_cells)
    bad = 0
    for _ in range(A_STAR_PAIRS):
        a, b = rng.sample(cells, 2)
        d = int(env.dist(a, b))
        v = ScheduleVertex(0, VertexKind.GO, robot=0, start_cell=a, goal_cell=b, t0=0, dt=d, T=d, slack=0)
        path = plan_segment(ConflictTable(), v, (), env)
        if path.cells[0] != a or path.cells[-1] != b or len(path.cells) - 1 != d or path.check(env):
            bad += 1
    verdict("criterion 8 (slack fixtures, A* paths)", slack_ok and bad == 0,
            f"chain/diamond slacks exact={slack_ok}, {A_STAR_PAIRS - bad}/{A_STAR_PAIRS} paths distance-optimal")


def _fingerprint(inst):
    sol = solve_pctapf(inst)
    if sol is None:
        return None
    return sol.makespan, sol.stats["cbs_branches"], serialize_solution(sol, inst.name)


def test_criterion_9_determinism(verdict):
    first = oracle_suite()[0]
    runtime = runtime_suite()
    insts = [i for i, _, _ in first] + [
        generate_instance(InstanceParams(n=10, m=10, seed=r["seed"])) for r in runtime
    ]
    a = [_fingerprint(i) for i in insts]
    b = [_fingerprint(i) for i in insts]
    # the shared suites also agree with their earlier runs
    earlier = [(s.makespan, s.stats["cbs_branches"], serialize_solution(s, i.name)) if s else None
               for i, s, _ in first]
    diff = sum(x != y for x, y in zip(a, b)) + sum(x != y for x, y in zip(a, earlier))
    rerun = run_benchmark({"name": "runtime", "robots": [10], "objects": [10], "trials": 16}).rows
    row_diff = sum((r["makespan"], r["branches"]) != (q["makespan"], q["branches"]) for r, q in zip(rerun, runtime))
    verdict("criterion 9 (determinism)", diff == 0 and row_diff == 0,
            f"{len(insts)} instances solved twice, {diff} differing solutions, {row_diff} differing bench rows")


def test_criterion_2_validity(verdict):
    # depends on every suite above having run; the cached calls are free if so
    oracle_suite(), rarity_suite(), runtime_suite()
    failures = []
    for kind, name, inst, item in SOLVES:
        if kind == "solve":
            if item is not None and not validate_solution(inst, item).ok:
                failures.append(name)
        elif item["error"] or not item["valid"]:
            failures.append(name)
    verdict("criterion 2 (validity)", not failures,
            f"{len(SOLVES) - len(failures)}/{len(SOLVES)} solver outputs with zero violations, failing: {failures[:5]}")


def test_criterion_3_bound_sandwich(verdict):
    oracle_suite(), rarity_suite(), runtime_suite()
    bad = []
    for kind, name, _, item in SOLVES:
        if item is None or (kind == "row" and item["makespan"] is None):
            continue
        if kind == "solve":
            lb, ms, opt = item.lower_bound, item.makespan, item.optimal
        else:
            lb, ms, opt = item["lower_bound"], item["makespan"], item["optimal"]
        if lb > ms or (opt and lb != ms):
            bad.append(name)
    verdict("criterion 3 (bound sandwich)", not bad,
            f"{len(SOLVES) - len(bad)}/{len(SOLVES)} solves with bound <= makespan and equality when optimal, "
            f"violating: {bad[:5]}")
