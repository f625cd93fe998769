import pytest

from pctapf import ConfigError, SolverConfig, solve_pctapf
from pctapf.harness.instances import InstanceParams, generate_instance
from pctapf.harness.validate import validate_solution

from helpers import make_instance


def corridor():
    return make_instance(
        "5 2\nDP.PD\n##.##",
        [(0, 0), (0, 4)],
        [((0, 1), (0, 4)), ((0, 3), (0, 0))],
        [([0, 1], [])],
    )


def test_single_robot_single_task():
    inst = make_instance("6 1\n..P..D", [(0, 0)], [((0, 2), (0, 5))], [([0], [])])
    sol = solve_pctapf(inst)
    assert sol.makespan == 5 and sol.optimal and sol.lower_bound == 5
    assert validate_solution(inst, sol).ok


def test_conflict_forces_next_best_or_branching():
    inst = corridor()
    events = []
    sol = solve_pctapf(inst, progress=events.append)
    assert sol.makespan == 6 and sol.optimal
    assert validate_solution(inst, sol).ok
    kinds = [e["event"] for e in events]
    assert kinds[0] == "assignment" and kinds[-1] == "done"
    assert all("elapsed" in e for e in events)


def test_infeasible_returns_none():
    inst = make_instance("5 3\n.P#..\n###.D\n.....", [(0, 0)], [((0, 1), (1, 4))], [([0], [])])
    events = []
    assert solve_pctapf(inst, progress=events.append) is None
    assert events[-1]["event"] == "infeasible"


def test_stats_are_reported():
    inst = generate_instance(InstanceParams(n=3, m=4, width=8, height=8, seed=1))
    sol = solve_pctapf(inst)
    for key in ("milp_solves", "cbs_branches", "isps_first_time", "wall_time", "capped"):
        assert key in sol.stats
    assert sol.stats["milp_time"] <= sol.stats["wall_time"]


@pytest.mark.parametrize(
    "kwargs",
    [dict(time_limit=0), dict(milp_time_limit=-1), dict(branch_cap=-1),
     dict(horizon_factor=0.5), dict(milp_node_limit=0), dict(repair_rounds=-1)],
)
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        SolverConfig(**kwargs).validate()


def test_time_limit_from_environment(monkeypatch):
    monkeypatch.setenv("PCTAPF_TIME_LIMIT", "12.5")
    assert SolverConfig().time_limit == 12.5
    monkeypatch.setenv("PCTAPF_TIME_LIMIT", "soon")
    with pytest.raises(ConfigError):
        SolverConfig()
    monkeypatch.delenv("PCTAPF_TIME_LIMIT")
    assert SolverConfig().time_limit is None


def test_branch_cap_zero_flags_suboptimal_when_branching_needed():
    inst = corridor()
    sol = solve_pctapf(inst, SolverConfig(branch_cap=0, repair_rounds=0))
    if sol is not None:
        assert not sol.optimal
        assert sol.lower_bound <= 6 <= sol.makespan
        assert validate_solution(inst, sol).ok


def test_results_are_deterministic():
    inst = generate_instance(InstanceParams(n=4, m=5, width=16, height=16, seed=4))
    a = solve_pctapf(inst)
    b = solve_pctapf(inst)
    assert (a.makespan, a.assignment, [p.cells for p in a.plan.paths]) == \
        (b.makespan, b.assignment, [p.cells for p in b.plan.paths])
