"""Command line entry point.

Exit codes: 0 solved optimally (or valid / oracle answered), 2 solved but
not proven optimal, 3 infeasible, 4 input error.  ``validate`` exits 1 on
a solution with violations; ``oracle`` exits 5 when its budget runs out.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Optional, Sequence

from .gridworld import GridFormatError, RoutePlan, parse_environment
from .harness.bench import load_suite, run_benchmark, write_report
from .harness.instances import SHAPES, InstanceParams, ParameterError, generate_instance
from .harness.io import SchemaError, parse_instance, parse_solution, serialize_instance, serialize_solution
from .harness.oracle import DEFAULT_BUDGET, OracleTooLarge, brute_force_oracle
from .harness.validate import validate_solution
from .nbs import ConfigError, SolverConfig, solve_pctapf
from .schedule import SpecError

EXIT_OPTIMAL, EXIT_INVALID, EXIT_SUBOPTIMAL, EXIT_INFEASIBLE, EXIT_INPUT, EXIT_TOO_LARGE = 0, 1, 2, 3, 4, 5


class InputError(Exception):
    pass


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as f:
            return f.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


def _write(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)


def _load_instance(path: str, env_path: Optional[str] = None):
    env = parse_environment(_read(env_path)) if env_path else None
    return parse_instance(_read(path), env)


def step_trace(plan: RoutePlan) -> str:
    """One line per timestep listing every robot's cell."""
    lines = []
    for t in range(plan.horizon + 1):
        cells = " ".join(f"r{p.agent}@{p.at(t)[0]},{p.at(t)[1]}" for p in plan.paths)
        lines.append(f"t={t} {cells}")
    return "\n".join(lines) + "\n"


def cmd_solve(args) -> int:
    inst = _load_instance(args.instance, args.env)
    cfg = SolverConfig(
        milp_time_limit=args.milp_limit,
        branch_cap=args.branch_cap,
        horizon_factor=args.horizon_factor,
        milp_node_limit=args.milp_node_limit,
    )
    if args.time_limit is not None:
        cfg.time_limit = args.time_limit
    trace = open(args.trace, "w", encoding="utf-8") if args.trace else None
    try:
        sink = (lambda ev: trace.write(json.dumps(ev) + "\n")) if trace else None
        sol = solve_pctapf(inst, cfg, sink)
    finally:
        if trace:
            trace.close()
    if sol is None:
        print("infeasible: no solution found", file=sys.stderr)
        return EXIT_INFEASIBLE
    _write(args.out, serialize_solution(sol, inst.name))
    if args.steps:
        _write(args.steps, step_trace(sol.plan))
    print(
        f"makespan={sol.makespan} optimal={str(sol.optimal).lower()} lower_bound={sol.lower_bound} "
        f"branches={sol.stats['cbs_branches']} assignments={sol.stats['milp_solves']}",
        file=sys.stderr,
    )
    return EXIT_OPTIMAL if sol.optimal else EXIT_SUBOPTIMAL


def cmd_generate(args) -> int:
    params = InstanceParams(
        n=args.robots, m=args.objects, shape=args.shape, seed=args.seed,
        width=args.width, height=args.height, max_arity=args.max_arity,
        collect_dt=args.collect_dt, deposit_dt=args.deposit_dt, op_dt=args.op_dt,
    )
    _write(args.out, serialize_instance(generate_instance(params)))
    return 0


def cmd_validate(args) -> int:
    inst = _load_instance(args.instance, args.env)
    sol = parse_solution(_read(args.solution), inst)
    rep = validate_solution(inst, sol)
    for v in rep.violations:
        print(v)
    print(f"{len(rep.violations)} violation(s)", file=sys.stderr)
    return 0 if rep.ok else EXIT_INVALID


def cmd_bench(args) -> int:
    try:
        suite = load_suite(_read(args.suite))
    except ValueError as exc:
        raise InputError(f"suite config: {exc}") from None

    def progress(row):
        status = "error" if row["error"] else f"makespan={row['makespan']} optimal={row['optimal']}"
        print(f"{row['id']}: {status}", file=sys.stderr)

    report = run_benchmark(suite, workers=args.workers, progress=progress)
    jpath, cpath = write_report(report, args.out)
    print(f"wrote {jpath} and {cpath}", file=sys.stderr)
    return 0


def cmd_oracle(args) -> int:
    inst = _load_instance(args.instance, args.env)
    try:
        res = brute_force_oracle(inst, horizon=args.horizon, budget=args.budget)
    except OracleTooLarge as exc:
        print(f"too large: {exc}", file=sys.stderr)
        return EXIT_TOO_LARGE
    if res.makespan is None:
        print("infeasible")
        return EXIT_INFEASIBLE
    print(res.makespan)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pctapf", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve an instance file")
    p.add_argument("instance")
    p.add_argument("--env", help="environment grid file (overrides the embedded one)")
    p.add_argument("--time-limit", type=float, help="overall wall-clock budget in seconds")
    p.add_argument("--milp-limit", type=float, default=100.0, help="per-call assignment solver budget")
    p.add_argument("--milp-node-limit", type=int, help="per-call assignment solver node budget")
    p.add_argument("--branch-cap", type=int, default=100)
    p.add_argument("--horizon-factor", type=float, default=4.0)
    p.add_argument("--out", help="solution file (default stdout)")
    p.add_argument("--trace", help="JSON-lines progress log")
    p.add_argument("--steps", help="plain-text per-timestep robot positions")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("generate", help="write a random instance")
    p.add_argument("--robots", type=int, required=True)
    p.add_argument("--objects", type=int, required=True)
    p.add_argument("--shape", choices=SHAPES, default="random")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--height", type=int, default=32)
    p.add_argument("--max-arity", type=int, default=2)
    p.add_argument("--collect-dt", type=int, default=0)
    p.add_argument("--deposit-dt", type=int, default=0)
    p.add_argument("--op-dt", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("validate", help="check a solution against its instance")
    p.add_argument("instance")
    p.add_argument("solution")
    p.add_argument("--env")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("bench", help="run a benchmark suite")
    p.add_argument("suite")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="report", help="output basename; .json and .csv are written")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("oracle", help="exhaustive optimum for a tiny instance")
    p.add_argument("instance")
    p.add_argument("--env")
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p.add_argument("--horizon", type=int)
    p.set_defaults(func=cmd_oracle)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, SchemaError, GridFormatError, SpecError, ParameterError, ConfigError,
            json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
