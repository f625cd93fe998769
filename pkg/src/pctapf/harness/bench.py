"""Benchmark suites: generate, solve, validate, summarize.

A suite config is a JSON object::

    {"name": "desk", "grid": {"width": 32, "height": 32},
     "shape": "random", "max_arity": 2,
     "robots": [5, 10], "objects": [5, 10, 15],   # crossed; or "cells": [[n, m], ...]
     "trials": 16, "seed_offset": 0,                # or "seeds": [...]
     "solver": {"time_limit": 60, "milp_time_limit": 100, "branch_cap": 100},
     "overrides": [{"n": 5, "m": 5, "seed": 3, "solver": {"milp_time_limit": 0.001}}]}
"""

from __future__ import annotations

import csv
import io
import json
import logging
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Any

import numpy as np

from ..nbs import SolverConfig, solve_pctapf
from .instances import InstanceParams, generate_instance
from .validate import validate_solution

logger = logging.getLogger(__name__)

ROW_FIELDS = (
    "id", "n", "m", "shape", "seed", "makespan", "optimal", "lower_bound", "branches",
    "full_time", "milp_time", "isps_time", "milp_solves", "capped", "milp_timed_out", "isps_failures",
    "valid", "violations", "error",
)
# fields that may differ between otherwise identical runs
TIMING_FIELDS = ("full_time", "milp_time", "isps_time")


@dataclass
class BenchReport:
    name: str
    rows: list[dict] = field(default_factory=list)

    def summary(self) -> dict[str, dict[str, list[float]]]:
        """Quartiles (min, q1, median, q3, max) per (n, m) cell."""
        cells: dict[tuple[int, int], list[dict]] = {}
        for row in self.rows:
            cells.setdefault((row["n"], row["m"]), []).append(row)
        out = {}
        for (n, m), rows in sorted(cells.items()):
            stats = {}
            for key in ("full_time", "milp_time", "isps_time", "branches"):
                vals = [r[key] for r in rows if r[key] is not None]
                stats[key] = [float(x) for x in np.percentile(vals, [0, 25, 50, 75, 100])] if vals else []
            stats["solved"] = sum(r["makespan"] is not None for r in rows)
            stats["optimal"] = sum(bool(r["optimal"]) for r in rows)
            stats["count"] = len(rows)
            out[f"{n},{m}"] = stats
        return out

    def to_json(self) -> str:
        return json.dumps({"suite": self.name, "rows": self.rows, "summary": self.summary()}, indent=1) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=ROW_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in self.rows:
            w.writerow({k: ("; ".join(row[k]) if k == "violations" else row[k]) for k in ROW_FIELDS})
        return buf.getvalue()


def _solver_config(d: dict) -> SolverConfig:
    known = {f.name for f in fields(SolverConfig)}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown solver settings: {sorted(unknown)}")
    return SolverConfig(**d)


def expand_suite(suite: dict) -> list[tuple[InstanceParams, dict]]:
    """(instance params, solver settings) for every suite entry, in a fixed order."""
    grid = suite.get("grid", {})
    if "cells" in suite:
        cells = [tuple(c) for c in suite["cells"]]
    else:
        cells = [(n, m) for n in suite["robots"] for m in suite["objects"]]
    if "seeds" in suite:
        seeds = list(suite["seeds"])
    else:
        off = suite.get("seed_offset", 0)
        seeds = [off + k for k in range(suite.get("trials", 16))]
    base_solver = dict(suite.get("solver", {}))
    overrides = suite.get("overrides", [])
    jobs = []
    for n, m in cells:
        for seed in seeds:
            params = InstanceParams(
                n=n, m=m, seed=seed,
                shape=suite.get("shape", "random"),
                max_arity=suite.get("max_arity", 2),
                collect_dt=suite.get("collect_dt", 0),
                deposit_dt=suite.get("deposit_dt", 0),
                op_dt=suite.get("op_dt", 0),
                **grid,
            )
            solver = dict(base_solver)
            for o in overrides:
                if o.get("n", n) == n and o.get("m", m) == m and o.get("seed", seed) == seed:
                    solver.update(o.get("solver", {}))
            jobs.append((params, solver))
    return jobs


def run_one(params: InstanceParams, solver: dict) -> dict:
    """One report row; failures are captured in the row, never raised."""
    row: dict[str, Any] = {k: None for k in ROW_FIELDS}
    row.update(n=params.n, m=params.m, shape=params.shape, seed=params.seed, violations=[])
    try:
        inst = generate_instance(params)
        row["id"] = inst.name
        t0 = time.perf_counter()
        sol = solve_pctapf(inst, _solver_config(solver))
        row["full_time"] = time.perf_counter() - t0
        if sol is None:
            row["optimal"] = False
            row["valid"] = True
            return row
        st = sol.stats
        row.update(
            makespan=sol.makespan, optimal=sol.optimal, lower_bound=sol.lower_bound,
            branches=st["cbs_branches"], milp_time=st["milp_time"], isps_time=st["isps_first_time"],
            milp_solves=st["milp_solves"], capped=st["capped"], milp_timed_out=st["milp_timed_out"],
            isps_failures=st["isps_failures"],
        )
        rep = validate_solution(inst, sol)
        row["valid"] = rep.ok
        row["violations"] = rep.violations
    except Exception as exc:  # a broken instance must not abort the suite
        row["error"] = f"{type(exc).__name__}: {exc}"
        logger.debug("instance %s failed\n%s", row["id"], traceback.format_exc())
    if row["id"] is None:
        row["id"] = f"n{params.n}_m{params.m}_{params.shape}_s{params.seed}"
    return row


def _run_job(job):
    return run_one(*job)


def run_benchmark(suite: dict, workers: int = 1, progress=None) -> BenchReport:
    jobs = expand_suite(suite)
    rows: list[dict] = []
    if workers <= 1:
        for job in jobs:
            rows.append(_run_job(job))
            if progress:
                progress(rows[-1])
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for row in pool.map(_run_job, jobs):
                rows.append(row)
                if progress:
                    progress(row)
    rows.sort(key=lambda r: (r["n"], r["m"], r["seed"], r["id"]))
    return BenchReport(suite.get("name", "suite"), rows)


def load_suite(text: str) -> dict:
    suite = json.loads(text)
    if not isinstance(suite, dict):
        raise ValueError("suite config must be a JSON object")
    if "cells" not in suite and not ("robots" in suite and "objects" in suite):
        raise ValueError("suite config needs 'cells' or both 'robots' and 'objects'")
    return suite


def deterministic_view(report: BenchReport) -> list[dict]:
    """Rows without timing fields, for run-to-run comparison."""
    return [{k: v for k, v in r.items() if k not in TIMING_FIELDS} for r in report.rows]


def write_report(report: BenchReport, out: str) -> tuple[str, str]:
    base = out[:-5] if out.endswith(".json") else out
    jpath, cpath = base + ".json", base + ".csv"
    with open(jpath, "w", encoding="utf-8") as f:
        f.write(report.to_json())
    with open(cpath, "w", encoding="utf-8") as f:
        f.write(report.to_csv())
    return jpath, cpath


__all__ = [
    "BenchReport", "deterministic_view", "expand_suite", "load_suite", "run_benchmark",
    "run_one", "write_report",
]
