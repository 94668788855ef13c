"""Benchmark runner: solve one dataset with each requested method from a
common start, write per-method CSV traces plus a JSON summary, and emit a
small plot script that consumes the CSVs.

CSV schema (one row per outer iteration):

    k,time_s,f,obj_err,delta,gamma,backtracks,inner_iters

``obj_err`` is the objective value minus the smallest value found by any of
the methods in the run. Floats carry 17 significant digits, so numeric
content is bit-stable across reruns; only the timing column varies.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from .baselines import ProxLinearConfig, prox_linear_bt_solve, prox_linear_ls_solve
from .regression import make_constraint_set, make_objective, make_oracle
from .solver import LineSearchParams, SolverConfig, mcgm_solve, rate_certificate, verify_trace_arrays

__all__ = [
    "METHOD_NAMES",
    "CSV_COLUMNS",
    "ComparisonResult",
    "run_method",
    "run_comparison",
    "write_trace_csv",
    "read_trace_csv",
    "check_trace_file",
    "emit_plot_script",
]

METHOD_NAMES = ("mcgm", "proxlin_ls", "proxlin_bt")
CSV_COLUMNS = ("k", "time_s", "f", "obj_err", "delta", "gamma", "backtracks", "inner_iters")
SUMMARY_SCHEMA = "modelcg.summary/1"


def run_method(method, dataset, x0, ls=None, cfg=None, plcfg=None):
    """Solve the dataset with one method; a fresh oracle per call so warm
    starts never leak across methods."""
    if method not in METHOD_NAMES:
        raise ValueError(f"unknown method {method!r}")
    oracle = make_oracle(dataset)
    fun = make_objective(dataset)
    box = make_constraint_set(dataset)
    ls = ls or LineSearchParams()
    cfg = cfg or SolverConfig()
    plcfg = plcfg or ProxLinearConfig()
    if method == "mcgm":
        return mcgm_solve(oracle, fun, box, x0, ls=ls, cfg=cfg)
    if method == "proxlin_ls":
        return prox_linear_ls_solve(oracle, fun, box, x0, plcfg=plcfg, ls=ls, cfg=cfg)
    return prox_linear_bt_solve(oracle, fun, box, x0, plcfg=plcfg, cfg=cfg)


@dataclass
class ComparisonResult:
    traces: Dict[str, object]
    f_lower: float
    trace_paths: Dict[str, str]
    summary_path: str
    summary: dict


def _fmt(v):
    return f"{float(v):.17g}"


def write_trace_csv(trace, path, f_lower):
    lines = [",".join(CSV_COLUMNS)]
    for r in trace.records:
        lines.append(
            ",".join(
                [
                    str(r.k),
                    _fmt(r.elapsed_s),
                    _fmt(r.f_value),
                    _fmt(r.f_value - f_lower),
                    _fmt(r.delta),
                    _fmt(r.gamma),
                    str(r.backtracks),
                    str(r.inner_iterations),
                ]
            )
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_trace_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"unexpected trace columns in {path}: {header}")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    cols = {name: np.array([row[i] for row in rows], dtype=float)
            for i, name in enumerate(CSV_COLUMNS)}
    return cols


def check_trace_file(path, rho, rtol=1e-9):
    """Re-run the trace invariants on a CSV file: monotone objective,
    sufficient decrease, steps in [0, 1], and the telescoped rate bound.
    Returns a list of failure strings (empty means the trace checks out)."""
    cols = read_trace_csv(path)
    problems = verify_trace_arrays(cols["f"], cols["delta"], cols["gamma"], rho, rtol=rtol)
    f0 = float(cols["f"][0])
    f_lower = float(cols["f"].min())
    best = np.inf
    cum = 0.0
    for k in range(len(cols["f"])):
        best = min(best, float(cols["delta"][k]))
        cum += float(cols["gamma"][k])
        if cum <= 0:
            continue
        rhs = (f0 - f_lower) / (rho * cum)
        if best > rhs * (1.0 + rtol) + 1e-15:
            problems.append(f"rate bound violated at k={k}")
    return problems


def run_comparison(
    dataset,
    out_dir,
    methods=METHOD_NAMES,
    ls: Optional[LineSearchParams] = None,
    cfg: Optional[SolverConfig] = None,
    plcfg: Optional[ProxLinearConfig] = None,
    x0=None,
):
    """Run each method from the same start (box midpoint by default), write
    one CSV trace per method plus ``summary.json`` and ``plot_traces.py``."""
    methods = tuple(methods)
    for m in methods:
        if m not in METHOD_NAMES:
            raise ValueError(f"unknown method {m!r}")
    os.makedirs(out_dir, exist_ok=True)
    box = make_constraint_set(dataset)
    if x0 is None:
        x0 = box.midpoint()

    traces = {}
    for m in methods:
        traces[m] = run_method(m, dataset, x0, ls=ls, cfg=cfg, plcfg=plcfg)

    f_lower = min(t.best_f() for t in traces.values())
    trace_paths = {}
    per_method = {}
    for m, t in traces.items():
        path = os.path.join(out_dir, f"{m}.csv")
        write_trace_csv(t, path, f_lower)
        trace_paths[m] = path
        cert = rate_certificate(t, f_lower=f_lower)
        per_method[m] = {
            "status": t.status,
            "iterations": len(t.records),
            "best_f": t.best_f(),
            "final_delta": t.records[-1].delta if t.records else None,
            "total_inner_solves": t.total_inner_solves(),
            "total_inner_iterations": sum(r.inner_iterations for r in t.records),
            "wall_time_s": t.records[-1].elapsed_s if t.records else 0.0,
            "rate_certificate": cert.passed,
        }

    summary = {
        "schema": SUMMARY_SCHEMA,
        "f_lower": f_lower,
        "rho": (ls or LineSearchParams()).rho,
        "methods": per_method,
        "dataset": {
            "P": dataset.P, "M": dataset.M, "mu": dataset.mu, "seed": dataset.seed,
        },
    }
    summary_path = os.path.join(out_dir, "summary.json")
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=1)
        fh.write("\n")
    emit_plot_script(out_dir)
    return ComparisonResult(
        traces=traces, f_lower=f_lower, trace_paths=trace_paths,
        summary_path=summary_path, summary=summary,
    )


_PLOT_SCRIPT = '''"""Plot objective error and model improvement against wall time
from the trace CSVs sitting next to this script."""
import csv
import glob
import os

import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4))
for path in sorted(glob.glob(os.path.join(here, "*.csv"))):
    name = os.path.splitext(os.path.basename(path))[0]
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    t = [float(r["time_s"]) for r in rows]
    ax1.loglog(t, [max(float(r["obj_err"]), 1e-16) for r in rows], label=name)
    ax2.loglog(t, [max(float(r["delta"]), 1e-16) for r in rows], label=name)
ax1.set_xlabel("time [s]"); ax1.set_ylabel("objective error")
ax2.set_xlabel("time [s]"); ax2.set_ylabel("model improvement")
ax1.legend()
fig.tight_layout()
fig.savefig(os.path.join(here, "traces.png"), dpi=130)
print(os.path.join(here, "traces.png"))
'''


def emit_plot_script(out_dir):
    path = os.path.join(out_dir, "plot_traces.py")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_PLOT_SCRIPT)
    return path
