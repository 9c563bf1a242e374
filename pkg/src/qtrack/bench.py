"""Solver comparison: objective, relaxation bound and wall time per instance."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .flow import dp_onepass, dp_twopass, ssp_solve
from .graph import GraphParams, build_graph
from .io import parse_detections, sequence_files
from .potentials import CostedGraph, WeightVector, assign_costs, flow_cost
from .quadratic import greedy_dp_quadratic, lp_round, relative_gap, twopass_dp_quadratic

METHOD_NAMES = ("ssp", "dp1", "dp2", "dp1q", "dp2q", "lp")


def run_method(cg: CostedGraph, method: str, lp_backend: str = "auto"):
    if method == "ssp":
        return ssp_solve(cg)
    if method == "dp1":
        return dp_onepass(cg)
    if method == "dp2":
        return dp_twopass(cg)
    if method == "dp1q":
        return greedy_dp_quadratic(cg)
    if method == "dp2q":
        return twopass_dp_quadratic(cg)
    if method == "lp":
        return lp_round(cg, backend=lp_backend)
    raise ValueError(f"unknown method {method!r}; expected one of {METHOD_NAMES}")


@dataclass
class BenchRow:
    instance: str
    method: str
    objective: float
    lower_bound: float
    gap: float
    wall_time: float


@dataclass
class BenchReport:
    rows: list = field(default_factory=list)

    def methods(self) -> list:
        return list(dict.fromkeys(r.method for r in self.rows))

    def of(self, method: str) -> list:
        return [r for r in self.rows if r.method == method]

    def total_time(self, method: str) -> float:
        return float(sum(r.wall_time for r in self.of(method)))

    def median_gap(self, method: str) -> float:
        gaps = [r.gap for r in self.of(method) if np.isfinite(r.gap)]
        return float(np.median(gaps)) if gaps else float("nan")

    def curves(self, method: str):
        rows = self.of(method)
        return (np.cumsum([r.objective for r in rows]), np.cumsum([r.wall_time for r in rows]))

    def summary(self) -> str:
        lines = [f"{'method':>6} {'total_time_s':>13} {'median_gap':>11} {'total_objective':>16}"]
        for m in self.methods():
            obj = sum(r.objective for r in self.of(m))
            lines.append(f"{m:>6} {self.total_time(m):13.4f} {self.median_gap(m):11.5f} {obj:16.6g}")
        return "\n".join(lines)

    def write_csv(self, path):
        cum = {m: self.curves(m) for m in self.methods()}
        seen: dict = {}
        with open(path, "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh)
            out.writerow(["instance", "method", "objective", "lower_bound", "gap", "wall_time",
                          "cum_objective", "cum_time"])
            for r in self.rows:
                k = seen.get(r.method, 0)
                seen[r.method] = k + 1
                out.writerow([r.instance, r.method, f"{r.objective:.6g}", f"{r.lower_bound:.6g}",
                              f"{r.gap:.6g}", f"{r.wall_time:.6g}",
                              f"{cum[r.method][0][k]:.6g}", f"{cum[r.method][1][k]:.6g}"])

    def write_svg(self, path):
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
        for m in self.methods():
            obj, t = self.curves(m)
            x = np.arange(1, len(obj) + 1)
            ax1.plot(x, obj, label=m)
            ax2.plot(x, t, label=m)
        ax1.set_xlabel("instances")
        ax1.set_ylabel("cumulative objective")
        ax2.set_xlabel("instances")
        ax2.set_ylabel("cumulative wall time (s)")
        ax1.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def bench_run(instances: Sequence[tuple], methods: Sequence[str] = ("dp1q", "lp"),
              lp_backend: str = "auto") -> BenchReport:
    """Run every method on every (name, CostedGraph) instance.

    The lower bound of an instance is the LP relaxation value when ``lp`` is
    among the methods, otherwise NaN.
    """
    for m in methods:
        if m not in METHOD_NAMES:
            raise ValueError(f"unknown method {m!r}; expected one of {METHOD_NAMES}")
    report = BenchReport()
    for name, cg in instances:
        got = {}
        for m in methods:
            t0 = time.perf_counter()
            f = run_method(cg, m, lp_backend)
            got[m] = (f, time.perf_counter() - t0)
        lb = got["lp"][0].lower_bound if "lp" in got else float("nan")
        for m in methods:
            f, dt = got[m]
            obj = flow_cost(cg, f)
            gap = relative_gap(obj, lb) if np.isfinite(lb) else float("nan")
            report.rows.append(BenchRow(name, m, obj, lb, gap, dt))
    return report


def load_suite(suite_dir, weights: WeightVector, params: GraphParams | None = None) -> list:
    """(name, CostedGraph) for every detection file of a data directory."""
    out = []
    for name, det_path, _ in sequence_files(suite_dir):
        dets = parse_detections(det_path)
        if any(d.class_id >= weights.num_classes for d in dets):
            raise ValueError(f"{det_path}: class id beyond the weights' {weights.num_classes} classes")
        graph = build_graph(dets, params, weights.num_classes)
        out.append((name, assign_costs(graph, weights)))
    return out
