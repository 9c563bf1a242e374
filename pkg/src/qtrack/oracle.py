"""Exhaustive enumeration of feasible flows on small graphs.

Every feasible integral flow is a set of node-disjoint source-to-sink paths.
Walking detections in frame order, each one is either unused, the start of a
track, or the continuation of an earlier active detection that has no
successor yet. Each choice sequence gives exactly one flow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import TrackingGraph
from .potentials import CostedGraph, FlowSolution

MAX_ORACLE_DETECTIONS = 14


@dataclass
class OracleResult:
    best_flow: FlowSolution
    best_cost: float
    num_feasible: int


def _guard(graph: TrackingGraph, limit: int):
    if len(graph) > limit:
        raise ValueError(f"oracle limited to {limit} detections, graph has {len(graph)}")


def _choices(graph: TrackingGraph):
    """Per detection, the (edge, predecessor) pairs it may continue from."""
    src = graph.edge_src.tolist()
    return [[(e, src[e]) for e in graph.in_edges[i]] for i in range(len(graph))]


def _to_flow(graph: TrackingGraph, active, pred_edge) -> FlowSolution:
    f = FlowSolution.zeros(graph)
    has_succ = np.zeros(len(graph), dtype=bool)
    for i, on in enumerate(active):
        if not on:
            continue
        f.f_det[i] = 1
        e = pred_edge[i]
        if e < 0:
            f.f_birth[i] = 1
        else:
            f.f_trans[e] = 1
            has_succ[graph.edge_src[e]] = True
    f.f_death[:] = (f.f_det > 0) & ~has_succ
    return f


def enumerate_flows(graph: TrackingGraph, limit: int = MAX_ORACLE_DETECTIONS):
    """Yield every feasible integral flow exactly once."""
    _guard(graph, limit)
    n = len(graph)
    options = _choices(graph)
    active = [False] * n
    taken = [False] * n  # detection already has a successor
    pred_edge = [-1] * n

    def rec(i):
        if i == n:
            yield _to_flow(graph, active, pred_edge)
            return
        yield from rec(i + 1)
        active[i] = True
        pred_edge[i] = -1
        yield from rec(i + 1)
        for e, j in options[i]:
            if active[j] and not taken[j]:
                taken[j] = True
                pred_edge[i] = e
                yield from rec(i + 1)
                taken[j] = False
        pred_edge[i] = -1
        active[i] = False

    yield from rec(0)


def _pair_weights(cg: CostedGraph):
    """Per detection, [(earlier same-frame partner, q_ij + q_ji)]."""
    g = cg.graph
    acc: dict = {}
    for p, (a, b) in enumerate(zip(g.pair_i.tolist(), g.pair_j.tolist())):
        hi, lo = max(a, b), min(a, b)
        acc[(hi, lo)] = acc.get((hi, lo), 0.0) + float(cg.q[p])
    out = [[] for _ in range(len(g))]
    for (hi, lo), v in sorted(acc.items()):
        if v != 0.0:
            out[hi].append((lo, v))
    return out


def brute_force_optimum(cg: CostedGraph, limit: int = MAX_ORACLE_DETECTIONS) -> OracleResult:
    """Exact minimiser of the quadratic objective by exhaustive search.

    Ties within 1e-12 go to the lexicographically smallest flow vector
    (det, birth, death, transition).
    """
    g = cg.graph
    _guard(g, limit)
    n = len(g)
    options = _choices(g)
    pairs = _pair_weights(cg)
    c_det, c_birth, c_death, c_trans = (cg.c_det.tolist(), cg.c_birth.tolist(),
                                        cg.c_death.tolist(), cg.c_trans.tolist())
    active = [False] * n
    taken = [False] * n
    pred_edge = [-1] * n
    best = {"cost": float("inf"), "state": None, "key": None, "count": 0}

    def consider(cost):
        best["count"] += 1
        if cost < best["cost"] - 1e-12:
            best["cost"], best["state"], best["key"] = cost, (active[:], pred_edge[:]), None
        elif abs(cost - best["cost"]) <= 1e-12:
            if best["key"] is None:
                best["key"] = tuple(_to_flow(g, *best["state"]).vector())
            key = tuple(_to_flow(g, active, pred_edge).vector())
            if key < best["key"]:
                best["cost"], best["state"], best["key"] = min(cost, best["cost"]), (active[:], pred_edge[:]), key

    def rec(i, cost):
        if i == n:
            consider(cost)
            return
        rec(i + 1, cost)
        on = cost + c_det[i] + c_death[i]
        for k, v in pairs[i]:
            if active[k]:
                on += v
        active[i] = True
        pred_edge[i] = -1
        rec(i + 1, on + c_birth[i])
        for e, j in options[i]:
            if active[j] and not taken[j]:
                taken[j] = True
                pred_edge[i] = e
                rec(i + 1, on + c_trans[e] - c_death[j])
                taken[j] = False
        pred_edge[i] = -1
        active[i] = False

    rec(0, 0.0)
    flow = _to_flow(g, *best["state"])
    flow.objective = best["cost"]
    return OracleResult(flow, best["cost"], best["count"])
