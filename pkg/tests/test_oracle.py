import numpy as np
import pytest

from helpers import chain_graph, costed
from qtrack.flow import ssp_solve
from qtrack.graph import PairwisePair, TrackingGraph, TransitionEdge
from qtrack.oracle import brute_force_optimum, enumerate_flows
from qtrack.potentials import CostedGraph, check_feasible, flow_cost
from qtrack.quadratic import greedy_dp_quadratic, lp_round, twopass_dp_quadratic
from qtrack.synth import random_instance


def count_by_matchings(graph):
    """Independent count: every set of edges with distinct sources and distinct
    destinations, times 2^(detections it leaves untouched)."""
    src, dst = graph.edge_src.tolist(), graph.edge_dst.tolist()
    n = len(graph)

    def rec(e, used_src, used_dst, touched):
        if e == len(src):
            return 2 ** (n - len(touched))
        total = rec(e + 1, used_src, used_dst, touched)
        if src[e] not in used_src and dst[e] not in used_dst:
            total += rec(e + 1, used_src | {src[e]}, used_dst | {dst[e]}, touched | {src[e], dst[e]})
        return total

    return rec(0, frozenset(), frozenset(), frozenset())


def test_small_counts():
    assert len(list(enumerate_flows(chain_graph([], [])))) == 1
    assert len(list(enumerate_flows(chain_graph([0], [])))) == 2
    assert len(list(enumerate_flows(chain_graph([0, 1], [(0, 1)])))) == 5


def test_count_matches_independent_recursion():
    rng = np.random.default_rng(21)
    for _ in range(40):
        g = random_instance(rng, max_detections=10, edge_prob=0.5).graph
        flows = list(enumerate_flows(g))
        assert len(flows) == count_by_matchings(g)
        keys = {tuple(f.vector()) for f in flows}
        assert len(keys) == len(flows)
        for f in flows[::25]:
            check_feasible(g, f)


def test_size_guard():
    g = chain_graph(list(range(15)), [])
    with pytest.raises(ValueError):
        next(enumerate_flows(g))
    with pytest.raises(ValueError):
        brute_force_optimum(costed(g, 0.0))


def test_positive_costs_zero_flow():
    r = brute_force_optimum(costed(chain_graph([0, 1], [(0, 1)]), 1.0))
    assert r.best_cost == 0.0 and not r.best_flow.vector().any() and r.num_feasible == 5


def test_best_cost_is_min_over_enumeration():
    rng = np.random.default_rng(22)
    for _ in range(20):
        cg = random_instance(rng, max_detections=8, quadratic=True)
        r = brute_force_optimum(cg)
        costs = [flow_cost(cg, f) for f in enumerate_flows(cg.graph)]
        assert r.best_cost == pytest.approx(min(costs), abs=1e-9)
        assert r.num_feasible == len(costs)
        assert flow_cost(cg, r.best_flow) == pytest.approx(r.best_cost, abs=1e-9)


def test_tie_break_lexicographic():
    # either detection alone costs -1 and both together cost -2 + 1, so three
    # flows tie; the smallest (det, birth, death, trans) vector wins
    g = chain_graph([0, 0], [])
    cg = costed(g, -3.0, q=[0.5, 0.5])
    r = brute_force_optimum(cg)
    assert r.best_cost == pytest.approx(-1.0)
    assert r.best_flow.f_det.tolist() == [0.0, 1.0]


def test_linear_matches_ssp_and_bounds_heuristics():
    rng = np.random.default_rng(23)
    for _ in range(40):
        cg = random_instance(rng, max_detections=10)
        assert brute_force_optimum(cg).best_cost == pytest.approx(ssp_solve(cg).objective, abs=1e-9)
        cq = random_instance(rng, max_detections=9, quadratic=True)
        best = brute_force_optimum(cq).best_cost
        for solve in (greedy_dp_quadratic, twopass_dp_quadratic, lp_round):
            assert flow_cost(cq, solve(cq)) >= best - 1e-9


def _permute(cg: CostedGraph, perm):
    """Relabel detection ids by perm while keeping the same costs per detection."""
    g = cg.graph
    dets = tuple(d.__class__(int(perm[d.id]), d.frame, d.class_id, d.box, d.score) for d in g.detections)
    edges = tuple(TransitionEdge(int(perm[e.src]), int(perm[e.dst]), e.gap, e.predicted_overlap)
                  for e in g.edges)
    pairs = tuple(PairwisePair(int(perm[p.i]), int(perm[p.j]), p.relation) for p in g.pairs)
    h = TrackingGraph(dets, edges, pairs, g.num_classes)
    inv_det = [h.index[int(perm[i])] for i in g.ids]
    c_det, c_birth, c_death = (np.empty(len(g)) for _ in range(3))
    c_det[inv_det], c_birth[inv_det], c_death[inv_det] = cg.c_det, cg.c_birth, cg.c_death
    c_trans = np.empty(g.num_edges)
    c_trans[[h.edge_lookup[(h.index[int(perm[e.src])], h.index[int(perm[e.dst])])] for e in g.edges]] = cg.c_trans
    plook = {(int(a), int(b)): k for k, (a, b) in enumerate(zip(h.pair_i, h.pair_j))}
    q = np.empty(g.num_pairs)
    q[[plook[(h.index[int(perm[p.i])], h.index[int(perm[p.j])])] for p in g.pairs]] = cg.q
    return CostedGraph(h, c_det, c_trans, c_birth, c_death, q)


def test_relabeling_equivariance():
    rng = np.random.default_rng(24)
    for _ in range(20):
        cg = random_instance(rng, max_detections=9, quadratic=True)
        perm = rng.permutation(len(cg.graph)) + 100
        a = brute_force_optimum(cg).best_cost
        b = brute_force_optimum(_permute(cg, perm)).best_cost
        assert a == pytest.approx(b, abs=1e-9)
