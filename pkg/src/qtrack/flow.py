"""Solvers for the linear min-cost flow objective and track extraction.

Each detection is a unit-capacity "detection edge" between an in-port and an
out-port. ``ssp_solve`` is exact; ``dp_onepass`` and ``dp_twopass`` are the
cheaper dynamic-programming approximations of successive shortest paths.
"""

from __future__ import annotations

import heapq
import math

import numpy as np

from .graph import TrackingGraph
from .potentials import CostedGraph, FlowSolution, check_feasible, linear_cost

# paths must be strictly negative beyond rounding noise to be accepted
ACCEPT_EPS = 1e-12
INF = math.inf

_DET, _BIRTH, _DEATH, _TRANS = range(4)


class _Network:
    """Residual network with node 0 = source, 1 = sink, 2+2i / 3+2i = ports of i."""

    def __init__(self, cg: CostedGraph, c_det=None):
        g = cg.graph
        n = len(g)
        self.num_nodes = 2 * n + 2
        self.adj = [[] for _ in range(self.num_nodes)]
        self.to, self.cap, self.cost, self.tag = [], [], [], []
        c_det = cg.c_det if c_det is None else c_det
        for i in range(n):
            self._add(0, 2 + 2 * i, cg.c_birth[i], (_BIRTH, i))
            self._add(2 + 2 * i, 3 + 2 * i, c_det[i], (_DET, i))
            self._add(3 + 2 * i, 1, cg.c_death[i], (_DEATH, i))
        for e, (a, b) in enumerate(zip(g.edge_src, g.edge_dst)):
            self._add(3 + 2 * int(a), 2 + 2 * int(b), cg.c_trans[e], (_TRANS, e))

    def _add(self, u, v, c, tag):
        k = len(self.to)
        for node, dst, cost, cap, t in ((u, v, float(c), 1, tag), (v, u, -float(c), 0, None)):
            self.adj[node].append(len(self.to))
            self.to.append(dst)
            self.cap.append(cap)
            self.cost.append(cost)
            self.tag.append(t)
        return k

    def topo_distances(self) -> list:
        """Exact distances on the initial DAG: one Bellman-Ford pass in topological order."""
        dist = [INF] * self.num_nodes
        dist[0] = 0.0
        order = [0] + list(range(2, self.num_nodes)) + [1]
        for u in order:
            du = dist[u]
            if du == INF:
                continue
            for k in self.adj[u]:
                if self.cap[k] > 0 and du + self.cost[k] < dist[self.to[k]]:
                    dist[self.to[k]] = du + self.cost[k]
        return dist

    def dijkstra(self, pot):
        n = self.num_nodes
        dist = [INF] * n
        parent = [-1] * n
        dist[0] = 0.0
        heap = [(0.0, 0)]
        done = [False] * n
        to, cap, cost, adj = self.to, self.cap, self.cost, self.adj
        while heap:
            d, u = heapq.heappop(heap)
            if done[u]:
                continue
            done[u] = True
            pu = pot[u]
            for k in adj[u]:
                if cap[k] <= 0:
                    continue
                v = to[k]
                if done[v]:
                    continue
                rc = cost[k] + pu - pot[v]
                if rc < 0.0:
                    rc = 0.0  # rounding noise; true reduced costs are >= 0
                nd = d + rc
                if nd < dist[v]:
                    dist[v] = nd
                    parent[v] = k
                    heapq.heappush(heap, (nd, v))
        return dist, parent

    def augment(self, parent):
        v = 1
        while v != 0:
            k = parent[v]
            self.cap[k] -= 1
            self.cap[k ^ 1] += 1
            v = self.to[k ^ 1]

    def flow(self, graph: TrackingGraph) -> FlowSolution:
        f = FlowSolution.zeros(graph)
        arrays = {_DET: f.f_det, _BIRTH: f.f_birth, _DEATH: f.f_death, _TRANS: f.f_trans}
        for k, tag in enumerate(self.tag):
            if tag is not None and self.cap[k] == 0:
                arrays[tag[0]][tag[1]] = 1.0
        return f


def ssp_solve(cg: CostedGraph) -> FlowSolution:
    """Globally optimal flow for the linear objective (quadratic terms ignored).

    Successive shortest paths: Dijkstra on the residual network with Johnson
    node potentials, augmenting while the shortest source-sink path is
    negative. ``history`` lists the accepted path costs, which never decrease.
    """
    net = _Network(cg)
    pot = net.topo_distances()
    pot = [p if p < INF else 0.0 for p in pot]
    history = []
    for _ in range(len(cg.graph) + 1):
        dist, parent = net.dijkstra(pot)
        if dist[1] == INF:
            break
        path_cost = dist[1] + pot[1] - pot[0]
        if path_cost >= -ACCEPT_EPS:
            break
        net.augment(parent)
        history.append(path_cost)
        pot = [p + d if d < INF else p for p, d in zip(pot, dist)]
    f = net.flow(cg.graph)
    f.objective = linear_cost(cg, f)
    f.history = history
    return f


def _backtrack(link, edge_src, end):
    nodes = [end]
    k = link[end]
    while k >= 0:
        nodes.append(edge_src[k])
        k = link[nodes[-1]]
    nodes.reverse()
    return nodes


def _set_track(f: FlowSolution, graph: TrackingGraph, nodes):
    f.f_birth[nodes[0]] = 1
    f.f_death[nodes[-1]] = 1
    for a, b in zip(nodes, nodes[1:]):
        f.f_trans[graph.edge_lookup[(a, b)]] = 1
    f.f_det[nodes] = 1


def dp_onepass(cg: CostedGraph) -> FlowSolution:
    """Greedy successive shortest paths on the shrinking DAG.

    One forward sweep gives cost(i) = c_i + min(c_i^s, min_j c_ji + cost(j));
    the best path ends at argmin cost(i) + c_i^t. Accepted paths are removed
    and only nodes sharing the removed path's birth node are re-swept.
    """
    g = cg.graph
    n = len(g)
    c_det, c_birth, c_death, c_trans = (cg.c_det.tolist(), cg.c_birth.tolist(),
                                        cg.c_death.tolist(), cg.c_trans.tolist())
    src = g.edge_src.tolist()
    in_edges = g.in_edges
    cost = [INF] * n
    link = [-1] * n
    birth = list(range(n))
    alive = [True] * n
    dirty = [True] * n
    f = FlowSolution.zeros(g)
    history = []

    while True:
        for i in range(n):
            if not (alive[i] and dirty[i]):
                continue
            best, lk, b = c_birth[i], -1, i
            for e in in_edges[i]:
                j = src[e]
                if alive[j]:
                    v = c_trans[e] + cost[j]
                    if v < best:
                        best, lk, b = v, e, birth[j]
            cost[i] = c_det[i] + best
            link[i] = lk
            birth[i] = b
        end, total = -1, INF
        for i in range(n):
            if alive[i] and cost[i] + c_death[i] < total:
                end, total = i, cost[i] + c_death[i]
        if end < 0 or total >= -ACCEPT_EPS:
            break
        nodes = _backtrack(link, src, end)
        _set_track(f, g, nodes)
        history.append(total)
        removed_birth = birth[end]
        for i in nodes:
            alive[i] = False
        dirty = [alive[i] and birth[i] == removed_birth for i in range(n)]

    f.objective = linear_cost(cg, f)
    f.history = history
    return f


# --- two-pass DP on the residual graph -------------------------------------
#
# A path is a persistent linked list of cells (node, kind, index, on, parent).
# ``node`` is the detection index whose port the cell arrives at; kind/index/on
# describe the flow variable flipped by the step that reached it.


def _path_contains(cell, node) -> bool:
    while cell is not None:
        if cell[0] == node:
            return True
        cell = cell[4]
    return False


def twopass_shortest_path(graph: TrackingGraph, c_det, c_trans, c_birth, c_death,
                          f: FlowSolution):
    """Approximate min-cost source-sink path on the residual graph of ``f``.

    Returns ``(cost, cell)`` for the best path found, or ``(inf, None)``.
    Forward nodes (f_i = 0) are crossed at cost c_i; backward nodes (f_i = 1)
    are crossed in reverse at cost -c_i. The path never enters the source or
    leaves the sink through reversed edges.
    """
    n = len(graph)
    src, dst = graph.edge_src.tolist(), graph.edge_dst.tolist()
    in_edges, out_edges = graph.in_edges, graph.out_edges
    fd, fb, fe, ft = (f.f_det.tolist(), f.f_birth.tolist(), f.f_death.tolist(),
                      f.f_trans.tolist())
    in_cost = [INF] * n
    in_path = [None] * n
    out_cost = [INF] * n
    out_path = [None] * n

    # 1. forward DP over all nodes, ignoring reversed edges
    for i in range(n):
        best, cell = INF, None
        if fb[i] == 0:
            best, cell = c_birth[i], (i, _BIRTH, i, True, None)
        for e in in_edges[i]:
            j = src[e]
            if ft[e] == 0 and out_cost[j] < INF:
                v = out_cost[j] + c_trans[e]
                if v < best:
                    best, cell = v, (i, _TRANS, e, True, out_path[j])
        in_cost[i], in_path[i] = best, cell
        if fd[i] == 0 and best < INF:
            out_cost[i] = best + c_det[i]
            out_path[i] = (i, _DET, i, True, cell)

    # 2. backward DP over instanced nodes, last frame to first
    for i in range(n - 1, -1, -1):
        if fd[i] == 0:
            continue
        for e in out_edges[i]:
            if ft[e] == 1:
                k = dst[e]
                if in_cost[k] < INF:
                    out_cost[i] = in_cost[k] - c_trans[e]
                    out_path[i] = (i, _TRANS, e, False, in_path[k])
                break
        if out_cost[i] < INF:
            v = out_cost[i] - c_det[i]
            if v < in_cost[i]:
                in_cost[i] = v
                in_path[i] = (i, _DET, i, False, out_path[i])

    # 3. forward DP over uninstanced nodes, rejecting predecessors whose path
    # already visits the node
    for i in range(n):
        if fd[i] == 1:
            continue
        best, cell = in_cost[i], in_path[i]
        for e in in_edges[i]:
            j = src[e]
            if out_cost[j] < INF:
                v = out_cost[j] + c_trans[e]
                if v < best and not _path_contains(out_path[j], i):
                    best, cell = v, (i, _TRANS, e, True, out_path[j])
        in_cost[i], in_path[i] = best, cell
        if best < INF:
            out_cost[i] = best + c_det[i]
            out_path[i] = (i, _DET, i, True, cell)

    # 4. cheapest exit to the sink
    end, total = -1, INF
    for i in range(n):
        if fe[i] == 0 and out_cost[i] < INF and out_cost[i] + c_death[i] < total:
            end, total = i, out_cost[i] + c_death[i]
    if end < 0:
        return INF, None
    return total, (end, _DEATH, end, True, out_path[end])


def flip_path(f: FlowSolution, cell):
    """Apply the flips along a two-pass path; returns [(det index, turned_on)]."""
    arrays = {_DET: f.f_det, _BIRTH: f.f_birth, _DEATH: f.f_death, _TRANS: f.f_trans}
    toggled = []
    while cell is not None:
        _, kind, idx, on, parent = cell
        arrays[kind][idx] = 1.0 if on else 0.0
        if kind == _DET:
            toggled.append((idx, on))
        cell = parent
    return toggled


def twopass_loop(cg: CostedGraph, on_flip=None) -> FlowSolution:
    """Shared driver for the linear and pairwise-updated two-pass DP.

    ``on_flip(c_det, toggled)`` may adjust the working detection costs after
    each accepted path.
    """
    g = cg.graph
    c_det = cg.c_det.tolist()
    c_trans, c_birth, c_death = cg.c_trans.tolist(), cg.c_birth.tolist(), cg.c_death.tolist()
    f = FlowSolution.zeros(g)
    history = []
    for _ in range(len(g)):
        total, cell = twopass_shortest_path(g, c_det, c_trans, c_birth, c_death, f)
        if cell is None or total >= -ACCEPT_EPS:
            break
        toggled = flip_path(f, cell)
        history.append(total)
        if on_flip is not None:
            on_flip(c_det, toggled)
    f.history = history
    return f


def dp_twopass(cg: CostedGraph) -> FlowSolution:
    """Successive shortest paths with each residual path approximated by two DP passes.

    Per iteration: forward DP ignoring reversed edges, backward DP over
    instanced nodes, a second forward DP with a cycle check, then the flow is
    flipped along the cheapest path. Each iteration adds one track (new or
    split off an existing one), so at most |V| iterations run.
    """
    f = twopass_loop(cg)
    f.objective = linear_cost(cg, f)
    return f


def extract_tracks(graph: TrackingGraph, f: FlowSolution) -> list:
    """Decompose an integral flow into tracks (lists of detection ids).

    Tracks are ordered by first frame, then first detection id.
    """
    if not f.is_integral():
        raise ValueError("flow is not integral")
    check_feasible(graph, f)
    ids = graph.ids
    tracks = []
    for i in np.flatnonzero(f.f_birth > 0.5):
        node = int(i)
        track = [int(ids[node])]
        while f.f_death[node] < 0.5:
            nxt = [e for e in graph.out_edges[node] if f.f_trans[e] > 0.5]
            node = int(graph.edge_dst[nxt[0]])
            track.append(int(ids[node]))
        tracks.append(track)
    return tracks


def tracks_to_flow(graph: TrackingGraph, tracks) -> FlowSolution:
    """Inverse of :func:`extract_tracks`."""
    f = FlowSolution.zeros(graph)
    for track in tracks:
        _set_track(f, graph, [graph.index[d] for d in track])
    check_feasible(graph, f)
    return f
