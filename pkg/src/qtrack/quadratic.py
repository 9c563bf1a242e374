"""Inference with pairwise interaction costs between same-frame detections.

Three routes: greedy track-by-track DP whose unary costs absorb the
interactions of accepted tracks, the residual two-pass DP with the same
bookkeeping, and an LP relaxation followed by two linear roundings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .flow import ACCEPT_EPS, ssp_solve, twopass_loop
from .graph import TrackingGraph
from .potentials import CostedGraph, FlowSolution, check_feasible, flow_cost
from .simplex import FEAS_TOL, simplex

# cost for a detection already used by an accepted track
DELETED = 1e12
SIMPLEX_MAX_VARS = 500
METHODS = ("greedy_dp", "twopass_dp", "lp_round")


class SolverError(RuntimeError):
    pass


def interaction_matrix(cg: CostedGraph) -> sp.csr_matrix:
    """Symmetric S with S[i, j] = q_ij + q_ji."""
    g = cg.graph
    n = len(g)
    a = sp.coo_matrix((cg.q, (g.pair_i, g.pair_j)), shape=(n, n))
    return (a + a.T).tocsr()


def _frame_edges(graph: TrackingGraph):
    """Per frame run: (start, stop, edge ids, edge sources, local destinations)."""
    dst, src = graph.edge_dst, graph.edge_src
    order = np.lexsort((src, dst))
    dst_sorted = dst[order]
    out = []
    for _, start, stop in graph.frame_slices:
        lo, hi = np.searchsorted(dst_sorted, [start, stop])
        e = order[lo:hi]
        out.append((start, stop, e, src[e], dst[e] - start))
    return out


def _sweep(runs, c_det, c_birth, c_trans):
    """One forward DP: cost to reach each detection and the chosen in-edge (-1 = birth)."""
    n = c_det.size
    cost = np.empty(n)
    link = np.full(n, -1, dtype=np.int64)
    for start, stop, e, src, loc in runs:
        birth = c_birth[start:stop]
        best = birth.copy()
        if e.size:
            v = c_trans[e] + cost[src]
            np.minimum.at(best, loc, v)
            hit = (v == best[loc]) & (best[loc] < birth[loc])
            if hit.any():
                first_loc, first = np.unique(loc[hit], return_index=True)
                link[start + first_loc] = e[np.flatnonzero(hit)[first]]
        cost[start:stop] = c_det[start:stop] + best
    return cost, link


def greedy_dp_quadratic(cg: CostedGraph) -> FlowSolution:
    """Greedy tracks, each found by a full forward DP sweep.

    After a track is accepted its detections are deleted and every same-frame
    partner j of a track detection i has its unary cost raised by
    q_ij + q_ji. Stops when the cheapest remaining track is non-negative.
    """
    g = cg.graph
    n = len(g)
    f = FlowSolution.zeros(g)
    if n == 0:
        f.objective = 0.0
        return f
    S = interaction_matrix(cg)
    runs = _frame_edges(g)
    c_det = cg.c_det.copy()
    src = g.edge_src
    history = []
    for _ in range(n):
        cost, link = _sweep(runs, c_det, cg.c_birth, cg.c_trans)
        total = cost + cg.c_death
        end = int(np.argmin(total))
        if total[end] >= -ACCEPT_EPS:
            break
        nodes = [end]
        while link[nodes[-1]] >= 0:
            nodes.append(int(src[link[nodes[-1]]]))
        nodes.reverse()
        f.f_birth[nodes[0]] = 1
        f.f_death[end] = 1
        f.f_det[nodes] = 1
        for k in range(1, len(nodes)):
            f.f_trans[link[nodes[k]]] = 1
        history.append(float(total[end]))
        c_det += np.asarray(S[nodes].sum(axis=0)).ravel()
        c_det[nodes] = DELETED
    f.objective = flow_cost(cg, f)
    f.history = history
    return f


def twopass_dp_quadratic(cg: CostedGraph) -> FlowSolution:
    """Residual two-pass DP whose detection costs track the active set.

    Turning detection i on adds q_ij + q_ji to each partner's cost; turning it
    off subtracts the same amount, so the working cost of j is always
    c_j plus its interactions with the currently active detections.
    """
    S = interaction_matrix(cg)
    rows = [(S.indices[S.indptr[i]:S.indptr[i + 1]].tolist(),
             S.data[S.indptr[i]:S.indptr[i + 1]].tolist()) for i in range(len(cg.graph))]

    def update(c_det, toggled):
        for i, on in toggled:
            sign = 1.0 if on else -1.0
            for j, s in zip(*rows[i]):
                c_det[j] += sign * s

    f = twopass_loop(cg, on_flip=update)
    f.objective = flow_cost(cg, f)
    return f


@dataclass
class LpSolution:
    """Relaxed optimum; ``values`` is (f_det, f_birth, f_death, f_trans, u)."""

    values: np.ndarray
    objective: float
    integral: bool
    flow: FlowSolution
    u_pairs: np.ndarray
    status: str = "optimal"
    backend: str = "simplex"
    history: list = field(default_factory=list)

    @property
    def u(self) -> np.ndarray:
        return self.values[self.values.size - self.u_pairs.size:]


def lp_program(cg: CostedGraph):
    """(c, A_eq, A_ub, b_ub, u_pairs) of the relaxation as sparse matrices."""
    g = cg.graph
    n, m = len(g), g.num_edges
    u_pairs = np.flatnonzero(cg.q != 0)
    k = u_pairs.size
    nv = 3 * n + m + k
    det, birth, death = np.arange(n), n + np.arange(n), 2 * n + np.arange(n)
    trans = 3 * n + np.arange(m)
    uvar = 3 * n + m + np.arange(k)

    # conservation: birth + in - det = 0 ; death + out - det = 0
    rows = np.concatenate([np.arange(n), np.arange(n), g.edge_dst, n + np.arange(n), n + np.arange(n), n + g.edge_src])
    cols = np.concatenate([birth, det, trans, death, det, trans])
    vals = np.concatenate([np.ones(n), -np.ones(n), np.ones(m), np.ones(n), -np.ones(n), np.ones(m)])
    A_eq = sp.csr_matrix((vals, (rows, cols)), shape=(2 * n, nv))

    pi, pj = g.pair_i[u_pairs], g.pair_j[u_pairs]
    r = np.arange(k)
    rows = np.concatenate([r, r, k + r, k + r, 2 * k + r, 2 * k + r, 2 * k + r])
    cols = np.concatenate([uvar, det[pi], uvar, det[pj], det[pi], det[pj], uvar])
    vals = np.concatenate([np.ones(k), -np.ones(k), np.ones(k), -np.ones(k),
                           np.ones(k), np.ones(k), -np.ones(k)])
    A_ub = sp.csr_matrix((vals, (rows, cols)), shape=(3 * k, nv))
    b_ub = np.concatenate([np.zeros(2 * k), np.ones(k)])
    c = np.concatenate([cg.c_det, cg.c_birth, cg.c_death, cg.c_trans, cg.q[u_pairs]])
    return c, A_eq, A_ub, b_ub, u_pairs


def lp_relax_solve(cg: CostedGraph, backend: str = "auto", max_iter: int = 50_000) -> LpSolution:
    """Optimal solution of the LP relaxation; its objective lower-bounds the integer optimum.

    ``backend`` is "simplex" (bundled dense simplex), "highs" (scipy) or
    "auto", which uses the bundled simplex up to SIMPLEX_MAX_VARS variables.
    """
    c, A_eq, A_ub, b_ub, u_pairs = lp_program(cg)
    nv = c.size
    if backend == "auto":
        backend = "simplex" if nv <= SIMPLEX_MAX_VARS else "highs"
    status, history = "optimal", []
    if nv == 0:
        x = np.zeros(0)
    elif backend == "simplex":
        res = simplex(c, A_eq.toarray(), np.zeros(A_eq.shape[0]), A_ub.toarray(), b_ub,
                      np.zeros(nv), np.ones(nv), max_iter=max_iter)
        x, status, history = res.x, res.status, res.history
    elif backend == "highs":
        res = linprog(c, A_ub=A_ub if A_ub.shape[0] else None, b_ub=b_ub if A_ub.shape[0] else None,
                      A_eq=A_eq if A_eq.shape[0] else None,
                      b_eq=np.zeros(A_eq.shape[0]) if A_eq.shape[0] else None,
                      bounds=(0.0, 1.0), method="highs-ds")
        if res.status == 1:
            status = "iteration_limit"
        elif res.status != 0:
            raise SolverError(f"LP relaxation failed: {res.message}")
        x = np.clip(res.x, 0.0, 1.0)
    else:
        raise ValueError(f"unknown LP backend {backend!r}")

    g = cg.graph
    n, m = len(g), g.num_edges
    flow = FlowSolution(x[:n].copy(), x[n:2 * n].copy(), x[2 * n:3 * n].copy(),
                        x[3 * n:3 * n + m].copy())
    try:
        check_feasible(g, flow, tol=FEAS_TOL)
    except ValueError as err:
        raise SolverError(f"LP relaxation returned an infeasible point: {err}") from None
    u = flow.f_det[g.pair_i] * flow.f_det[g.pair_j]  # pairs without interaction
    u[u_pairs] = x[3 * n + m:]
    flow.u = u
    objective = float(c @ x) if nv else 0.0
    flow.objective = objective
    flow.lower_bound = objective
    integral = bool(np.all(np.minimum(np.abs(x), np.abs(x - 1)) <= 1e-6))
    return LpSolution(x, objective, integral, flow, u_pairs, status, backend, history)


def round_euclidean(cg: CostedGraph, lp: LpSolution) -> FlowSolution:
    """Integral flow nearest to the relaxed one in squared distance."""
    f = lp.flow
    rc = CostedGraph(cg.graph, 1 - 2 * f.f_det, 1 - 2 * f.f_trans, 1 - 2 * f.f_birth,
                     1 - 2 * f.f_death, np.zeros_like(cg.q))
    out = ssp_solve(rc)
    out.history = []
    out.objective = flow_cost(cg, out)
    return out


def round_underestimator(cg: CostedGraph, lp: LpSolution) -> FlowSolution:
    """Fold each interaction, weighted by its relaxed product, into both unaries."""
    g = cg.graph
    n = len(g)
    p = lp.u_pairs
    w = cg.q[p] * lp.u
    c_det = cg.c_det + np.bincount(g.pair_i[p], weights=w, minlength=n) \
        + np.bincount(g.pair_j[p], weights=w, minlength=n)
    out = ssp_solve(cg.with_costs(c_det=c_det, q=np.zeros_like(cg.q)))
    out.history = []
    out.objective = flow_cost(cg, out)
    return out


def relative_gap(final_cost: float, lower_bound: float) -> float:
    if lower_bound == 0.0:
        return 0.0 if final_cost == 0.0 else float("inf")
    return (final_cost - lower_bound) / abs(lower_bound)


def lp_round(cg: CostedGraph, backend: str = "auto") -> FlowSolution:
    lp = lp_relax_solve(cg, backend=backend)
    a = round_euclidean(cg, lp)
    b = round_underestimator(cg, lp)
    best = b if b.objective < a.objective else a
    best.lower_bound = lp.objective
    return best


def solve_quadratic(cg: CostedGraph, method: str = "greedy_dp", backend: str = "auto") -> FlowSolution:
    """Dispatch to one of METHODS; the result carries objective and, for lp_round, lower_bound."""
    if method == "greedy_dp":
        return greedy_dp_quadratic(cg)
    if method == "twopass_dp":
        return twopass_dp_quadratic(cg)
    if method == "lp_round":
        return lp_round(cg, backend=backend)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")

