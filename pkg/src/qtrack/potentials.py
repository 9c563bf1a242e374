"""Weight/feature vectors, cost assignment and flow objective evaluation.

Learning maximises ``w . Psi(X, f)``; every solver minimises the cost
``C(f) = -w . Psi(X, f)``. The flat vector layout shared by weights and
features is::

    [birth(1), death(1), appearance(2), transition(16), pairwise(D*K*K)]

with the pairwise block for the ordered class pair (a, b) starting at
``(a * K + b) * D``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .graph import MAX_GAP, NUM_RELATIONS, Detection, TrackingGraph, TransitionEdge

TRANSITION_SIZE = 2 * MAX_GAP
_BIRTH = slice(0, 1)
_DEATH = slice(1, 2)
_APPEARANCE = slice(2, 4)
_TRANSITION = slice(4, 4 + TRANSITION_SIZE)
_PAIRWISE_START = 4 + TRANSITION_SIZE

CONSERVATION_TOL = 1e-7


class WeightVector:
    """Flat parameter vector with named views onto its blocks."""

    def __init__(self, values=None, num_classes: int = 1, num_relations: int = NUM_RELATIONS):
        self.num_classes = int(num_classes)
        self.num_relations = int(num_relations)
        size = self.size_for(self.num_classes, self.num_relations)
        if values is None:
            values = np.zeros(size)
        values = np.array(values, dtype=float).ravel()
        if values.shape != (size,):
            raise ValueError(f"expected {size} entries, got {values.size}")
        if not np.all(np.isfinite(values)):
            raise ValueError("weights must be finite")
        self.values = values

    @staticmethod
    def size_for(num_classes: int, num_relations: int = NUM_RELATIONS) -> int:
        return _PAIRWISE_START + num_relations * num_classes ** 2

    @classmethod
    def zeros(cls, num_classes: int = 1, num_relations: int = NUM_RELATIONS):
        return cls(None, num_classes, num_relations)

    def _like(self, values):
        return type(self)(values, self.num_classes, self.num_relations)

    def _check(self, other):
        if (other.num_classes, other.num_relations) != (self.num_classes, self.num_relations):
            raise ValueError("vector layouts differ")

    @property
    def birth(self) -> np.ndarray:
        return self.values[_BIRTH]

    @property
    def death(self) -> np.ndarray:
        return self.values[_DEATH]

    @property
    def appearance(self) -> np.ndarray:
        return self.values[_APPEARANCE]

    @property
    def transition(self) -> np.ndarray:
        return self.values[_TRANSITION]

    @property
    def pairwise(self) -> np.ndarray:
        return self.values[_PAIRWISE_START:]

    def pairwise_block(self, class_a: int, class_b: int) -> np.ndarray:
        start = (class_a * self.num_classes + class_b) * self.num_relations
        return self.pairwise[start:start + self.num_relations]

    def dot(self, other) -> float:
        self._check(other)
        return float(self.values @ other.values)

    def __add__(self, other):
        self._check(other)
        return self._like(self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return self._like(self.values - other.values)

    def __mul__(self, alpha):
        return self._like(self.values * float(alpha))

    __rmul__ = __mul__

    def __neg__(self):
        return self._like(-self.values)

    def __eq__(self, other):
        return (isinstance(other, WeightVector) and self.num_classes == other.num_classes
                and self.num_relations == other.num_relations
                and np.array_equal(self.values, other.values))

    def __repr__(self):
        return f"{type(self).__name__}(K={self.num_classes}, D={self.num_relations}, norm={np.linalg.norm(self.values):.4g})"


class FeatureVector(WeightVector):
    """Joint feature vector Psi(X, f); same layout as :class:`WeightVector`."""


def reference_weights(num_classes: int = 1) -> WeightVector:
    """Hand-set weights for tracking without training.

    Detections pay for themselves through their score, tracks pay a fixed
    entry/exit price, long or weak transitions are discouraged, and same-class
    boxes sitting on top of each other are suppressed.
    """
    w = WeightVector.zeros(num_classes)
    w.birth[:] = -1.0
    w.death[:] = -1.0
    w.appearance[:] = [1.0, 0.0]
    for g in range(MAX_GAP):
        w.transition[2 * g] = -0.1 * g
        w.transition[2 * g + 1] = -0.5
    for a in range(num_classes):
        blk = w.pairwise_block(a, a)
        blk[0] = -1.5   # on top of
        blk[6] = -0.25  # overlap
        blk[7] = -1.5   # strictly overlap
    return w


def transition_feature(edge: TransitionEdge) -> np.ndarray:
    """Gap-binned transition feature: (constant, weak-overlap indicator)."""
    if not 1 <= edge.gap <= MAX_GAP:
        raise ValueError(f"gap {edge.gap} outside 1..{MAX_GAP}")
    out = np.zeros(TRANSITION_SIZE)
    k = 2 * (edge.gap - 1)
    out[k] = 1.0
    out[k + 1] = 1.0 if edge.predicted_overlap < 0.5 else 0.0
    return out


def appearance_feature(det: Detection) -> np.ndarray:
    return np.array([det.score, 1.0])


def pairwise_feature(relation, class_i: int, class_j: int, num_classes: int) -> np.ndarray:
    rel = np.asarray(relation, dtype=float)
    if not (0 <= class_i < num_classes and 0 <= class_j < num_classes):
        raise ValueError(f"class pair ({class_i}, {class_j}) out of range for K={num_classes}")
    out = np.zeros(rel.size * num_classes ** 2)
    start = (class_i * num_classes + class_j) * rel.size
    out[start:start + rel.size] = rel
    return out


def _transition_matrix(graph: TrackingGraph) -> np.ndarray:
    m = graph.num_edges
    gap = graph.edge_gap
    if m and (gap.min() < 1 or gap.max() > MAX_GAP):
        raise ValueError(f"edge gap outside 1..{MAX_GAP}")
    psi = np.zeros((m, TRANSITION_SIZE))
    rows = np.arange(m)
    psi[rows, 2 * (gap - 1)] = 1.0
    psi[rows, 2 * (gap - 1) + 1] = graph.edge_overlap < 0.5
    return psi


def _pair_offsets(graph: TrackingGraph, num_relations: int) -> np.ndarray:
    k = graph.num_classes
    ci = graph.class_ids[graph.pair_i]
    cj = graph.class_ids[graph.pair_j]
    if graph.num_pairs and (max(ci.max(), cj.max()) >= k):
        raise ValueError("class id exceeds num_classes")
    return (ci * k + cj) * num_relations


@dataclass
class CostedGraph:
    """A graph with per-variable linear costs and per-ordered-pair quadratic costs."""

    graph: TrackingGraph
    c_det: np.ndarray
    c_trans: np.ndarray
    c_birth: np.ndarray
    c_death: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        n, m, p = len(self.graph), self.graph.num_edges, self.graph.num_pairs
        self.c_det = np.asarray(self.c_det, dtype=float).reshape(n)
        self.c_birth = np.asarray(self.c_birth, dtype=float).reshape(n)
        self.c_death = np.asarray(self.c_death, dtype=float).reshape(n)
        self.c_trans = np.asarray(self.c_trans, dtype=float).reshape(m)
        self.q = np.asarray(self.q, dtype=float).reshape(p)

    def with_costs(self, **kw) -> "CostedGraph":
        return replace(self, **kw)

    def linear(self) -> "CostedGraph":
        """Copy with all quadratic terms removed."""
        return replace(self, q=np.zeros_like(self.q))


@dataclass
class FlowSolution:
    """Assignment of the flow variables, integral unless produced by a relaxation.

    ``u`` holds pairwise products for relaxed solutions (one per ordered pair);
    integral solutions leave it ``None`` and use f_i * f_j.
    """

    f_det: np.ndarray
    f_birth: np.ndarray
    f_death: np.ndarray
    f_trans: np.ndarray
    objective: float = float("nan")
    lower_bound: float | None = None
    u: np.ndarray | None = None
    history: list = field(default_factory=list)

    @classmethod
    def zeros(cls, graph: TrackingGraph) -> "FlowSolution":
        n, m = len(graph), graph.num_edges
        return cls(np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(m), 0.0)

    def copy(self) -> "FlowSolution":
        return FlowSolution(self.f_det.copy(), self.f_birth.copy(), self.f_death.copy(),
                            self.f_trans.copy(), self.objective, self.lower_bound,
                            None if self.u is None else self.u.copy(), list(self.history))

    def vector(self) -> np.ndarray:
        return np.concatenate([self.f_det, self.f_birth, self.f_death, self.f_trans]).astype(float)

    def is_integral(self, tol: float = 1e-6) -> bool:
        v = self.vector()
        return bool(np.all(np.minimum(np.abs(v), np.abs(v - 1)) <= tol))

    def pair_products(self, graph: TrackingGraph) -> np.ndarray:
        if self.u is not None:
            return np.asarray(self.u, dtype=float)
        return self.f_det[graph.pair_i] * self.f_det[graph.pair_j]

    def same_assignment(self, other: "FlowSolution", tol: float = 1e-9) -> bool:
        a, b = self.vector(), other.vector()
        return a.shape == b.shape and bool(np.all(np.abs(a - b) <= tol))


def conservation_residual(graph: TrackingGraph, f: FlowSolution) -> float:
    """Largest violation of f_birth + inflow = f_det = f_death + outflow."""
    n = len(graph)
    if n == 0:
        return 0.0
    inflow = np.bincount(graph.edge_dst, weights=f.f_trans, minlength=n) if graph.num_edges else np.zeros(n)
    outflow = np.bincount(graph.edge_src, weights=f.f_trans, minlength=n) if graph.num_edges else np.zeros(n)
    r_in = np.abs(f.f_birth + inflow - f.f_det)
    r_out = np.abs(f.f_death + outflow - f.f_det)
    return float(max(r_in.max(), r_out.max()))


def check_feasible(graph: TrackingGraph, f: FlowSolution, tol: float = CONSERVATION_TOL):
    n, m = len(graph), graph.num_edges
    shapes = (f.f_det.shape, f.f_birth.shape, f.f_death.shape, f.f_trans.shape)
    if shapes != ((n,), (n,), (n,), (m,)):
        raise ValueError("flow arrays do not match the graph")
    v = f.vector()
    if v.size and (v.min() < -tol or v.max() > 1 + tol):
        raise ValueError("flow variables outside [0, 1]")
    r = conservation_residual(graph, f)
    if r > tol:
        raise ValueError(f"flow conservation violated (residual {r:.3g})")


def features_of_flow(graph: TrackingGraph, f: FlowSolution,
                     num_relations: int = NUM_RELATIONS) -> FeatureVector:
    """Psi(X, f): block-wise feature sums over the active variables."""
    check_feasible(graph, f)
    psi = FeatureVector.zeros(graph.num_classes, num_relations)
    psi.birth[0] = np.sum(f.f_birth)
    psi.death[0] = np.sum(f.f_death)
    psi.appearance[:] = [f.f_det @ graph.scores, np.sum(f.f_det)]
    if graph.num_edges:
        psi.transition[:] = f.f_trans @ _transition_matrix(graph)
    if graph.num_pairs:
        prod = f.pair_products(graph)
        offsets = _pair_offsets(graph, num_relations)
        rel = graph.relations[:, :num_relations].astype(float) * prod[:, None]
        cols = offsets[:, None] + np.arange(num_relations)[None, :]
        np.add.at(psi.pairwise, cols.ravel(), rel.ravel())
    return psi


def assign_costs(graph: TrackingGraph, w: WeightVector) -> CostedGraph:
    """Costs of every variable as minus the weighted element feature."""
    if w.num_classes != graph.num_classes:
        raise ValueError(f"weights are for K={w.num_classes}, graph has K={graph.num_classes}")
    n = len(graph)
    c_det = -(w.appearance[0] * graph.scores + w.appearance[1])
    c_birth = np.full(n, -w.birth[0])
    c_death = np.full(n, -w.death[0])
    c_trans = -(_transition_matrix(graph) @ w.transition) if graph.num_edges else np.zeros(0)
    if graph.num_pairs:
        d = w.num_relations
        offsets = _pair_offsets(graph, d)
        blocks = w.pairwise[offsets[:, None] + np.arange(d)[None, :]]
        q = -np.sum(blocks * graph.relations[:, :d], axis=1)
    else:
        q = np.zeros(0)
    return CostedGraph(graph, c_det, c_trans, c_birth, c_death, q)


def linear_cost(cg: CostedGraph, f: FlowSolution) -> float:
    return float(cg.c_det @ f.f_det + cg.c_birth @ f.f_birth + cg.c_death @ f.f_death
                 + cg.c_trans @ f.f_trans)


def flow_cost(cg: CostedGraph, f: FlowSolution) -> float:
    """Full objective: linear terms plus q_ij f_i f_j over ordered same-frame pairs."""
    check_feasible(cg.graph, f)
    total = linear_cost(cg, f)
    if cg.graph.num_pairs:
        total += float(cg.q @ f.pair_products(cg.graph))
    return total
