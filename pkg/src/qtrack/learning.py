"""Structured max-margin learning of the tracking weights.

Ground-truth boxes are mapped to a ground-truth flow, a weighted Hamming
loss is attached to every flow variable, and a cutting-plane loop alternates
between loss-augmented inference and a small quadratic master problem.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .graph import (Detection, GraphParams, GroundTruthBox, TrackingGraph, build_graph,
                    iou_matrix)
from .oracle import brute_force_optimum
from .potentials import (CostedGraph, FeatureVector, FlowSolution, WeightVector, assign_costs,
                         check_feasible, features_of_flow, flow_cost)
from .quadratic import greedy_dp_quadratic, lp_relax_solve, lp_round, twopass_dp_quadratic

__all__ = [
    "GroundTruthBox", "LossVector", "TrainingProblem", "ConstraintRow", "GroundTruthLabels",
    "ground_truth_labels", "map_ground_truth", "classify_transition", "transition_loss",
    "loss_vector", "loss_augmented_infer", "solve_master_qp", "cutting_plane_train",
    "chunk_sequences", "make_training_problem", "drop_ambiguous", "predict", "hamming",
    "DEFAULT_C", "C_GRID",
]

CLAIM_IOU = 0.5
DEFAULT_C = 2.0 ** -7
C_GRID = tuple(2.0 ** k for k in range(-9, 4))
KKT_TOL = 1e-6
NN, PN, NP, PP_PLUS, PP_MINUS = "NN", "PN", "NP", "PPplus", "PPminus"
INFER_METHODS = ("greedy", "twopass", "lp", "oracle")


# --- ground truth -----------------------------------------------------------

@dataclass
class GroundTruthLabels:
    flow: FlowSolution
    track_id: np.ndarray  # per detection index, -1 for false detections


def _frame_gts(gts: Sequence[GroundTruthBox], ambiguous: bool = False) -> dict:
    out: dict = {}
    for g in gts:
        if g.ambiguous == ambiguous:
            out.setdefault(g.frame, []).append(g)
    return out


def ground_truth_labels(graph: TrackingGraph, gts: Sequence[GroundTruthBox],
                        threshold: float = CLAIM_IOU) -> GroundTruthLabels:
    """Claim detections for GT boxes, then keep one longest chain per identity."""
    n = len(graph)
    claim = np.full(n, -1, dtype=np.int64)
    by_frame = _frame_gts(gts)
    for frame, start, stop in graph.frame_slices:
        boxes = graph.boxes[start:stop]
        for g in sorted(by_frame.get(frame, []), key=lambda g: g.track_id):
            ov = iou_matrix(np.array([g.box], dtype=float), boxes)[0]
            ok = (ov >= threshold) & (graph.class_ids[start:stop] == g.class_id) \
                & (claim[start:stop] < 0)
            if ok.any():
                cand = np.flatnonzero(ok)
                k = cand[np.argmax(graph.scores[start:stop][cand])]
                claim[start + k] = g.track_id

    f = FlowSolution.zeros(graph)
    labels = np.full(n, -1, dtype=np.int64)
    src = graph.edge_src
    for tid in sorted(set(claim[claim >= 0].tolist())):
        mine = claim == tid
        length = np.zeros(n, dtype=np.int64)
        link = np.full(n, -1, dtype=np.int64)
        for i in np.flatnonzero(mine):
            length[i] = 1
            for e in graph.in_edges[i]:
                j = src[e]
                if mine[j] and length[j] + 1 > length[i]:
                    length[i], link[i] = length[j] + 1, e
        end = int(np.argmax(np.where(mine, length, 0)))
        nodes = [end]
        while link[nodes[-1]] >= 0:
            f.f_trans[link[nodes[-1]]] = 1
            nodes.append(int(src[link[nodes[-1]]]))
        f.f_det[nodes] = 1
        f.f_birth[nodes[-1]] = 1
        f.f_death[end] = 1
        labels[nodes] = tid
    check_feasible(graph, f)
    return GroundTruthLabels(f, labels)


def map_ground_truth(graph: TrackingGraph, gts: Sequence[GroundTruthBox],
                     threshold: float = CLAIM_IOU) -> FlowSolution:
    return ground_truth_labels(graph, gts, threshold).flow


# --- loss -------------------------------------------------------------------

def _interpolate(a, b, steps: int) -> np.ndarray:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    t = np.arange(1, steps + 1)[:, None] / (steps + 1)
    return a + t * (b - a)


def classify_transition(graph: TrackingGraph, edge: int, labels: GroundTruthLabels | np.ndarray,
                        gts: Sequence[GroundTruthBox], threshold: float = CLAIM_IOU):
    """Endpoint type of an edge plus (true, false) virtual detection counts.

    Virtual detections are the linear box interpolations at the frames the
    edge skips; one is true when it overlaps a same-class GT box there.
    """
    ids = labels.track_id if isinstance(labels, GroundTruthLabels) else np.asarray(labels)
    a, b = int(graph.edge_src[edge]), int(graph.edge_dst[edge])
    la, lb = ids[a], ids[b]
    if la < 0 and lb < 0:
        kind = NN
    elif lb < 0:
        kind = PN
    elif la < 0:
        kind = NP
    else:
        kind = PP_PLUS if la == lb else PP_MINUS
    gap = int(graph.frames[b] - graph.frames[a])
    tv = fv = 0
    if gap > 1:
        by_frame = _frame_gts(gts)
        cls = graph.class_ids[a]
        for k, box in enumerate(_interpolate(graph.boxes[a], graph.boxes[b], gap - 1)):
            cand = [g.box for g in by_frame.get(int(graph.frames[a]) + k + 1, []) if g.class_id == cls]
            hit = bool(cand) and iou_matrix(box[None, :], np.array(cand, dtype=float)).max() >= threshold
            tv += hit
            fv += not hit
    return kind, (tv, fv)


def transition_loss(kind: str, true_virtual: int, false_virtual: int) -> float:
    if kind == NN:
        return float(true_virtual + false_virtual)
    if kind in (PN, NP):
        return float(true_virtual + false_virtual + 1)
    if kind == PP_PLUS:
        return float(true_virtual)
    if kind == PP_MINUS:
        return float(true_virtual + false_virtual + 2)
    raise ValueError(f"unknown transition type {kind!r}")


@dataclass
class LossVector:
    loss_det: np.ndarray
    loss_birth: np.ndarray
    loss_death: np.ndarray
    loss_trans: np.ndarray

    def __post_init__(self):
        for name in ("loss_det", "loss_birth", "loss_death", "loss_trans"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.size and (not np.all(np.isfinite(v)) or v.min() < 0):
                raise ValueError(f"{name} must be finite and non-negative")
            setattr(self, name, v)

    @classmethod
    def zeros(cls, graph: TrackingGraph) -> "LossVector":
        n, m = len(graph), graph.num_edges
        return cls(np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(m))

    def vector(self) -> np.ndarray:
        return np.concatenate([self.loss_det, self.loss_birth, self.loss_death, self.loss_trans])

    def __call__(self, f_gt: FlowSolution, f: FlowSolution) -> float:
        """Weighted Hamming distance sum(loss * |f_gt - f|); fractional f allowed."""
        return float(self.vector() @ np.abs(f_gt.vector() - f.vector()))


def loss_vector(graph: TrackingGraph, labels: GroundTruthLabels,
                gts: Sequence[GroundTruthBox]) -> LossVector:
    n = len(graph)
    trans = np.array([transition_loss(*_flat(classify_transition(graph, e, labels, gts)))
                      for e in range(graph.num_edges)], dtype=float)
    return LossVector(np.ones(n), np.ones(n), np.ones(n), trans)


def _flat(c):
    kind, (tv, fv) = c
    return kind, tv, fv


def hamming(f_gt: FlowSolution, f: FlowSolution) -> float:
    """Unweighted Hamming distance between two flow vectors."""
    return float(np.abs(f_gt.vector() - f.vector()).sum())


# --- training problems ------------------------------------------------------

@dataclass
class TrainingProblem:
    graph: TrackingGraph
    gt_flow: FlowSolution
    gt_features: FeatureVector
    loss: LossVector
    gts: tuple = ()
    params: GraphParams = field(default_factory=GraphParams)

    def __post_init__(self):
        check_feasible(self.graph, self.gt_flow)


def drop_ambiguous(detections: Sequence[Detection], gts: Sequence[GroundTruthBox],
                   threshold: float = CLAIM_IOU) -> list:
    """Remove detections that overlap an ambiguous GT box in their frame."""
    amb = _frame_gts(gts, ambiguous=True)
    out = []
    for d in detections:
        boxes = [g.box for g in amb.get(d.frame, [])]
        if boxes and iou_matrix(np.array([d.box], dtype=float), np.array(boxes, dtype=float)).max() >= threshold:
            continue
        out.append(d)
    return out


def make_training_problem(detections: Sequence[Detection], gts: Sequence[GroundTruthBox],
                          params: GraphParams | None = None,
                          num_classes: int | None = None) -> TrainingProblem:
    params = params or GraphParams()
    graph = build_graph(drop_ambiguous(detections, gts), params, num_classes)
    labels = ground_truth_labels(graph, gts)
    return TrainingProblem(graph, labels.flow, features_of_flow(graph, labels.flow),
                           loss_vector(graph, labels, gts), tuple(gts), params)


def chunk_sequences(problem: TrainingProblem, length: int = 10, overlap: int = 5) -> list:
    """Overlapping fixed-length windows, each rebuilt as its own problem.

    Windows start every ``length - overlap`` frames; the last window is the
    first one that reaches the final frame.
    """
    if not length > overlap >= 0:
        raise ValueError("need length > overlap >= 0")
    dets = problem.graph.detections
    frames = [d.frame for d in dets] + [g.frame for g in problem.gts]
    if not frames:
        return []
    first, last = min(frames), max(frames)
    out = []
    start = first
    while True:
        stop = start + length
        d = [x for x in dets if start <= x.frame < stop]
        g = [x for x in problem.gts if start <= x.frame < stop]
        out.append(make_training_problem(d, g, problem.params, problem.graph.num_classes))
        if stop > last:
            break
        start += length - overlap
    return out


# --- inference and master problem -------------------------------------------

def _augment(cg: CostedGraph, lossv: LossVector, gt: FlowSolution) -> CostedGraph:
    def aug(c, loss, on):
        return c + np.where(on > 0.5, loss, -loss)
    return cg.with_costs(c_det=aug(cg.c_det, lossv.loss_det, gt.f_det),
                         c_birth=aug(cg.c_birth, lossv.loss_birth, gt.f_birth),
                         c_death=aug(cg.c_death, lossv.loss_death, gt.f_death),
                         c_trans=aug(cg.c_trans, lossv.loss_trans, gt.f_trans))


def _lp_flow(cg: CostedGraph) -> FlowSolution:
    return lp_relax_solve(cg).flow


def infer(cg: CostedGraph, method: str) -> FlowSolution:
    if method == "greedy":
        return greedy_dp_quadratic(cg)
    if method == "twopass":
        return twopass_dp_quadratic(cg)
    if method == "lp":
        return _lp_flow(cg)
    if method == "oracle":
        return brute_force_optimum(cg).best_flow
    raise ValueError(f"unknown inference method {method!r}; expected one of {INFER_METHODS}")


def loss_augmented_infer(cg: CostedGraph, lossv: LossVector, gt_flow: FlowSolution,
                         method: str = "greedy"):
    """Most violated flow and its margin violation.

    Minimises C(f) - L(f_gt, f) by shifting each variable's cost by its loss
    (down where the ground truth is off, up where it is on). The violation is
    L(f_gt, f) - (C(f) - C(f_gt)) in cost form. ``lp`` may return a
    fractional flow.
    """
    f = infer(_augment(cg, lossv, gt_flow), method)
    violation = lossv(gt_flow, f) - (flow_cost(cg, f) - flow_cost(cg, gt_flow))
    return f, float(violation)


@dataclass
class ConstraintRow:
    delta_psi: np.ndarray
    loss_value: float

    def __post_init__(self):
        self.delta_psi = np.asarray(self.delta_psi, dtype=float)
        if not self.loss_value >= 0:
            raise ValueError("loss_value must be non-negative")


@dataclass
class MasterSolution:
    w: np.ndarray
    xi: float
    alpha: np.ndarray
    objective: float  # primal 0.5|w|^2 + C xi
    dual: float
    kkt: float


def solve_master_qp(rows: Sequence[ConstraintRow], C: float, alpha0=None,
                    tol: float = KKT_TOL, max_steps: int = 1_000_000, dim: int | None = None) -> MasterSolution:
    """min 0.5|w|^2 + C xi  s.t.  <w, a_r> >= b_r - xi, xi >= 0.

    Solved in the dual max sum(alpha b) - 0.5|sum(alpha a)|^2 with
    alpha >= 0, sum(alpha) <= C by pairwise coordinate ascent. A zero row
    absorbs the unused budget so the sum constraint becomes an equality.
    """
    if C <= 0:
        raise ValueError("C must be positive")
    if not rows:
        return MasterSolution(np.zeros(dim or 0), 0.0, np.zeros(0), 0.0, 0.0, 0.0)
    A = np.vstack([np.zeros(rows[0].delta_psi.size)] + [r.delta_psi for r in rows])
    b = np.array([0.0] + [r.loss_value for r in rows])
    R = b.size
    G = A @ A.T
    diag = np.diag(G)
    alpha = np.zeros(R)
    if alpha0 is not None and np.sum(alpha0) > 0:
        a0 = np.asarray(alpha0, dtype=float)[: R - 1]
        alpha[1:1 + a0.size] = a0
    alpha[0] = max(C - alpha[1:].sum(), 0.0)
    alpha *= C / alpha.sum()
    grad = b - G @ alpha
    kkt = 0.0
    for step in range(max_steps):
        up = int(np.argmax(grad))
        support = np.flatnonzero(alpha > 0)
        down = int(support[np.argmin(grad[support])])
        kkt = grad[up] - grad[down]
        if kkt < tol:
            break
        curv = diag[up] + diag[down] - 2 * G[up, down]
        t = alpha[down] if curv <= 0 else min(kkt / curv, alpha[down])
        alpha[up] += t
        alpha[down] -= t
        if alpha[down] < 1e-15 * C:
            alpha[down] = 0.0
        grad -= t * (G[:, up] - G[:, down])
        if step % 1000 == 999:
            grad = b - G @ alpha  # limit drift
    w = alpha @ A
    xi = max(0.0, float(np.max(b - A @ w)))
    primal = 0.5 * float(w @ w) + C * xi
    dual = float(alpha @ b) - 0.5 * float(w @ w)
    return MasterSolution(w, xi, alpha[1:].copy(), primal, dual, float(kkt))


def predict(problem: TrainingProblem, w: WeightVector, method: str = "greedy") -> FlowSolution:
    cg = assign_costs(problem.graph, w)
    if method == "lp":
        return lp_round(cg)
    return infer(cg, method)


def cutting_plane_train(problems: Sequence[TrainingProblem], C: float = DEFAULT_C,
                        eps: float = 1e-4, method: str = "greedy", max_iter: int = 100,
                        history: list | None = None) -> WeightVector:
    """One-slack cutting-plane training.

    Each iteration sums the most violated constraint of every problem into a
    single row. The row is added when its violation exceeds xi by more than
    eps * max(1, loss); otherwise training has converged. ``history``
    receives one dict per iteration.
    """
    if not problems:
        raise ValueError("no training problems")
    K = problems[0].graph.num_classes
    if any(p.graph.num_classes != K for p in problems):
        raise ValueError("problems disagree on the number of classes")
    w = WeightVector.zeros(K)
    rows: list = []
    sol = None
    xi = 0.0
    for it in range(1, max_iter + 1):
        a = np.zeros(w.values.size)
        b = 0.0
        for p in problems:
            cg = assign_costs(p.graph, w)
            f, _ = loss_augmented_infer(cg, p.loss, p.gt_flow, method)
            a += p.gt_features.values - features_of_flow(p.graph, f).values
            b += p.loss(p.gt_flow, f)
        violation = b - float(w.values @ a)
        record = {"iteration": it, "violation": violation, "xi": xi, "loss": b}
        if violation <= xi + eps * max(1.0, b):
            record["added"] = False
            if history is not None:
                history.append(record)
            break
        rows.append(ConstraintRow(a, b))
        sol = solve_master_qp(rows, C, alpha0=None if sol is None else sol.alpha)
        w = WeightVector(sol.w, K)
        xi = sol.xi
        record.update(added=True, objective=sol.objective, dual=sol.dual, kkt=sol.kkt,
                      xi_after=xi, weights=w.values.copy(),
                      constraint_slack=[float(w.values @ r.delta_psi - r.loss_value + xi) for r in rows])
        if history is not None:
            history.append(record)
    return w
