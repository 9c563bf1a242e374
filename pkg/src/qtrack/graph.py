"""Detections and the directed acyclic association graph built from them.

A graph holds the candidate detections V, the forward-in-time transition edges
E and the ordered same-frame pairs EC that carry spatial-context relations.
Solvers work on integer indices, so the graph caches index arrays alongside the
id-based records.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

NUM_RELATIONS = 8
MAX_GAP = 8

# order of the relation bins inside a relation vector
RELATIONS = (
    "on_top_of",
    "above",
    "below",
    "next_to",
    "near",
    "far",
    "overlap",
    "strictly_overlap",
)
ON_TOP_OF, ABOVE, BELOW, NEXT_TO, NEAR, FAR, OVERLAP, STRICTLY_OVERLAP = range(8)

Box = tuple  # (x1, y1, x2, y2)


@dataclass(frozen=True)
class Detection:
    """One candidate box at a frame, with class and detector score.

    ``velocity`` is the per-frame displacement of the box centre used by the
    motion model. It stays (0, 0) for detections read from files.
    """

    id: int
    frame: int
    class_id: int
    box: Box
    score: float
    velocity: tuple = (0.0, 0.0)

    def __post_init__(self):
        x1, y1, x2, y2 = self.box
        if not (x2 > x1 and y2 > y1):
            raise ValueError(f"detection {self.id}: malformed box {self.box}")
        if self.frame < 0:
            raise ValueError(f"detection {self.id}: negative frame {self.frame}")
        if self.class_id < 0:
            raise ValueError(f"detection {self.id}: negative class {self.class_id}")


@dataclass(frozen=True)
class GroundTruthBox:
    frame: int
    track_id: int
    class_id: int
    box: tuple
    ambiguous: bool = False

    def __post_init__(self):
        x1, y1, x2, y2 = self.box
        if not (x2 > x1 and y2 > y1):
            raise ValueError(f"ground truth {self.track_id}@{self.frame}: malformed box {self.box}")


@dataclass(frozen=True)
class TransitionEdge:
    src: int
    dst: int
    gap: int
    predicted_overlap: float


@dataclass(frozen=True)
class PairwisePair:
    i: int
    j: int
    relation: tuple


@dataclass(frozen=True)
class GraphParams:
    max_gap: int = MAX_GAP
    link_threshold: float = 0.3
    score_threshold: float = -0.5

    @classmethod
    def baseline(cls) -> "GraphParams":
        """Thresholds used for models with hand-set (unlearned) costs."""
        return cls(link_threshold=0.5, score_threshold=0.0)


def predict_box(det: Detection, gap: int) -> Box:
    """Translate ``det.box`` by ``gap`` frames of constant velocity."""
    dx = gap * det.velocity[0]
    dy = gap * det.velocity[1]
    x1, y1, x2, y2 = det.box
    return (x1 + dx, y1 + dy, x2 + dx, y2 + dy)


def iou(a: Box, b: Box) -> float:
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return float(inter / union)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between two (n, 4) and (m, 4) box arrays."""
    a = np.asarray(a, dtype=float).reshape(-1, 4)
    b = np.asarray(b, dtype=float).reshape(-1, 4)
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return inter / union


def link_candidates(
    detections: Sequence[Detection],
    max_gap: int = MAX_GAP,
    link_threshold: float = 0.3,
) -> list[TransitionEdge]:
    """All forward transitions whose motion-predicted overlap beats the threshold.

    A pair (i, j) is linked when 1 <= frame(j) - frame(i) <= max_gap, both share
    a class, and IoU(predict_box(i, gap), box(j)) > link_threshold.
    """
    if max_gap < 1:
        raise ValueError("max_gap must be >= 1")
    by_frame: dict[int, list[Detection]] = {}
    for d in sorted(detections, key=lambda d: (d.frame, d.id)):
        by_frame.setdefault(d.frame, []).append(d)

    edges = []
    for t, src in by_frame.items():
        for gap in range(1, max_gap + 1):
            dst = by_frame.get(t + gap)
            if not dst:
                continue
            pred = np.array([predict_box(d, gap) for d in src])
            boxes = np.array([d.box for d in dst])
            ov = iou_matrix(pred, boxes)
            same = np.array([d.class_id for d in src])[:, None] == np.array([d.class_id for d in dst])[None, :]
            for a, b in zip(*np.nonzero((ov > link_threshold) & same)):
                edges.append(TransitionEdge(src[a].id, dst[b].id, gap, float(ov[a, b])))
    order = {d.id: (d.frame, d.id) for d in detections}
    edges.sort(key=lambda e: (order[e.src], order[e.dst]))
    return edges


def _relations(bi: np.ndarray, bj: np.ndarray) -> np.ndarray:
    """Vectorised relation vectors of boxes ``bj`` relative to boxes ``bi``."""
    bi = np.asarray(bi, dtype=float).reshape(-1, 4)
    bj = np.asarray(bj, dtype=float).reshape(-1, 4)
    n = len(bi)
    out = np.zeros((n, NUM_RELATIONS), dtype=np.int8)
    if n == 0:
        return out

    iw = np.minimum(bi[:, 2], bj[:, 2]) - np.maximum(bi[:, 0], bj[:, 0])
    ih = np.minimum(bi[:, 3], bj[:, 3]) - np.maximum(bi[:, 1], bj[:, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area_i = (bi[:, 2] - bi[:, 0]) * (bi[:, 3] - bi[:, 1])

    ci = 0.5 * (bi[:, :2] + bi[:, 2:])
    cj = 0.5 * (bj[:, :2] + bj[:, 2:])
    dx = cj[:, 0] - ci[:, 0]
    dy = cj[:, 1] - ci[:, 1]
    d = np.hypot(dx, dy)
    s = 0.5 * (np.hypot(bi[:, 2] - bi[:, 0], bi[:, 3] - bi[:, 1])
               + np.hypot(bj[:, 2] - bj[:, 0], bj[:, 3] - bj[:, 1]))

    overlapping = inter > 0
    on_top = overlapping & (d < 0.25 * s)
    overlap = overlapping & ~on_top
    vertical = ~overlapping & (np.abs(dy) > np.abs(dx)) & (np.abs(dy) < 2 * s)
    # image y grows downwards: negative dy puts j above i
    above = vertical & (dy < 0)
    below = vertical & (dy > 0)
    next_to = ~overlapping & (np.abs(dx) >= np.abs(dy)) & (np.abs(dx) < 2 * s)
    taken = on_top | overlap | above | below | next_to
    near = ~taken & (d < 3 * s)
    far = ~taken & ~near

    out[:, ON_TOP_OF] = on_top
    out[:, ABOVE] = above
    out[:, BELOW] = below
    out[:, NEXT_TO] = next_to
    out[:, NEAR] = near
    out[:, FAR] = far
    out[:, OVERLAP] = overlap
    out[:, STRICTLY_OVERLAP] = inter / area_i > 0.9
    return out


def spatial_relation(box_i: Box, box_j: Box, class_i: int = 0, class_j: int = 0) -> tuple:
    """Relation vector of ``box_j`` relative to ``box_i``.

    Exactly one of the first seven bins fires (on top of, above, below,
    next to, near, far, overlap). The eighth bin, strictly overlap, is set
    when area(i & j) / area(i) > 0.9. Classes select the weight block later
    and do not change the geometry.
    """
    return tuple(int(v) for v in _relations(np.array([box_i]), np.array([box_j]))[0])


@dataclass(frozen=True)
class TrackingGraph:
    """Association graph over detections sorted by (frame, id).

    The position of a detection in ``detections`` is its solver index; edges
    and pairs keep detection ids and are mirrored by cached index arrays.
    """

    detections: tuple
    edges: tuple = ()
    pairs: tuple = ()
    num_classes: int = 1
    frame_range: tuple = field(default=(0, -1))

    def __post_init__(self):
        dets = tuple(sorted(self.detections, key=lambda d: (d.frame, d.id)))
        ids = [d.id for d in dets]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate detection ids")
        object.__setattr__(self, "detections", dets)
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "pairs", tuple(self.pairs))
        if dets and self.frame_range == (0, -1):
            object.__setattr__(self, "frame_range", (dets[0].frame, dets[-1].frame))
        idx = self.index
        frames = self.frames
        for e in self.edges:
            if e.src not in idx or e.dst not in idx:
                raise ValueError(f"edge {e.src}->{e.dst} references a missing detection")
            if frames[idx[e.dst]] <= frames[idx[e.src]]:
                raise ValueError(f"edge {e.src}->{e.dst} does not go forward in time")
        for p in self.pairs:
            if p.i not in idx or p.j not in idx or p.i == p.j:
                raise ValueError(f"bad pair {p.i},{p.j}")
            if frames[idx[p.i]] != frames[idx[p.j]]:
                raise ValueError(f"pair {p.i},{p.j} spans two frames")

    def __len__(self):
        return len(self.detections)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def num_pairs(self) -> int:
        return len(self.pairs)

    @cached_property
    def index(self) -> dict:
        return {d.id: k for k, d in enumerate(self.detections)}

    @cached_property
    def ids(self) -> np.ndarray:
        return np.array([d.id for d in self.detections], dtype=np.int64)

    @cached_property
    def frames(self) -> np.ndarray:
        return np.array([d.frame for d in self.detections], dtype=np.int64)

    @cached_property
    def scores(self) -> np.ndarray:
        return np.array([d.score for d in self.detections], dtype=float)

    @cached_property
    def class_ids(self) -> np.ndarray:
        return np.array([d.class_id for d in self.detections], dtype=np.int64)

    @cached_property
    def boxes(self) -> np.ndarray:
        return np.array([d.box for d in self.detections], dtype=float).reshape(-1, 4)

    @cached_property
    def edge_src(self) -> np.ndarray:
        return np.array([self.index[e.src] for e in self.edges], dtype=np.int64)

    @cached_property
    def edge_dst(self) -> np.ndarray:
        return np.array([self.index[e.dst] for e in self.edges], dtype=np.int64)

    @cached_property
    def edge_gap(self) -> np.ndarray:
        return np.array([e.gap for e in self.edges], dtype=np.int64)

    @cached_property
    def edge_overlap(self) -> np.ndarray:
        return np.array([e.predicted_overlap for e in self.edges], dtype=float)

    @cached_property
    def edge_lookup(self) -> dict:
        """(src index, dst index) -> edge index."""
        return {(int(a), int(b)): k for k, (a, b) in enumerate(zip(self.edge_src, self.edge_dst))}

    @cached_property
    def in_edges(self) -> list:
        """Per detection index, incoming edge indices sorted by source index."""
        lists = [[] for _ in self.detections]
        for k in np.lexsort((self.edge_src, self.edge_dst)):
            lists[self.edge_dst[k]].append(int(k))
        return lists

    @cached_property
    def out_edges(self) -> list:
        lists = [[] for _ in self.detections]
        for k in np.lexsort((self.edge_dst, self.edge_src)):
            lists[self.edge_src[k]].append(int(k))
        return lists

    @cached_property
    def pair_i(self) -> np.ndarray:
        return np.array([self.index[p.i] for p in self.pairs], dtype=np.int64)

    @cached_property
    def pair_j(self) -> np.ndarray:
        return np.array([self.index[p.j] for p in self.pairs], dtype=np.int64)

    @cached_property
    def relations(self) -> np.ndarray:
        if not self.pairs:
            return np.zeros((0, NUM_RELATIONS), dtype=np.int8)
        return np.array([p.relation for p in self.pairs], dtype=np.int8)

    @cached_property
    def pair_reverse(self) -> np.ndarray:
        """Index of the pair (j, i) for each pair (i, j), or -1 when absent."""
        lookup = {(int(a), int(b)): k for k, (a, b) in enumerate(zip(self.pair_i, self.pair_j))}
        return np.array([lookup.get((int(b), int(a)), -1) for a, b in zip(self.pair_i, self.pair_j)],
                        dtype=np.int64)

    @cached_property
    def partners(self) -> list:
        """Per detection index, the pair indices whose first element it is."""
        lists = [[] for _ in self.detections]
        for k, a in enumerate(self.pair_i):
            lists[a].append(k)
        return [np.array(x, dtype=np.int64) for x in lists]

    @cached_property
    def frame_slices(self) -> list:
        """(frame, start, stop) runs of detection indices, in frame order."""
        runs = []
        f = self.frames
        start = 0
        for k in range(1, len(f) + 1):
            if k == len(f) or f[k] != f[start]:
                runs.append((int(f[start]), start, k))
                start = k
        return runs


def same_frame_pairs(detections: Sequence[Detection]) -> list[PairwisePair]:
    """All ordered same-frame pairs with their relation vectors."""
    by_frame: dict[int, list[Detection]] = {}
    for d in sorted(detections, key=lambda d: (d.frame, d.id)):
        by_frame.setdefault(d.frame, []).append(d)
    pairs = []
    for dets in by_frame.values():
        n = len(dets)
        if n < 2:
            continue
        a, b = np.nonzero(~np.eye(n, dtype=bool))
        boxes = np.array([d.box for d in dets])
        rel = _relations(boxes[a], boxes[b])
        pairs.extend(PairwisePair(dets[x].id, dets[y].id, tuple(int(v) for v in r))
                     for x, y, r in zip(a, b, rel))
    return pairs


def build_graph(detections: Sequence[Detection], params: GraphParams | None = None,
                num_classes: int | None = None) -> TrackingGraph:
    """Build the association graph from raw detections.

    Detections scoring at or below ``params.score_threshold`` are dropped.
    ``num_classes`` defaults to one more than the largest class id present.
    """
    params = params or GraphParams()
    ids = [d.id for d in detections]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate detection ids")
    kept = [d for d in detections if d.score > params.score_threshold]
    if num_classes is None:
        num_classes = max((d.class_id for d in detections), default=0) + 1
    edges = link_candidates(kept, params.max_gap, params.link_threshold)
    pairs = same_frame_pairs(kept)
    return TrackingGraph(tuple(kept), tuple(edges), tuple(pairs), num_classes)
