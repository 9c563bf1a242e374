"""Small builders shared by the test modules."""

import numpy as np

from qtrack.graph import Detection, PairwisePair, TrackingGraph, TransitionEdge
from qtrack.potentials import CostedGraph


def chain_graph(frames, edges, pairs=None, num_classes=1):
    """Graph with dummy geometry; ``edges`` are (src, dst) detection ids."""
    dets = tuple(Detection(k, int(t), 0, (20.0 * k, 0.0, 20.0 * k + 10.0, 10.0), 0.0)
                 for k, t in enumerate(frames))
    es = tuple(TransitionEdge(a, b, frames[b] - frames[a], 1.0) for a, b in edges)
    if pairs is None:
        pairs = [(a, b) for a in range(len(frames)) for b in range(len(frames))
                 if a != b and frames[a] == frames[b]]
    ps = tuple(PairwisePair(a, b, (0,) * 8) for a, b in pairs)
    return TrackingGraph(dets, es, ps, num_classes)


def costed(graph, c_det, c_trans=None, c_birth=1.0, c_death=1.0, q=None):
    n, m, p = len(graph), graph.num_edges, graph.num_pairs
    return CostedGraph(
        graph,
        np.broadcast_to(np.asarray(c_det, dtype=float), (n,)).copy(),
        np.zeros(m) if c_trans is None else np.asarray(c_trans, dtype=float),
        np.broadcast_to(np.asarray(c_birth, dtype=float), (n,)).copy(),
        np.broadcast_to(np.asarray(c_death, dtype=float), (n,)).copy(),
        np.zeros(p) if q is None else np.asarray(q, dtype=float),
    )


def split_instance():
    """Greedy takes A->B; the optimum is A->D plus C->B (objective -5 vs -4.5).

    Ids: A=0, C=1 in frame 0; B=2, D=3 in frame 1.
    """
    g = chain_graph([0, 0, 1, 1], [(0, 2), (0, 3), (1, 2)])
    return costed(g, [-3.0, -1.5, -3.0, -1.5], c_trans=[-0.5, 0.0, 0.0])


# endpoint truth and ids for each transition type: (id at src, id at dst), None = false
LOSS_ENDPOINTS = {"NN": (None, None), "PN": (1, None), "NP": (None, 1),
                  "PPplus": (1, 1), "PPminus": (1, 2)}
# (gap, virtual frames covered by GT)
VIRTUAL_CONFIGS = {"none": (1, False), "true": (3, True), "false": (3, False)}
# hand-computed loss for each (type, virtual configuration)
EXPECTED_LOSS = {
    ("NN", "none"): 0, ("NN", "true"): 2, ("NN", "false"): 2,
    ("PN", "none"): 1, ("PN", "true"): 3, ("PN", "false"): 3,
    ("NP", "none"): 1, ("NP", "true"): 3, ("NP", "false"): 3,
    ("PPplus", "none"): 0, ("PPplus", "true"): 2, ("PPplus", "false"): 0,
    ("PPminus", "none"): 2, ("PPminus", "true"): 4, ("PPminus", "false"): 4,
}
EXPECTED_VIRTUAL = {"none": (0, 0), "true": (2, 0), "false": (0, 2)}


def loss_case(kind, config):
    """Two detections joined by one edge, with GT laid out to produce ``kind``.

    The object slides 10 px per frame, so interpolated boxes coincide with the
    true boxes at the skipped frames.
    """
    from qtrack.graph import GroundTruthBox

    gap, covered = VIRTUAL_CONFIGS[config]
    box = lambda t: (10.0 * t, 0.0, 10.0 * t + 40.0, 40.0)  # noqa: E731
    dets = (Detection(0, 0, 0, box(0), 1.0), Detection(1, gap, 0, box(gap), 1.0))
    graph = TrackingGraph(dets, (TransitionEdge(0, 1, gap, 1.0),), (), 1)
    gts = [GroundTruthBox(t, tid, 0, box(t))
           for t, tid in zip((0, gap), LOSS_ENDPOINTS[kind]) if tid is not None]
    if covered:
        gts += [GroundTruthBox(t, 9, 0, box(t)) for t in range(1, gap)]
    return graph, gts


def _slide(t, x0):
    return (x0 + 5.0 * t, 0.0, x0 + 5.0 * t + 40.0, 40.0)


def mot_scenarios():
    """Hand-built CLEAR-MOT cases: name -> (tracks, gts, expected report fields)."""
    from qtrack.evaluation import TrackedBox
    from qtrack.graph import GroundTruthBox

    gts = [GroundTruthBox(t, k, 0, _slide(t, 200.0 * k)) for t in range(10) for k in (1, 2)]
    perfect = [TrackedBox(g.frame, 10 * g.track_id, 0, g.box) for g in gts]
    out = {
        "perfect": (perfect, gts, dict(mota=1.0, motp=1.0, recall=1.0, precision=1.0, mt=1.0,
                                       ml=0.0, idsw=0, frag=0, fp=0, fn=0, tp=20, num_gt=20)),
        "all_missed": ([], gts, dict(mota=0.0, motp=0.0, recall=0.0, precision=0.0, mt=0.0,
                                     ml=1.0, idsw=0, frag=0, fp=0, fn=20, tp=0, num_gt=20)),
    }
    # track 1: id 10 on frames 0-4, missed at 5, id 11 on 6-9 (one switch, one fragment);
    # track 2: followed by id 20 with a 4 px lateral offset (IoU 36*40 / (2*1600 - 1440));
    # one far false positive in frame 3
    swap = []
    for t in range(10):
        if t != 5:
            swap.append(TrackedBox(t, 10 if t < 5 else 11, 0, _slide(t, 200.0)))
        x1, y1, x2, y2 = _slide(t, 400.0)
        swap.append(TrackedBox(t, 20, 0, (x1 + 4.0, y1, x2 + 4.0, y2)))
    swap.append(TrackedBox(3, 99, 0, (900.0, 300.0, 940.0, 340.0)))
    offset_iou = 1440.0 / 1760.0
    out["identity_swap"] = (swap, gts, dict(
        mota=1.0 - (1 + 1 + 1) / 20, motp=(9 * 1.0 + 10 * offset_iou) / 19, recall=19 / 20,
        precision=19 / 20, mt=1.0, ml=0.0, idsw=1, frag=1, fp=1, fn=1, tp=19, num_gt=20))
    return out
