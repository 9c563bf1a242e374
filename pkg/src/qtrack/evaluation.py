"""CLEAR-MOT metrics and spline smoothing of output trajectories."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.interpolate import make_lsq_spline
from scipy.optimize import linear_sum_assignment

from .graph import GroundTruthBox, iou_matrix

KNOT_SPACING = 5


class TrackedBox(NamedTuple):
    frame: int
    track_id: int
    class_id: int
    box: tuple
    score: float = 0.0


@dataclass
class MotReport:
    mota: float
    motp: float
    recall: float
    precision: float
    mt: float
    ml: float
    idsw: int
    frag: int
    fp: int
    fn: int
    tp: int
    num_gt: int

    def as_dict(self) -> dict:
        return asdict(self)

    def table(self) -> str:
        names = list(self.as_dict())
        cells = [f"{v:.6g}" if isinstance(v, float) else str(v) for v in self.as_dict().values()]
        width = [max(len(a), len(b)) for a, b in zip(names, cells)]
        head = "  ".join(a.rjust(k) for a, k in zip(names, width))
        row = "  ".join(b.rjust(k) for b, k in zip(cells, width))
        return head + "\n" + row


def match_frame(pred_boxes, gt_boxes, threshold: float = 0.5, keep=(),
                pred_classes=None, gt_classes=None) -> list:
    """One-to-one (pred, gt) matching of maximal total IoU, IoU >= threshold.

    Pairs in ``keep`` are retained first when still above the threshold;
    the rest are assigned optimally. Class arrays, when given, forbid
    cross-class matches.
    """
    if not 0 < threshold <= 1:
        raise ValueError("threshold must be in (0, 1]")
    P = np.asarray(pred_boxes, dtype=float).reshape(-1, 4)
    G = np.asarray(gt_boxes, dtype=float).reshape(-1, 4)
    if not len(P) or not len(G):
        return []
    ov = iou_matrix(P, G)
    if pred_classes is not None and gt_classes is not None:
        ov = np.where(np.asarray(pred_classes)[:, None] == np.asarray(gt_classes)[None, :], ov, 0.0)
    valid = ov >= threshold
    out = []
    used_p, used_g = set(), set()
    for p, g in keep:
        if valid[p, g] and p not in used_p and g not in used_g:
            out.append((p, g))
            used_p.add(p)
            used_g.add(g)
    rp = [p for p in range(len(P)) if p not in used_p]
    rg = [g for g in range(len(G)) if g not in used_g]
    if rp and rg:
        w = np.where(valid[np.ix_(rp, rg)], ov[np.ix_(rp, rg)], 0.0)
        rows, cols = linear_sum_assignment(w, maximize=True)
        out.extend((rp[r], rg[c]) for r, c in zip(rows, cols) if valid[rp[r], rg[c]])
    return sorted(out)


def clear_mot(tracks: Sequence[TrackedBox], gts: Sequence[GroundTruthBox],
              threshold: float = 0.5) -> MotReport:
    """CLEAR-MOT accumulation over frames.

    Unmatched predictions covering an ambiguous GT box are not counted as
    false positives. With no GT boxes MOTA and recall use a denominator of 1.
    """
    pred_by, gt_by, amb_by = {}, {}, {}
    for t in tracks:
        pred_by.setdefault(t.frame, []).append(t)
    for g in gts:
        (amb_by if g.ambiguous else gt_by).setdefault(g.frame, []).append(g)

    tp = fp = fn = idsw = 0
    iou_sum = 0.0
    last_match: dict = {}  # gt id -> pred id of its most recent match
    status: dict = {}      # gt id -> list of tracked flags in frame order
    for frame in sorted(set(pred_by) | set(gt_by)):
        preds = sorted(pred_by.get(frame, []), key=lambda t: t.track_id)
        real = sorted(gt_by.get(frame, []), key=lambda g: g.track_id)
        pb = np.array([t.box for t in preds], dtype=float).reshape(-1, 4)
        gb = np.array([g.box for g in real], dtype=float).reshape(-1, 4)
        pid = {t.track_id: k for k, t in enumerate(preds)}
        keep = [(pid[last_match[g.track_id]], k) for k, g in enumerate(real)
                if last_match.get(g.track_id) in pid]
        pairs = match_frame(pb, gb, threshold, keep, [t.class_id for t in preds],
                            [g.class_id for g in real])
        ov = iou_matrix(pb, gb) if len(pairs) else None
        matched_g = {}
        for p, k in pairs:
            gid, tid = real[k].track_id, preds[p].track_id
            if gid in last_match and last_match[gid] != tid:
                idsw += 1
            last_match[gid] = tid
            matched_g[k] = p
            iou_sum += ov[p, k]
        tp += len(pairs)
        fn += len(real) - len(pairs)
        for k, g in enumerate(real):
            status.setdefault(g.track_id, []).append(k in matched_g)
        used = {p for p, _ in pairs}
        extra = [p for p in range(len(preds)) if p not in used]
        amb = amb_by.get(frame, [])
        if extra and amb:
            ab = np.array([g.box for g in amb], dtype=float)
            hits = iou_matrix(pb[extra], ab).max(axis=1) >= threshold
            extra = [p for p, h in zip(extra, hits) if not h]
        fp += len(extra)

    num_gt = tp + fn
    denom = max(num_gt, 1)
    ratios = [np.mean(s) for s in status.values()]
    frag = sum(int(a and not b) for s in status.values() for a, b in zip(s, s[1:]))
    n_traj = len(ratios)
    return MotReport(
        mota=1.0 - (fn + fp + idsw) / denom,
        motp=iou_sum / tp if tp else 0.0,
        recall=tp / denom,
        precision=tp / (tp + fp) if tp + fp else 0.0,
        mt=sum(r >= 0.8 for r in ratios) / n_traj if n_traj else 0.0,
        ml=sum(r < 0.2 for r in ratios) / n_traj if n_traj else 0.0,
        idsw=idsw, frag=frag, fp=fp, fn=fn, tp=tp, num_gt=num_gt,
    )


def _knots(x: np.ndarray, spacing: int) -> np.ndarray:
    inner = np.arange(x[0] + spacing, x[-1], spacing, dtype=float)
    # Schoenberg-Whitney: drop knots whose interval holds no sample
    keep = []
    prev = x[0]
    for t in inner:
        if np.any((x > prev) & (x < t)):
            keep.append(t)
            prev = t
    if keep and not np.any(x > keep[-1]):
        keep.pop()
    return np.concatenate([[x[0]] * 4, keep, [x[-1]] * 4])


def smooth_track(frames, boxes, spacing: int = KNOT_SPACING) -> np.ndarray:
    """Least-squares cubic B-spline fit of centre, width and height over frames.

    Returns boxes at the same frames. Tracks with fewer than ``spacing``
    boxes are returned unchanged.
    """
    x = np.asarray(frames, dtype=float)
    b = np.asarray(boxes, dtype=float).reshape(-1, 4)
    if x.size != len(b):
        raise ValueError("frames and boxes differ in length")
    if x.size < max(spacing, 4):
        return b.copy()
    if np.any(np.diff(x) <= 0):
        raise ValueError("frames must be strictly increasing")
    y = np.column_stack([(b[:, 0] + b[:, 2]) / 2, (b[:, 1] + b[:, 3]) / 2,
                         b[:, 2] - b[:, 0], b[:, 3] - b[:, 1]])
    t = _knots(x, spacing)
    while True:
        try:
            fit = make_lsq_spline(x, y, t, k=3)(x)
            break
        except (ValueError, np.linalg.LinAlgError):
            if t.size <= 8:
                return b.copy()
            t = np.delete(t, t.size // 2)
    cx, cy = fit[:, 0], fit[:, 1]
    w, h = np.maximum(fit[:, 2], 1e-6), np.maximum(fit[:, 3], 1e-6)
    return np.column_stack([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2])


def smooth_tracks(tracks: Sequence[TrackedBox], spacing: int = KNOT_SPACING) -> list:
    """Smooth every track independently; frames, ids and scores are untouched."""
    by_id: dict = {}
    for t in tracks:
        by_id.setdefault(t.track_id, []).append(t)
    out = []
    for tid in sorted(by_id):
        seq = sorted(by_id[tid], key=lambda t: t.frame)
        sm = smooth_track([t.frame for t in seq], [t.box for t in seq], spacing)
        out.extend(t._replace(box=tuple(float(v) for v in s)) for t, s in zip(seq, sm))
    return sorted(out, key=lambda t: (t.frame, t.track_id))
