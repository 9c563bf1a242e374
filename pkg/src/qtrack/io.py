"""Text file formats: detections, KITTI-style labels, weights and tracks.

Detection lines are ``frame class_id x1 y1 x2 y2 score``; track lines are
``frame track_id class_id x1 y1 x2 y2 score``. Lines starting with ``#`` and
blank lines are skipped everywhere.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .evaluation import TrackedBox
from .graph import Detection, GroundTruthBox
from .potentials import TRANSITION_SIZE, WeightVector

CLASS_NAMES = ("Car", "Pedestrian", "Cyclist")
DEFAULT_CLASS_MAP = {name: k for k, name in enumerate(CLASS_NAMES)}
AMBIGUOUS_TYPES = ("DontCare",)
# trailing 3D fields of a KITTI label line: h w l x y z rotation_y
_KITTI_TAIL = "-1 -1 -1 -1000 -1000 -1000 -10"


class InputError(ValueError):
    """Malformed input file; the message carries the file and line number."""


def _lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        for no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if line and not line.startswith("#"):
                yield no, line.split()


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def class_name(k: int) -> str:
    return CLASS_NAMES[k] if k < len(CLASS_NAMES) else f"Class{k}"


def parse_class_map(spec: str | None) -> dict:
    """``"Car,Pedestrian"`` -> {"Car": 0, "Pedestrian": 1}; None gives the default map."""
    if not spec:
        return dict(DEFAULT_CLASS_MAP)
    names = [s.strip() for s in spec.split(",") if s.strip()]
    return {n: k for k, n in enumerate(names)}


# --- detections -------------------------------------------------------------

def parse_detections(path) -> list:
    out = []
    for no, tok in _lines(path):
        if len(tok) != 7:
            raise InputError(f"{path}:{no}: expected 7 fields, got {len(tok)}")
        try:
            frame, cls = int(tok[0]), int(tok[1])
            x1, y1, x2, y2, score = (float(t) for t in tok[2:])
        except ValueError:
            raise InputError(f"{path}:{no}: non-numeric field") from None
        if not all(np.isfinite([x1, y1, x2, y2, score])):
            raise InputError(f"{path}:{no}: non-finite value")
        if not (x2 > x1 and y2 > y1):
            raise InputError(f"{path}:{no}: box corners must increase ({x1} {y1} {x2} {y2})")
        if frame < 0 or cls < 0:
            raise InputError(f"{path}:{no}: negative frame or class")
        out.append(Detection(len(out), frame, cls, (x1, y1, x2, y2), score))
    return out


def write_detections(path, detections: Iterable[Detection]):
    """Shortest round-trip float text, so parse(write(x)) == x exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        for d in detections:
            vals = " ".join(repr(float(v)) for v in (*d.box, d.score))
            fh.write(f"{d.frame} {d.class_id} {vals}\n")


# --- ground truth -----------------------------------------------------------

def parse_gt_labels(path, class_map: dict | None = None) -> list:
    """KITTI tracking labels. DontCare and types missing from ``class_map`` are ambiguous."""
    class_map = DEFAULT_CLASS_MAP if class_map is None else class_map
    out = []
    for no, tok in _lines(path):
        if len(tok) < 10:
            raise InputError(f"{path}:{no}: expected at least 10 fields, got {len(tok)}")
        try:
            frame, tid = int(tok[0]), int(tok[1])
            float(tok[3]), int(float(tok[4])), float(tok[5])
            x1, y1, x2, y2 = (float(t) for t in tok[6:10])
        except ValueError:
            raise InputError(f"{path}:{no}: non-numeric field") from None
        if not (x2 > x1 and y2 > y1):
            raise InputError(f"{path}:{no}: box corners must increase")
        kind = tok[2]
        ambiguous = kind in AMBIGUOUS_TYPES or kind not in class_map
        cls = -1 if ambiguous else class_map[kind]
        out.append(GroundTruthBox(frame, tid, cls, (x1, y1, x2, y2), ambiguous))
    return out


def write_gt_labels(path, gts: Iterable[GroundTruthBox]):
    with open(path, "w", encoding="utf-8") as fh:
        for g in gts:
            kind = "DontCare" if g.ambiguous else class_name(g.class_id)
            tid = -1 if g.ambiguous else g.track_id
            box = " ".join(repr(float(v)) for v in g.box)
            fh.write(f"{g.frame} {tid} {kind} 0 0 -10 {box} {_KITTI_TAIL}\n")


# --- weights ----------------------------------------------------------------

def write_weights(path, w: WeightVector):
    def row(v):
        return " ".join(f"{x:.17g}" for x in v)
    K, D = w.num_classes, w.num_relations
    lines = ["birth", row(w.birth), "death", row(w.death), "appearance", row(w.appearance),
             "transition", row(w.transition), f"pairwise {K} {D}"]
    lines += [row(w.pairwise_block(a, b)) for a in range(K) for b in range(K)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_weights(path) -> WeightVector:
    blocks: dict = {}
    current = None
    dims = None
    for no, tok in _lines(path):
        head = tok[0]
        if head in ("birth", "death", "appearance", "transition", "pairwise"):
            if head in blocks:
                raise InputError(f"{path}:{no}: duplicate block {head!r}")
            if head == "pairwise":
                if len(tok) != 3:
                    raise InputError(f"{path}:{no}: expected 'pairwise K D'")
                try:
                    dims = int(tok[1]), int(tok[2])
                except ValueError:
                    raise InputError(f"{path}:{no}: bad pairwise dimensions") from None
            elif len(tok) != 1:
                raise InputError(f"{path}:{no}: unexpected tokens after {head!r}")
            current = head
            blocks[head] = []
            continue
        if current is None:
            raise InputError(f"{path}:{no}: values before any block header")
        try:
            blocks[current].extend(float(t) for t in tok)
        except ValueError:
            raise InputError(f"{path}:{no}: non-numeric weight") from None
    want = {"birth": 1, "death": 1, "appearance": 2, "transition": TRANSITION_SIZE}
    for name, size in want.items():
        if len(blocks.get(name, [])) != size:
            raise InputError(f"{path}: block {name!r} needs {size} values")
    if dims is None:
        raise InputError(f"{path}: missing pairwise block")
    K, D = dims
    if len(blocks["pairwise"]) != D * K * K:
        raise InputError(f"{path}: pairwise block needs {D * K * K} values")
    values = np.concatenate([blocks[k] for k in ("birth", "death", "appearance", "transition",
                                                  "pairwise")])
    return WeightVector(values, K, D)


# --- tracks -----------------------------------------------------------------

def write_tracks(path, tracks: Sequence[TrackedBox]):
    with open(path, "w", encoding="utf-8") as fh:
        for t in sorted(tracks, key=lambda t: (t.frame, t.track_id)):
            fh.write(f"{t.frame} {t.track_id} {t.class_id} "
                     + " ".join(_fmt(v) for v in (*t.box, t.score)) + "\n")


def parse_tracks(path) -> list:
    out = []
    for no, tok in _lines(path):
        if len(tok) != 8:
            raise InputError(f"{path}:{no}: expected 8 fields, got {len(tok)}")
        try:
            frame, tid, cls = int(tok[0]), int(tok[1]), int(tok[2])
            x1, y1, x2, y2, score = (float(t) for t in tok[3:])
        except ValueError:
            raise InputError(f"{path}:{no}: non-numeric field") from None
        if not (x2 > x1 and y2 > y1):
            raise InputError(f"{path}:{no}: box corners must increase")
        out.append(TrackedBox(frame, tid, cls, (x1, y1, x2, y2), score))
    return out


# --- data directories -------------------------------------------------------

def sequence_files(data_dir) -> list:
    """Sorted (name, detection file, label file or None) under detections/ and labels/."""
    root = Path(data_dir)
    det_dir = root / "detections"
    if not det_dir.is_dir():
        raise InputError(f"{root}: missing detections/ directory")
    out = []
    for p in sorted(det_dir.glob("*.txt")):
        lab = root / "labels" / p.name
        out.append((p.stem, p, lab if lab.exists() else None))
    if not out:
        raise InputError(f"{det_dir}: no detection files")
    return out


def write_sequence(data_dir, name: str, detections, gts):
    root = Path(data_dir)
    for sub in ("detections", "labels"):
        os.makedirs(root / sub, exist_ok=True)
    write_detections(root / "detections" / f"{name}.txt", detections)
    write_gt_labels(root / "labels" / f"{name}.txt", gts)
