"""Synthetic scenes and random cost instances.

``synth_scene`` renders constant-velocity ground-truth tracks into noisy
detections. ``random_instance`` draws small costed graphs directly, which is
what the oracle-backed solver checks use.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .graph import Detection, GroundTruthBox, PairwisePair, TrackingGraph, TransitionEdge
from .potentials import CostedGraph

SCENARIOS = ("none", "overlap_clutter", "co_occurrence")


@dataclass
class SynthConfig:
    num_frames: int = 50
    num_tracks: int = 4
    num_classes: int = 1
    image_size: tuple = (640, 360)
    detection_noise: float = 2.0
    miss_rate: float = 0.1
    false_positive_rate: float = 0.2
    score_model: tuple = (1.0, -1.0, 0.5)  # mean_true, mean_false, std
    interaction_scenario: object = "none"
    seed: int = 0
    box_size: tuple = (40.0, 90.0)
    max_speed: float = 4.0
    num_sequences: int = 1

    def __post_init__(self):
        for name in ("miss_rate", "false_positive_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be a probability, got {v}")
        if self.num_frames < 1 or self.num_tracks < 0 or self.num_classes < 1:
            raise ValueError("num_frames >= 1, num_tracks >= 0 and num_classes >= 1 required")
        bad = self.scenarios - set(SCENARIOS)
        if bad:
            raise ValueError(f"unknown interaction scenario(s): {sorted(bad)}")
        self.image_size = tuple(self.image_size)
        self.score_model = tuple(self.score_model)
        self.box_size = tuple(self.box_size)

    @property
    def scenarios(self) -> set:
        s = self.interaction_scenario
        if isinstance(s, str):
            s = s.replace(",", "+").split("+")
        return {x.strip() for x in s if x.strip()} - {"none"}

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**known)

    def to_dict(self) -> dict:
        return asdict(self)


def _clip_box(cx, cy, w, h, width, height):
    x1 = min(max(cx - w / 2, 0.0), width - 1.0)
    y1 = min(max(cy - h / 2, 0.0), height - 1.0)
    x2 = max(min(cx + w / 2, width), x1 + 1.0)
    y2 = max(min(cy + h / 2, height), y1 + 1.0)
    return (round(x1, 2), round(y1, 2), round(x2, 2), round(y2, 2))


def _trajectories(cfg: SynthConfig, rng):
    """Per GT track: (class, start, centres (T, 2), size, velocities (T, 2))."""
    width, height = cfg.image_size
    nf = cfg.num_frames
    tracks = []
    for _ in range(cfg.num_tracks):
        cls = int(rng.integers(cfg.num_classes))
        w, h = rng.uniform(*cfg.box_size, size=2)
        life = int(rng.integers(max(1, nf // 2), nf + 1))
        start = int(rng.integers(0, nf - life + 1))
        pos = np.array([rng.uniform(w / 2, width - w / 2), rng.uniform(h / 2, height - h / 2)])
        vel = rng.uniform(-cfg.max_speed, cfg.max_speed, size=2)
        centres, vels = [], []
        for _ in range(life):
            centres.append(pos.copy())
            vels.append(vel.copy())
            pos = pos + vel
            for k, (lo, hi) in enumerate(((w / 2, width - w / 2), (h / 2, height - h / 2))):
                if pos[k] < lo or pos[k] > hi:
                    vel[k] = -vel[k]
                    pos[k] = 2 * lo - pos[k] if pos[k] < lo else 2 * hi - pos[k]
        tracks.append((cls, start, np.array(centres), (w, h), np.array(vels)))
    if "co_occurrence" in cfg.scenarios:
        partners = []
        for cls, start, centres, (w, h), vels in tracks:
            pcls = (cls + 1) % cfg.num_classes
            offset = np.array([w * 1.1 + 4.0, 0.0])
            side = 1.0 if centres[0, 0] + offset[0] + w / 2 < width else -1.0
            pc = centres + side * offset
            pc[:, 0] = np.clip(pc[:, 0], w / 2, width - w / 2)
            partners.append((pcls, start, pc, (w, h), vels))
        tracks.extend(partners)
    return tracks


def synth_scene(cfg: SynthConfig, rng=None):
    """Generate ``(detections, gts)`` for one sequence; deterministic in the seed."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    width, height = cfg.image_size
    mean_true, mean_false, std = cfg.score_model
    noise = cfg.detection_noise
    clutter = "overlap_clutter" in cfg.scenarios

    gts = []
    raw = []  # (frame, class, box, score, velocity)
    for tid, (cls, start, centres, (w, h), vels) in enumerate(_trajectories(cfg, rng)):
        for k, (c, v) in enumerate(zip(centres, vels)):
            frame = start + k
            gbox = _clip_box(c[0], c[1], w, h, width, height)
            gts.append(GroundTruthBox(frame, tid, cls, gbox))
            vel = (round(float(v[0]), 4), round(float(v[1]), 4))
            copies = 2 if clutter else 1
            for _ in range(copies):
                jitter = rng.normal(0.0, noise, size=4) if noise > 0 else np.zeros(4)
                score = float(rng.normal(mean_true, std))
                if rng.random() < cfg.miss_rate:
                    continue
                box = _clip_box(c[0] + jitter[0], c[1] + jitter[1], w + jitter[2], h + jitter[3],
                                width, height)
                raw.append((frame, cls, box, round(score, 4), vel))

    for frame in range(cfg.num_frames):
        for _ in range(max(cfg.num_tracks, 1)):
            if rng.random() >= cfg.false_positive_rate:
                continue
            w, h = rng.uniform(*cfg.box_size, size=2)
            cx, cy = rng.uniform(w / 2, width - w / 2), rng.uniform(h / 2, height - h / 2)
            cls = int(rng.integers(cfg.num_classes))
            score = float(rng.normal(mean_false, std))
            raw.append((frame, cls, _clip_box(cx, cy, w, h, width, height), round(score, 4), (0.0, 0.0)))

    raw.sort(key=lambda r: r[0])
    dets = [Detection(k, fr, cls, box, score, vel) for k, (fr, cls, box, score, vel) in enumerate(raw)]
    gts.sort(key=lambda g: (g.frame, g.track_id))
    return dets, gts


def synth_dataset(cfg: SynthConfig):
    """``cfg.num_sequences`` independent scenes from spawned seeds."""
    seqs = np.random.SeedSequence(cfg.seed).spawn(cfg.num_sequences)
    return [synth_scene(cfg, np.random.default_rng(s)) for s in seqs]


def random_instance(rng, max_detections: int = 12, min_detections: int = 0,
                    max_frames: int = 5, edge_prob: float = 0.45, max_gap: int = 2,
                    quadratic: bool = False, q_prob: float = 0.6,
                    q_scale: float = 2.0) -> CostedGraph:
    """Random costed DAG with dummy geometry, for oracle comparisons."""
    n = int(rng.integers(min_detections, max_detections + 1))
    frames = np.sort(rng.integers(0, max_frames, size=n))
    dets = tuple(Detection(k, int(t), 0, (20.0 * k, 0.0, 20.0 * k + 10.0, 10.0), 0.0)
                 for k, t in enumerate(frames))
    edges = []
    for a in range(n):
        for b in range(a + 1, n):
            gap = int(frames[b] - frames[a])
            if 1 <= gap <= max_gap and rng.random() < edge_prob:
                edges.append(TransitionEdge(a, b, gap, float(rng.uniform(0.3, 1.0))))
    pairs = [PairwisePair(a, b, (0,) * 8) for a in range(n) for b in range(n)
             if a != b and frames[a] == frames[b]]
    graph = TrackingGraph(dets, tuple(edges), tuple(pairs), 1)
    q = np.zeros(len(pairs))
    if quadratic and pairs:
        mask = rng.random(len(pairs)) < q_prob
        q[mask] = rng.uniform(-q_scale, q_scale, size=int(mask.sum()))
    return CostedGraph(
        graph,
        c_det=rng.uniform(-3.0, 1.0, size=n),
        c_trans=rng.uniform(-1.0, 1.0, size=len(edges)),
        c_birth=rng.uniform(0.0, 2.0, size=n),
        c_death=rng.uniform(0.0, 2.0, size=n),
        q=q,
    )
