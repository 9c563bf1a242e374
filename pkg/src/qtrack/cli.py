"""Command line entry point: ``qtrack {synth,track,train,eval,bench}``.

Exit status is 0 on success, 1 for bad input and 2 when a solver fails.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .bench import METHOD_NAMES, bench_run, load_suite, run_method
from .evaluation import TrackedBox, clear_mot, smooth_tracks
from .flow import extract_tracks
from .graph import GraphParams, build_graph
from .io import (InputError, parse_class_map, parse_detections, parse_gt_labels, parse_tracks,
                 read_weights, sequence_files, write_sequence, write_tracks, write_weights)
from .learning import DEFAULT_C, chunk_sequences, cutting_plane_train, make_training_problem
from .potentials import assign_costs, check_feasible, reference_weights
from .quadratic import SolverError
from .simplex import SimplexError
from .synth import SynthConfig, synth_dataset

TRAIN_METHODS = {"dp": "greedy", "lp": "lp"}


def cmd_synth(args) -> int:
    try:
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as err:
        raise InputError(f"{args.config}: invalid JSON ({err})") from None
    cfg = SynthConfig.from_dict(raw)
    if args.seed is not None:
        cfg.seed = args.seed
    os.makedirs(args.out_dir, exist_ok=True)
    for k, (dets, gts) in enumerate(synth_dataset(cfg)):
        write_sequence(args.out_dir, f"{k:04d}", dets, gts)
    with open(Path(args.out_dir) / "config.json", "w", encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {cfg.num_sequences} sequence(s) to {args.out_dir}")
    return 0


def _weights(path, num_classes):
    if path:
        return read_weights(path)
    return reference_weights(num_classes)


def cmd_track(args) -> int:
    dets = parse_detections(args.dets)
    k_needed = max((d.class_id for d in dets), default=0) + 1
    w = _weights(args.weights, max(k_needed, args.num_classes or 1))
    if k_needed > w.num_classes:
        raise InputError(f"{args.dets}: class {k_needed - 1} not covered by {w.num_classes}-class weights")
    graph = build_graph(dets, GraphParams(), w.num_classes)
    f = run_method(assign_costs(graph, w), args.method, args.lp_backend)
    check_feasible(graph, f)
    by_id = {d.id: d for d in graph.detections}
    boxes = [TrackedBox(by_id[i].frame, tid, by_id[i].class_id, by_id[i].box, by_id[i].score)
             for tid, track in enumerate(extract_tracks(graph, f), start=1) for i in track]
    if args.smooth:
        boxes = smooth_tracks(boxes)
    write_tracks(args.out, boxes)
    print(f"{args.method}: {int(f.f_birth.sum())} tracks, objective {f.objective:.6g}")
    return 0


def _load_problems(data_dir, num_classes, class_map, length, overlap):
    seqs = []
    for name, det_path, lab_path in sequence_files(data_dir):
        if lab_path is None:
            raise InputError(f"{data_dir}: no labels for sequence {name}")
        seqs.append((parse_detections(det_path), parse_gt_labels(lab_path, class_map)))
    K = num_classes or max([d.class_id for s in seqs for d in s[0]] +
                           [g.class_id for s in seqs for g in s[1]] + [0]) + 1
    problems = []
    for dets, gts in seqs:
        p = make_training_problem(dets, gts, GraphParams(), K)
        problems.extend(chunk_sequences(p, length, overlap) if length else [p])
    return problems


def cmd_train(args) -> int:
    if args.c <= 0:
        raise InputError("--c must be positive")
    problems = _load_problems(args.data, args.num_classes, parse_class_map(args.classes),
                              args.chunk_length, args.chunk_overlap)
    history: list = []
    w = cutting_plane_train(problems, C=args.c, method=TRAIN_METHODS[args.method],
                            max_iter=args.max_iter, history=history)
    write_weights(args.out, w)
    last = history[-1] if history else {}
    print(f"trained on {len(problems)} problem(s), {len(history)} iteration(s), "
          f"final violation {last.get('violation', 0.0):.6g}")
    return 0


def cmd_eval(args) -> int:
    tracks = parse_tracks(args.tracks)
    gts = parse_gt_labels(args.gt, parse_class_map(args.classes))
    report = clear_mot(tracks, gts, args.iou)
    print(report.table())
    if args.csv:
        d = report.as_dict()
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(",".join(d) + "\n")
            fh.write(",".join(f"{v:.6g}" if isinstance(v, float) else str(v) for v in d.values()) + "\n")
    return 0


def cmd_bench(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHOD_NAMES]
    if bad:
        raise InputError(f"unknown method(s) {bad}; choose from {','.join(METHOD_NAMES)}")
    first = parse_detections(sequence_files(args.suite)[0][1])
    w = _weights(args.weights, max([d.class_id for d in first] + [0]) + 1)
    report = bench_run(load_suite(args.suite, w), methods, args.lp_backend)
    report.write_csv(args.out)
    report.write_svg(args.svg or str(Path(args.out).with_suffix(".svg")))
    print(report.summary())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qtrack", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=None,
                   help="random seed; overrides the seed in a synth config")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic data directory")
    s.add_argument("--config", required=True)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("track", help="track one detection file")
    t.add_argument("--dets", required=True)
    t.add_argument("--weights", help="weight file (default: built-in reference weights)")
    t.add_argument("--method", choices=METHOD_NAMES, default="dp1q")
    t.add_argument("--out", required=True)
    t.add_argument("--smooth", action="store_true", help="cubic B-spline smoothing of each track")
    t.add_argument("--num-classes", type=int, default=None)
    t.add_argument("--lp-backend", choices=("auto", "simplex", "highs"), default="auto")
    t.set_defaults(func=cmd_track)

    r = sub.add_parser("train", help="learn weights from a data directory")
    r.add_argument("--data", required=True)
    r.add_argument("--c", type=float, default=DEFAULT_C)
    r.add_argument("--method", choices=sorted(TRAIN_METHODS), default="dp")
    r.add_argument("--out", required=True)
    r.add_argument("--num-classes", type=int, default=None)
    r.add_argument("--classes", default=None, help="comma-separated label types, in class-id order")
    r.add_argument("--chunk-length", type=int, default=10, help="0 trains on whole sequences")
    r.add_argument("--chunk-overlap", type=int, default=5)
    r.add_argument("--max-iter", type=int, default=100)
    r.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="CLEAR-MOT report for a track file")
    e.add_argument("--tracks", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--iou", type=float, default=0.5)
    e.add_argument("--classes", default=None)
    e.add_argument("--csv", default=None)
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="compare solvers on a data directory")
    b.add_argument("--suite", required=True)
    b.add_argument("--methods", default="dp1q,dp2q,lp")
    b.add_argument("--out", required=True)
    b.add_argument("--svg", default=None)
    b.add_argument("--weights", default=None)
    b.add_argument("--lp-backend", choices=("auto", "simplex", "highs"), default="auto")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        return args.func(args)
    except (SolverError, SimplexError) as err:
        print(f"qtrack: solver failure: {err}", file=sys.stderr)
        return 2
    except (InputError, ValueError, OSError) as err:
        print(f"qtrack: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
