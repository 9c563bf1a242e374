# Tracking and scoring a sequence
#
# Track one synthetic sequence with reference weights, smooth the output
# trajectories, and compare CLEAR-MOT numbers with and without smoothing.

from qtrack import (GraphParams, SynthConfig, TrackedBox, assign_costs, build_graph, clear_mot,
                    extract_tracks, greedy_dp_quadratic, reference_weights, smooth_tracks,
                    synth_scene)

dets, gts = synth_scene(SynthConfig(num_frames=60, num_tracks=4, detection_noise=4.0, seed=11))
graph = build_graph(dets, GraphParams())
flow = greedy_dp_quadratic(assign_costs(graph, reference_weights(1)))

by_id = {d.id: d for d in graph.detections}
raw = [TrackedBox(by_id[i].frame, tid, by_id[i].class_id, by_id[i].box, by_id[i].score)
       for tid, track in enumerate(extract_tracks(graph, flow)) for i in track]

for name, tracks in [("raw", raw), ("smoothed", smooth_tracks(raw))]:
    print(name)
    print(clear_mot(tracks, gts).table())
    print()
