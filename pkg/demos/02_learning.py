# Learning the weights
#
# Start from all-zero weights, where every detection is indifferent, and let
# cutting-plane training find weights that reproduce the ground truth.

from qtrack import (STRICTLY_OVERLAP, RELATIONS, SynthConfig, WeightVector, cutting_plane_train,
                    hamming, make_training_problem, predict, synth_dataset)

cfg = SynthConfig(num_frames=30, num_tracks=3, num_classes=2, num_sequences=5, seed=7,
                  interaction_scenario="co_occurrence+overlap_clutter")
problems = [make_training_problem(d, g, num_classes=2) for d, g in synth_dataset(cfg)]

zero = WeightVector.zeros(2)
print("Hamming loss at w = 0:", sum(hamming(p.gt_flow, predict(p, zero)) for p in problems))

history = []
w = cutting_plane_train(problems, C=2.0 ** -7, method="greedy", history=history)
for h in history:
    print(f"iter {h['iteration']:2d}  violation {h['violation']:10.3f}  xi {h['xi']:8.3f}"
          + (f"  master {h['objective']:8.4f}" if h["added"] else "  (converged)"))

print("Hamming loss after training:", sum(hamming(p.gt_flow, predict(p, w)) for p in problems))

# Same-class duplicates sit on top of each other; the learned weight for that
# relation should come out negative, i.e. a cost on keeping both.
for a in range(2):
    block = w.pairwise_block(a, a)
    print(f"class {a}: {RELATIONS[STRICTLY_OVERLAP]} weight {block[STRICTLY_OVERLAP]:+.3f}")
