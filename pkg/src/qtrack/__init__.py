"""Multi-object tracking as min-cost flow with pairwise interactions between detections."""

from .bench import BenchReport, bench_run, load_suite
from .evaluation import MotReport, TrackedBox, clear_mot, match_frame, smooth_track, smooth_tracks
from .flow import dp_onepass, dp_twopass, extract_tracks, ssp_solve, tracks_to_flow
from .graph import (RELATIONS, STRICTLY_OVERLAP, Detection, GraphParams, GroundTruthBox,
                    PairwisePair, TrackingGraph, TransitionEdge, build_graph, iou, link_candidates,
                    predict_box, spatial_relation)
from .learning import (ConstraintRow, LossVector, TrainingProblem, chunk_sequences,
                       cutting_plane_train, hamming, loss_augmented_infer, loss_vector,
                       make_training_problem, map_ground_truth, predict, solve_master_qp)
from .oracle import OracleResult, brute_force_optimum, enumerate_flows
from .potentials import (CostedGraph, FeatureVector, FlowSolution, WeightVector, assign_costs,
                         features_of_flow, flow_cost, reference_weights)
from .quadratic import (LpSolution, greedy_dp_quadratic, lp_relax_solve, lp_round, round_euclidean,
                        round_underestimator, solve_quadratic, twopass_dp_quadratic)
from .synth import SynthConfig, synth_dataset, synth_scene

__version__ = "0.1.0"
