import numpy as np
import pytest

from helpers import (EXPECTED_LOSS, EXPECTED_VIRTUAL, LOSS_ENDPOINTS, VIRTUAL_CONFIGS, chain_graph,
                     costed, loss_case)
from qtrack.graph import Detection, GroundTruthBox, TrackingGraph, TransitionEdge, build_graph
from qtrack.learning import (C_GRID, DEFAULT_C, ConstraintRow, LossVector, TrainingProblem,
                             chunk_sequences, classify_transition, cutting_plane_train,
                             drop_ambiguous, ground_truth_labels, hamming, loss_augmented_infer,
                             loss_vector, make_training_problem, map_ground_truth, predict,
                             solve_master_qp, transition_loss)
from qtrack.oracle import enumerate_flows
from qtrack.potentials import (FlowSolution, WeightVector, assign_costs, check_feasible,
                               features_of_flow, flow_cost)
from qtrack.synth import SynthConfig, synth_scene


@pytest.mark.parametrize("kind,config", sorted(EXPECTED_LOSS))
def test_transition_loss_cases(kind, config):
    graph, gts = loss_case(kind, config)
    labels = ground_truth_labels(graph, gts)
    got_kind, virt = classify_transition(graph, 0, labels, gts)
    assert got_kind == kind
    assert virt == EXPECTED_VIRTUAL[config]
    assert transition_loss(got_kind, *virt) == EXPECTED_LOSS[(kind, config)]
    assert loss_vector(graph, labels, gts).loss_trans.tolist() == [EXPECTED_LOSS[(kind, config)]]


def test_loss_case_tables_cover_all_types():
    assert set(LOSS_ENDPOINTS) == {k for k, _ in EXPECTED_LOSS}
    assert set(VIRTUAL_CONFIGS) == {c for _, c in EXPECTED_LOSS}


def test_transition_loss_rule_examples():
    assert transition_loss("PPplus", 0, 0) == 0
    assert transition_loss("PPminus", 0, 0) == 2
    assert transition_loss("NP", 1, 0) == 2
    with pytest.raises(ValueError):
        transition_loss("PP", 0, 0)


def test_mixed_virtual_detection():
    # gap-3 edge with GT only at the first skipped frame
    graph, gts = loss_case("PPplus", "false")
    gts = gts + [GroundTruthBox(1, 9, 0, (10.0, 0.0, 50.0, 40.0))]
    kind, virt = classify_transition(graph, 0, ground_truth_labels(graph, gts), gts)
    assert (kind, virt) == ("PPplus", (1, 1))
    # other-class GT does not make a virtual detection true
    other = gts[:-1] + [GroundTruthBox(1, 9, 1, (10.0, 0.0, 50.0, 40.0))]
    assert classify_transition(graph, 0, ground_truth_labels(graph, other), other)[1] == (0, 2)


def box(t, x0=0.0):
    return (x0 + 10.0 * t, 0.0, x0 + 10.0 * t + 40.0, 40.0)


def test_map_ground_truth_exact_chain():
    dets = [Detection(t, t, 0, box(t), 1.0) for t in range(4)]
    gts = [GroundTruthBox(t, 5, 0, box(t)) for t in range(4)]
    g = build_graph(dets)
    f = map_ground_truth(g, gts)
    assert f.f_det.tolist() == [1, 1, 1, 1]
    assert f.f_birth.tolist() == [1, 0, 0, 0] and f.f_death.tolist() == [0, 0, 0, 1]
    on = {(int(a), int(b)) for a, b, v in zip(g.edge_src, g.edge_dst, f.f_trans) if v}
    assert on == {(0, 1), (1, 2), (2, 3)}


def test_map_ground_truth_highest_score_claims():
    dets = [Detection(0, 0, 0, box(0), 0.2), Detection(1, 0, 0, (1.0, 0.0, 41.0, 40.0), 0.9)]
    g = build_graph(dets)
    lab = ground_truth_labels(g, [GroundTruthBox(0, 3, 0, box(0))])
    assert lab.flow.f_det.tolist() == [0, 1]
    assert lab.track_id.tolist() == [-1, 3]


def test_map_ground_truth_bridges_hole():
    # detections at frames 0, 1 and 4, 5; GT present throughout
    frames = [0, 1, 4, 5]
    dets = tuple(Detection(k, t, 0, box(t), 1.0) for k, t in enumerate(frames))
    edges = (TransitionEdge(0, 1, 1, 1.0), TransitionEdge(1, 2, 3, 1.0),
             TransitionEdge(0, 2, 4, 1.0), TransitionEdge(2, 3, 1, 1.0))
    g = TrackingGraph(dets, edges, (), 1)
    f = map_ground_truth(g, [GroundTruthBox(t, 1, 0, box(t)) for t in range(6)])
    assert f.f_birth.sum() == 1 and f.f_det.sum() == 4
    assert f.f_trans.tolist() == [1, 1, 0, 1]


def test_map_ground_truth_unclaimed_and_class_mismatch():
    dets = [Detection(0, 0, 1, box(0), 1.0)]
    g = build_graph(dets, num_classes=2)
    assert not map_ground_truth(g, [GroundTruthBox(0, 1, 0, box(0))]).vector().any()
    assert not map_ground_truth(g, [GroundTruthBox(0, 1, 1, box(0, 300))]).vector().any()


def scene(seed, frames=12, **kw):
    cfg = SynthConfig(num_frames=frames, num_tracks=3, seed=seed, **kw)
    return synth_scene(cfg)


def test_map_ground_truth_feasible_on_synthetic_scenes():
    for seed in range(5):
        dets, gts = scene(seed, interaction_scenario="overlap_clutter")
        g = build_graph(dets)
        lab = ground_truth_labels(g, gts)
        check_feasible(g, lab.flow)
        # one chain per identity
        ids = lab.track_id[lab.track_id >= 0]
        assert lab.flow.f_birth.sum() == len(set(ids.tolist()))


def random_flow_pairs(seed):
    dets, gts = scene(seed, frames=3)
    g = build_graph(dets[:10])
    flows = list(enumerate_flows(g))
    return g, gts, flows


def test_loss_zero_on_self_and_non_negative():
    g, gts, flows = random_flow_pairs(1)
    lab = ground_truth_labels(g, gts)
    lv = loss_vector(g, lab, gts)
    rng = np.random.default_rng(0)
    for _ in range(50):
        a, b = (flows[k] for k in rng.integers(len(flows), size=2))
        assert lv(a, a) == 0.0
        assert lv(a, b) >= 0.0
        assert lv(a, b) == pytest.approx(lv(b, a))
    assert hamming(flows[0], flows[0]) == 0.0


def test_loss_vector_validation():
    with pytest.raises(ValueError):
        LossVector(np.array([-1.0]), np.zeros(1), np.zeros(1), np.zeros(0))
    with pytest.raises(ValueError):
        LossVector(np.array([np.inf]), np.zeros(1), np.zeros(1), np.zeros(0))


def test_loss_augmented_identity_by_enumeration():
    # augmented cost equals cost minus loss plus a constant depending on gt only
    from qtrack.learning import _augment

    for seed in range(3):
        g, gts, flows = random_flow_pairs(seed)
        lab = ground_truth_labels(g, gts)
        lv = loss_vector(g, lab, gts)
        w = WeightVector(np.random.default_rng(seed).normal(size=WeightVector.size_for(g.num_classes)),
                         g.num_classes)
        cg = assign_costs(g, w)
        aug = _augment(cg, lv, lab.flow)
        consts = [flow_cost(aug, f) - flow_cost(cg, f) + lv(lab.flow, f) for f in flows]
        assert np.ptp(consts) <= 1e-9
        f_hat, viol = loss_augmented_infer(cg, lv, lab.flow, "oracle")
        best = max(lv(lab.flow, f) - (flow_cost(cg, f) - flow_cost(cg, lab.flow)) for f in flows)
        assert viol == pytest.approx(best, abs=1e-9)
        assert viol >= 0.0


def test_loss_augmented_zero_loss_is_plain_inference():
    g, gts, _ = random_flow_pairs(4)
    lab = ground_truth_labels(g, gts)
    cg = assign_costs(g, WeightVector(np.full(WeightVector.size_for(g.num_classes), 0.3), g.num_classes))
    from qtrack.oracle import brute_force_optimum
    f, _ = loss_augmented_infer(cg, LossVector.zeros(g), lab.flow, "oracle")
    assert f.same_assignment(brute_force_optimum(cg).best_flow)


def test_loss_augmented_single_detection():
    g = chain_graph([0], [])
    cg = costed(g, 0.0, c_birth=0.0, c_death=0.0)
    lv = LossVector(np.ones(1), np.ones(1), np.ones(1), np.zeros(0))
    off = FlowSolution.zeros(g)
    on = off.copy()
    on.f_det[:] = on.f_birth[:] = on.f_death[:] = 1
    for method in ("greedy", "twopass", "lp", "oracle"):
        # gt off: augmentation -3 turns the track on
        f, v = loss_augmented_infer(cg, lv, off, method)
        assert f.f_det[0] == pytest.approx(1.0) and v == pytest.approx(3.0)
        # gt on: the most violated output is the empty flow
        f, v = loss_augmented_infer(cg, lv, on, method)
        assert f.f_det[0] == pytest.approx(0.0) and v == pytest.approx(3.0)
    with pytest.raises(ValueError):
        loss_augmented_infer(cg, lv, on, "magic")


def test_master_qp_examples():
    sol = solve_master_qp([], 1.0, dim=5)
    assert not sol.w.any() and sol.xi == 0.0
    row = ConstraintRow(np.eye(3)[0], 1.0)
    sol = solve_master_qp([row], 100.0)
    assert sol.w == pytest.approx([1.0, 0.0, 0.0], abs=1e-6) and sol.xi == pytest.approx(0.0, abs=1e-6)
    norms = [np.linalg.norm(solve_master_qp([row], C).w) for C in (1e-1, 1e-3, 1e-6)]
    assert norms == sorted(norms, reverse=True) and norms[-1] <= 1e-6
    with pytest.raises(ValueError):
        solve_master_qp([row], 0.0)
    with pytest.raises(ValueError):
        ConstraintRow(np.zeros(2), -1.0)


def test_master_qp_kkt_on_random_rows():
    rng = np.random.default_rng(9)
    for _ in range(20):
        rows = [ConstraintRow(rng.normal(size=6), float(rng.uniform(0, 5))) for _ in range(8)]
        C = float(rng.choice(C_GRID))
        sol = solve_master_qp(rows, C)
        A = np.array([r.delta_psi for r in rows])
        b = np.array([r.loss_value for r in rows])
        assert np.all(A @ sol.w >= b - sol.xi - 1e-6)
        assert sol.xi >= 0.0 and sol.alpha.sum() <= C + 1e-12 and np.all(sol.alpha >= 0)
        assert sol.objective >= sol.dual - 1e-9  # weak duality
        assert sol.objective - sol.dual <= 1e-4 * max(1.0, abs(sol.objective))


def test_master_qp_matches_general_solver():
    from scipy.optimize import minimize

    rng = np.random.default_rng(10)
    rows = [ConstraintRow(rng.normal(size=4), float(rng.uniform(0, 3))) for _ in range(5)]
    A = np.array([r.delta_psi for r in rows])
    b = np.array([r.loss_value for r in rows])
    C = 0.5
    cons = [{"type": "ineq", "fun": lambda z: A @ z[:4] - b + z[4]}, {"type": "ineq", "fun": lambda z: z[4]}]
    ref = minimize(lambda z: 0.5 * z[:4] @ z[:4] + C * z[4], np.r_[np.zeros(4), b.max()],
                   constraints=cons, method="SLSQP", options={"ftol": 1e-12})
    sol = solve_master_qp(rows, C)
    assert sol.objective == pytest.approx(ref.fun, abs=1e-6)


def tiny_problems(n=3, seed=0):
    out = []
    for k in range(n):
        cfg = SynthConfig(num_frames=3, num_tracks=2, false_positive_rate=0.3, seed=seed + k)
        dets, gts = synth_scene(cfg)
        p = make_training_problem(dets, gts, num_classes=1)
        if len(p.graph) > 12:
            p = make_training_problem(dets[:12], gts, num_classes=1)
        out.append(p)
    return out


def test_training_terminates_immediately_when_gt_optimal():
    g = chain_graph([0, 1], [(0, 1)])
    gt = FlowSolution.zeros(g)
    p = TrainingProblem(g, gt, features_of_flow(g, gt), LossVector.zeros(g))
    hist = []
    w = cutting_plane_train([p], history=hist)
    assert len(hist) == 1 and not hist[0]["added"] and not w.values.any()


def test_training_with_oracle_reaches_eps_optimality():
    problems = tiny_problems()
    hist, eps = [], 1e-4
    w = cutting_plane_train(problems, C=1.0, eps=eps, method="oracle", history=hist)
    assert not hist[-1]["added"] and len(hist) < 100
    xi = hist[-1]["xi"]
    total_v, total_b = 0.0, 0.0
    for p in problems:
        f, v = loss_augmented_infer(assign_costs(p.graph, w), p.loss, p.gt_flow, "oracle")
        total_v += v
        total_b += p.loss(p.gt_flow, f)
    assert total_v <= xi + eps * max(1.0, total_b) + 1e-9


def test_training_history_kkt_and_monotone_dual():
    problems = tiny_problems(seed=20)
    hist = []
    cutting_plane_train(problems, C=DEFAULT_C, method="greedy", history=hist)
    added = [h for h in hist if h["added"]]
    assert added
    for h in added:
        assert min(h["constraint_slack"]) >= -1e-6
        assert h["kkt"] < 1e-6
    duals = [h["dual"] for h in added]
    assert all(b >= a - 1e-12 for a, b in zip(duals, duals[1:]))


def test_training_rejects_bad_input():
    with pytest.raises(ValueError):
        cutting_plane_train([])
    a = tiny_problems(1)[0]
    b = make_training_problem([Detection(0, 0, 1, box(0), 1.0)], [], num_classes=2)
    with pytest.raises(ValueError):
        cutting_plane_train([a, b])


def test_training_reduces_hamming_on_small_dataset():
    probs = [make_training_problem(*scene(s, frames=15, interaction_scenario="overlap_clutter"),
                                   num_classes=1) for s in range(3)]
    zero = WeightVector.zeros(1)
    before = sum(hamming(p.gt_flow, predict(p, zero)) for p in probs)
    w = cutting_plane_train(probs, method="greedy", max_iter=30)
    after = sum(hamming(p.gt_flow, predict(p, w)) for p in probs)
    assert after <= 0.5 * before


def test_predict_lp_is_integral():
    p = tiny_problems(1, seed=30)[0]
    w = WeightVector(np.full(WeightVector.size_for(1), -0.1), 1)
    assert predict(p, w, "lp").is_integral()


def test_chunking_examples():
    dets = [Detection(t, t, 0, box(t), 1.0) for t in range(20)]
    gts = [GroundTruthBox(t, 1, 0, box(t)) for t in range(20)]
    p = make_training_problem(dets, gts)
    chunks = chunk_sequences(p, 10, 5)
    assert [c.graph.frames.min() for c in chunks] == [0, 5, 10]
    for c in chunks:
        check_feasible(c.graph, c.gt_flow)
        assert c.graph.frames.max() - c.graph.frames.min() == 9
        assert c.gt_flow.f_det.sum() == 10 and c.gt_flow.f_birth.sum() == 1
    short = make_training_problem(dets[:10], gts[:10])
    assert len(chunk_sequences(short, 10, 5)) == 1
    with pytest.raises(ValueError):
        chunk_sequences(p, 5, 5)


def test_chunk_gt_feasible_on_synthetic_scene():
    dets, gts = synth_scene(SynthConfig(num_frames=30, num_tracks=3, seed=3,
                                        interaction_scenario="overlap_clutter"))
    for c in chunk_sequences(make_training_problem(dets, gts), 10, 5):
        check_feasible(c.graph, c.gt_flow)


def test_drop_ambiguous():
    dets = [Detection(0, 0, 0, box(0), 1.0), Detection(1, 0, 0, box(0, 200), 1.0)]
    gts = [GroundTruthBox(0, -1, 0, box(0, 1), ambiguous=True)]
    assert [d.id for d in drop_ambiguous(dets, gts)] == [1]
    p = make_training_problem(dets, gts)
    assert [d.id for d in p.graph.detections] == [1]
    assert not p.gt_flow.vector().any()
