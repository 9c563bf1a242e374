import numpy as np
import pytest

from qtrack.bench import METHOD_NAMES, bench_run, load_suite
from qtrack.io import write_sequence
from qtrack.potentials import reference_weights
from qtrack.synth import SynthConfig, random_instance, synth_dataset


def instances(n=4, seed=0):
    rng = np.random.default_rng(seed)
    return [(f"r{k}", random_instance(rng, min_detections=4, max_detections=10, quadratic=True))
            for k in range(n)]


def test_rows_per_method_and_bound():
    rep = bench_run(instances(1), METHOD_NAMES)
    assert len(rep.rows) == len(METHOD_NAMES)
    rep = bench_run(instances(6), ("dp1q", "dp2q", "lp"))
    for r in rep.rows:
        assert r.objective >= r.lower_bound - 1e-7
        assert r.wall_time >= 0
    assert rep.methods() == ["dp1q", "dp2q", "lp"]
    assert np.isfinite(rep.median_gap("dp1q"))


def test_no_lp_means_no_bound():
    rep = bench_run(instances(2), ("ssp",))
    assert all(np.isnan(r.lower_bound) and np.isnan(r.gap) for r in rep.rows)
    with pytest.raises(ValueError):
        bench_run(instances(1), ("cplex",))


def test_outputs(tmp_path):
    rep = bench_run(instances(3), ("dp1q", "lp"))
    rep.write_csv(tmp_path / "b.csv")
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0].startswith("instance,method,objective,lower_bound")
    assert len(lines) == 1 + 6
    rep.write_svg(tmp_path / "b.svg")
    assert (tmp_path / "b.svg").read_text().lstrip().startswith("<?xml")
    assert "dp1q" in rep.summary()
    obj, t = rep.curves("lp")
    assert len(obj) == 3 and np.all(np.diff(t) >= 0)


def test_load_suite(tmp_path):
    for k, (d, g) in enumerate(synth_dataset(SynthConfig(num_frames=8, num_sequences=2, seed=1))):
        write_sequence(tmp_path, f"{k:04d}", d, g)
    suite = load_suite(tmp_path, reference_weights(1))
    assert [n for n, _ in suite] == ["0000", "0001"]
    d, g = synth_dataset(SynthConfig(num_frames=3, num_classes=3, num_tracks=6, seed=2))[0]
    write_sequence(tmp_path, "0002", d, g)
    with pytest.raises(ValueError):
        load_suite(tmp_path, reference_weights(1))
