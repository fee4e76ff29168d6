import numpy as np
import pytest

from gmmmap.core import CameraIntrinsics, Pose
from gmmmap.fusion import GaussianMap
from gmmmap.ingest import DepthFrame, PlanePrimitive, SyntheticScene, render_synthetic
from gmmmap.metrics import (AccessRecord, CacheSim, EvalSample, Label, attach_cache, auc,
                            auc_from_scores, energy_proxy_report, eval_sample_arrays,
                            format_report, generate_eval_samples, map_size_bytes, write_csv_rows)
from gmmmap.query import query_points, sample_trajectory

from .test_query import random_map

IDENT = Pose((1, 0, 0, 0), (0, 0, 0))


def test_auc_examples():
    assert auc_from_scores([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0
    assert auc_from_scores([0.5] * 6, [1, 0, 1, 0, 1, 0]) == 0.5
    assert auc_from_scores([0.9, 0.4, 0.8, 0.1], [1, 1, 0, 0]) == 0.75
    with pytest.raises(ValueError):
        auc_from_scores([0.1, 0.2], [1, 1])


def test_auc_against_pair_count():
    rng = np.random.default_rng(0)
    s = rng.integers(0, 10, 300).astype(float)
    y = rng.random(300) < 0.4
    pos, neg = s[y], s[~y]
    pairs = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    assert auc_from_scores(s, y) == pytest.approx(pairs / (len(pos) * len(neg)), rel=1e-12)


def test_auc_monotone_transform_and_swap():
    rng = np.random.default_rng(1)
    s = rng.normal(size=500)
    y = rng.random(500) < 0.5
    a = auc_from_scores(s, y)
    assert auc_from_scores(s ** 3, y) == a
    assert auc_from_scores(s, ~y) == pytest.approx(1 - a, abs=1e-12)


def test_auc_of_empty_map_is_half():
    samples = [EvalSample((0, 0, float(i)), Label.OCCUPIED if i % 2 else Label.FREE) for i in range(10)]
    assert auc(GaussianMap(), samples) == 0.5
    with pytest.raises(ValueError):
        auc(GaussianMap(), samples[1::2])


def test_eval_samples_plane():
    intr = CameraIntrinsics.default(32, 24)
    f = render_synthetic(SyntheticScene([PlanePrimitive((0, 0, 1), 2.0)]), IDENT, intr)
    es = eval_sample_arrays([f], intr, per_ray=3, surface_delta=0.2, seed=7)
    occ, free = es.points[es.occupied], es.points[~es.occupied]
    assert len(occ) == 32 * 24 and len(free) == 3 * 32 * 24 and es.seed == 7
    np.testing.assert_allclose(occ[:, 2], 2.0, atol=1e-9)
    assert free[:, 2].max() < 1.8 and free[:, 2].min() >= 0
    again = eval_sample_arrays([f], intr, per_ray=3, surface_delta=0.2, seed=7)
    assert np.array_equal(again.points, es.points)
    lst = generate_eval_samples([f], intr, 1, 0.2, 7)
    assert len(lst) == 2 * 32 * 24


def test_eval_samples_invalid():
    intr = CameraIntrinsics.default(32, 24)
    f = DepthFrame(32, 24, np.zeros(32 * 24), IDENT)
    assert len(eval_sample_arrays([f], intr)) == 0
    with pytest.raises(ValueError):
        eval_sample_arrays([f], intr, per_ray=0)
    with pytest.raises(ValueError):
        eval_sample_arrays([f], intr, surface_delta=0)


def test_map_size_examples():
    from gmmmap.quantize import QuantConfig
    assert map_size_bytes(GaussianMap()) == 36
    assert map_size_bytes(random_map(np.random.default_rng(2), 100)) == 4436
    assert map_size_bytes(random_map(np.random.default_rng(2), 100, quant=True)) == 3436


def test_cache_repeat_and_lines():
    sim = CacheSim(4 * 64, 64)
    assert sim.access(0, 8) == AccessRecord(0, 1)
    assert sim.access(8, 8).hit
    # one line from the line holding byte 60, although the span crosses into line 1
    assert sim.access(60, 10) == AccessRecord(1, 0)
    assert sim.access(128, 129) == AccessRecord(0, 3)
    assert sim.hits + sim.misses == sim.accesses
    assert sim.bytes_from_backing == sim.misses * 64
    assert sim.resident_bytes <= sim.capacity_bytes
    with pytest.raises(ValueError):
        sim.access(0, 0)
    with pytest.raises(ValueError):
        CacheSim(32, 64)


def test_cache_cyclic_thrash():
    sim = CacheSim(8 * 64, 64)
    for _ in range(3):
        for line in range(9):
            sim.access(line * 64, 64)
    sim.reset_counters()
    for line in range(9):
        sim.access(line * 64, 64)
    assert sim.hits == 0 and sim.hit_rate == 0.0


def test_trajectory_beats_shuffled_trace():
    rng = np.random.default_rng(3)
    gm = random_map(rng, 4000, spread=10.0, scale=0.3)
    pts = sample_trajectory([(-9, -9, 0), (9, -9, 0), (9, 9, 0), (-9, 9, 0)], 0.05)
    rates = []
    for order in (pts, rng.permutation(pts)):
        sim = CacheSim(8 * 1024, 64)
        attach_cache(gm.index, sim)
        query_points(gm, order, 1)
        rates.append(sim.hit_rate)
    attach_cache(gm.index, None)
    assert rates[0] > rates[1]


def test_report_ratios_and_format(tmp_path):
    base = energy_proxy_report({"fgbg_rays": 100, "pdf_evals": 10})
    rep = energy_proxy_report({"fgbg_rays": 25, "pdf_evals": 0}, baseline=base, run="x")
    assert rep["fgbg_ray_ratio"] == 0.25 and rep["pdf_eval_ratio"] == 0.0
    assert energy_proxy_report({"fgbg_rays": 3}) == energy_proxy_report({"fgbg_rays": 3})
    text = format_report({"a": 1, "b": 0.5})
    assert text == "a=1\nb=0.5\n"
    p = tmp_path / "r.csv"
    write_csv_rows(p, [{"a": 1}])
    write_csv_rows(p, [{"a": 2, "b": 0.5}])
    assert p.read_text().splitlines() == ["a", "1", "2,0.5"]
    write_csv_rows(p, [{"a": 3}], append=False)
    assert p.read_text().splitlines() == ["a", "3"]


def test_batch_visit_ratio_below_one():
    rng = np.random.default_rng(4)
    gm = random_map(rng, 3000, spread=5.0, scale=0.2)
    pts = sample_trajectory([(-4, 0, 0), (4, 0, 0)], 0.02)
    reps = []
    for b in (1, 16):
        gm.index.stats.reset()
        query_points(gm, pts, b)
        reps.append(energy_proxy_report(tree_stats=gm.index.stats,
                                        baseline=reps[0] if reps else None))
    assert reps[1]["visit_ratio"] < 1
