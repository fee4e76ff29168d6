import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gmmmap.core import Gaussian3, Kind, bbox_tuple
from gmmmap.fusion import GaussianMap
from gmmmap.query import (BatchConfig, Status, query_batch, query_points, query_single,
                          query_trajectory, regress, sample_trajectory)

from .conftest import random_gaussian


def random_map(rng, n, spread=5.0, scale=0.3, quant=False):
    from gmmmap.quantize import QuantConfig
    gm = GaussianMap(quant=QuantConfig(enabled=quant))
    for _ in range(n):
        gm.add(random_gaussian(rng, spread=spread, scale=scale))
    return gm


def brute_candidates(gm, x):
    out = []
    for g in gm.gaussians():
        b = bbox_tuple(g.mean, g.cov6, gm.k)
        if all(b[d] <= x[d] <= b[d + 3] for d in range(3)):
            out.append(g)
    return out


def test_regress_empty():
    r = regress([], (0, 0, 0))
    assert r.probability == 0.5 and r.status == Status.UNEXPLORED and r.n_gaussians_evaluated == 0


def test_regress_strong_occupied():
    g = Gaussian3(Kind.OCCUPIED, 100.0, (1, 1, 1), np.eye(3) * 0.01)
    assert regress([g], (1, 1, 1)).probability > 0.99


def test_regress_symmetric():
    rng = np.random.default_rng(0)
    for _ in range(20):
        o = random_gaussian(rng, kind=Kind.OCCUPIED)
        f = Gaussian3(Kind.FREE, o.weight, o.mean, o.cov)
        x = o.mean + rng.normal(size=3) * 0.1
        assert regress([o, f], x).probability == pytest.approx(0.5, abs=1e-12)


def test_regress_formula():
    o = Gaussian3(Kind.OCCUPIED, 2.0, (0, 0, 0), np.eye(3))
    f = Gaussian3(Kind.FREE, 3.0, (1, 0, 0), np.eye(3))
    x = (0.2, 0.1, 0.0)
    from gmmmap.core import gaussian_pdf
    so, sf = 2.0 * gaussian_pdf(o, x), 3.0 * gaussian_pdf(f, x)
    c = 1e-3
    assert regress([o, f], x, c).probability == pytest.approx((so + 0.5 * c) / (so + sf + c), rel=1e-12)
    with pytest.raises(ValueError):
        regress([o], x, 0.0)


def test_single_far_away():
    gm = random_map(np.random.default_rng(1), 100)
    gm.index.stats.reset()
    r = query_single(gm, (1e3, 1e3, 1e3))
    assert r.status == Status.UNEXPLORED and r.probability == 0.5
    assert gm.index.stats.nodes_visited == 1


def test_single_matches_brute_force():
    rng = np.random.default_rng(2)
    gm = random_map(rng, 500, spread=2.0)
    for x in rng.uniform(-2.5, 2.5, (200, 3)):
        assert query_single(gm, x) == regress(brute_candidates(gm, x), x)


def test_batch_of_one_equals_single():
    rng = np.random.default_rng(3)
    gm = random_map(rng, 300, spread=2.0)
    for x in rng.uniform(-2, 2, (50, 3)):
        s0 = gm.index.stats.nodes_visited
        a = query_single(gm, x)
        s1 = gm.index.stats.nodes_visited
        (b,) = query_batch(gm, [x], 16)
        assert a == b and gm.index.stats.nodes_visited - s1 == s1 - s0


def test_batch_clustered_fewer_visits():
    rng = np.random.default_rng(4)
    gm = random_map(rng, 3000, spread=10.0, scale=0.2)
    pts = np.array([1.0, 2.0, 3.0]) + rng.uniform(-0.05, 0.05, (16, 3))
    st0 = gm.index.stats.nodes_visited
    singles = [query_single(gm, p) for p in pts]
    st1 = gm.index.stats.nodes_visited
    batch = query_batch(gm, pts, 16)
    st2 = gm.index.stats.nodes_visited
    assert singles == batch
    assert st2 - st1 < st1 - st0


def test_batch_size_validation():
    gm = random_map(np.random.default_rng(5), 10)
    with pytest.raises(ValueError):
        query_batch(gm, np.zeros((17, 3)), 16)
    with pytest.raises(ValueError):
        query_batch(gm, np.zeros((0, 3)), 16)
    with pytest.raises(ValueError):
        BatchConfig(0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 16), st.booleans())
def test_batch_single_bit_identical(seed, b, quant):
    rng = np.random.default_rng(seed)
    gm = random_map(rng, int(rng.integers(100, 600)), spread=2.0, quant=quant)
    start = rng.uniform(-2, 2, 3)
    pts = start + np.cumsum(rng.normal(size=(40, 3)) * 0.1, axis=0)
    single = query_points(gm, pts, 1)
    batched = query_points(gm, pts, b)
    assert single == batched
    for r in single:
        assert 0.0 <= r.probability <= 1.0


def test_trajectory_sampling():
    pts = sample_trajectory([(0, 0, 0), (1, 0, 0)], 0.25)
    np.testing.assert_allclose(pts[:, 0], [0, 0.25, 0.5, 0.75, 1.0])
    pts = sample_trajectory([(0, 0, 0), (1, 0, 0), (1, 0, 0), (1, 1, 0)], 0.5)
    assert len(pts) == 5 and len({tuple(p) for p in pts}) == 5
    with pytest.raises(ValueError):
        sample_trajectory([(0, 0, 0)], 0.1)
    with pytest.raises(ValueError):
        sample_trajectory([(0, 0, 0), (1, 0, 0)], 0)


def test_trajectory_batches():
    rng = np.random.default_rng(6)
    gm = random_map(rng, 200, spread=2.0)
    wp = [(0, 0, 0), (3.9, 0, 0)]
    pts = sample_trajectory(wp, 0.1)
    assert len(pts) == 40
    b0 = gm.counters["batches"]
    res = query_trajectory(gm, wp, 0.1, BatchConfig(16))
    assert gm.counters["batches"] - b0 == 3
    assert res == [query_single(gm, p) for p in pts]
