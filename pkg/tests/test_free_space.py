from collections import Counter

import numpy as np
import pytest

from gmmmap import _accel
from gmmmap.core import EPS, Gaussian3, Kind, hellinger_sq
from gmmmap.fusion import BuildParams, GaussianMap, construct_frame
from gmmmap.free_space import (BasisArrays, FreeBasis, Ray, bases_from_rays, bases_from_segments,
                               ray_bases, refine_arrays, refine_bases, sample_rays_from_gaussian,
                               uniform_line_gaussian)
from gmmmap.segmentation import SegParams, Segment, segment_frame

from .conftest import random_gaussian


def test_uniform_line_axis():
    g = uniform_line_gaussian((0, 0, 0), (0, 0, 1), 1.0)
    np.testing.assert_allclose(g.mean, [0, 0, 0.5])
    assert g.cov[2, 2] == pytest.approx(1 / 12 + EPS, rel=1e-15)
    assert g.cov[0, 0] == EPS and g.cov[0, 1] == 0.0 and g.kind == Kind.FREE


def test_uniform_line_degenerate():
    with pytest.raises(ValueError):
        uniform_line_gaussian((0, 0, 0), (0, 0, 1e-12), 1.0)


def test_uniform_line_monte_carlo():
    g = uniform_line_gaussian((0, 0, 0), (3, 4, 0), 2.0)
    d = np.array([0.6, 0.8, 0.0])
    np.testing.assert_allclose(g.mean, [1.5, 2, 0])
    np.testing.assert_allclose(g.cov, 25 / 12 * np.outer(d, d) + EPS * np.eye(3), rtol=1e-12, atol=1e-18)
    t = np.random.default_rng(0).uniform(0, 1, 1_000_000)
    pts = t[:, None] * np.array([3.0, 4.0, 0.0])
    mc = np.cov(pts.T, bias=True)
    np.testing.assert_allclose(g.cov[:2, :2], mc[:2, :2], rtol=0.01)
    np.testing.assert_allclose(g.mean, pts.mean(0), rtol=0.01, atol=1e-3)


def test_bases_equal_split():
    bs = bases_from_rays([Ray((0, 0, 0), (4, 0, 0), 8.0)], 4, 0.0)
    np.testing.assert_allclose([b.gaussian.mean[0] for b in bs], [0.5, 1.5, 2.5, 3.5])
    assert [b.gaussian.weight for b in bs] == [2.0] * 4


def test_bases_clipped_span():
    assert bases_from_rays([Ray((0, 0, 0), (0.05, 0, 0), 1.0)], 4, 0.1) == []


def test_bases_k1_reduces_to_line():
    (b,) = bases_from_rays([Ray((0, 0, 0), (1, 2, 2), 3.0)], 1, 0.0)
    ref = uniform_line_gaussian((0, 0, 0), (1, 2, 2), 3.0)
    np.testing.assert_allclose(b.gaussian.mean, ref.mean, rtol=1e-15)
    np.testing.assert_allclose(b.gaussian.cov, ref.cov, rtol=1e-14, atol=1e-20)


def test_bases_mass_per_ray():
    rng = np.random.default_rng(1)
    o = rng.normal(size=(50, 3))
    e = o + rng.normal(size=(50, 3)) * 3
    w = rng.uniform(1, 10, 50)
    arr = ray_bases(o, e, w, 5, 0.1)
    keep = np.linalg.norm(e - o, axis=1) - 0.1 > 0
    assert arr.weights.sum() == pytest.approx(w[keep].sum(), rel=1e-12)


def _row_segment(width=640):
    return Segment(0, 0, width - 1, width, np.zeros(3), np.zeros((3, 3)), 2.0, 2.0, 0.0, 2.0)


def test_segment_rays_counting(intr640_frame):
    frame, intr = intr640_frame
    c = Counter()
    bs = bases_from_segments([_row_segment()], frame, intr, stride=1, k_intervals=4, counters=c)
    assert len(bs) == 2560 and c["fgbg_rays"] == 640
    b8 = bases_from_segments([_row_segment()], frame, intr, stride=8, k_intervals=4, counters=c)
    assert len(b8) == 320 and c["fgbg_rays"] == 720
    assert sum(b.gaussian.weight for b in b8) == pytest.approx(sum(b.gaussian.weight for b in bs), rel=1e-9)
    before = c["fgbg_rays"]
    assert bases_from_segments([], frame, intr, stride=8, counters=c) == []
    assert c["fgbg_rays"] == before


@pytest.fixture
def intr640_frame():
    from gmmmap.core import CameraIntrinsics, Pose
    from gmmmap.ingest import DepthFrame
    intr = CameraIntrinsics.default(640, 1)
    return DepthFrame(640, 1, np.full(640, 2.0), Pose((1, 0, 0, 0), (0, 0, 0))), intr


def test_representative_rays_diag():
    g = Gaussian3(Kind.OCCUPIED, 10.0, (0, 0, 10), np.diag([4.0, 1.0, 0.25]))
    rays = sample_rays_from_gaussian(g, (0, 0, 0), 5)
    ends = [r.endpoint for r in rays]
    expect = [(0, 0, 10), (2, 0, 10), (-2, 0, 10), (0, 1, 10), (0, -1, 10)]
    np.testing.assert_allclose(ends, expect, rtol=1e-12, atol=1e-15)
    assert all(r.weight == 2.0 for r in rays)
    assert sum(r.weight for r in rays) == g.weight


def test_representative_rays_single_and_invalid():
    g = Gaussian3(Kind.OCCUPIED, 3.0, (1, 1, 1), np.eye(3))
    (r,) = sample_rays_from_gaussian(g, (0, 0, 0), 1)
    assert r.endpoint == (1.0, 1.0, 1.0) and r.weight == 3.0
    with pytest.raises(ValueError):
        sample_rays_from_gaussian(g, (0, 0, 0), 4)
    with pytest.raises(ValueError):
        sample_rays_from_gaussian(Gaussian3(Kind.FREE, 1, (1, 1, 1), np.eye(3)), (0, 0, 0), 5)


def test_refine_identical_and_disjoint():
    g = uniform_line_gaussian((0, 0, 0), (1, 0, 0), 2.0)
    out = refine_bases([FreeBasis(g), FreeBasis(g.copy())])
    assert len(out) == 1 and out[0].weight == 4.0
    h = uniform_line_gaussian((0, 5, 0), (1, 5, 0), 2.0)
    assert len(refine_bases([FreeBasis(g), FreeBasis(h)])) == 2


def test_refine_chain_of_ten():
    bs = bases_from_rays([Ray((0, 0, 0), (0, 0, 10), 5.0)], 10, 0.0)
    gs = [b.gaussian for b in bs]
    # adjacent equal pieces sit at H^2 = 1 - exp(-1.5) > 0.6, farther ones higher
    assert min(hellinger_sq(a, b) for i, a in enumerate(gs) for b in gs[i + 1:]) > 0.6
    out = refine_bases(bs, 0.6)
    assert len(out) == 10
    assert sum(g.weight for g in out) == pytest.approx(5.0, rel=1e-9)
    loose = refine_bases(bs, 0.8)
    assert len(loose) < 10
    assert sum(g.weight for g in loose) == pytest.approx(5.0, rel=1e-9)


def test_refine_mass_conservation_and_kind():
    rng = np.random.default_rng(2)
    o = np.zeros((200, 3))
    e = rng.normal(size=(200, 3)) * 0.3 + [0, 0, 3]
    arr = ray_bases(o, e, rng.uniform(1, 4, 200), 4, 0.2)
    out, assign = refine_arrays(arr, 0.6)
    assert out.weights.sum() == pytest.approx(arr.weights.sum(), rel=1e-9)
    assert len(out) < len(arr) and assign.max() == len(out) - 1
    for i in range(len(out)):
        assert arr.weights[assign == i].sum() == pytest.approx(out.weights[i], rel=1e-9)


def test_refine_backend_parity():
    backs = [_accel.get_backend(n) for n in _accel.available_backends()]
    rng = np.random.default_rng(3)
    for trial in range(20):
        n = 150
        o = rng.normal(size=(n, 3)) * 0.1
        e = rng.normal(size=(n, 3)) * 0.5 + [0, 0, 2]
        arr = ray_bases(o, e, rng.uniform(1, 4, n), 3, 0.1)
        outs = [b.refine_greedy(arr.means, arr.covs, arr.weights, 2.0, 0.6) for b in backs]
        for o2 in outs[1:]:
            for x, y in zip(outs[0], o2):
                assert np.array_equal(x, y)


def test_hellinger_backend_parity():
    backs = [_accel.get_backend(n) for n in _accel.available_backends()]
    rng = np.random.default_rng(4)
    for _ in range(500):
        a, b = random_gaussian(rng), random_gaussian(rng)
        args = (a.mean, np.array(a.cov6), b.mean, np.array(b.cov6))
        vals = {bk.hellinger_sq(*args) for bk in backs}
        assert len(vals) == 1
        assert vals.pop() == pytest.approx(hellinger_sq(a, b), abs=1e-12)


def test_refine_rejects_bad_tau():
    with pytest.raises(ValueError):
        refine_arrays(BasisArrays.empty(), 1.0)


def test_cost_law(room_frames, intr160):
    """Direct rays = r_count x occupied count; baseline rays follow segment pixels / stride."""
    for f in room_frames[:4]:
        seg = segment_frame(f, intr160, SegParams())
        for mode, stride in (("direct", 16), ("baseline", 16), ("baseline", 4)):
            gm = GaussianMap()
            rep = construct_frame(gm, f, intr160, BuildParams(fgbg_mode=mode, stride=stride)) \
                if mode == "direct" or stride == 16 else None
            if mode == "direct":
                assert rep.fgbg_rays == 5 * len(seg.gaussians)
                direct = rep.fgbg_rays
            elif rep is not None:
                expect = sum(len(range(s.col_start, s.col_end + 1, stride)) for s in seg.segments)
                assert rep.fgbg_rays == expect
                if len(seg.segments) >= 2 * 5 / stride * len(seg.gaussians):
                    assert direct < rep.fgbg_rays
