import numpy as np
import pytest

from gmmmap.core import CameraIntrinsics, Gaussian3, Kind, Pose
from gmmmap.fusion import BuildParams, GaussianMap, MapInvariantError, construct_frame, fuse_local
from gmmmap.ingest import DepthFrame, PlanePrimitive, SyntheticScene, render_synthetic
from gmmmap.quantize import QuantConfig, quantize_gaussian

from .conftest import random_gaussian

IDENT = Pose((1, 0, 0, 0), (0, 0, 0))


def test_fuse_into_empty():
    rng = np.random.default_rng(0)
    gm = GaussianMap()
    rep = fuse_local(gm, [random_gaussian(rng, spread=50) for _ in range(20)])
    assert (rep.inserted, rep.merged) == (20, 0) and len(gm) == 20
    gm.audit()


def test_identical_copy_merges():
    g = Gaussian3(Kind.OCCUPIED, 3.0, (1, 2, 3), np.diag([0.1, 0.2, 0.3]))
    gm = GaussianMap()
    fuse_local(gm, [g])
    rep = fuse_local(gm, [g.copy()])
    assert rep.merged == 1 and len(gm) == 1
    assert gm.gaussians()[0].weight == 6.0


def test_far_same_kind_stays_separate():
    g = Gaussian3(Kind.OCCUPIED, 1.0, (0, 0, 0), np.eye(3) * 0.01)
    h = Gaussian3(Kind.OCCUPIED, 1.0, (10, 0, 0), np.eye(3) * 0.01)
    gm = GaussianMap()
    fuse_local(gm, [g, h])
    assert len(gm) == 2


def test_kinds_never_merge():
    g = Gaussian3(Kind.OCCUPIED, 1.0, (0, 0, 0), np.eye(3) * 0.01)
    gm = GaussianMap()
    rep = fuse_local(gm, [g, Gaussian3(Kind.FREE, 1.0, (0, 0, 0), np.eye(3) * 0.01)])
    assert rep.inserted == 2 and gm.count_by_kind() == {"occupied": 1, "free": 1}


def test_best_match_lowest_id_on_tie():
    gm = GaussianMap()
    a = Gaussian3(Kind.OCCUPIED, 1.0, (0, 0, 0), np.eye(3) * 0.04)
    gm.add(a)
    gm.add(a.copy())
    rep = fuse_local(gm, [a.copy()])
    assert rep.merges == [(1, Kind.OCCUPIED, Kind.OCCUPIED)]
    assert gm.store[1].weight == 2.0 and gm.store[2].weight == 1.0


def test_audit_detects_stale_box():
    gm = GaussianMap()
    gm.add(Gaussian3(Kind.OCCUPIED, 1.0, (0, 0, 0), np.eye(3)))
    gm.store[1] = Gaussian3(Kind.OCCUPIED, 1.0, (5, 0, 0), np.eye(3), 1)
    with pytest.raises(MapInvariantError):
        gm.audit()


def _frame(intr, depth=2.0):
    return render_synthetic(SyntheticScene([PlanePrimitive((0, 0, 1), depth)]), IDENT, intr)


def test_all_invalid_frame():
    intr = CameraIntrinsics.default(64, 48)
    gm = GaussianMap()
    rep = construct_frame(gm, DepthFrame(64, 48, np.zeros(64 * 48), IDENT), intr)
    assert len(gm) == 0 and rep.occupied_locals == 0 and rep.free_locals == 0


def test_missing_pose():
    intr = CameraIntrinsics.default(64, 48)
    with pytest.raises(ValueError):
        construct_frame(GaussianMap(), DepthFrame(64, 48, np.zeros(64 * 48)), intr)


@pytest.mark.parametrize("mode", ["direct", "baseline"])
def test_frontal_plane(mode):
    intr = CameraIntrinsics.default(64, 48)
    gm = GaussianMap()
    construct_frame(gm, _frame(intr), intr, BuildParams(fgbg_mode=mode))
    gs = gm.gaussians()
    occ = [g for g in gs if g.kind == Kind.OCCUPIED]
    free = [g for g in gs if g.kind == Kind.FREE]
    assert occ and free
    assert all(abs(g.mean[2] - 2.0) <= 0.02 for g in occ)
    assert all(g.mean[2] < 2.0 for g in free)
    gm.audit()


def test_same_frame_twice_merges():
    intr = CameraIntrinsics.default(64, 48)
    gm = GaussianMap()
    f = _frame(intr)
    construct_frame(gm, f, intr)
    n = len(gm)
    rep = construct_frame(gm, f, intr)
    assert rep.merged >= 1 and len(gm) <= n + rep.inserted


@pytest.mark.parametrize("quant", [False, True])
def test_fifty_frame_fuzz(room_frames, intr160, quant):
    rng = np.random.default_rng(5)
    gm = GaussianMap(quant=QuantConfig(enabled=quant))
    params = BuildParams(fgbg_mode="direct")
    merges = []
    for i in range(50):
        f = room_frames[int(rng.integers(len(room_frames)))]
        before = gm.total_weight()
        locals_ = [random_gaussian(rng, spread=3.0, scale=0.2) for _ in range(3)]
        merges += fuse_local(gm, locals_).merges
        if i % 5 == 0:
            construct_frame(gm, f, intr160, params)
        gm.audit()
        after = gm.total_weight()
        assert after >= before * (1 - 2.0 ** -11 * 100)
    assert all(a == b for _, a, b in merges)
    if quant:
        for g in gm.gaussians():
            q = quantize_gaussian(g, QuantConfig(enabled=True))
            assert q.weight == g.weight and np.array_equal(q.mean, g.mean)


def test_merge_conserves_mass():
    rng = np.random.default_rng(6)
    gm = GaussianMap()
    gs = [random_gaussian(rng, kind=Kind.OCCUPIED, spread=0.3, scale=0.3) for _ in range(200)]
    total = sum(np.float32(g.weight) for g in gs)
    fuse_local(gm, gs)
    assert gm.counters["gaussians_merged"] > 0
    assert gm.total_weight() == pytest.approx(float(total), rel=1e-6)


def test_construct_determinism(room_frames, intr160):
    outs = []
    for _ in range(2):
        gm = GaussianMap()
        for f in room_frames[:3]:
            construct_frame(gm, f, intr160)
        outs.append([(g.kind, g.weight, tuple(g.mean), g.cov6) for g in gm.gaussians()])
    assert outs[0] == outs[1]
