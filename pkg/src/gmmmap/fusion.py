"""Global map storage and per-frame construction."""

from __future__ import annotations

import time
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ._accel import kernels
from .core import DEFAULT_BBOX_K, CameraIntrinsics, Gaussian3, Kind, bbox_tuple, moment_merge, pdf_params
from .free_space import FgbgMode, gaussian_rays, ray_bases, refine_arrays, segment_rays
from .ingest import DepthFrame
from .quantize import QuantConfig, quantize_value
from .rtree import RTree
from .segmentation import SegParams, segment_frame


class MapInvariantError(AssertionError):
    pass


def _f32(v: float) -> float:
    return float(np.float32(v))


class GaussianMap:
    """R-tree indexed global Gaussians.

    Stored values are snapped to the storage precision on entry: binary32
    for everything, and additionally 19-bit for means and weights when
    quantization is on.  Regression parameters are cached per id in
    columnar arrays consumed by the compiled kernels.
    """

    def __init__(self, k: float = DEFAULT_BBOX_K, quant: QuantConfig | None = None,
                 node_max: int = 8):
        if not k > 0:
            raise ValueError("bbox scale k must be positive")
        # header stores k as binary32
        self.k = _f32(k)
        self.quant = quant or QuantConfig()
        self.store: dict[int, Gaussian3] = {}
        self.index = RTree(node_max)
        self.next_id = 1
        self.counters: Counter = Counter()
        cap = 64
        self._means = np.zeros((cap, 3))
        self._covs = np.zeros((cap, 6))
        self._precs = np.zeros((cap, 6))
        self._norms = np.zeros(cap)
        self._weights = np.zeros(cap)
        self._kinds = np.zeros(cap, dtype=np.uint8)

    def __len__(self) -> int:
        return len(self.store)

    # -- storage precision --------------------------------------------------------

    def to_storage(self, g: Gaussian3) -> Gaussian3:
        if self.quant.enabled:
            sat = 0
            w, s = quantize_value(g.weight)
            sat += s
            mean = []
            for c in g.mean:
                v, s = quantize_value(c)
                mean.append(v)
                sat += s
            if sat:
                self.counters["quant_saturations"] += sat
        else:
            w = _f32(g.weight)
            mean = [_f32(c) for c in g.mean]
        cov = np.asarray(g.cov, dtype=np.float32).astype(float)
        return Gaussian3(g.kind, w, mean, cov, g.id)

    def _grow(self, ident: int) -> None:
        cap = len(self._norms)
        if ident < cap:
            return
        new = max(2 * cap, ident + 1)
        self._means = np.resize(self._means, (new, 3))
        self._covs = np.resize(self._covs, (new, 6))
        self._precs = np.resize(self._precs, (new, 6))
        self._norms = np.resize(self._norms, new)
        self._weights = np.resize(self._weights, new)
        self._kinds = np.resize(self._kinds, new)

    def _cache(self, g: Gaussian3) -> None:
        prec, norm = pdf_params(g.mean, g.cov6)
        i = g.id
        self._grow(i)
        self._means[i] = g.mean
        self._covs[i] = g.cov6
        self._precs[i] = prec
        self._norms[i] = norm
        self._weights[i] = g.weight
        self._kinds[i] = int(g.kind)

    def kernel_arrays(self):
        return self._means, self._precs, self._norms, self._weights, self._kinds

    # -- mutation --------------------------------------------------------------------

    def add(self, g: Gaussian3, ident: int | None = None) -> int:
        if ident is None:
            ident = self.next_id
        if ident in self.store:
            raise KeyError(f"id {ident} already in map")
        self.next_id = max(self.next_id, ident + 1)
        s = self.to_storage(g)
        s.id = ident
        self._cache(s)
        self.store[ident] = s
        self.index.insert(ident, bbox_tuple(s.mean, s.cov6, self.k))
        return ident

    def replace(self, ident: int, g: Gaussian3) -> None:
        self.index.remove(ident)
        s = self.to_storage(g)
        s.id = ident
        self._cache(s)
        self.store[ident] = s
        self.index.insert(ident, bbox_tuple(s.mean, s.cov6, self.k))

    # -- inspection ----------------------------------------------------------------------

    def gaussians(self) -> list[Gaussian3]:
        return [self.store[i] for i in sorted(self.store)]

    def count_by_kind(self) -> dict[str, int]:
        occ = sum(1 for g in self.store.values() if g.kind == Kind.OCCUPIED)
        return {"occupied": occ, "free": len(self.store) - occ}

    def total_weight(self) -> float:
        return float(sum(g.weight for g in self.store.values()))

    def audit(self) -> None:
        self.index.audit()
        if set(self.index.ids()) != set(self.store):
            raise MapInvariantError("index and store hold different ids")
        for i, g in self.store.items():
            if g.id != i:
                raise MapInvariantError(f"id {i}: stored Gaussian carries id {g.id}")
            if self.index.box_of(i) != bbox_tuple(g.mean, g.cov6, self.k):
                raise MapInvariantError(f"id {i}: indexed under a stale box")
            if self.quant.enabled and any(quantize_value(v)[0] != v for v in (g.weight, *g.mean)):
                raise MapInvariantError(f"id {i}: mean/weight not on the 19-bit grid")


@dataclass
class FusionReport:
    merged: int = 0
    inserted: int = 0
    merges: list[tuple[int, Kind, Kind]] = field(default_factory=list)


def fuse_local(gmap: GaussianMap, locals_: list[Gaussian3], tau_h: float = 0.4) -> FusionReport:
    """Merge each local into its closest same-kind global, or insert it."""
    rep = FusionReport()
    c = gmap.counters
    for g in locals_:
        box = bbox_tuple(g.mean, g.cov6, gmap.k)
        ids = gmap.index.search_list(box)
        ids.sort()
        best_id, best_h, evals = kernels.best_match(
            np.asarray(ids, dtype=np.int64), gmap._means, gmap._covs, gmap._kinds,
            int(g.kind), g.mean, np.asarray(g.cov6, dtype=float))
        c["hellinger_evals"] += evals
        c["fusion_ops"] += 1
        if best_id >= 0 and best_h <= tau_h:
            other = gmap.store[best_id]
            gmap.replace(best_id, moment_merge(other, g))
            rep.merged += 1
            rep.merges.append((best_id, other.kind, g.kind))
            c["gaussians_merged"] += 1
        else:
            gmap.add(g)
            rep.inserted += 1
            c["gaussians_inserted"] += 1
    return rep


@dataclass(frozen=True)
class BuildParams:
    seg: SegParams = SegParams()
    fgbg_mode: FgbgMode = FgbgMode.DIRECT
    r_count: int = 5
    k_intervals: int = 4
    stride: int = 16
    margin: float = 0.2
    tau_refine: float = 0.6
    tau_fuse: float = 0.4

    def __post_init__(self) -> None:
        object.__setattr__(self, "fgbg_mode", FgbgMode(self.fgbg_mode))


@dataclass
class FrameReport:
    frame_index: int
    segments: int = 0
    occupied_locals: int = 0
    fgbg_rays: int = 0
    bases: int = 0
    free_locals: int = 0
    merged: int = 0
    inserted: int = 0
    timings: dict[str, float] = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "timings"}
        d.update({f"t_{k}": v for k, v in self.timings.items()})
        return d


def construct_frame(gmap: GaussianMap, frame: DepthFrame, intr: CameraIntrinsics,
                    params: BuildParams = BuildParams()) -> FrameReport:
    if frame.pose is None:
        raise ValueError(f"frame {frame.frame_index} has no pose")
    rep = FrameReport(frame.frame_index)
    clock = time.perf_counter
    t0 = clock()
    seg = segment_frame(frame, intr, params.seg)
    t1 = clock()
    if params.fgbg_mode == FgbgMode.BASELINE:
        o, e, w = segment_rays(seg.segments, frame, intr, params.stride)
    else:
        o, e, w = gaussian_rays(seg.gaussians, frame.pose.origin, params.r_count)
    bases = ray_bases(o, e, w, params.k_intervals, params.margin)
    refined, _ = refine_arrays(bases, params.tau_refine, gmap.k)
    free_locals = [b.gaussian for b in refined.to_bases()]
    t2 = clock()
    occ = fuse_local(gmap, seg.gaussians, params.tau_fuse)
    free = fuse_local(gmap, free_locals, params.tau_fuse)
    t3 = clock()
    rep.segments = len(seg.segments)
    rep.occupied_locals = len(seg.gaussians)
    rep.fgbg_rays = len(w)
    rep.bases = len(bases)
    rep.free_locals = len(free_locals)
    rep.merged = occ.merged + free.merged
    rep.inserted = occ.inserted + free.inserted
    rep.timings = {"generation": t1 - t0, "free_space": t2 - t1, "fusion": t3 - t2}
    c = gmap.counters
    c["frames"] += 1
    c["segments"] += rep.segments
    c["occupied_locals"] += rep.occupied_locals
    c["fgbg_rays"] += rep.fgbg_rays
    c["bases"] += rep.bases
    c["free_locals"] += rep.free_locals
    return rep
