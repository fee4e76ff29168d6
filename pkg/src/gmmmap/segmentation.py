"""Scanline segmentation and cross-row segment fusion.

Each image row is cut into runs whose depth is predicted by a scalar
slope; runs are then chained across adjacent rows into clusters that
carry sufficient statistics (count, sum, sum of outer products).  A
cluster becomes an occupied Gaussian once it stops growing.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from ._accel import kernels
from .core import EPS, CameraIntrinsics, Gaussian3, Kind, unproject_many
from .ingest import DepthFrame


class SlopeMode(str, enum.Enum):
    EXACT = "exact"
    DELAYED4 = "delayed4"


@dataclass(frozen=True)
class SegParams:
    tau_depth: float = 0.05
    tau_rel: float = 0.02
    tau_slope: float = 0.1
    tau_fuse: float = 0.1
    n_min: int = 8
    slope_mode: SlopeMode = SlopeMode.DELAYED4

    def __post_init__(self) -> None:
        object.__setattr__(self, "slope_mode", SlopeMode(self.slope_mode))
        if min(self.tau_depth, self.tau_rel, self.tau_slope, self.tau_fuse) <= 0:
            raise ValueError("segmentation gates must be positive")
        if self.n_min < 3:
            raise ValueError("n_min must be at least 3")


@dataclass(eq=False)
class Segment:
    row: int
    col_start: int
    col_end: int
    n: int
    sum: np.ndarray
    sum_outer: np.ndarray
    depth_first: float
    depth_last: float
    slope: float
    depth_mean: float


@dataclass(eq=False)
class Cluster:
    n: int
    sum: np.ndarray
    sum_outer: np.ndarray
    row_last: int
    col_interval_last: tuple[int, int]
    depth_last: float
    slope_last: float
    active: bool = True
    members: list[tuple[int, int, int]] = field(default_factory=list)
    # accumulators for the row currently being fused
    _row_lo: int = 0
    _row_hi: int = -1
    _row_n: int = 0
    _row_depth: float = 0.0
    _row_slope: float = 0.0

    @classmethod
    def seed(cls, s: Segment) -> "Cluster":
        return cls(s.n, s.sum.copy(), s.sum_outer.copy(), s.row, (s.col_start, s.col_end),
                   s.depth_mean, s.slope, True, [(s.row, s.col_start, s.col_end)])

    def absorb(self, s: Segment) -> None:
        self.n += s.n
        self.sum = self.sum + s.sum
        self.sum_outer = self.sum_outer + s.sum_outer
        self.members.append((s.row, s.col_start, s.col_end))
        if self._row_n == 0:
            self._row_lo, self._row_hi = s.col_start, s.col_end
        else:
            self._row_lo = min(self._row_lo, s.col_start)
            self._row_hi = max(self._row_hi, s.col_end)
        self._row_depth += s.depth_mean * s.n
        self._row_n += s.n
        self._row_slope = s.slope
        self.row_last = s.row

    def commit_row(self) -> None:
        if self._row_n:
            self.col_interval_last = (self._row_lo, self._row_hi)
            self.depth_last = self._row_depth / self._row_n
            self.slope_last = self._row_slope
            self._row_n = 0
            self._row_depth = 0.0


def row_points(frame: DepthFrame, intr: CameraIntrinsics, row: int) -> np.ndarray:
    u = np.arange(frame.width, dtype=float)
    return unproject_many(intr, frame.pose, u, np.full_like(u, float(row)), frame.depths[row])


def scanline_segment(frame: DepthFrame, row: int, params: SegParams,
                     intr: CameraIntrinsics) -> list[Segment]:
    if not 0 <= row < frame.height:
        raise IndexError(f"row {row} outside image of height {frame.height}")
    depths = np.ascontiguousarray(frame.depths[row], dtype=float)
    starts, ends, slopes = kernels.segment_row(
        depths, params.tau_depth, params.tau_rel, params.slope_mode == SlopeMode.DELAYED4)
    if len(starts) == 0:
        return []
    pts = row_points(frame, intr, row)
    outer = (pts[:, :, None] * pts[:, None, :]).reshape(-1, 9)
    pad = np.vstack([pts, np.zeros((1, 3))])
    pad_outer = np.vstack([outer, np.zeros((1, 9))])
    idx = np.column_stack([starts, ends + 1]).ravel()
    sums = np.add.reduceat(pad, idx, axis=0)[::2]
    souter = np.add.reduceat(pad_outer, idx, axis=0)[::2]
    dsum = np.add.reduceat(np.append(depths, 0.0), idx)[::2]
    segs = []
    for i, (a, b) in enumerate(zip(starts.tolist(), ends.tolist())):
        n = b - a + 1
        so = souter[i].reshape(3, 3)
        segs.append(Segment(row, a, b, n, sums[i], 0.5 * (so + so.T), float(depths[a]),
                            float(depths[b]), float(slopes[i]), float(dsum[i]) / n))
    return segs


def fuse_segments(prev_active: list[Cluster], row_segments: list[Segment],
                  params: SegParams, row: int | None = None) -> tuple[list[Cluster], list[Cluster]]:
    """Extend clusters with one row of segments.

    Returns ``(active, retired)``.  Clusters silent for a full row are
    retired before matching.
    """
    if row is None:
        row = row_segments[0].row if row_segments else max(
            (c.row_last for c in prev_active), default=0) + 1
    retired = []
    candidates = []
    for c in prev_active:
        if c.row_last < row - 1:
            c.active = False
            retired.append(c)
        else:
            candidates.append(c)
    candidates.sort(key=lambda c: c.col_interval_last[0])
    seeded = []
    for s in row_segments:
        for c in candidates:
            lo, hi = c.col_interval_last
            if (s.col_start <= hi and lo <= s.col_end
                    and abs(s.depth_mean - c.depth_last) <= params.tau_fuse
                    and abs(s.slope - c.slope_last) <= params.tau_slope):
                c.absorb(s)
                break
        else:
            seeded.append(Cluster.seed(s))
    for c in candidates:
        c.commit_row()
    return candidates + seeded, retired


def clusters_to_gaussians(retired: list[Cluster], params: SegParams) -> list[Gaussian3]:
    out = []
    for c in retired:
        if c.n < params.n_min:
            continue
        mu = c.sum / c.n
        cov = c.sum_outer / c.n - np.outer(mu, mu) + EPS * np.eye(3)
        out.append(Gaussian3(Kind.OCCUPIED, float(c.n), mu, 0.5 * (cov + cov.T)))
    return out


@dataclass
class FrameSegmentation:
    segments: list[Segment]
    clusters: list[Cluster]
    gaussians: list[Gaussian3]


def segment_frame(frame: DepthFrame, intr: CameraIntrinsics, params: SegParams) -> FrameSegmentation:
    """Run SS + SF over all rows and emit the frame's occupied Gaussians."""
    segments: list[Segment] = []
    active: list[Cluster] = []
    finished: list[Cluster] = []
    for v in range(frame.height):
        segs = scanline_segment(frame, v, params, intr)
        segments.extend(segs)
        active, retired = fuse_segments(active, segs, params, row=v)
        finished.extend(retired)
    for c in active:
        c.active = False
    finished.extend(active)
    return FrameSegmentation(segments, finished, clusters_to_gaussians(finished, params))
