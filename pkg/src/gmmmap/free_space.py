"""Free-space Gaussian bases from sensor rays.

Two ways to obtain the rays: one per (strided) pixel of every scanline
segment, or a handful of representative rays per occupied Gaussian.  The
bases are then agglomerated into local free Gaussians.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass

import numpy as np

from ._accel import kernels
from .core import DEFAULT_BBOX_K, EPS, CameraIntrinsics, Gaussian3, Kind, sym_from_upper, unproject_many
from .ingest import DepthFrame

MIN_LENGTH = 1e-9
VALID_R_COUNTS = (1, 3, 5)


class FgbgMode(str, enum.Enum):
    BASELINE = "baseline"
    DIRECT = "direct"


@dataclass(frozen=True)
class Ray:
    origin: tuple[float, float, float]
    endpoint: tuple[float, float, float]
    weight: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "endpoint", tuple(float(v) for v in self.endpoint))
        if np.linalg.norm(np.subtract(self.endpoint, self.origin)) <= 0:
            raise ValueError("ray endpoint coincides with its origin")
        if not self.weight >= 0:
            raise ValueError("ray weight must be nonnegative")


@dataclass(eq=False)
class FreeBasis:
    gaussian: Gaussian3
    source_ray_count: int = 1


@dataclass(eq=False)
class BasisArrays:
    """Columnar bases: means (n,3), covariance upper triangles (n,6), weights (n,)."""

    means: np.ndarray
    covs: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.weights)

    @classmethod
    def empty(cls) -> "BasisArrays":
        return cls(np.zeros((0, 3)), np.zeros((0, 6)), np.zeros(0))

    def to_bases(self) -> list[FreeBasis]:
        return [FreeBasis(Gaussian3(Kind.FREE, w, m, sym_from_upper(c)))
                for m, c, w in zip(self.means, self.covs, self.weights)]


def _line_cov6(direction: np.ndarray, length: np.ndarray) -> np.ndarray:
    d = direction
    s = (length * length / 12.0)[:, None]
    c = np.column_stack([d[:, 0] * d[:, 0], d[:, 0] * d[:, 1], d[:, 0] * d[:, 2],
                         d[:, 1] * d[:, 1], d[:, 1] * d[:, 2], d[:, 2] * d[:, 2]]) * s
    c[:, [0, 3, 5]] += EPS
    return c


def uniform_line_gaussian(a, b, w: float) -> Gaussian3:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    length = float(np.linalg.norm(b - a))
    if length <= MIN_LENGTH:
        raise ValueError(f"segment endpoints coincide (length {length:g})")
    if not w > 0:
        raise ValueError("weight must be positive")
    d = (b - a) / length
    c6 = _line_cov6(d[None, :], np.array([length]))[0]
    return Gaussian3(Kind.FREE, w, 0.5 * (a + b), sym_from_upper(c6))


def ray_bases(origins, endpoints, weights, k_intervals: int, margin: float) -> BasisArrays:
    """Array form of :func:`bases_from_rays`; bases are emitted ray by ray."""
    if k_intervals < 1:
        raise ValueError("k_intervals must be >= 1")
    if margin < 0:
        raise ValueError("margin must be >= 0")
    o = np.asarray(origins, dtype=float).reshape(-1, 3)
    e = np.asarray(endpoints, dtype=float).reshape(-1, 3)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if len(o) == 0:
        return BasisArrays.empty()
    vec = e - o
    length = np.linalg.norm(vec, axis=1)
    free = length - margin
    sub = free / k_intervals
    keep = sub > MIN_LENGTH
    o, vec, length, free, sub, w = o[keep], vec[keep], length[keep], free[keep], sub[keep], w[keep]
    d = vec / length[:, None]
    j = np.arange(k_intervals) + 0.5
    means = (o[:, None, :] + (j[None, :, None] * sub[:, None, None]) * d[:, None, :]).reshape(-1, 3)
    covs = np.repeat(_line_cov6(d, sub), k_intervals, axis=0)
    weights = np.repeat(w * (sub / free), k_intervals)
    return BasisArrays(means, covs, weights)


def bases_from_rays(rays: list[Ray], k_intervals: int = 4, margin: float = 0.2) -> list[FreeBasis]:
    if not rays:
        ray_bases(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0), k_intervals, margin)
        return []
    arr = ray_bases([r.origin for r in rays], [r.endpoint for r in rays],
                    [r.weight for r in rays], k_intervals, margin)
    return arr.to_bases()


def segment_rays(segments, frame: DepthFrame, intr: CameraIntrinsics,
                 stride: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rays through every ``stride``-th member pixel; returns (origins, endpoints, weights)."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    us, vs = [], []
    for s in segments:
        cols = np.arange(s.col_start, s.col_end + 1, stride)
        us.append(cols)
        vs.append(np.full(len(cols), s.row))
    if not us:
        return np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0)
    u = np.concatenate(us)
    v = np.concatenate(vs)
    ends = unproject_many(intr, frame.pose, u.astype(float), v.astype(float), frame.depths[v, u])
    origins = np.broadcast_to(frame.pose.origin, ends.shape)
    return origins, ends, np.full(len(u), float(stride))


def bases_from_segments(segments, frame: DepthFrame, intr: CameraIntrinsics, stride: int = 16,
                        k_intervals: int = 4, margin: float = 0.2,
                        counters: Counter | None = None) -> list[FreeBasis]:
    o, e, w = segment_rays(segments, frame, intr, stride)
    if counters is not None:
        counters["fgbg_rays"] += len(w)
    return ray_bases(o, e, w, k_intervals, margin).to_bases()


def _principal_axes(cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eigh(cov)
    order = sorted(range(3), key=lambda i: (-vals[i], i))
    vals = np.clip(vals[order], 0.0, None)
    vecs = vecs[:, order]
    for i in range(3):
        v = vecs[:, i]
        j = int(np.argmax(np.abs(v)))
        if v[j] < 0:
            vecs[:, i] = -v
    return vals, vecs


def representative_endpoints(g: Gaussian3, r_count: int) -> np.ndarray:
    if r_count not in VALID_R_COUNTS:
        raise ValueError(f"r_count must be one of {VALID_R_COUNTS}, got {r_count}")
    pts = [g.mean]
    if r_count > 1:
        vals, vecs = _principal_axes(g.cov)
        for i in range((r_count - 1) // 2):
            step = np.sqrt(vals[i]) * vecs[:, i]
            pts.append(g.mean + step)
            pts.append(g.mean - step)
    return np.array(pts)


def sample_rays_from_gaussian(g: Gaussian3, origin, r_count: int = 5) -> list[Ray]:
    if g.kind != Kind.OCCUPIED:
        raise ValueError("representative rays come from occupied Gaussians")
    ends = representative_endpoints(g, r_count)
    w = g.weight / r_count
    return [Ray(tuple(origin), tuple(e), w) for e in ends]


def gaussian_rays(gaussians, origin, r_count: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    ends, ws = [], []
    for g in gaussians:
        e = representative_endpoints(g, r_count)
        ends.append(e)
        ws.append(np.full(len(e), g.weight / r_count))
    if not ends:
        return np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0)
    e = np.vstack(ends)
    o = np.broadcast_to(np.asarray(origin, dtype=float), e.shape)
    keep = np.linalg.norm(e - o, axis=1) > 0
    return o[keep], e[keep], np.concatenate(ws)[keep]


def refine_arrays(bases: BasisArrays, tau_h: float = 0.6,
                  k: float = DEFAULT_BBOX_K) -> tuple[BasisArrays, np.ndarray]:
    """Greedy first-match agglomeration; also returns each basis' output index."""
    if not 0 < tau_h < 1:
        raise ValueError("tau_h must lie in (0, 1)")
    if len(bases) == 0:
        return BasisArrays.empty(), np.zeros(0, dtype=np.int64)
    m, c, w, assign = kernels.refine_greedy(
        np.ascontiguousarray(bases.means), np.ascontiguousarray(bases.covs),
        np.ascontiguousarray(bases.weights), float(k), float(tau_h))
    return BasisArrays(m, c, w), assign


def refine_bases(bases: list[FreeBasis], tau_h: float = 0.6,
                 k: float = DEFAULT_BBOX_K) -> list[Gaussian3]:
    arr = BasisArrays(
        np.array([b.gaussian.mean for b in bases]).reshape(-1, 3),
        np.array([b.gaussian.cov6 for b in bases]).reshape(-1, 6),
        np.array([b.gaussian.weight for b in bases], dtype=float))
    out, _ = refine_arrays(arr, tau_h, k)
    return [b.gaussian for b in out.to_bases()]
