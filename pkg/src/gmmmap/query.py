"""Occupancy regression at coordinates, one at a time or in batches.

A batch runs a single index search with the box enclosing all its
coordinates, then filters candidates per coordinate.  Candidates are
always summed in ascending id order, so a batched result is bit-identical
to the corresponding single query.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from ._accel import kernels
from .core import Gaussian3, pdf_params
from .fusion import GaussianMap

DEFAULT_PRIOR = 1e-6
DEFAULT_BATCH = 16


class Status(str, enum.Enum):
    EXPLORED = "explored"
    UNEXPLORED = "unexplored"


@dataclass(frozen=True)
class QueryResult:
    probability: float
    status: Status
    n_gaussians_evaluated: int


@dataclass(frozen=True)
class BatchConfig:
    batch_size: int = DEFAULT_BATCH

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


_UNEXPLORED = QueryResult(0.5, Status.UNEXPLORED, 0)


def _finish(s_occ: float, s_free: float, n: int, c: float) -> QueryResult:
    if n == 0:
        return _UNEXPLORED
    return QueryResult((s_occ + 0.5 * c) / (s_occ + s_free + c), Status.EXPLORED, n)


def regress(gaussians: list[Gaussian3], x, prior: float = DEFAULT_PRIOR) -> QueryResult:
    """Occupancy probability at ``x`` from the given candidates, summed in list order."""
    if not prior > 0:
        raise ValueError("prior pseudocount must be positive")
    n = len(gaussians)
    if n == 0:
        return _UNEXPLORED
    means = np.empty((n, 3))
    precs = np.empty((n, 6))
    norms = np.empty(n)
    weights = np.empty(n)
    kinds = np.empty(n, dtype=np.uint8)
    for i, g in enumerate(gaussians):
        prec, norm = pdf_params(g.mean, g.cov6)
        means[i] = g.mean
        precs[i] = prec
        norms[i] = norm
        weights[i] = g.weight
        kinds[i] = int(g.kind)
    x0, x1, x2 = (float(v) for v in x)
    s_occ, s_free = kernels.pdf_sums(x0, x1, x2, np.arange(n, dtype=np.int64),
                                     means, precs, norms, weights, kinds)
    return _finish(s_occ, s_free, n, prior)


def _evaluate(gmap: GaussianMap, x, ids: np.ndarray, prior: float) -> QueryResult:
    if len(ids) == 0:
        return _UNEXPLORED
    x0, x1, x2 = (float(v) for v in x)
    s_occ, s_free = kernels.pdf_sums(x0, x1, x2, ids, *gmap.kernel_arrays())
    gmap.counters["pdf_evals"] += len(ids)
    return _finish(s_occ, s_free, len(ids), prior)


def _contains(boxes: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """(n_points, n_boxes) closed-box containment mask."""
    p = pts[:, None, :]
    return np.all((boxes[None, :, :3] <= p) & (p <= boxes[None, :, 3:]), axis=2)


def query_single(gmap: GaussianMap, x, prior: float = DEFAULT_PRIOR) -> QueryResult:
    x0, x1, x2 = (float(v) for v in x)
    ids = gmap.index.search_list((x0, x1, x2, x0, x1, x2))
    gmap.counters["queries"] += 1
    ids.sort()
    return _evaluate(gmap, (x0, x1, x2), np.asarray(ids, dtype=np.int64), prior)


def query_batch(gmap: GaussianMap, coords, batch_size: int = DEFAULT_BATCH,
                prior: float = DEFAULT_PRIOR) -> list[QueryResult]:
    pts = np.asarray(coords, dtype=float).reshape(-1, 3)
    if not 1 <= len(pts) <= batch_size:
        raise ValueError(f"batch holds {len(pts)} coordinates, allowed 1..{batch_size}")
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    ids = gmap.index.search_list((*lo.tolist(), *hi.tolist()))
    gmap.counters["queries"] += len(pts)
    gmap.counters["batches"] += 1
    ids.sort()
    ids_arr = np.asarray(ids, dtype=np.int64)
    if ids:
        boxes = np.array([gmap.index.box_of(i) for i in ids])
        mask = _contains(boxes, pts)
    else:
        mask = np.zeros((len(pts), 0), dtype=bool)
    return [_evaluate(gmap, p, ids_arr[mask[b]], prior) for b, p in enumerate(pts)]


def sample_trajectory(waypoints, step: float) -> np.ndarray:
    """Coordinates at spacing <= ``step`` along the polyline, joints not repeated."""
    wp = np.asarray(waypoints, dtype=float).reshape(-1, 3)
    if len(wp) < 2:
        raise ValueError("a trajectory needs at least two waypoints")
    if not step > 0:
        raise ValueError("step must be positive")
    out = [wp[0]]
    for a, b in zip(wp[:-1], wp[1:]):
        length = float(np.linalg.norm(b - a))
        if length == 0.0:
            continue
        n = max(1, math.ceil(length / step - 1e-9))
        t = np.arange(1, n + 1) / n
        out.extend(a + t[:, None] * (b - a))
    return np.array(out)


def query_trajectory(gmap: GaussianMap, waypoints, step: float,
                     cfg: BatchConfig = BatchConfig(), prior: float = DEFAULT_PRIOR) -> list[QueryResult]:
    pts = sample_trajectory(waypoints, step)
    out: list[QueryResult] = []
    b = cfg.batch_size
    for i in range(0, len(pts), b):
        out.extend(query_batch(gmap, pts[i:i + b], b, prior))
    return out


def query_points(gmap: GaussianMap, pts, batch_size: int = 1,
                 prior: float = DEFAULT_PRIOR) -> list[QueryResult]:
    """Query consecutive chunks of ``pts``; ``batch_size`` 1 means single queries."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 3)
    if batch_size == 1:
        return [query_single(gmap, p, prior) for p in pts]
    out: list[QueryResult] = []
    for i in range(0, len(pts), batch_size):
        out.extend(query_batch(gmap, pts[i:i + batch_size], batch_size, prior))
    return out
