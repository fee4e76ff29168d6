"""Accuracy, size and cost accounting.

Energy is not measured; instead operation and memory-access counters from
the other modules are gathered into one report, and ratios between two
runs (e.g. baseline vs. optimized) carry the comparison.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.stats import rankdata

from .core import CameraIntrinsics
from .fusion import GaussianMap
from .ingest import DepthFrame
from .query import query_points
from .rtree import RTree, RTreeStats
from .storage import map_size_bytes

__all__ = [
    "Label", "EvalSample", "EvalSet", "generate_eval_samples", "eval_sample_arrays",
    "auc", "auc_from_scores", "map_size_bytes", "CacheSim", "AccessRecord",
    "cache_access", "attach_cache", "energy_proxy_report", "format_report", "write_csv_rows",
]


class Label(str, enum.Enum):
    OCCUPIED = "occupied"
    FREE = "free"


@dataclass(frozen=True)
class EvalSample:
    position: tuple[float, float, float]
    label: Label


@dataclass(eq=False)
class EvalSet:
    points: np.ndarray
    occupied: np.ndarray
    seed: int

    def __len__(self) -> int:
        return len(self.occupied)

    def samples(self) -> list[EvalSample]:
        return [EvalSample(tuple(p), Label.OCCUPIED if o else Label.FREE)
                for p, o in zip(self.points.tolist(), self.occupied.tolist())]


def eval_sample_arrays(frames: list[DepthFrame], intr: CameraIntrinsics, per_ray: int = 1,
                       surface_delta: float = 0.2, seed: int = 0, pixel_stride: int = 1) -> EvalSet:
    """Endpoint of each valid pixel ray is occupied; ``per_ray`` free samples
    lie at uniform z-depths in ``[0, d - surface_delta]`` along the same ray."""
    if per_ray < 1:
        raise ValueError("per_ray must be >= 1")
    if not surface_delta > 0:
        raise ValueError("surface_delta must be positive")
    rng = np.random.default_rng(seed)
    pts, occ = [], []
    for f in frames:
        vs, us = np.mgrid[0:f.height:pixel_stride, 0:f.width:pixel_stride]
        d = f.depths[vs, us]
        valid = d > 0
        u = us[valid].astype(float)
        v = vs[valid].astype(float)
        d = d[valid]
        cam = np.stack([(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, np.ones_like(u)], -1)
        dirs = cam @ f.pose.matrix.T
        o = f.pose.origin
        pts.append(o + d[:, None] * dirs)
        occ.append(np.ones(len(d), dtype=bool))
        reach = d - surface_delta
        ok = reach > 0
        s = rng.uniform(0.0, 1.0, size=(int(ok.sum()), per_ray)) * reach[ok][:, None]
        free = o + (s[:, :, None] * dirs[ok][:, None, :]).reshape(-1, 3)
        pts.append(free)
        occ.append(np.zeros(len(free), dtype=bool))
    if not pts:
        return EvalSet(np.zeros((0, 3)), np.zeros(0, dtype=bool), seed)
    return EvalSet(np.vstack(pts), np.concatenate(occ), seed)


def generate_eval_samples(frames, intr, per_ray: int = 1, surface_delta: float = 0.2,
                          seed: int = 0, pixel_stride: int = 1) -> list[EvalSample]:
    return eval_sample_arrays(frames, intr, per_ray, surface_delta, seed, pixel_stride).samples()


def auc_from_scores(scores, occupied) -> float:
    """Mann-Whitney AUC with midranks for ties."""
    scores = np.asarray(scores, dtype=float)
    occupied = np.asarray(occupied, dtype=bool)
    n1 = int(occupied.sum())
    n0 = len(occupied) - n1
    if n1 == 0 or n0 == 0:
        raise ValueError("AUC needs both occupied and free samples")
    ranks = rankdata(scores, method="average")
    u = ranks[occupied].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n0))


def auc(gmap: GaussianMap, samples, batch_size: int = 1) -> float:
    if isinstance(samples, EvalSet):
        pts, occ = samples.points, samples.occupied
    else:
        pts = np.array([s.position for s in samples], dtype=float).reshape(-1, 3)
        occ = np.array([Label(s.label) == Label.OCCUPIED for s in samples], dtype=bool)
    if occ.all() or not occ.any():
        raise ValueError("AUC needs both occupied and free samples")
    scores = [r.probability for r in query_points(gmap, pts, batch_size)]
    return auc_from_scores(scores, occ)


# -- cache -------------------------------------------------------------------------

@dataclass(frozen=True)
class AccessRecord:
    hits: int
    misses: int

    @property
    def hit(self) -> bool:
        return self.misses == 0


class CacheSim:
    """Fully associative LRU cache over byte addresses."""

    def __init__(self, capacity_bytes: int = 45056, line_bytes: int = 64):
        if line_bytes <= 0 or capacity_bytes < line_bytes:
            raise ValueError("cache must hold at least one line")
        self.capacity_bytes = capacity_bytes
        self.line_bytes = line_bytes
        self.n_lines = capacity_bytes // line_bytes
        self._lines: OrderedDict[int, None] = OrderedDict()
        self.hits = 0
        self.misses = 0
        self.bytes_from_backing = 0

    @property
    def accesses(self) -> int:
        return self.hits + self.misses

    @property
    def hit_rate(self) -> float:
        return self.hits / self.accesses if self.accesses else 0.0

    @property
    def resident_bytes(self) -> int:
        return len(self._lines) * self.line_bytes

    def reset_counters(self) -> None:
        self.hits = self.misses = self.bytes_from_backing = 0

    def access(self, address: int, nbytes: int) -> AccessRecord:
        if nbytes <= 0:
            raise ValueError("access size must be positive")
        lb = self.line_bytes
        # ceil(nbytes / line) lines from the line holding ``address``
        first = address // lb
        last = first + (nbytes + lb - 1) // lb - 1
        hits = misses = 0
        lines = self._lines
        for line in range(first, last + 1):
            if line in lines:
                lines.move_to_end(line)
                hits += 1
            else:
                misses += 1
                lines[line] = None
                if len(lines) > self.n_lines:
                    lines.popitem(last=False)
        self.hits += hits
        self.misses += misses
        self.bytes_from_backing += misses * lb
        return AccessRecord(hits, misses)


def cache_access(sim: CacheSim, address: int, nbytes: int) -> AccessRecord:
    return sim.access(address, nbytes)


def attach_cache(tree: RTree, sim: CacheSim | None) -> None:
    """Route every node visit of ``tree`` through ``sim`` (None detaches).

    Node addresses are synthetic: node id times the largest node size.
    """
    if sim is None:
        tree.on_visit = None
        return
    stride = tree.node_stride
    tree.on_visit = lambda nid, nb: sim.access(nid * stride, nb)


# -- reports -----------------------------------------------------------------------

_RATIO_KEYS = {
    "fgbg_ray_ratio": "fgbg_rays",
    "visit_ratio": "rtree_nodes_visited",
    "pdf_eval_ratio": "pdf_evals",
    "bytes_touched_ratio": "rtree_bytes_touched",
    "backing_bytes_ratio": "cache_backing_bytes",
}


def energy_proxy_report(counters: Mapping | None = None, tree_stats: RTreeStats | None = None,
                        cache: CacheSim | None = None, baseline: Mapping | None = None,
                        **extra) -> dict:
    c = dict(counters or {})
    rep = {
        "fgbg_rays": int(c.get("fgbg_rays", 0)),
        "bases": int(c.get("bases", 0)),
        "segments": int(c.get("segments", 0)),
        "pdf_evals": int(c.get("pdf_evals", 0)),
        "hellinger_evals": int(c.get("hellinger_evals", 0)),
        "merges": int(c.get("gaussians_merged", 0)),
        "inserts": int(c.get("gaussians_inserted", 0)),
        "queries": int(c.get("queries", 0)),
    }
    if tree_stats is not None:
        rep["rtree_nodes_visited"] = tree_stats.nodes_visited
        rep["rtree_bytes_touched"] = tree_stats.bytes_touched
        rep["rtree_searches"] = tree_stats.searches
    if cache is not None:
        rep["cache_hits"] = cache.hits
        rep["cache_misses"] = cache.misses
        rep["cache_hit_rate"] = cache.hit_rate
        rep["cache_backing_bytes"] = cache.bytes_from_backing
    rep.update(extra)
    if baseline is not None:
        for name, key in _RATIO_KEYS.items():
            if key in rep and baseline.get(key):
                rep[name] = rep[key] / baseline[key]
            elif key in rep:
                rep[name] = math.nan
    return rep


def format_report(report: Mapping) -> str:
    lines = []
    for k, v in report.items():
        if isinstance(v, float):
            v = f"{v:.6g}"
        lines.append(f"{k}={v}")
    return "\n".join(lines) + "\n"


def write_csv_rows(path, rows: list[Mapping], append: bool = True) -> None:
    path = Path(path)
    fieldnames: list[str] = []
    for r in rows:
        fieldnames.extend(k for k in r if k not in fieldnames)
    exists = path.exists() and path.stat().st_size > 0
    if exists and append:
        with path.open(newline="") as fh:
            header = next(csv.reader(fh), [])
        if header:
            fieldnames = header + [k for k in fieldnames if k not in header]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n", restval="")
    if not (exists and append):
        w.writeheader()
    for r in rows:
        w.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in r.items()})
    with path.open("a" if append else "w", newline="") as fh:
        fh.write(buf.getvalue())
