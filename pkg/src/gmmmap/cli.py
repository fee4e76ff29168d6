"""``gmmmap`` command line.

Exit status: 0 success, 1 usage error, 2 unreadable or malformed input,
3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig
from .core import CameraIntrinsics
from .free_space import FgbgMode
from .fusion import GaussianMap, MapInvariantError, construct_frame
from .ingest import (DepthFrame, ParseError, box_room, load_dataset, load_scene, orbit_poses,
                     render_sequence)
from .metrics import (CacheSim, attach_cache, auc, energy_proxy_report, eval_sample_arrays,
                      format_report, write_csv_rows)
from .query import Status, query_batch, query_points, sample_trajectory
from .rtree import RTreeInvariantError
from .segmentation import SlopeMode
from .storage import MapFormatError, load_map, map_size_bytes, save_map, serialize_map

log = logging.getLogger("gmmmap")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INVARIANT = 0, 1, 2, 3

BUILTIN_SCENES = {
    "box-room": lambda: box_room(),
    "box-room-empty": lambda: box_room(furniture=False),
}

DEFAULT_SLICE_EXTENT = (-1.0, -1.0, 1.0, 1.0)


class UsageError(Exception):
    pass


class FrameError(ParseError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- argument helpers ------------------------------------------------------------------

def _floats(text: str, n: int, what: str) -> tuple[float, ...]:
    parts = text.split(",")
    try:
        vals = tuple(float(p) for p in parts)
    except ValueError:
        raise UsageError(f"malformed {what} {text!r}") from None
    if len(vals) != n or not all(math.isfinite(v) for v in vals):
        raise UsageError(f"malformed {what} {text!r}: expected {n} comma-separated numbers")
    return vals


def _common(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("configuration")
    g.add_argument("--config", metavar="FILE", help="key=value config file")
    g.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                   help="override one config key (repeatable)")
    g.add_argument("--fgbg", choices=[m.value for m in FgbgMode], help="free-basis mode")
    g.add_argument("--slope", choices=[m.value for m in SlopeMode], help="slope predictor")
    g.add_argument("--quant", action=argparse.BooleanOptionalAction, default=None,
                   help="19-bit means and weights")
    g.add_argument("--batch", type=int, metavar="B", help="query batch size")
    g.add_argument("--seed", type=int, help="evaluation sampling seed")
    g.add_argument("--frames", type=int, help="frame limit")
    g.add_argument("-q", "--quiet", action="store_true", help="log warnings only")


def _source(parser: argparse.ArgumentParser, required: bool = True) -> None:
    src = parser.add_mutually_exclusive_group(required=required)
    src.add_argument("--dataset", metavar="DIR",
                     help="directory with depth.txt, trajectory.txt and 16-bit PGM frames")
    src.add_argument("--scene", metavar="SCENE",
                     help=f"scene file or builtin ({', '.join(BUILTIN_SCENES)})")


def resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        try:
            cfg = RunConfig.load(args.config)
        except OSError as e:
            raise ParseError(f"cannot read config: {e}") from None
    overrides: dict[str, object] = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value
    shortcuts = {"fgbg_mode": args.fgbg, "slope_mode": args.slope, "quant": args.quant,
                 "batch_size": args.batch, "seed": args.seed, "frames": args.frames}
    overrides.update({k: v for k, v in shortcuts.items() if v is not None})
    cfg = RunConfig.from_mapping(overrides, cfg)
    log.info("resolved config: %s", " ".join(cfg.to_text().split()))
    return cfg


def load_frames(args, cfg: RunConfig) -> tuple[list[DepthFrame], CameraIntrinsics]:
    intr = cfg.intrinsics()
    if args.dataset:
        ds = load_dataset(args.dataset, intr, cfg.assoc_window, cfg.frames)
        return ds.frames, intr
    if args.scene in BUILTIN_SCENES:
        scene = BUILTIN_SCENES[args.scene]()
    else:
        scene = load_scene(args.scene)
    return render_sequence(scene, orbit_poses(scene, cfg.frames), intr), intr


def build_map(frames, intr, cfg: RunConfig, on_frame=None) -> GaussianMap:
    gmap = GaussianMap(cfg.k, cfg.quant_config(), cfg.node_max)
    params = cfg.build_params()
    for f in frames:
        try:
            rep = construct_frame(gmap, f, intr, params)
        except (ValueError, ArithmeticError) as e:
            raise FrameError(f"frame {f.frame_index}: {e}") from e
        if on_frame is not None:
            on_frame(rep)
    return gmap


def _load(path, cfg: RunConfig) -> GaussianMap:
    gmap = load_map(path, cfg.node_max)
    gmap.index.stats.reset()
    return gmap


def _map_summary(gmap: GaussianMap) -> dict:
    kinds = gmap.count_by_kind()
    return {"gaussians": len(gmap), "occupied": kinds["occupied"], "free": kinds["free"],
            "quantized": gmap.quant.enabled, "map_size_bytes": map_size_bytes(gmap)}


# -- commands ------------------------------------------------------------------------

def cmd_build(args, cfg: RunConfig, out) -> int:
    frames, intr = load_frames(args, cfg)
    if not frames:
        raise ParseError("no posed frames to build from")

    def on_frame(rep):
        d = rep.as_dict()
        out.write("frame " + " ".join(f"{k}={v}" for k, v in d.items() if not k.startswith("t_"))
                  + "\n")

    gmap = build_map(frames, intr, cfg, on_frame)
    nbytes = save_map(gmap, args.out)
    total = energy_proxy_report(gmap.counters, gmap.index.stats, None, None,
                                frames=len(frames), **_map_summary(gmap))
    assert nbytes == total["map_size_bytes"]
    out.write(format_report(total))
    if args.csv:
        write_csv_rows(args.csv, [dict(run="build", **total)])
    return EXIT_OK


def _query_coords(args) -> np.ndarray:
    if args.point:
        return np.array([_floats(p, 3, "point") for p in args.point])
    if args.step is None or not args.step > 0:
        raise UsageError("--traj needs a positive --step")
    try:
        text = Path(args.traj).read_text()
    except OSError as e:
        raise ParseError(f"cannot read trajectory: {e}") from None
    wps = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        try:
            vals = [float(v) for v in s.replace(",", " ").split()]
        except ValueError:
            raise ParseError(f"{args.traj}:{lineno}: expected 'x y z'") from None
        if len(vals) != 3:
            raise ParseError(f"{args.traj}:{lineno}: expected 'x y z'")
        wps.append(vals)
    try:
        return sample_trajectory(wps, args.step)
    except ValueError as e:
        raise ParseError(f"{args.traj}: {e}") from None


def cmd_query(args, cfg: RunConfig, out) -> int:
    pts = _query_coords(args)
    gmap = _load(args.map, cfg)
    sim = CacheSim(cfg.cache_bytes, cfg.cache_line)
    attach_cache(gmap.index, sim)
    results = query_points(gmap, pts, cfg.batch_size, cfg.prior)
    for p, r in zip(pts, results):
        out.write(f"{p[0]:.6g} {p[1]:.6g} {p[2]:.6g} {r.probability:.6g} {r.status.value}\n")
    out.write(format_report(energy_proxy_report(gmap.counters, gmap.index.stats, sim,
                                                batch_size=cfg.batch_size)))
    return EXIT_OK


def _eval_set(frames, intr, cfg: RunConfig):
    return eval_sample_arrays(frames, intr, cfg.per_ray, cfg.surface_delta, cfg.seed,
                              cfg.eval_stride)


def cmd_eval(args, cfg: RunConfig, out) -> int:
    gmap = _load(args.map, cfg)
    frames, intr = load_frames(args, cfg)
    samples = _eval_set(frames, intr, cfg)
    if len(samples) == 0 or samples.occupied.all() or not samples.occupied.any():
        raise ParseError("evaluation frames yield no occupied/free sample pairs")
    row = {"run": "eval", "auc": auc(gmap, samples, cfg.batch_size),
           "samples": len(samples), **_map_summary(gmap)}
    if args.csv:
        try:
            write_csv_rows(args.csv, [row])
        except OSError as e:
            raise ParseError(f"cannot write CSV: {e}") from None
    out.write(format_report(row))
    return EXIT_OK


def _query_path(frames) -> np.ndarray:
    """Polyline through the sensor positions, closed into a loop."""
    wps = [f.pose.origin for f in frames]
    wps.append(wps[0])
    return np.asarray(wps, dtype=float)


def compare_rows(frames, intr, cfg: RunConfig, traj_step: float = 0.05) -> list[dict]:
    samples = _eval_set(frames, intr, cfg)
    rows = []
    reference = None
    for mode in (FgbgMode.BASELINE, FgbgMode.DIRECT):
        for slope in (SlopeMode.EXACT, SlopeMode.DELAYED4):
            for quant in (False, True):
                c = replace(cfg, fgbg_mode=mode.value, slope_mode=slope.value, quant=quant)
                log.info("compare: building %s/%s/%s", mode.value, slope.value,
                         "quant" if quant else "full")
                gmap = build_map(frames, intr, c)
                # counters are read before evaluation adds its own queries
                rep = energy_proxy_report(
                    gmap.counters, gmap.index.stats, None, reference,
                    run="construct", fgbg=mode.value, slope=slope.value,
                    precision="q19" if quant else "f32", **_map_summary(gmap))
                rep["auc"] = auc(gmap, samples, cfg.batch_size)
                if reference is None:
                    reference = rep
                rows.append(rep)
    # query proxies on the configured map
    gmap = build_map(frames, intr, cfg)
    pts = sample_trajectory(_query_path(frames), traj_step)
    base_q = None
    probs = []
    for b in (1, cfg.batch_size):
        gmap.index.stats.reset()
        gmap.counters.clear()
        sim = CacheSim(cfg.cache_bytes, cfg.cache_line)
        attach_cache(gmap.index, sim)
        res = query_points(gmap, pts, b, cfg.prior)
        probs.append([r.probability for r in res])
        rep = energy_proxy_report(gmap.counters, gmap.index.stats, sim, base_q,
                                  run="query", batch_size=b,
                                  explored=sum(r.status == Status.EXPLORED for r in res))
        if base_q is None:
            base_q = rep
        rows.append(rep)
    attach_cache(gmap.index, None)
    rows[-1]["identical_to_single"] = probs[0] == probs[1]
    return rows


def cmd_compare(args, cfg: RunConfig, out) -> int:
    if not args.traj_step > 0:
        raise UsageError("--traj-step must be positive")
    frames, intr = load_frames(args, cfg)
    if not frames:
        raise ParseError("no posed frames to compare on")
    rows = compare_rows(frames, intr, cfg, args.traj_step)
    cols = ["run", "fgbg", "slope", "precision", "batch_size", "auc", "map_size_bytes",
            "gaussians", "fgbg_rays", "fgbg_ray_ratio", "rtree_nodes_visited", "visit_ratio",
            "pdf_evals", "cache_hit_rate"]
    out.write("\t".join(cols) + "\n")
    for r in rows:
        cells = []
        for c in cols:
            v = r.get(c, "")
            cells.append(f"{v:.6g}" if isinstance(v, float) else str(v))
        out.write("\t".join(cells) + "\n")
    aucs = [r["auc"] for r in rows if r["run"] == "construct"]
    out.write(f"auc_spread={max(aucs) - min(aucs):.6g}\n")
    if args.csv:
        try:
            write_csv_rows(args.csv, rows, append=False)
        except OSError as e:
            raise ParseError(f"cannot write CSV: {e}") from None
    return EXIT_OK


def probability_colors(p: np.ndarray) -> np.ndarray:
    """blue (0) -> yellow (0.5) -> red (1), two linear ramps, uint8 RGB."""
    p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
    lo = np.minimum(p, 0.5) * 2.0
    hi = (np.maximum(p, 0.5) - 0.5) * 2.0
    r = np.where(p <= 0.5, lo, 1.0)
    g = np.where(p <= 0.5, lo, 1.0 - hi)
    b = np.where(p <= 0.5, 1.0 - lo, 0.0)
    return np.rint(np.stack([r, g, b], -1) * 255.0).astype(np.uint8)


def slice_image(gmap: GaussianMap, z: float, res: float, extent, batch_size: int,
                prior: float) -> np.ndarray:
    x0, y0, x1, y1 = extent
    nx = max(1, math.ceil((x1 - x0) / res - 1e-9))
    ny = max(1, math.ceil((y1 - y0) / res - 1e-9))
    xs = x0 + (np.arange(nx) + 0.5) * res
    ys = y1 - (np.arange(ny) + 0.5) * res  # image row 0 is the +y edge
    gx, gy = np.meshgrid(xs, ys)
    pts = np.stack([gx.ravel(), gy.ravel(), np.full(gx.size, z)], -1)
    probs = np.empty(len(pts))
    for i in range(0, len(pts), batch_size):
        chunk = query_batch(gmap, pts[i:i + batch_size], batch_size, prior)
        probs[i:i + len(chunk)] = [r.probability for r in chunk]
    return probability_colors(probs).reshape(ny, nx, 3)


def write_ppm(path, rgb: np.ndarray) -> None:
    h, w, _ = rgb.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + rgb.astype(np.uint8).tobytes())


def cmd_slice(args, cfg: RunConfig, out) -> int:
    if not args.res > 0:
        raise UsageError("--res must be positive")
    if args.extent:
        extent = _floats(args.extent, 4, "extent")
        if not (extent[2] > extent[0] and extent[3] > extent[1]):
            raise UsageError("--extent needs xmin < xmax and ymin < ymax")
    else:
        extent = None
    gmap = _load(args.map, cfg)
    if extent is None:
        b = gmap.index.bounds
        extent = DEFAULT_SLICE_EXTENT if b is None else (b[0], b[1], b[3], b[4])
    img = slice_image(gmap, args.z, args.res, extent, cfg.batch_size, cfg.prior)
    write_ppm(args.out, img)
    out.write(f"wrote {args.out} {img.shape[1]}x{img.shape[0]}\n")
    return EXIT_OK


def cmd_stats(args, cfg: RunConfig, out) -> int:
    gmap = _load(args.map, cfg)
    gmap.audit()
    tree = gmap.index
    depth = max((d for _, d in tree.iter_nodes()), default=0)
    data = serialize_map(gmap)
    row = {**_map_summary(gmap), "bbox_k": gmap.k, "total_weight": gmap.total_weight(),
           "rtree_nodes": tree.node_count(), "rtree_height": depth,
           "crc32": f"{int.from_bytes(data[-4:], 'little'):08x}", "audit": "ok"}
    out.write(format_report(row))
    return EXIT_OK


# -- entry point ------------------------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gmmmap", description="Gaussian mixture occupancy maps")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("build", help="build a map from frames")
    _source(p)
    p.add_argument("--out", required=True, metavar="MAP", help="output map file")
    p.add_argument("--csv", metavar="FILE", help="append the totals as a CSV row")
    _common(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("query", help="occupancy at coordinates")
    p.add_argument("map")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--point", action="append", metavar="X,Y,Z")
    g.add_argument("--traj", metavar="FILE", help="waypoint file, one 'x y z' per line")
    p.add_argument("--step", type=float, help="sampling step along --traj (m)")
    _common(p)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("eval", help="AUC and size of a map against frames")
    p.add_argument("map")
    _source(p)
    p.add_argument("--csv", metavar="FILE", help="append the result as a CSV row")
    _common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="A/B all construction variants plus query batching")
    _source(p)
    p.add_argument("--csv", metavar="FILE", help="write all rows as CSV")
    p.add_argument("--traj-step", type=float, default=0.05, help="query trajectory step (m)")
    _common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("slice", help="horizontal cross-section as a PPM image")
    p.add_argument("map")
    p.add_argument("--z", type=float, required=True)
    p.add_argument("--res", type=float, required=True, help="cell size (m)")
    p.add_argument("--extent", metavar="XMIN,YMIN,XMAX,YMAX",
                   help="grid bounds; write --extent=... when XMIN is negative")
    p.add_argument("--out", required=True, metavar="PPM")
    _common(p)
    p.set_defaults(func=cmd_slice)

    p = sub.add_parser("stats", help="summary and invariant audit of a map file")
    p.add_argument("map")
    _common(p)
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = make_parser().parse_args(argv)
    except UsageError as e:
        print(f"gmmmap: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr, force=True)
    try:
        cfg = resolve_config(args)
        return args.func(args, cfg, out)
    except (UsageError, ConfigError) as e:
        print(f"gmmmap: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, MapFormatError, FileNotFoundError) as e:
        print(f"gmmmap: input error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (MapInvariantError, RTreeInvariantError) as e:
        print(f"gmmmap: invariant violation: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    except OSError as e:
        print(f"gmmmap: input error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
