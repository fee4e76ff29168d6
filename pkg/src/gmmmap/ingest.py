"""Posed depth input: 16-bit PGM frames, TUM-style trajectories, and a
ray-cast renderer for synthetic box/plane scenes."""

from __future__ import annotations

import bisect
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Aabb, CameraIntrinsics, Pose

log = logging.getLogger(__name__)


class ParseError(ValueError):
    pass


class PgmMagicError(ParseError):
    pass


class PgmHeaderError(ParseError):
    pass


class PgmDimensionError(ParseError):
    pass


class PgmTruncatedError(ParseError):
    pass


class TrajectoryError(ParseError):
    pass


class SceneError(ParseError):
    pass


@dataclass(eq=False)
class DepthFrame:
    width: int
    height: int
    depths: np.ndarray
    pose: Pose | None = None
    frame_index: int = 0

    def __post_init__(self) -> None:
        d = np.asarray(self.depths, dtype=float)
        if d.size != self.width * self.height:
            raise ValueError(f"depth array has {d.size} values, expected {self.width * self.height}")
        if np.any(d < 0) or not np.all(np.isfinite(d)):
            raise ValueError("depths must be finite and nonnegative")
        self.depths = d.reshape(self.height, self.width)

    def row(self, v: int) -> np.ndarray:
        return self.depths[v]

    @property
    def valid_count(self) -> int:
        return int(np.count_nonzero(self.depths))


# -- PGM ---------------------------------------------------------------------

def _read_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    n = len(buf)
    while pos < n:
        c = buf[pos:pos + 1]
        if c == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise PgmHeaderError(f"unexpected end of header at byte {start}")
    return buf[start:pos], pos


def parse_pgm16(buf: bytes, expect: tuple[int, int] | None = None) -> np.ndarray:
    """Raw uint16 samples of a binary P5 image with maxval 65535.

    ``expect`` is an optional (width, height) the header must declare.
    """
    if buf[:2] != b"P5":
        raise PgmMagicError(f"bad magic {buf[:2]!r} at byte 0, expected b'P5'")
    pos = 2
    fields = []
    for name in ("width", "height", "maxval"):
        tok_start = pos
        tok, pos = _read_token(buf, pos)
        try:
            fields.append(int(tok))
        except ValueError:
            raise PgmHeaderError(f"non-integer {name} {tok!r} near byte {tok_start}") from None
    width, height, maxval = fields
    if expect is not None and (width, height) != tuple(expect):
        raise PgmDimensionError(
            f"header ending at byte {pos} declares {width}x{height}, "
            f"expected {expect[0]}x{expect[1]}")
    if maxval != 65535:
        raise PgmHeaderError(f"maxval {maxval} near byte {pos}, expected 65535")
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise PgmHeaderError(f"missing whitespace after header at byte {pos}")
    pos += 1
    need = width * height * 2
    have = len(buf) - pos
    if have < need:
        raise PgmTruncatedError(
            f"payload truncated: {have} bytes from byte {pos}, need {need} "
            f"(ends at byte {len(buf)})")
    if have > need:
        raise PgmDimensionError(
            f"payload has {have - need} trailing bytes after byte {pos + need}; "
            f"header declares {width}x{height}")
    return np.frombuffer(buf, dtype=">u2", count=width * height, offset=pos).reshape(height, width)


def load_depth_image(path, intr: CameraIntrinsics, frame_index: int = 0) -> DepthFrame:
    raw = parse_pgm16(Path(path).read_bytes(), expect=(intr.width, intr.height))
    h, w = raw.shape
    return DepthFrame(w, h, raw.astype(float) / intr.depth_scale, None, frame_index)


def encode_pgm16(raw: np.ndarray) -> bytes:
    raw = np.asarray(raw)
    h, w = raw.shape
    return f"P5\n{w} {h}\n65535\n".encode() + raw.astype(">u2").tobytes()


def save_depth_image(path, frame: DepthFrame, depth_scale: float = 5000.0) -> None:
    raw = np.rint(frame.depths * depth_scale)
    if raw.max(initial=0) > 65535:
        raise ValueError("depth exceeds 16-bit range at this depth_scale")
    Path(path).write_bytes(encode_pgm16(raw.astype(np.uint16)))


# -- trajectories --------------------------------------------------------------

def parse_trajectory(text: str, source: str = "<string>") -> list[tuple[float, Pose]]:
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        parts = s.split()
        if len(parts) != 8:
            raise TrajectoryError(f"{source}:{lineno}: expected 8 fields, got {len(parts)}")
        try:
            t, tx, ty, tz, qx, qy, qz, qw = (float(p) for p in parts)
        except ValueError:
            raise TrajectoryError(f"{source}:{lineno}: non-numeric field") from None
        norm = math.sqrt(qx * qx + qy * qy + qz * qz + qw * qw)
        if abs(norm - 1.0) > 1e-3:
            raise TrajectoryError(f"{source}:{lineno}: quaternion norm {norm:.6g} is not normalizable")
        q = (qw / norm, qx / norm, qy / norm, qz / norm)
        records.append((t, Pose(q, (tx, ty, tz))))
    records.sort(key=lambda r: r[0])
    return records


def load_trajectory(path) -> list[tuple[float, Pose]]:
    return parse_trajectory(Path(path).read_text(), str(path))


def format_trajectory(records) -> str:
    lines = ["# timestamp tx ty tz qx qy qz qw"]
    for t, p in records:
        w, x, y, z = p.rotation
        tx, ty, tz = p.translation
        lines.append(f"{t:.6f} {tx!r} {ty!r} {tz!r} {x!r} {y!r} {z!r} {w!r}")
    return "\n".join(lines) + "\n"


def associate(stamps, trajectory, window: float = 0.02) -> list[Pose | None]:
    """Nearest-timestamp pose per stamp, or None outside ``window`` seconds."""
    times = [t for t, _ in trajectory]
    out: list[Pose | None] = []
    for s in stamps:
        i = bisect.bisect_left(times, s)
        best = None
        for j in (i - 1, i):
            if 0 <= j < len(times) and abs(times[j] - s) <= window:
                if best is None or abs(times[j] - s) < abs(times[best] - s):
                    best = j
        out.append(None if best is None else trajectory[best][1])
    return out


@dataclass
class Dataset:
    intr: CameraIntrinsics
    frames: list[DepthFrame]
    skipped: int = 0


def load_dataset(root, intr: CameraIntrinsics, window: float = 0.02,
                 limit: int | None = None) -> Dataset:
    """Directory with ``depth.txt`` (``timestamp relpath`` lines) and
    ``trajectory.txt``."""
    root = Path(root)
    listing = root / "depth.txt"
    traj_path = root / "trajectory.txt"
    if not traj_path.exists():
        raise FileNotFoundError(f"trajectory file not found: {traj_path}")
    trajectory = load_trajectory(traj_path)
    entries = []
    for lineno, line in enumerate(listing.read_text().splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        parts = s.split()
        try:
            entries.append((float(parts[0]), parts[1]))
        except (ValueError, IndexError):
            raise ParseError(f"{listing}:{lineno}: expected 'timestamp path'") from None
    poses = associate([t for t, _ in entries], trajectory, window)
    frames = []
    skipped = 0
    for (t, rel), pose in zip(entries, poses):
        if pose is None:
            skipped += 1
            continue
        if limit is not None and len(frames) >= limit:
            break
        f = load_depth_image(root / rel, intr, frame_index=len(frames))
        f.pose = pose
        frames.append(f)
    if skipped:
        log.warning("%d depth frames had no pose within %.3fs", skipped, window)
    return Dataset(intr, frames, skipped)


def write_dataset(root, frames: list[DepthFrame], depth_scale: float = 5000.0,
                  period: float = 0.1) -> None:
    root = Path(root)
    (root / "depth").mkdir(parents=True, exist_ok=True)
    listing = ["# timestamp filename"]
    traj = []
    for i, f in enumerate(frames):
        t = i * period
        rel = os.path.join("depth", f"{i:05d}.pgm")
        save_depth_image(root / rel, f, depth_scale)
        listing.append(f"{t:.6f} {rel}")
        traj.append((t, f.pose))
    (root / "depth.txt").write_text("\n".join(listing) + "\n")
    (root / "trajectory.txt").write_text(format_trajectory(traj))


# -- synthetic scenes ------------------------------------------------------------

@dataclass(frozen=True)
class BoxPrimitive:
    center: tuple[float, float, float]
    size: tuple[float, float, float]
    ident: int = 0

    @property
    def aabb(self) -> Aabb:
        c = np.asarray(self.center)
        h = 0.5 * np.asarray(self.size)
        return Aabb(tuple(c - h), tuple(c + h))


@dataclass(frozen=True)
class PlanePrimitive:
    """Points x with ``normal . x == offset``; normal is unit length."""

    normal: tuple[float, float, float]
    offset: float
    ident: int = 0


@dataclass
class SyntheticScene:
    primitives: list = field(default_factory=list)
    bounds: Aabb | None = None

    def __post_init__(self) -> None:
        if not self.primitives:
            return
        boxes = Aabb.empty()
        for p in self.primitives:
            if isinstance(p, BoxPrimitive):
                boxes = boxes.union(p.aabb)
        if self.bounds is None:
            self.bounds = boxes if not boxes.is_empty else None
        elif not self.bounds.contains(boxes):
            raise SceneError("scene bounds do not contain every box")

    def validate(self) -> None:
        if not self.primitives:
            raise SceneError("scene has no primitives")


def parse_scene(text: str, source: str = "<string>") -> SyntheticScene:
    prims: list = []
    bounds = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        parts = s.split()
        key, args = parts[0], parts[1:]
        try:
            vals = [float(a) for a in args]
        except ValueError:
            raise SceneError(f"{source}:{lineno}: non-numeric value") from None
        if key == "box" and len(vals) == 6:
            if min(vals[3:]) <= 0:
                raise SceneError(f"{source}:{lineno}: box sizes must be positive")
            prims.append(BoxPrimitive(tuple(vals[:3]), tuple(vals[3:]), len(prims)))
        elif key == "plane" and len(vals) == 4:
            n = np.asarray(vals[:3])
            norm = float(np.linalg.norm(n))
            if norm == 0:
                raise SceneError(f"{source}:{lineno}: zero plane normal")
            prims.append(PlanePrimitive(tuple(n / norm), vals[3] / norm, len(prims)))
        elif key == "bounds" and len(vals) == 6:
            bounds = Aabb(tuple(vals[:3]), tuple(vals[3:]))
        else:
            raise SceneError(f"{source}:{lineno}: cannot parse {s!r}")
    scene = SyntheticScene(prims, bounds)
    scene.validate()
    return scene


def load_scene(path) -> SyntheticScene:
    return parse_scene(Path(path).read_text(), str(path))


def format_scene(scene: SyntheticScene) -> str:
    lines = []
    if scene.bounds is not None:
        lines.append("bounds " + " ".join(repr(v) for v in scene.bounds.as_tuple()))
    for p in scene.primitives:
        if isinstance(p, BoxPrimitive):
            lines.append("box " + " ".join(repr(float(v)) for v in (*p.center, *p.size)))
        else:
            lines.append("plane " + " ".join(repr(float(v)) for v in (*p.normal, p.offset)))
    return "\n".join(lines) + "\n"


def render_synthetic(scene: SyntheticScene, pose: Pose, intr: CameraIntrinsics,
                     max_range: float = 10.0, frame_index: int = 0) -> DepthFrame:
    """Ray-cast z-depth; ray parameter along (x/z, y/z, 1) equals z-depth."""
    if not max_range > 0:
        raise ValueError("max_range must be positive")
    vs, us = np.mgrid[0:intr.height, 0:intr.width].astype(float)
    cam = np.stack([(us - intr.cx) / intr.fx, (vs - intr.cy) / intr.fy, np.ones_like(us)], -1)
    dirs = cam.reshape(-1, 3) @ pose.matrix.T
    o = pose.origin
    best = np.full(len(dirs), np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        for p in scene.primitives:
            if isinstance(p, PlanePrimitive):
                n = np.asarray(p.normal)
                denom = dirs @ n
                t = (p.offset - float(n @ o)) / denom
                t = np.where((denom != 0) & (t > 0), t, np.inf)
            else:
                box = p.aabb
                lo = (np.asarray(box.lo) - o) / dirs
                hi = (np.asarray(box.hi) - o) / dirs
                # axis-parallel rays outside a slab never enter it
                par = dirs == 0
                inside = (np.asarray(box.lo) <= o) & (o <= np.asarray(box.hi))
                t0 = np.where(par, np.where(inside, -np.inf, np.inf), np.minimum(lo, hi))
                t1 = np.where(par, np.where(inside, np.inf, -np.inf), np.maximum(lo, hi))
                tn = t0.max(axis=1)
                tf = t1.min(axis=1)
                hit = tn <= tf
                t = np.where(hit & (tn > 0), tn, np.where(hit & (tf > 0), tf, np.inf))
            best = np.minimum(best, t)
    depth = np.where(best <= max_range, best, 0.0)
    return DepthFrame(intr.width, intr.height, depth.reshape(intr.height, intr.width),
                      pose, frame_index)


# -- standard scenes and camera paths ----------------------------------------------

def look_pose(position, yaw: float, pitch: float = 0.0) -> Pose:
    """Camera at ``position`` looking along heading ``yaw`` (radians from +x),
    world z up; camera frame is x right, y down, z forward."""
    cp, sp = math.cos(pitch), math.sin(pitch)
    fwd = np.array([math.cos(yaw) * cp, math.sin(yaw) * cp, sp])
    right = np.array([math.sin(yaw), -math.cos(yaw), 0.0])
    down = np.cross(fwd, right)
    rot = np.stack([right, down, fwd], axis=1)
    return Pose.from_matrix(rot, position)


def box_room(size=(6.0, 5.0, 3.0), furniture: bool = True) -> SyntheticScene:
    """Four walls, floor and ceiling as planes, optionally with boxes inside."""
    sx, sy, sz = size
    prims: list = [
        PlanePrimitive((1.0, 0.0, 0.0), 0.0, 0), PlanePrimitive((1.0, 0.0, 0.0), sx, 1),
        PlanePrimitive((0.0, 1.0, 0.0), 0.0, 2), PlanePrimitive((0.0, 1.0, 0.0), sy, 3),
        PlanePrimitive((0.0, 0.0, 1.0), 0.0, 4), PlanePrimitive((0.0, 0.0, 1.0), sz, 5),
    ]
    if furniture:
        prims.append(BoxPrimitive((1.2, 1.0, 0.4), (0.8, 0.6, 0.8), 6))
        prims.append(BoxPrimitive((4.6, 3.8, 0.5), (1.0, 0.8, 1.0), 7))
        prims.append(BoxPrimitive((4.8, 1.2, 1.0), (0.4, 0.4, 2.0), 8))
    return SyntheticScene(prims, Aabb((0.0, 0.0, 0.0), size))


def orbit_poses(scene: SyntheticScene, n_frames: int, height: float | None = None,
                radius: float = 0.3) -> list[Pose]:
    """Camera turning a full circle near the scene centre."""
    b = scene.bounds or Aabb((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0))
    c = 0.5 * (np.asarray(b.lo) + np.asarray(b.hi))
    z = c[2] if height is None else height
    poses = []
    for i in range(n_frames):
        a = 2.0 * math.pi * i / n_frames
        pos = (c[0] + radius * math.cos(a), c[1] + radius * math.sin(a), z)
        poses.append(look_pose(pos, a + 0.25, pitch=-0.15 * math.cos(3 * a)))
    return poses


def render_sequence(scene: SyntheticScene, poses, intr: CameraIntrinsics,
                    max_range: float = 10.0) -> list[DepthFrame]:
    return [render_synthetic(scene, p, intr, max_range, i) for i, p in enumerate(poses)]
