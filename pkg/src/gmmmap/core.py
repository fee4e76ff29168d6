"""Geometric atoms of the map: weighted Gaussians, boxes, camera model.

All covariance inversions go through :func:`regularize` first, which adds
``EPS`` to the diagonal.  The scalar 3x3 helpers (``det3``, ``inv3_upper``)
are written out long-hand so the compiled kernels can mirror them
operation-for-operation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

EPS = 1e-6
DEFAULT_BBOX_K = 2.0
_INV_NORM3 = (2.0 * math.pi) ** -1.5


class Kind(enum.IntEnum):
    OCCUPIED = 0
    FREE = 1


class DegenerateCovarianceError(ValueError):
    pass


class KindMismatchError(ValueError):
    pass


def sym_from_upper(c6) -> np.ndarray:
    """Symmetric 3x3 from (xx, xy, xz, yy, yz, zz)."""
    xx, xy, xz, yy, yz, zz = (float(v) for v in c6)
    return np.array([[xx, xy, xz], [xy, yy, yz], [xz, yz, zz]])


def upper_of(cov) -> tuple[float, float, float, float, float, float]:
    c = np.asarray(cov, dtype=float)
    return (float(c[0, 0]), float(c[0, 1]), float(c[0, 2]),
            float(c[1, 1]), float(c[1, 2]), float(c[2, 2]))


@dataclass(eq=False)
class Gaussian3:
    """One weighted 3D Gaussian.

    The covariance is kept as its upper triangle and mirrored on
    construction, so ``cov[i, j] == cov[j, i]`` holds bit-exactly.
    """

    kind: Kind
    weight: float
    mean: np.ndarray
    cov: np.ndarray
    id: int = 0

    def __post_init__(self) -> None:
        self.kind = Kind(self.kind)
        self.weight = float(self.weight)
        if not self.weight >= 0.0:
            raise ValueError(f"weight must be nonnegative, got {self.weight}")
        self.mean = np.array(self.mean, dtype=float).reshape(3)
        cov = np.asarray(self.cov, dtype=float)
        self.cov = sym_from_upper(upper_of(cov.reshape(3, 3)))

    @property
    def cov6(self) -> tuple[float, float, float, float, float, float]:
        return upper_of(self.cov)

    def copy(self, **changes) -> "Gaussian3":
        g = replace(self, mean=self.mean.copy(), cov=self.cov.copy())
        for k, v in changes.items():
            setattr(g, k, v)
        g.__post_init__()
        return g

    def same_values(self, other: "Gaussian3") -> bool:
        """Bit-exact field equality, ignoring ``id``."""
        return (self.kind == other.kind
                and self.weight == other.weight
                and np.array_equal(self.mean, other.mean)
                and np.array_equal(self.cov, other.cov))


@dataclass(frozen=True)
class Aabb:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self) -> None:
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if not self.is_empty and any(l > h for l, h in zip(lo, hi)):
            raise ValueError(f"inverted box lo={lo} hi={hi}")

    @classmethod
    def empty(cls) -> "Aabb":
        inf = math.inf
        return cls((inf, inf, inf), (-inf, -inf, -inf))

    @classmethod
    def point(cls, x) -> "Aabb":
        p = tuple(float(v) for v in x)
        return cls(p, p)

    @classmethod
    def enclosing(cls, points) -> "Aabb":
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        if len(pts) == 0:
            return cls.empty()
        return cls(tuple(pts.min(axis=0)), tuple(pts.max(axis=0)))

    @property
    def is_empty(self) -> bool:
        return self.lo[0] == math.inf

    def as_tuple(self) -> tuple[float, ...]:
        return self.lo + self.hi

    def intersects(self, other: "Aabb") -> bool:
        if self.is_empty or other.is_empty:
            return False
        return all(a <= d and c <= b for a, b, c, d in
                   zip(self.lo, self.hi, other.lo, other.hi))

    def contains_point(self, x) -> bool:
        if self.is_empty:
            return False
        return all(l <= float(v) <= h for l, v, h in zip(self.lo, x, self.hi))

    def contains(self, other: "Aabb") -> bool:
        if other.is_empty:
            return True
        if self.is_empty:
            return False
        return all(a <= c and d <= b for a, b, c, d in
                   zip(self.lo, self.hi, other.lo, other.hi))

    def union(self, other: "Aabb") -> "Aabb":
        if self.is_empty:
            return other
        if other.is_empty:
            return self
        return Aabb(tuple(map(min, self.lo, other.lo)), tuple(map(max, self.hi, other.hi)))


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    depth_scale: float = 5000.0

    def __post_init__(self) -> None:
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside the image")
        if not self.depth_scale > 0:
            raise ValueError("depth_scale must be positive")

    @classmethod
    def default(cls, width: int = 160, height: int = 120) -> "CameraIntrinsics":
        f = 0.75 * width
        return cls(fx=f, fy=f, cx=width / 2.0, cy=height / 2.0, width=width, height=height)


def quat_to_matrix(w: float, x: float, y: float, z: float) -> np.ndarray:
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


@dataclass(frozen=True)
class Pose:
    """Camera-to-world transform; quaternion is (w, x, y, z)."""

    rotation: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)
    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        q = tuple(float(v) for v in self.rotation)
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", tuple(float(v) for v in self.translation))
        if abs(math.sqrt(sum(v * v for v in q)) - 1.0) > 1e-6:
            raise ValueError(f"quaternion not unit length: {q}")

    @classmethod
    def from_matrix(cls, rot, translation) -> "Pose":
        from scipy.spatial.transform import Rotation

        x, y, z, w = Rotation.from_matrix(np.asarray(rot, dtype=float)).as_quat()
        n = math.sqrt(w * w + x * x + y * y + z * z)
        return cls((w / n, x / n, y / n, z / n), tuple(translation))

    @property
    def matrix(self) -> np.ndarray:
        return quat_to_matrix(*self.rotation)

    @property
    def origin(self) -> np.ndarray:
        return np.array(self.translation)

    def transform(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return pts @ self.matrix.T + self.origin


def unproject(intr: CameraIntrinsics, pose: Pose, u: float, v: float, d: float) -> np.ndarray:
    if not d > 0:
        raise ValueError(f"invalid depth {d}")
    p = np.array([(u - intr.cx) * d / intr.fx, (v - intr.cy) * d / intr.fy, d])
    return pose.matrix @ p + pose.origin


def unproject_many(intr: CameraIntrinsics, pose: Pose, u, v, d) -> np.ndarray:
    """Vectorised :func:`unproject`; no depth validation."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    d = np.asarray(d, dtype=float)
    cam = np.stack([(u - intr.cx) * d / intr.fx, (v - intr.cy) * d / intr.fy, d], axis=-1)
    return cam @ pose.matrix.T + pose.origin


# -- scalar 3x3 helpers ------------------------------------------------------

def det3(c6) -> float:
    xx, xy, xz, yy, yz, zz = c6
    return (xx * (yy * zz - yz * yz)
            - xy * (xy * zz - yz * xz)
            + xz * (xy * yz - yy * xz))


def inv3_upper(c6, det: float) -> tuple[float, ...]:
    xx, xy, xz, yy, yz, zz = c6
    return ((yy * zz - yz * yz) / det,
            (xz * yz - xy * zz) / det,
            (xy * yz - xz * yy) / det,
            (xx * zz - xz * xz) / det,
            (xy * xz - xx * yz) / det,
            (xx * yy - xy * xy) / det)


def regularize(c6, eps: float = EPS) -> tuple[float, ...]:
    xx, xy, xz, yy, yz, zz = c6
    return (xx + eps, xy, xz, yy + eps, yz, zz + eps)


def _is_pd(c6) -> bool:
    xx, xy, _, yy, _, _ = c6
    return xx > 0.0 and xx * yy - xy * xy > 0.0 and det3(c6) > 0.0


def pdf_params(mean, c6) -> tuple[tuple[float, ...], float]:
    """Precision (upper triangle) and normaliser of the regularised Gaussian."""
    r = regularize(c6)
    if not _is_pd(r):
        raise DegenerateCovarianceError("degenerate covariance")
    det = det3(r)
    return inv3_upper(r, det), _INV_NORM3 / math.sqrt(det)


def mahalanobis_sq(p6, dx: float, dy: float, dz: float) -> float:
    pxx, pxy, pxz, pyy, pyz, pzz = p6
    return (dx * (pxx * dx + pxy * dy + pxz * dz)
            + dy * (pxy * dx + pyy * dy + pyz * dz)
            + dz * (pxz * dx + pyz * dy + pzz * dz))


def gaussian_pdf(g: Gaussian3, x) -> float:
    prec, norm = pdf_params(g.mean, g.cov6)
    dx, dy, dz = (float(a) - float(b) for a, b in zip(x, g.mean))
    return norm * math.exp(-0.5 * mahalanobis_sq(prec, dx, dy, dz))


def moment_merge(a: Gaussian3, b: Gaussian3) -> Gaussian3:
    if a.kind != b.kind:
        raise KindMismatchError("cannot merge occupied with free")
    w = a.weight + b.weight
    if not w > 0:
        raise ValueError("merged weight must be positive")
    mu = (a.weight * a.mean + b.weight * b.mean) / w
    second = (a.weight * (a.cov + np.outer(a.mean, a.mean))
              + b.weight * (b.cov + np.outer(b.mean, b.mean))) / w
    cov = second - np.outer(mu, mu)
    cov = 0.5 * (cov + cov.T)
    return Gaussian3(a.kind, w, mu, cov, a.id)


def bbox_tuple(mean, c6, k: float = DEFAULT_BBOX_K, eps: float = EPS) -> tuple[float, ...]:
    mx, my, mz = (float(v) for v in mean)
    hx = k * math.sqrt(c6[0] + eps)
    hy = k * math.sqrt(c6[3] + eps)
    hz = k * math.sqrt(c6[5] + eps)
    return (mx - hx, my - hy, mz - hz, mx + hx, my + hy, mz + hz)


def bbox_of(g: Gaussian3, k: float = DEFAULT_BBOX_K) -> Aabb:
    if not k > 0:
        raise ValueError("k must be positive")
    t = bbox_tuple(g.mean, g.cov6, k)
    return Aabb(t[:3], t[3:])


def hellinger_sq_params(ma, ca, mb, cb) -> float:
    """Squared Hellinger distance between two regularised Gaussians."""
    ra = regularize(ca)
    rb = regularize(cb)
    rm = tuple(0.5 * (p + q) for p, q in zip(ra, rb))
    det_a = det3(ra)
    det_b = det3(rb)
    det_m = det3(rm)
    if det_a <= 0.0 or det_b <= 0.0 or det_m <= 0.0:
        raise DegenerateCovarianceError("degenerate covariance")
    pm = inv3_upper(rm, det_m)
    dx = ma[0] - mb[0]
    dy = ma[1] - mb[1]
    dz = ma[2] - mb[2]
    coef = (det_a ** 0.25) * (det_b ** 0.25) / math.sqrt(det_m)
    h2 = 1.0 - coef * math.exp(-0.125 * mahalanobis_sq(pm, dx, dy, dz))
    return min(1.0, max(0.0, h2))


def hellinger_sq(a: Gaussian3, b: Gaussian3) -> float:
    return hellinger_sq_params(tuple(a.mean.tolist()), a.cov6, tuple(b.mean.tolist()), b.cov6)
