"""Run configuration: every tunable in one flat, file-loadable record."""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Mapping

from .core import DEFAULT_BBOX_K, CameraIntrinsics
from .free_space import FgbgMode
from .fusion import BuildParams
from .quantize import QuantConfig
from .segmentation import SegParams, SlopeMode


class ConfigError(ValueError):
    pass


_SECTION = "run"


@dataclass(frozen=True)
class RunConfig:
    # segmentation
    tau_depth: float = 0.05
    tau_rel: float = 0.02
    tau_slope: float = 0.1
    tau_seg_fuse: float = 0.1
    n_min: int = 8
    slope_mode: str = SlopeMode.DELAYED4.value
    # free space
    fgbg_mode: str = FgbgMode.DIRECT.value
    r_count: int = 5
    k_intervals: int = 4
    stride: int = 16
    margin: float = 0.2
    tau_refine: float = 0.6
    # map
    k: float = DEFAULT_BBOX_K
    tau_fuse: float = 0.4
    node_max: int = 8
    quant: bool = False
    # query
    batch_size: int = 16
    prior: float = 1e-6
    # evaluation
    per_ray: int = 1
    surface_delta: float = 0.2
    eval_stride: int = 4
    cache_bytes: int = 45056
    cache_line: int = 64
    seed: int = 0
    # sensor and input
    width: int = 160
    height: int = 120
    # 0 selects the centred default for the resolution
    fx: float = 0.0
    fy: float = 0.0
    cx: float = 0.0
    cy: float = 0.0
    depth_scale: float = 5000.0
    assoc_window: float = 0.02
    frames: int = 20

    def __post_init__(self) -> None:
        try:
            SlopeMode(self.slope_mode)
            FgbgMode(self.fgbg_mode)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        positive = ("tau_depth", "tau_rel", "tau_slope", "tau_seg_fuse", "margin", "k",
                    "prior", "surface_delta", "assoc_window", "depth_scale")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        at_least_one = ("r_count", "k_intervals", "stride", "batch_size", "per_ray",
                        "eval_stride", "width", "height", "frames")
        for name in at_least_one:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("tau_refine", "tau_fuse"):
            if not 0 < getattr(self, name) < 1:
                raise ConfigError(f"{name} must lie in (0, 1)")
        if self.node_max < 4:
            raise ConfigError("node_max must be >= 4")
        if self.n_min < 3:
            raise ConfigError("n_min must be >= 3")
        if self.cache_line < 1 or self.cache_bytes < self.cache_line:
            raise ConfigError("cache must hold at least one line")

    # -- conversion --------------------------------------------------------------

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_mapping(cls, values: Mapping[str, object], base: "RunConfig | None" = None) -> "RunConfig":
        base = base or cls()
        types = {f.name: f.type for f in fields(cls)}
        out = {}
        for key, raw in values.items():
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            out[key] = _coerce(key, types[key], raw)
        try:
            return dataclasses.replace(base, **out)
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from None

    @classmethod
    def from_text(cls, text: str, base: "RunConfig | None" = None) -> "RunConfig":
        parser = configparser.ConfigParser(comment_prefixes=("#",), inline_comment_prefixes=("#",),
                                           delimiters=("=",), interpolation=None)
        parser.optionxform = str
        try:
            parser.read_string(f"[{_SECTION}]\n{text}")
        except configparser.Error as e:
            raise ConfigError(f"malformed config: {e}".splitlines()[0]) from None
        return cls.from_mapping(dict(parser[_SECTION]), base)

    @classmethod
    def load(cls, path, base: "RunConfig | None" = None) -> "RunConfig":
        return cls.from_text(Path(path).read_text(), base)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    # -- module parameter objects --------------------------------------------------

    def seg_params(self) -> SegParams:
        return SegParams(self.tau_depth, self.tau_rel, self.tau_slope, self.tau_seg_fuse,
                         self.n_min, SlopeMode(self.slope_mode))

    def build_params(self) -> BuildParams:
        return BuildParams(self.seg_params(), FgbgMode(self.fgbg_mode), self.r_count,
                           self.k_intervals, self.stride, self.margin, self.tau_refine,
                           self.tau_fuse)

    def quant_config(self) -> QuantConfig:
        return QuantConfig(enabled=self.quant)

    def intrinsics(self) -> CameraIntrinsics:
        d = CameraIntrinsics.default(self.width, self.height)
        return CameraIntrinsics(fx=self.fx or d.fx, fy=self.fy or d.fy,
                                cx=self.cx or d.cx, cy=self.cy or d.cy,
                                width=self.width, height=self.height,
                                depth_scale=self.depth_scale)


def _coerce(key: str, typ, raw):
    if not isinstance(raw, str):
        return raw
    s = raw.strip()
    try:
        if typ in (bool, "bool"):
            low = s.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(s)
        if typ in (int, "int"):
            return int(s)
        if typ in (float, "float"):
            return float(s)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return s
