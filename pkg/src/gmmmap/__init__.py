"""Gaussian mixture occupancy maps: construction from posed depth images,
R-tree indexed storage, and single or batched occupancy queries."""

from ._accel import BACKEND
from .core import (EPS, Aabb, CameraIntrinsics, Gaussian3, Kind, Pose, bbox_of, gaussian_pdf,
                   hellinger_sq, moment_merge, unproject)
from .fusion import BuildParams, GaussianMap, construct_frame, fuse_local
from .quantize import QuantConfig, quantize_gaussian
from .query import BatchConfig, QueryResult, query_batch, query_single, query_trajectory, regress
from .segmentation import SegParams, SlopeMode
from .free_space import FgbgMode
from .storage import load_map, map_size_bytes, save_map

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "EPS", "Aabb", "CameraIntrinsics", "Gaussian3", "Kind", "Pose", "bbox_of",
    "gaussian_pdf", "hellinger_sq", "moment_merge", "unproject", "BuildParams", "GaussianMap",
    "construct_frame", "fuse_local", "QuantConfig", "quantize_gaussian", "BatchConfig",
    "QueryResult", "query_batch", "query_single", "query_trajectory", "regress", "SegParams",
    "SlopeMode", "FgbgMode", "load_map", "map_size_bytes", "save_map",
]
