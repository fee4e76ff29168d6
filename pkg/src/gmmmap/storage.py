"""Binary map files.

Layout, little-endian::

    header   32 B   magic "GMM1", version u16, flags u16 (bit 0: quantized),
                    count u64, bbox scale f32, 12 reserved bytes
    records         44 B full precision | 34 B quantized, ascending id order
    crc32     4 B   over everything before it

A quantized record packs kind (1 bit) and four 19-bit fields (weight,
mean x/y/z) MSB-first into 10 bytes, followed by six f32 covariance
entries (upper triangle, row-major).
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .core import Gaussian3, Kind, sym_from_upper
from .fusion import GaussianMap
from .quantize import QuantConfig, decode19, encode19

MAGIC = b"GMM1"
VERSION = 1
FLAG_QUANTIZED = 0x1
HEADER = struct.Struct("<4sHHQf12s")
FULL_RECORD = struct.Struct("<B3xf3f6f")
COV = struct.Struct("<6f")
PACKED_BYTES = 10
QUANT_RECORD_SIZE = PACKED_BYTES + COV.size
CRC_SIZE = 4

assert HEADER.size == 32 and FULL_RECORD.size == 44 and QUANT_RECORD_SIZE == 34


class MapFormatError(ValueError):
    pass


class BadMagicError(MapFormatError):
    pass


class VersionMismatchError(MapFormatError):
    pass


class TruncatedMapError(MapFormatError):
    pass


class ChecksumError(MapFormatError):
    pass


def record_size(quantized: bool) -> int:
    return QUANT_RECORD_SIZE if quantized else FULL_RECORD.size


def map_size_bytes(gmap: GaussianMap) -> int:
    return HEADER.size + len(gmap) * record_size(gmap.quant.enabled) + CRC_SIZE


def _pack_quantized(g: Gaussian3) -> bytes:
    bits = int(g.kind) & 1
    for v in (g.weight, *g.mean):
        bits = (bits << 19) | encode19(v)
    return (bits << 3).to_bytes(PACKED_BYTES, "big") + COV.pack(*g.cov6)


def _unpack_quantized(buf: bytes, off: int) -> Gaussian3:
    bits = int.from_bytes(buf[off:off + PACKED_BYTES], "big") >> 3
    fields = []
    for _ in range(4):
        fields.append(decode19(bits & 0x7FFFF))
        bits >>= 19
    mz, my, mx, w = fields
    cov = COV.unpack_from(buf, off + PACKED_BYTES)
    return Gaussian3(Kind(bits & 1), w, (mx, my, mz), sym_from_upper(cov))


def serialize_map(gmap: GaussianMap) -> bytes:
    q = gmap.quant.enabled
    parts = [HEADER.pack(MAGIC, VERSION, FLAG_QUANTIZED if q else 0, len(gmap),
                         gmap.k, b"\0" * 12)]
    for g in gmap.gaussians():
        if q:
            parts.append(_pack_quantized(g))
        else:
            parts.append(FULL_RECORD.pack(int(g.kind), g.weight, *g.mean.tolist(), *g.cov6))
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def deserialize_map(buf: bytes, node_max: int = 8) -> GaussianMap:
    if len(buf) < HEADER.size + CRC_SIZE:
        raise TruncatedMapError(f"file is {len(buf)} bytes, shorter than header + checksum")
    magic, version, flags, count, k, _ = HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise VersionMismatchError(f"format version {version}, this reader handles {VERSION}")
    quantized = bool(flags & FLAG_QUANTIZED)
    expected = HEADER.size + count * record_size(quantized) + CRC_SIZE
    if len(buf) != expected:
        raise TruncatedMapError(f"file is {len(buf)} bytes, header implies {expected}")
    (crc,) = struct.unpack_from("<I", buf, len(buf) - CRC_SIZE)
    if zlib.crc32(buf[:-CRC_SIZE]) != crc:
        raise ChecksumError("CRC-32 mismatch")
    gmap = GaussianMap(k=k, quant=QuantConfig(enabled=quantized), node_max=node_max)
    off = HEADER.size
    rs = record_size(quantized)
    for i in range(count):
        if quantized:
            g = _unpack_quantized(buf, off)
        else:
            kind, w, mx, my, mz, *cov = FULL_RECORD.unpack_from(buf, off)
            if kind not in (0, 1):
                raise MapFormatError(f"record {i}: bad kind byte {kind}")
            g = Gaussian3(Kind(kind), w, (mx, my, mz), sym_from_upper(cov))
        gmap.add(g, ident=i + 1)
        off += rs
    return gmap


def save_map(gmap: GaussianMap, path) -> int:
    data = serialize_map(gmap)
    Path(path).write_bytes(data)
    return len(data)


def load_map(path, node_max: int = 8) -> GaussianMap:
    return deserialize_map(Path(path).read_bytes(), node_max)
