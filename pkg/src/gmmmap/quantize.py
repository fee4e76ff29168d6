"""Reduced-precision storage for Gaussian means and weights.

A 19-bit float keeps the binary32 layout (sign, 8-bit exponent with bias
127) but only the top 10 mantissa bits, so every representable value is
also an exact binary32 whose low 13 mantissa bits are zero.  Encoding is
therefore ``float32_bits >> 13`` once the value has been rounded.
Covariances are never touched.
"""

from __future__ import annotations

import math
import struct
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .core import Gaussian3

SIGN_BITS = 1
EXPONENT_BITS = 8
MANTISSA_BITS = 10
TOTAL_BITS = SIGN_BITS + EXPONENT_BITS + MANTISSA_BITS
_BIAS = 127
_MIN_EXP = 1 - _BIAS
MAX_FINITE = (2.0 - 2.0 ** -MANTISSA_BITS) * 2.0 ** _BIAS
_DROP = 23 - MANTISSA_BITS


@dataclass(frozen=True)
class QuantConfig:
    enabled: bool = False
    sign_bits: int = SIGN_BITS
    exponent_bits: int = EXPONENT_BITS
    mantissa_bits: int = MANTISSA_BITS
    applies_to: frozenset = frozenset({"mean", "weight"})

    def __post_init__(self) -> None:
        if (self.sign_bits, self.exponent_bits, self.mantissa_bits) != (1, 8, 10):
            raise ValueError("only the 1/8/10 19-bit layout is supported")
        if self.applies_to != frozenset({"mean", "weight"}):
            raise ValueError("quantization applies to means and weights only")


def quantize_value(v: float) -> tuple[float, bool]:
    """Round to the nearest 19-bit value (ties to even).

    Returns ``(value, saturated)``; out-of-range magnitudes clamp to the
    largest finite value.
    """
    v = float(v)
    if not math.isfinite(v):
        raise ValueError(f"cannot quantize non-finite value {v}")
    if v == 0.0:
        return v, False
    a = abs(v)
    exp = max(math.frexp(a)[1] - 1, _MIN_EXP)
    ulp = math.ldexp(1.0, exp - MANTISSA_BITS)
    # a / ulp is exact (power-of-two scale); round() is half-to-even
    q = round(a / ulp) * ulp
    saturated = q > MAX_FINITE
    if saturated:
        q = MAX_FINITE
    return math.copysign(q, v), saturated


def quantize_array(values) -> np.ndarray:
    return np.array([quantize_value(v)[0] for v in np.ravel(values)]).reshape(np.shape(values))


def encode19(v: float) -> int:
    """Bit pattern of an already-quantized value."""
    bits = struct.unpack("<I", struct.pack("<f", v))[0]
    if bits & ((1 << _DROP) - 1):
        raise ValueError(f"{v!r} is not a 19-bit value")
    return bits >> _DROP


def decode19(bits: int) -> float:
    return struct.unpack("<f", struct.pack("<I", (bits & 0x7FFFF) << _DROP))[0]


def quantize_gaussian(g: Gaussian3, q: QuantConfig, counters: Counter | None = None) -> Gaussian3:
    if not q.enabled:
        raise ValueError("quantization is disabled in this config")
    w, sat_w = quantize_value(g.weight)
    mean = []
    saturations = int(sat_w)
    for c in g.mean:
        v, s = quantize_value(c)
        mean.append(v)
        saturations += int(s)
    if counters is not None and saturations:
        counters["quant_saturations"] += saturations
    return Gaussian3(g.kind, w, mean, g.cov, g.id)


def is_quantized(g: Gaussian3) -> bool:
    return all(quantize_value(v)[0] == v for v in (g.weight, *g.mean))
