"""Quantizers feeding the emulated matmul paths, plus the smoothing transform.

The score matmul consumes symmetric signed integers (8- or 4-bit) with one
scale per tile: ``scale = max|X| / qmax`` with ``qmax = 127`` or ``7``.  The
value matmul consumes E4M3 codes with configurable target ranges: the
exponentiated score tile gets one scale ``max|P| / p_r`` per tile, the value
tile one scale per channel ``colmax|V| / v_r``.  Shrinking ``p_r * v_r``
keeps the FP16 accumulator of the fast matmul instruction in range;
:class:`RangeConfig` enforces the exact bound.

All-zero tiles (or channels) take the sentinel scale 1.0 with all-zero
codes, which round-trips losslessly and avoids dividing by zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics
from .mma import MMA_K_GROUP

#: Largest safe |p| * |v| product for one k-group in the FP16 accumulator:
#: 32 products of that magnitude sum to at most 65504.
RANGE_PRODUCT_LIMIT = numerics.FP16_MAX / MMA_K_GROUP  # 2047.0


class RangeConfigError(ValueError):
    """The requested quantization ranges can overflow the FP16 accumulator."""


@dataclass(frozen=True)
class RangeConfig:
    """Target magnitudes for quantized score/value codes.

    ``buffering_depth=2`` combines two consecutive k-group sums in FP16
    before converting to FP32, so the safe range product halves.  Set
    ``expect_overflow=True`` to deliberately run an unsafe pair (overflow
    events are then counted, not prevented); the FP32-accumulator
    baseline also uses this waiver since it has no FP16 range to protect.
    """

    p_r: float
    v_r: float
    buffering_depth: int = 2
    expect_overflow: bool = False

    def __post_init__(self):
        if self.p_r <= 0 or self.v_r <= 0:
            raise RangeConfigError("p_r and v_r must be positive")
        if self.buffering_depth not in (1, 2):
            raise RangeConfigError(
                f"buffering_depth must be 1 or 2, got {self.buffering_depth}"
            )
        if not self.expect_overflow and self.product > self.bound:
            raise RangeConfigError(
                f"p_r*v_r = {self.product:g} > {self.bound:g} "
                f"(FP16 accumulator bound at buffering depth {self.buffering_depth})"
            )

    @property
    def product(self) -> float:
        return self.p_r * self.v_r

    @property
    def bound(self) -> float:
        return RANGE_PRODUCT_LIMIT / self.buffering_depth


@dataclass
class IntQuantBlock:
    """Symmetric signed-integer tile: ``values ~= codes * scale``."""

    codes: np.ndarray
    scale: float
    bits: int

    def dequantize(self) -> np.ndarray:
        return self.codes * self.scale


@dataclass
class Fp8QuantBlock:
    """E4M3 tile with a single scale (the exponentiated score path)."""

    codes: np.ndarray
    scale: float

    def dequantize(self) -> np.ndarray:
        return numerics.e4m3_decode(self.codes) * self.scale


@dataclass
class Fp8ChannelQuantBlock:
    """E4M3 tile with one scale per channel (column), the value path."""

    codes: np.ndarray
    scales: np.ndarray

    def dequantize(self) -> np.ndarray:
        return numerics.e4m3_decode(self.codes) * self.scales


@dataclass
class SmoothingState:
    """Per-channel means removed from the query/key tensors."""

    q_mean: np.ndarray
    k_mean: np.ndarray

    def __post_init__(self):
        if np.shape(self.q_mean) != np.shape(self.k_mean):
            raise ValueError("q_mean and k_mean must share the head dimension")


def _finite_f64(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def smooth_k(k) -> tuple[np.ndarray, np.ndarray]:
    """Subtract the per-channel mean of K over tokens.

    The removed mean shifts every score row by a constant (Q . k_mean),
    which softmax ignores, so no compensation term is needed downstream.
    """
    k = _finite_f64(k, "K")
    if k.ndim != 2:
        raise ValueError("K must be 2-D (tokens x dim)")
    k_mean = k.mean(axis=0)
    return k - k_mean, k_mean


def smooth_q(q) -> tuple[np.ndarray, np.ndarray]:
    """Subtract the per-channel mean of Q over tokens.

    Unlike the key mean, the removed query mean changes softmax, so the
    attention engine must add the compensation row q_mean . K^T back onto
    the scores in full precision before exponentiation.
    """
    q = _finite_f64(q, "Q")
    if q.ndim != 2:
        raise ValueError("Q must be 2-D (tokens x dim)")
    q_mean = q.mean(axis=0)
    return q - q_mean, q_mean


def quantize_int_block(x, bits: int = 8) -> IntQuantBlock:
    """Symmetric per-tile integer quantization with RNE code rounding."""
    if bits not in (4, 8):
        raise ValueError(f"bits must be 4 or 8, got {bits}")
    x = _finite_f64(x, "X")
    qmax = 2 ** (bits - 1) - 1
    peak = float(np.max(np.abs(x))) if x.size else 0.0
    scale = peak / qmax if peak > 0.0 else 1.0
    codes = np.clip(np.round(x / scale), -qmax, qmax).astype(np.int32)
    return IntQuantBlock(codes, scale, bits)


def quantize_p_block(p, p_r: float) -> Fp8QuantBlock:
    """One scale per tile: codes decode into [-p_r, p_r].

    The exponentiated score tile is nonnegative with max 1 in normal use,
    but the quantizer accepts any finite sign via the absolute maximum.
    """
    if p_r <= 0:
        raise ValueError("p_r must be positive")
    p = _finite_f64(p, "P")
    peak = float(np.max(np.abs(p))) if p.size else 0.0
    scale = peak / p_r if peak > 0.0 else 1.0
    codes = numerics.e4m3_encode(p / scale)
    return Fp8QuantBlock(np.asarray(codes, dtype=np.uint8), scale)


def quantize_v_per_channel(v, v_r: float) -> Fp8ChannelQuantBlock:
    """One scale per column: codes in column j decode into [-v_r, v_r]."""
    if v_r <= 0:
        raise ValueError("v_r must be positive")
    v = _finite_f64(v, "V")
    if v.ndim != 2:
        raise ValueError("V must be 2-D (tokens x dim)")
    peaks = np.max(np.abs(v), axis=0) if v.shape[0] else np.zeros(v.shape[1])
    scales = np.where(peaks > 0.0, peaks / v_r, 1.0)
    codes = numerics.e4m3_encode(v / scales)
    return Fp8ChannelQuantBlock(np.asarray(codes, dtype=np.uint8), scales)


def dequantize(block) -> np.ndarray:
    """codes x scale(s), broadcast per channel where applicable."""
    if isinstance(block, (IntQuantBlock, Fp8QuantBlock, Fp8ChannelQuantBlock)):
        return block.dequantize()
    raise TypeError(f"not a quantized block: {type(block).__name__}")
