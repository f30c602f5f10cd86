"""Numerical contracts of the matmul instructions, emulated on the CPU.

Three instruction paths are modeled:

``int8``
    INT8 x INT8 -> INT32.  Integer dot products are exact (worst case
    127 * 127 * 256 fits comfortably), so this path has no rounding or
    overflow behavior worth emulating beyond doing the arithmetic.
``fp8_fp32acc``
    FP8 x FP8 -> FP32.  The slower, safe instruction: every product is
    exact (two 4-bit significands need at most 8 bits) and is folded into
    a float32 running sum with one RNE rounding per addition.
``fp8_fp16acc``
    FP8 x FP8 -> FP16, the fast path this project exists to study.  (On
    consumer tensor cores the FP32-accumulated FP8 matmul runs about 2x
    the FP16-input rate and the FP16-accumulated one about 4x, which is
    the whole motivation for tolerating the narrower accumulator.)  The
    contraction dimension is processed in groups of 32 products (the
    instruction's k extent).  Within a group each exact product is added
    to an FP16 running sum, sequentially in index order, with RNE
    rounding after every addition.  A group's FP16 result is then
    converted to FP32 and added into an FP32 accumulator.  With
    ``buffering_depth=2`` two consecutive group sums are first combined
    in FP16 and converted once, halving the FP16->FP32 conversion count
    at the cost of doubling the magnitude the FP16 register must hold.

Overflow of the FP16 accumulator is counted and saturated to +-65504
rather than raised, so sweeps can measure how often a configuration
fails.  Real tensor cores may reduce within a group in a different order
or with wider intermediates; the strictly sequential RNE model used here
is the conservative choice, and it is what makes the range-product bound
enforced by :class:`lpattn.quantization.RangeConfig` exactly the right
safety condition.

All ``...`` leading axes are broadcast batch dimensions; results are
bit-identical to evaluating each output element with the scalar dot
operation, regardless of internal vectorization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .numerics import FP16_MAX, OverflowFlag, e4m3_decode

MMA_K_GROUP = 32

GEMM_PATHS = ("int8", "fp8_fp16acc", "fp8_fp32acc")


@dataclass(frozen=True)
class MmaShape:
    """k extent of one emulated matmul instruction (m16n8k32: 32)."""

    k_group: int = MMA_K_GROUP

    def __post_init__(self):
        if self.k_group != MMA_K_GROUP:
            raise ValueError(
                f"only the k={MMA_K_GROUP} instruction is emulated, got {self.k_group}"
            )


@dataclass
class DotReport:
    """Result and bookkeeping of one emulated dot product or matmul.

    ``value`` is the final FP32 result for scalar dots and None for
    matmuls (whose result matrix is returned separately).  Counts are per
    output element: one mma invocation per k-group, one FP16->FP32
    conversion per group at depth 1 and per group pair at depth 2.
    """

    value: Optional[float]
    overflow: OverflowFlag
    fp16_to_fp32_conversions: int
    mma_invocations: int

    def merge(self, other: "DotReport") -> None:
        self.value = None
        self.overflow.merge(other.overflow)
        self.fp16_to_fp32_conversions += other.fp16_to_fp32_conversions
        self.mma_invocations += other.mma_invocations


def _check_depth(buffering_depth: int) -> None:
    if buffering_depth not in (1, 2):
        raise ValueError(f"buffering_depth must be 1 or 2, got {buffering_depth}")


def _decode_codes(codes, name: str) -> np.ndarray:
    values = e4m3_decode(np.asarray(codes, dtype=np.uint8))
    values = np.atleast_1d(np.asarray(values))
    if np.isnan(values).any():
        raise ValueError(f"{name} contains E4M3 NaN codes")
    return values


def _round_into_fp16(dst16: np.ndarray, exact: np.ndarray) -> int:
    """RNE-round exact float64 sums into an FP16 buffer, saturating.

    Returns the number of entries that overflowed (rounded to +-inf and
    were clamped to +-65504).
    """
    np.copyto(dst16, exact, casting="unsafe")
    overflowed = np.isinf(dst16)
    if not overflowed.any():
        return 0
    np.copyto(dst16, np.copysign(np.float16(FP16_MAX), dst16), where=overflowed)
    return int(np.count_nonzero(overflowed))


def _fp16_group_accumulate(
    fill_product: Callable[[np.ndarray, int], None],
    k_len: int,
    out_shape: tuple[int, ...],
    buffering_depth: int,
) -> tuple[np.ndarray, int, int, int]:
    """Core FP16-accumulator loop shared by the dot and matmul entry points.

    ``fill_product(buf, k)`` must write the exact k-th products into the
    float64 buffer.  Returns (fp32 totals, overflow events, conversion
    count, invocation count).  Mixed-precision numpy adds keep every
    pre-rounding sum exact: FP16 accumulator values and E4M3 product
    values are both dyadics that float64 represents without error.
    """
    if k_len % MMA_K_GROUP != 0:
        raise ValueError(f"contraction length {k_len} is not a multiple of {MMA_K_GROUP}")
    n_groups = k_len // MMA_K_GROUP
    n_out = int(np.prod(out_shape, dtype=np.int64)) if out_shape else 1

    acc = np.zeros(out_shape, dtype=np.float32)
    partial = np.empty(out_shape, dtype=np.float16)
    pending = np.empty(out_shape, dtype=np.float16)
    product = np.empty(out_shape, dtype=np.float64)
    exact = np.empty(out_shape, dtype=np.float64)
    overflow_events = 0
    conversions = 0
    have_pending = False
    with np.errstate(over="ignore"):
        for g in range(n_groups):
            partial[...] = 0
            base = g * MMA_K_GROUP
            for t in range(MMA_K_GROUP):
                fill_product(product, base + t)
                np.add(partial, product, out=exact)
                overflow_events += _round_into_fp16(partial, exact)
            if buffering_depth == 1:
                np.add(acc, partial, out=acc)
                conversions += n_out
            elif not have_pending:
                pending, partial = partial, pending
                have_pending = True
            else:
                np.add(pending, partial, out=exact)
                overflow_events += _round_into_fp16(pending, exact)
                np.add(acc, pending, out=acc)
                conversions += n_out
                have_pending = False
        if have_pending:  # odd group count: last group converts alone
            np.add(acc, pending, out=acc)
            conversions += n_out
    return acc, overflow_events, conversions, n_out * n_groups


def _fp32_accumulate(
    fill_product: Callable[[np.ndarray, int], None],
    k_len: int,
    out_shape: tuple[int, ...],
) -> np.ndarray:
    acc = np.zeros(out_shape, dtype=np.float32)
    product = np.empty(out_shape, dtype=np.float64)
    for k in range(k_len):
        fill_product(product, k)
        # Products are exact in float64; the mixed add computes the exact
        # sum and the cast back to float32 is the one RNE rounding.
        np.add(acc, product, out=acc, casting="unsafe")
    return acc


def dot_int8_int32(a_codes, b_codes) -> int:
    """Exact integer dot product of two INT8 (or INT4) code vectors."""
    a = np.asarray(a_codes)
    b = np.asarray(b_codes)
    if not (np.issubdtype(a.dtype, np.integer) and np.issubdtype(b.dtype, np.integer)):
        raise ValueError("integer codes required")
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("equal-length 1-D vectors required")
    if a.size and (np.abs(a).max() > 127 or np.abs(b).max() > 127):
        raise ValueError("codes exceed the signed 8-bit symmetric range")
    return int(np.dot(a.astype(np.int64), b.astype(np.int64)))


def dot_fp8_fp16acc(
    p_codes,
    v_codes,
    shape: MmaShape = MmaShape(),
    buffering_depth: int = 1,
) -> DotReport:
    """FP8 dot product through the FP16 accumulator, k grouped by 32."""
    _check_depth(buffering_depth)
    p = _decode_codes(p_codes, "p_codes")
    v = _decode_codes(v_codes, "v_codes")
    if p.shape != v.shape or p.ndim != 1:
        raise ValueError("equal-length 1-D code vectors required")
    products = p * v  # exact: <= 8 significand bits each product
    acc, events, conversions, invocations = _fp16_group_accumulate(
        lambda buf, k: np.copyto(buf, products[k]), p.size, (), buffering_depth
    )
    return DotReport(float(acc), OverflowFlag(events), conversions, invocations)


def dot_fp8_fp32acc(p_codes, v_codes) -> float:
    """FP8 dot product through the FP32 accumulator (the safe baseline)."""
    p = _decode_codes(p_codes, "p_codes")
    v = _decode_codes(v_codes, "v_codes")
    if p.shape != v.shape or p.ndim != 1:
        raise ValueError("equal-length 1-D code vectors required")
    products = p * v
    acc = _fp32_accumulate(lambda buf, k: np.copyto(buf, products[k]), p.size, ())
    return float(acc)


def gemm_emulated(
    a_codes,
    b_codes,
    path: str,
    *,
    buffering_depth: int = 1,
    shape: MmaShape = MmaShape(),
) -> tuple[np.ndarray, DotReport]:
    """Lift the dot-product contracts to a (batched) matmul.

    ``a_codes`` has shape (..., M, K) and ``b_codes`` (K, N).  Element
    (i, j) of the result equals the corresponding dot operation on row i
    of A and column j of B; the report aggregates counts over all output
    elements.  FP8 paths require K to be a multiple of 32.
    """
    if path not in GEMM_PATHS:
        raise ValueError(f"unknown path {path!r}, expected one of {GEMM_PATHS}")
    a = np.asarray(a_codes)
    b = np.asarray(b_codes)
    if a.ndim < 2 or b.ndim != 2:
        raise ValueError("A must be (..., M, K) and B (K, N)")
    if a.shape[-1] != b.shape[0]:
        raise ValueError(f"inner dimensions disagree: {a.shape[-1]} vs {b.shape[0]}")
    k_len = b.shape[0]
    out_shape = a.shape[:-1] + (b.shape[1],)
    n_out = int(np.prod(out_shape, dtype=np.int64))

    if path == "int8":
        if not (np.issubdtype(a.dtype, np.integer) and np.issubdtype(b.dtype, np.integer)):
            raise ValueError("integer codes required for the int8 path")
        if a.size and (np.abs(a).max() > 127 or np.abs(b).max() > 127):
            raise ValueError("codes exceed the signed 8-bit symmetric range")
        result = a.astype(np.int64) @ b.astype(np.int64)
        groups = -(-k_len // MMA_K_GROUP)
        return result, DotReport(None, OverflowFlag(0), 0, n_out * groups)

    p = _decode_codes(a, "a_codes")
    v = _decode_codes(b, "b_codes")

    def fill_product(buf: np.ndarray, k: int) -> None:
        np.multiply(p[..., :, k, None], v[k, :], out=buf)

    if path == "fp8_fp32acc":
        if k_len % MMA_K_GROUP != 0:
            raise ValueError(
                f"contraction length {k_len} is not a multiple of {MMA_K_GROUP}"
            )
        acc = _fp32_accumulate(fill_product, k_len, out_shape)
        groups = k_len // MMA_K_GROUP
        return acc, DotReport(None, OverflowFlag(0), 0, n_out * groups)

    _check_depth(buffering_depth)
    acc, events, conversions, invocations = _fp16_group_accumulate(
        fill_product, k_len, out_shape, buffering_depth
    )
    return acc, DotReport(None, OverflowFlag(events), conversions, invocations)
