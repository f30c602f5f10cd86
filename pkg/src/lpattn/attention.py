"""Tiled attention with online softmax, in full precision or quantized.

Both engines walk the same FlashAttention-style recurrence: queries and
keys are cut into tiles, each score tile is folded into a running row
maximum ``m``, running normalizer ``l`` and output accumulator ``O``, and
the final output is ``O / l``.  Key tiles are visited strictly in
ascending order; that ordering is part of the numerical contract (results
are bit-identical to the sequential schedule).

``attention_reference`` runs the recurrence in float64 end to end and is
the accuracy baseline.  ``attention_quantized`` runs the production
pipeline under study:

1. optionally smooth Q and K (subtract per-channel means; the query mean
   is compensated exactly on the scores, the key mean cancels in softmax),
2. quantize Q and K tiles to symmetric INT8 or INT4 and compute the score
   tile with the exact integer matmul,
3. dequantize, add the smoothing compensation, apply the softmax scale
   and causal mask in full precision, update the online softmax,
4. quantize the exponentiated tile (per tile, range ``p_r``) and the
   value tile (per channel, range ``v_r``) to E4M3 and multiply them on
   the emulated FP16- or FP32-accumulator matmul path,
5. dequantize with the scale product and fold into the output accumulator.

Sequence lengths that are not a multiple of the key tile keep the FP8
matmul's k-extent valid by zero-padding the trailing key tile and masking
the padded columns, which contributes exactly nothing to the result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .mma import MMA_K_GROUP, DotReport, gemm_emulated
from .numerics import OverflowFlag
from .quantization import (
    Fp8ChannelQuantBlock,
    IntQuantBlock,
    RangeConfig,
    SmoothingState,
    quantize_int_block,
    quantize_p_block,
    quantize_v_per_channel,
    smooth_k,
    smooth_q,
)

#: Finite stand-in for -inf in masked score entries.  exp(NEG_INF - m)
#: underflows to exactly 0.0 for any attainable running max m, while
#: keeping max/subtraction arithmetic NaN-free.
NEG_INF = -1.0e30


@dataclass(frozen=True)
class AttentionConfig:
    """Problem shape plus every knob of the quantized pipeline."""

    seq_len: int
    head_dim: int
    num_heads: int = 1
    block_q: int = 128
    block_k: int = 64
    qk_bits: int = 8
    range: RangeConfig = field(default_factory=lambda: RangeConfig(224.0, 4.5, 2))
    causal: bool = False
    smoothing: bool = True
    softmax_scale: Optional[float] = None
    pv_accumulator: str = "fp16"  # "fp16" fast path or "fp32" baseline

    def __post_init__(self):
        if min(self.seq_len, self.head_dim, self.num_heads) < 1:
            raise ValueError("seq_len, head_dim and num_heads must be positive")
        # Tiles larger than seq_len are fine: query tiles are sliced ragged
        # and trailing key tiles are zero-padded behind the mask, which the
        # FP8 path needs anyway to keep its k extent a multiple of 32.
        if min(self.block_q, self.block_k) < 1:
            raise ValueError("tile sizes must be positive")
        if self.qk_bits not in (4, 8):
            raise ValueError("qk_bits must be 4 or 8")
        if self.pv_accumulator not in ("fp16", "fp32"):
            raise ValueError("pv_accumulator must be 'fp16' or 'fp32'")

    @property
    def scale(self) -> float:
        if self.softmax_scale is not None:
            return self.softmax_scale
        return 1.0 / math.sqrt(self.head_dim)

    def with_range(self, range_config: RangeConfig) -> "AttentionConfig":
        return replace(self, range=range_config)


@dataclass
class SoftmaxState:
    """Online-softmax carry for one tile of query rows."""

    m: np.ndarray  # (rows,) running max, -inf before the first tile
    l: np.ndarray  # (rows,) running sum of exponentials
    o: np.ndarray  # (rows, dim) unnormalized output accumulator

    @classmethod
    def fresh(cls, rows: int, dim: int) -> "SoftmaxState":
        return cls(
            m=np.full(rows, -np.inf),
            l=np.zeros(rows),
            o=np.zeros((rows, dim)),
        )


@dataclass
class RunReport:
    """Output of a quantized run plus the emulator's bookkeeping."""

    output: np.ndarray
    overflow_events: int
    fp16_to_fp32_conversions: int
    mma_invocations: int
    p_scale_min: float
    p_scale_max: float
    v_scale_min: float
    v_scale_max: float


def apply_causal_mask(s_block: np.ndarray, i_offset: int, j_offset: int) -> np.ndarray:
    """Mask entries whose global key index exceeds the global query index."""
    rows, cols = s_block.shape
    qi = i_offset + np.arange(rows)[:, None]
    kj = j_offset + np.arange(cols)[None, :]
    return np.where(kj > qi, NEG_INF, s_block)


def online_softmax_update(
    state: SoftmaxState, s_block: np.ndarray
) -> tuple[SoftmaxState, np.ndarray]:
    """Fold one score tile into the running softmax state.

    Returns the new state (with ``o`` rescaled but not yet incremented)
    and the exponentiated tile ``exp(S - m')`` whose contribution the
    caller adds to ``o``.  Every row must have seen at least one finite
    (non-surrogate) entry by the time it matters; fully masked tiles
    arriving after that leave the state unchanged.
    """
    if s_block.ndim != 2 or s_block.shape[0] != state.m.shape[0]:
        raise ValueError("score tile rows must align with the softmax state")
    m_new = np.maximum(state.m, s_block.max(axis=1))
    p_block = np.exp(s_block - m_new[:, None])
    alpha = np.exp(state.m - m_new)
    l_new = state.l * alpha + p_block.sum(axis=1)
    o_new = state.o * alpha[:, None]
    return SoftmaxState(m_new, l_new, o_new), p_block


def _canonical_3d(q, k, v, config: AttentionConfig) -> tuple[np.ndarray, ...]:
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if not (q.shape == k.shape == v.shape):
        raise ValueError(f"Q/K/V shapes disagree: {q.shape}, {k.shape}, {v.shape}")
    if q.ndim == 2:
        q, k, v = q[None], k[None], v[None]
    if q.ndim != 3:
        raise ValueError("tensors must be (seq, dim) or (heads, seq, dim)")
    expected = (config.num_heads, config.seq_len, config.head_dim)
    if q.shape != expected:
        raise ValueError(f"tensor shape {q.shape} does not match config {expected}")
    if not (np.isfinite(q).all() and np.isfinite(k).all() and np.isfinite(v).all()):
        raise ValueError("Q/K/V must be finite")
    return q, k, v


def _tiles(total: int, block: int):
    for start in range(0, total, block):
        yield start, min(start + block, total)


def _visible_key_tiles(config: AttentionConfig, i_stop: int, n_ktiles: int) -> int:
    if not config.causal:
        return n_ktiles
    return min(n_ktiles, -(-i_stop // config.block_k))


def attention_reference(q, k, v, config: AttentionConfig) -> np.ndarray:
    """Tiled attention in float64; the accuracy baseline.

    With ``config.smoothing`` the Q/K means are removed and compensated
    exactly, which changes the result only by float64 rounding; the flag
    exists so the transform's exactness can be measured.
    """
    q3, k3, v3 = _canonical_3d(q, k, v, config)
    squeeze = np.ndim(q) == 2
    out = np.empty_like(q3)
    scale = config.scale
    for h in range(config.num_heads):
        qh, kh, vh = q3[h], k3[h], v3[h]
        smoothing = None
        if config.smoothing:
            qh, q_mean = smooth_q(qh)
            kh, k_mean = smooth_k(kh)
            smoothing = SmoothingState(q_mean=q_mean, k_mean=k_mean)
        n_ktiles = -(-config.seq_len // config.block_k)
        for i0, i1 in _tiles(config.seq_len, config.block_q):
            state = SoftmaxState.fresh(i1 - i0, config.head_dim)
            for j in range(_visible_key_tiles(config, i1, n_ktiles)):
                j0 = j * config.block_k
                j1 = min(j0 + config.block_k, config.seq_len)
                s = qh[i0:i1] @ kh[j0:j1].T
                if smoothing is not None:
                    s = s + smoothing.q_mean @ kh[j0:j1].T
                s = s * scale
                if config.causal:
                    s = apply_causal_mask(s, i0, j0)
                state, p = online_softmax_update(state, s)
                state.o += p @ v3[h][j0:j1]
            l_safe = np.where(state.l == 0.0, 1.0, state.l)
            out[h, i0:i1] = state.o / l_safe[:, None]
    return out[0] if squeeze else out


def _pad_keys(kh: np.ndarray, vh: np.ndarray, block_k: int) -> tuple[np.ndarray, np.ndarray, int]:
    seq = kh.shape[0]
    padded = -(-seq // block_k) * block_k
    if padded == seq:
        return kh, vh, seq
    pad = ((0, padded - seq), (0, 0))
    return np.pad(kh, pad), np.pad(vh, pad), seq


def attention_quantized(q, k, v, config: AttentionConfig) -> RunReport:
    """Run the full quantized pipeline and report accuracy-relevant totals.

    The score matmul uses exact integer arithmetic; the value matmul runs
    on the emulated FP8 instruction selected by ``config.pv_accumulator``
    with ``config.range`` controlling the quantization targets.  FP16
    accumulator overflow saturates and is counted in the report rather
    than raised, so unsafe range pairs (constructed with
    ``expect_overflow=True``) can be measured.
    """
    if config.head_dim % MMA_K_GROUP != 0:
        raise ValueError(f"head_dim must be a multiple of {MMA_K_GROUP} for the FP8 path")
    if config.block_k % MMA_K_GROUP != 0:
        raise ValueError(f"block_k must be a multiple of {MMA_K_GROUP} for the FP8 path")
    q3, k3, v3 = _canonical_3d(q, k, v, config)
    squeeze = np.ndim(q) == 2
    out = np.empty_like(q3)
    scale = config.scale
    pv_path = "fp8_fp16acc" if config.pv_accumulator == "fp16" else "fp8_fp32acc"
    depth = config.range.buffering_depth

    totals = DotReport(None, OverflowFlag(0), 0, 0)
    p_scales: list[float] = []
    v_scales_min = math.inf
    v_scales_max = -math.inf

    for h in range(config.num_heads):
        qh, kh, vh = q3[h], k3[h], v3[h]
        smoothing = None
        if config.smoothing:
            qh, q_mean = smooth_q(qh)
            kh, k_mean = smooth_k(kh)
            smoothing = SmoothingState(q_mean=q_mean, k_mean=k_mean)
        kh_p, vh_p, real_seq = _pad_keys(kh, vh, config.block_k)
        n_ktiles = kh_p.shape[0] // config.block_k

        k_blocks: list[IntQuantBlock] = []
        v_blocks: list[Fp8ChannelQuantBlock] = []
        for j in range(n_ktiles):
            j0 = j * config.block_k
            j1 = j0 + config.block_k
            k_blocks.append(quantize_int_block(kh_p[j0:j1], config.qk_bits))
            vb = quantize_v_per_channel(vh_p[j0:j1], config.range.v_r)
            v_blocks.append(vb)
            v_scales_min = min(v_scales_min, float(vb.scales.min()))
            v_scales_max = max(v_scales_max, float(vb.scales.max()))

        for i0, i1 in _tiles(config.seq_len, config.block_q):
            qb = quantize_int_block(qh[i0:i1], config.qk_bits)
            state = SoftmaxState.fresh(i1 - i0, config.head_dim)
            for j in range(_visible_key_tiles(config, i1, n_ktiles)):
                j0 = j * config.block_k
                j1 = j0 + config.block_k
                s_int, int_report = gemm_emulated(qb.codes, k_blocks[j].codes.T, "int8")
                totals.merge(int_report)
                s = s_int * (qb.scale * k_blocks[j].scale)
                if smoothing is not None:
                    s = s + smoothing.q_mean @ kh_p[j0:j1].T
                s = s * scale
                if config.causal:
                    s = apply_causal_mask(s, i0, j0)
                if j1 > real_seq:  # padded key columns contribute nothing
                    s[:, real_seq - j0 :] = NEG_INF
                state, p = online_softmax_update(state, s)

                pb = quantize_p_block(p, config.range.p_r)
                p_scales.append(pb.scale)
                pv, pv_report = gemm_emulated(
                    pb.codes, v_blocks[j].codes, pv_path, buffering_depth=depth
                )
                totals.merge(pv_report)
                state.o += pv.astype(np.float64) * (pb.scale * v_blocks[j].scales)
            l_safe = np.where(state.l == 0.0, 1.0, state.l)
            out[h, i0:i1] = state.o / l_safe[:, None]

    return RunReport(
        output=out[0] if squeeze else out,
        overflow_events=totals.overflow.count,
        fp16_to_fp32_conversions=totals.fp16_to_fp32_conversions,
        mma_invocations=totals.mma_invocations,
        p_scale_min=min(p_scales),
        p_scale_max=max(p_scales),
        v_scale_min=v_scales_min,
        v_scale_max=v_scales_max,
    )
