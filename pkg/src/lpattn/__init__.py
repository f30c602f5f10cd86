"""lpattn: a bit-exact desk-scale simulator of low-precision quantized attention.

The package answers, in software and at test-suite speed, the questions a
quantized attention kernel raises about numerics: when does the FP16
accumulator of the fast FP8 matmul instruction overflow, how must the
quantization ranges shrink to prevent it, what does delayed FP32
buffering cost in safety margin, and how much accuracy survives the whole
pipeline.

Modules
-------
numerics      bit-exact binary16 and FP8 E4M3 codecs and rounding
quantization  integer/FP8 quantizers, range constraints, Q/K smoothing
mma           emulated matmul instructions (INT8, FP8->FP32, FP8->FP16)
attention     tiled online-softmax attention, reference and quantized
metrics       cosine similarity / relative L1 / RMSE between outputs
tensorio      deterministic tensor files with JSON sidecars
cli           the ``lpattn`` command (gen / run / sweep / codec-table)
"""

from .attention import (
    NEG_INF,
    AttentionConfig,
    RunReport,
    SoftmaxState,
    apply_causal_mask,
    attention_quantized,
    attention_reference,
    online_softmax_update,
)
from .metrics import DegenerateMetricsError, MetricsReport, compare
from .mma import (
    MMA_K_GROUP,
    DotReport,
    MmaShape,
    dot_fp8_fp16acc,
    dot_fp8_fp32acc,
    dot_int8_int32,
    gemm_emulated,
)
from .numerics import (
    E4M3_MAX,
    FP16_MAX,
    Fp16Overflow,
    OverflowFlag,
    e4m3_decode,
    e4m3_encode,
    e4m3_round,
    fp16_add,
    fp16_decode,
    fp16_encode,
    fp16_round_saturating,
)
from .quantization import (
    RANGE_PRODUCT_LIMIT,
    Fp8ChannelQuantBlock,
    Fp8QuantBlock,
    IntQuantBlock,
    RangeConfig,
    RangeConfigError,
    SmoothingState,
    dequantize,
    quantize_int_block,
    quantize_p_block,
    quantize_v_per_channel,
    smooth_k,
    smooth_q,
)
from .tensorio import read_tensor, write_tensor

__version__ = "0.1.0"
