"""Why quantization ranges must shrink when the matmul accumulates in FP16.

The fast FP8 matmul instruction sums 32 products at a time into an FP16
register.  If every product can reach p_r * v_r, the group sum can reach
32 * p_r * v_r, which must stay inside +-65504.  That gives the safe-range
rule p_r * v_r <= 65504/32 = 2047, and half of that when two consecutive
group sums are buffered in FP16 before one FP32 conversion.

This script drives the emulated instruction directly and watches the rule
hold and fail.
"""

import numpy as np

from lpattn import RANGE_PRODUCT_LIMIT, RangeConfig, RangeConfigError, dot_fp8_fp16acc, e4m3_encode
from lpattn.mma import gemm_emulated

K = 64  # two 32-product groups


def all_max_dot(p_r, v_r, depth):
    """Adversarial input: every product at the worst magnitude p_r*v_r."""
    p = np.full(K, e4m3_encode(p_r), dtype=np.uint8)
    v = np.full(K, e4m3_encode(v_r), dtype=np.uint8)
    return dot_fp8_fp16acc(p, v, buffering_depth=depth)


print(f"range-product limit: 65504/32 = {RANGE_PRODUCT_LIMIT}")
print(f"{'p_r':>6} {'v_r':>6} {'product':>8} {'depth':>5} {'sum':>10} {'overflows':>9}")
cases = [
    (448.0, 2.25, 2),   # the shipped pairs: product 1008 <= 1023.5
    (224.0, 4.5, 2),
    (112.0, 9.0, 2),
    (448.0, 4.5, 1),    # product 2016: fine at depth 1 ...
    (448.0, 4.5, 2),    # ... but two buffered groups would reach 129024
    (448.0, 448.0, 1),  # the unscaled ranges: one product already overflows
]
for p_r, v_r, depth in cases:
    rep = all_max_dot(p_r, v_r, depth)
    print(
        f"{p_r:>6g} {v_r:>6g} {p_r * v_r:>8g} {depth:>5d}"
        f" {rep.value:>10g} {rep.overflow.count:>9d}"
    )

# The constructor enforces exactly this arithmetic.
print("\nRangeConfig enforcement:")
for p_r, v_r, depth in [(224.0, 4.5, 2), (448.0, 4.5, 2), (448.0, 448.0, 1)]:
    try:
        RangeConfig(p_r, v_r, depth)
        print(f"  ({p_r:g}, {v_r:g}) depth {depth}: accepted")
    except RangeConfigError as exc:
        print(f"  ({p_r:g}, {v_r:g}) depth {depth}: rejected ({exc})")

# ---------------------------------------------------------------------------
# What the deeper buffering buys: half the FP16->FP32 conversions.
# ---------------------------------------------------------------------------
rng = np.random.Generator(np.random.Philox(2))
a = e4m3_encode(rng.uniform(-200, 200, (16, 128)))
b = e4m3_encode(rng.uniform(-4, 4, (128, 8)))
print("\nconversion counts for a 16x128 by 128x8 matmul (4 groups per element):")
for depth in (1, 2):
    _, rep = gemm_emulated(a, b, "fp8_fp16acc", buffering_depth=depth)
    print(
        f"  depth {depth}: {rep.fp16_to_fp32_conversions:>4d} conversions"
        f" for {rep.mma_invocations} instruction groups"
    )
