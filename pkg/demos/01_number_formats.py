"""A tour of the two number formats the simulator emulates bit-exactly.

FP8 E4M3 carries the quantized tensors; binary16 (FP16) is the
accumulator of the fast matmul instruction.  Their different failure
modes are the whole story: E4M3 saturates quietly at +-448 while an FP16
accumulator that leaves +-65504 is an error we must be able to observe.
"""

import numpy as np

from lpattn import (
    E4M3_MAX,
    FP16_MAX,
    Fp16Overflow,
    e4m3_decode,
    e4m3_encode,
    fp16_add,
    fp16_decode,
    fp16_encode,
)
from lpattn.numerics import e4m3_code_table

# ---------------------------------------------------------------------------
# The E4M3 code space: 256 codes, 254 finite values, two NaNs, max 448.
# ---------------------------------------------------------------------------
table = e4m3_code_table()
finite = [(c, v) for c, v in table if not np.isnan(v)]
print(f"E4M3 codes: {len(table)} total, {len(finite)} finite")
print(f"  largest finite  : {max(v for _, v in finite)}  (= E4M3_MAX = {E4M3_MAX})")
print(f"  smallest positive: {min(v for _, v in finite if v > 0)}  (= 2**-9)")
print("  a few codes:", ", ".join(f"0x{c:02X}->{v:g}" for c, v in table[:4]))

# Every finite code survives an encode/decode round trip unchanged.
codes = np.array([c for c, _ in finite], dtype=np.uint8)
assert np.array_equal(e4m3_encode(e4m3_decode(codes)), codes)
print("  round-trip over all finite codes: exact")

# Encoding saturates: values beyond 448 clamp, they never become NaN.
for x in (447.9, 448.0, 465.0, 1e6):
    print(f"  e4m3_encode({x:>8g}) decodes to {e4m3_decode(e4m3_encode(x)):g}")

# Relative resolution is coarse (3 mantissa bits): neighbors around 1.0
near_one = sorted({v for _, v in finite if 0.8 <= v <= 1.3})
print("  representable values near 1.0:", near_one)

# ---------------------------------------------------------------------------
# binary16: fine resolution, but a hard ceiling at 65504.
# ---------------------------------------------------------------------------
print(f"\nFP16 max finite: {FP16_MAX}")
print(f"  65519.99 rounds down -> {fp16_decode(fp16_encode(65519.99)):g}")
try:
    fp16_encode(65520.0)  # the exact rounding boundary: ties away, overflows
except Fp16Overflow as exc:
    print(f"  65520.0 raises Fp16Overflow: {exc}")

# Subnormals are fully supported down to 2**-24.
print(f"  2**-24 encodes exactly  : {fp16_decode(fp16_encode(2.0**-24)) == 2.0**-24}")
print(f"  2**-25 ties to even (0) : {fp16_decode(fp16_encode(2.0**-25)) == 0.0}")

# The accumulator primitive: exact sum, one rounding, overflow is loud.
a = fp16_encode(32752.0)
print(f"  32752 + 32752 = {fp16_decode(fp16_add(a, a)):g}  (exactly the max normal)")
try:
    top = fp16_encode(FP16_MAX)
    fp16_add(top, top)
except Fp16Overflow:
    print("  65504 + 65504 overflows, as every safety argument assumes")
