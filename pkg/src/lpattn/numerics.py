"""Bit-exact emulation of the two scalar number formats used by the emulator.

Formats
-------
binary16 ("FP16")
    1 sign, 5 exponent, 10 mantissa bits, bias 15.  Largest finite value
    65504.  Full subnormal support down to 2**-24.
FP8 E4M3 (no-inf variant)
    1 sign, 4 exponent, 3 mantissa bits, bias 7.  No infinities; the
    all-ones pattern per sign (0x7F / 0xFF) is the single NaN.  Largest
    finite value 448, smallest positive subnormal 2**-9.

Values travel through the library as float64, which represents every
finite value of both formats exactly.  Codes are plain integers (scalar
API) or uint16/uint8 arrays (vectorized API).

Rounding is round-to-nearest, ties to even, everywhere.  FP16 encoding
treats overflow as an error (:class:`Fp16Overflow`): an accumulator
escaping the FP16 range is precisely the failure mode this simulator
exists to detect, so it must be observable, never silent.  E4M3 encoding
saturates to +-448 instead, matching how FP8 hardware converters clamp.

FP16 addition here is the accumulator primitive: exact real sum of the
decoded operands, then one rounding.  It is commutative and has 0 as an
identity, but like any floating-point addition it is NOT associative;
callers that depend on an accumulation order must fix it themselves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FP16_MAX = 65504.0
FP16_MIN_SUBNORMAL = 2.0**-24
E4M3_MAX = 448.0
E4M3_MIN_SUBNORMAL = 2.0**-9
E4M3_NAN_CODES = (0x7F, 0xFF)

_E4M3_EXP_BIAS = 7
_E4M3_MIN_NORMAL = 2.0**-6


class Fp16Overflow(OverflowError):
    """A value rounded outside the finite binary16 range (|x| > 65504)."""


def _build_e4m3_decode_table() -> np.ndarray:
    table = np.empty(256, dtype=np.float64)
    for code in range(256):
        exp_field = (code >> 3) & 0xF
        mant = code & 0x7
        if exp_field == 0xF and mant == 0x7:
            value = np.nan
        elif exp_field == 0:
            value = mant * E4M3_MIN_SUBNORMAL
        else:
            value = (1.0 + mant / 8.0) * 2.0 ** (exp_field - _E4M3_EXP_BIAS)
        table[code] = -value if code & 0x80 else value
    return table


E4M3_DECODE_TABLE = _build_e4m3_decode_table()


@dataclass
class OverflowFlag:
    """Running tally of FP16 overflow events observed during a run."""

    count: int = 0

    @property
    def triggered(self) -> bool:
        return self.count > 0

    def record(self, events: int = 1) -> None:
        if events < 0:
            raise ValueError("event count must be nonnegative")
        self.count += events

    def merge(self, other: "OverflowFlag") -> None:
        self.count += other.count


def _as_float_array(x) -> tuple[np.ndarray, bool]:
    scalar = np.ndim(x) == 0
    arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    return arr, scalar


def fp16_encode(x):
    """Round a finite real to binary16 and return its code.

    Scalar input returns an int, array input a uint16 array.  Raises
    :class:`Fp16Overflow` when any rounded magnitude exceeds 65504 (the
    rounding boundary is 65520: values at or above it round away from the
    top normal) and ValueError for non-finite input.
    """
    arr, scalar = _as_float_array(x)
    if not np.all(np.isfinite(arr)):
        raise ValueError("fp16_encode requires finite input")
    with np.errstate(over="ignore"):
        half = arr.astype(np.float16)
    overflowed = np.isinf(half)
    if overflowed.any():
        bad = float(arr[overflowed].flat[0])
        raise Fp16Overflow(f"{bad!r} is outside the binary16 range (max 65504)")
    codes = half.view(np.uint16)
    return int(codes[0]) if scalar else codes.reshape(np.shape(x))


def fp16_decode(code):
    """Exact value of a binary16 code (total over all 65536 patterns)."""
    scalar = np.ndim(code) == 0
    codes = np.atleast_1d(np.asarray(code, dtype=np.uint16))
    values = codes.view(np.float16).astype(np.float64)
    return float(values[0]) if scalar else values.reshape(np.shape(code))


def fp16_add(a_code, b_code):
    """FP16 accumulator addition: exact real sum, then one RNE rounding.

    Operands must be finite binary16 codes.  Raises Fp16Overflow when the
    sum escapes the representable range.
    """
    a = fp16_decode(a_code)
    b = fp16_decode(b_code)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("fp16_add requires finite operands")
    return fp16_encode(np.asarray(a) + np.asarray(b) if np.ndim(a_code) else a + b)


def fp16_round_saturating(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Snap finite float64 values onto the binary16 grid, saturating.

    The vectorized workhorse behind the matmul emulator.  Returns the
    rounded values (as float64, each exactly representable in binary16;
    overflowed entries clamped to +-65504) together with the boolean mask
    of entries that overflowed.
    """
    values = np.asarray(values, dtype=np.float64)
    with np.errstate(over="ignore"):
        half = values.astype(np.float16)
    overflowed = np.isinf(half)
    out = half.astype(np.float64)
    if overflowed.any():
        out[overflowed] = np.copysign(FP16_MAX, values[overflowed])
    return out, overflowed


def e4m3_encode(x):
    """Round finite reals to E4M3 codes, saturating at +-448.

    Round-to-nearest-even on the E4M3 grid.  Saturation never produces the
    NaN patterns.  Scalar input returns an int, array input a uint8 array.
    """
    arr, scalar = _as_float_array(x)
    if not np.all(np.isfinite(arr)):
        raise ValueError("e4m3_encode requires finite input")
    mag = np.abs(arr)

    # Grid step per binade: 2**(binade-3) for normals, clamped to the
    # fixed subnormal step 2**-9.  ldexp keeps the scaling exact, so the
    # single np.round (ties to even) is the only rounding that happens.
    _, exp = np.frexp(mag)
    step = np.maximum(exp - 1 - 3, -9)
    sig = np.round(np.ldexp(mag, -step))
    value = np.minimum(np.ldexp(sig, step), E4M3_MAX)

    _, exp2 = np.frexp(value)
    binade = exp2 - 1
    subnormal = value < _E4M3_MIN_NORMAL
    exp_field = np.where(subnormal, 0, binade + _E4M3_EXP_BIAS)
    mant = np.where(
        subnormal,
        np.ldexp(value, 9),
        np.ldexp(value, -(binade - 3)) - 8.0,
    ).astype(np.uint8)
    codes = (exp_field.astype(np.uint8) << 3) | mant
    codes |= np.where(np.signbit(arr), np.uint8(0x80), np.uint8(0))
    return int(codes[0]) if scalar else codes.reshape(np.shape(x))


def e4m3_decode(code):
    """Exact value of an E4M3 code; the two NaN patterns decode to NaN."""
    scalar = np.ndim(code) == 0
    codes = np.atleast_1d(np.asarray(code, dtype=np.uint8))
    values = E4M3_DECODE_TABLE[codes]
    return float(values[0]) if scalar else values.reshape(np.shape(code))


def e4m3_round(x):
    """decode(encode(x)): nearest representable E4M3 value(s), saturating."""
    return e4m3_decode(e4m3_encode(x))


def e4m3_code_table() -> list[tuple[int, float]]:
    """All 256 (code, value) pairs; NaN codes carry float('nan')."""
    return [(code, float(E4M3_DECODE_TABLE[code])) for code in range(256)]
