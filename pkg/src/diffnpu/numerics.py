"""Bit-exact numeric format conversions shared by the datapath and the oracle.

Three formats are modeled:

  BF16    1 sign / 8 exponent / 7 mantissa, round-to-nearest-even, no
          flush-to-zero.  This is the element type of Vector SRAM and FP SRAM.
  E4M3    1 sign / 4 exponent (bias 7) / 3 mantissa, no infinities, single
          NaN pattern (exponent and mantissa all ones), max finite 448.
  MXFP8   blocks of 32 E4M3 elements sharing one E8M0 power-of-two scale
          byte (value 2^(scale-127)).  This is the HBM storage format.

All arithmetic that feeds equivalence checks is done in float32 ("32-bit
real"); values are rounded to BF16 only where they are architecturally
stored in SRAM.  exp/recip are evaluated in float64 and rounded once to
float32 so both the simulated FP unit and the software reference resolve
to the same bit patterns.
"""

from __future__ import annotations

import math

import numpy as np

MX_BLOCK = 32
MX_BLOCK_BYTES = MX_BLOCK + 1  # one shared-scale byte + 32 element bytes

E4M3_BIAS = 7
E4M3_MAX = 448.0
E4M3_NAN_POS = 0x7F
E4M3_NAN_NEG = 0xFF

BF16_NAN_BITS = 0x7FC0  # canonical quiet NaN


# ---------------------------------------------------------------------------
# BF16
# ---------------------------------------------------------------------------

def bf16_round(values):
    """Round float values to the nearest BF16 (ties to even).

    Accepts a scalar or array; returns float32 data whose every element is
    exactly representable in BF16.  NaNs canonicalize to one quiet pattern;
    overflow rounds to +/-inf per IEEE round-to-nearest.
    """
    arr = np.asarray(values, dtype=np.float32)
    scalar = arr.ndim == 0
    if not arr.flags.c_contiguous:
        arr = np.ascontiguousarray(arr)
    bits = np.atleast_1d(arr).view(np.uint32).copy()
    nan = (bits & 0x7FFFFFFF) > 0x7F800000
    bits += 0x7FFF + ((bits >> 16) & 1)
    out16 = (bits >> 16).astype(np.uint16)
    out16[nan] = BF16_NAN_BITS
    out = bf16_from_bits(out16)
    return np.float32(out[0]) if scalar else out.reshape(arr.shape)


def bf16_round_inplace(arr: np.ndarray) -> np.ndarray:
    """In-place BF16 rounding of a contiguous float32 array (datapath path).

    Bit-identical to ``bf16_round`` for finite values and infinities, and it
    preserves numpy's canonical quiet NaN; arbitrary NaN payloads are not
    re-canonicalized (they never occur on the modeled datapath).
    """
    bits = arr.view(np.uint32)
    bits += np.uint32(0x7FFF) + ((bits >> np.uint32(16)) & np.uint32(1))
    bits &= np.uint32(0xFFFF0000)
    return arr


def bf16_bits(values) -> np.ndarray:
    """BF16 bit patterns (uint16) of already-BF16-valued float32 data."""
    arr = np.atleast_1d(np.asarray(values, dtype=np.float32))
    if not arr.flags.c_contiguous:
        arr = np.ascontiguousarray(arr)
    return (arr.view(np.uint32) >> 16).astype(np.uint16)


def bf16_from_bits(bits) -> np.ndarray:
    """float32 values of BF16 bit patterns (uint16)."""
    b = np.atleast_1d(np.asarray(bits, dtype=np.uint16))
    return (b.astype(np.uint32) << 16).view(np.float32)


# ---------------------------------------------------------------------------
# E4M3
# ---------------------------------------------------------------------------

def _build_e4m3_table() -> np.ndarray:
    table = np.zeros(256, dtype=np.float32)
    for byte in range(256):
        sign = -1.0 if byte & 0x80 else 1.0
        exp = (byte >> 3) & 0xF
        man = byte & 0x7
        if exp == 0xF and man == 0x7:
            table[byte] = np.float32(np.nan)
        elif exp == 0:
            # subnormal: value = mantissa * 2^(1 - bias - 3)
            table[byte] = np.float32(sign * man * 2.0 ** (1 - E4M3_BIAS - 3))
        else:
            table[byte] = np.float32(sign * (1.0 + man / 8.0) * 2.0 ** (exp - E4M3_BIAS))
    return table


_E4M3_TABLE = _build_e4m3_table()

# Positive finite values in byte order 0x00..0x7E are strictly increasing;
# midpoints between neighbours drive round-to-nearest-even encoding.
_E4M3_POS_VALUES = _E4M3_TABLE[:0x7F].astype(np.float64)
_E4M3_MIDPOINTS = (_E4M3_POS_VALUES[:-1] + _E4M3_POS_VALUES[1:]) / 2.0


def e4m3_decode(byte: int) -> float:
    """Decode one E4M3 byte pattern to its real value (NaN for 0x7F/0xFF)."""
    return float(_E4M3_TABLE[byte & 0xFF])


def e4m3_decode_array(data) -> np.ndarray:
    """Vectorized E4M3 decode of a uint8 array to float32."""
    return _E4M3_TABLE[np.asarray(data, dtype=np.uint8)]


def e4m3_encode_array(values) -> np.ndarray:
    """Round-to-nearest-even E4M3 encode of finite float values.

    Magnitudes beyond 448 saturate to the max finite pattern (the format has
    no infinities).  Non-finite input is rejected.
    """
    arr = np.asarray(values, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise ValueError("e4m3_encode requires finite inputs")
    mag = np.abs(arr)
    # searchsorted over midpoints: index == count of midpoints < mag gives
    # nearest-value byte; exact midpoints resolve to the even code below.
    codes = np.searchsorted(_E4M3_MIDPOINTS, mag, side="right").astype(np.uint8)
    hit = np.searchsorted(_E4M3_MIDPOINTS, mag, side="left")
    is_mid = hit < len(_E4M3_MIDPOINTS)
    is_mid &= _E4M3_MIDPOINTS[np.minimum(hit, len(_E4M3_MIDPOINTS) - 1)] == mag
    # tie: the two candidates are hit and hit+1; pick the even code
    tie_even = np.where(hit % 2 == 0, hit, hit + 1).astype(np.uint8)
    codes = np.where(is_mid, tie_even, codes)
    codes = np.where(mag > E4M3_MAX, np.uint8(0x7E), codes)
    codes |= (np.signbit(arr)).astype(np.uint8) << 7
    return codes.astype(np.uint8)


# ---------------------------------------------------------------------------
# MXFP8 blocks
# ---------------------------------------------------------------------------

def mx_scale_exponent(max_abs: float) -> int:
    """Shared-scale byte for a block whose largest magnitude is max_abs.

    Picks the power of two 2^(s-127) such that max_abs / scale lands in
    (224, 448], i.e. the block maximum maps into E4M3 range without
    saturating; clamped to the representable byte range [0, 254].
    """
    if max_abs == 0.0 or not math.isfinite(max_abs):
        return 127
    mant, exp = math.frexp(max_abs)  # max_abs = mant * 2^exp, mant in [0.5, 1)
    k = exp - 9 if mant <= 0.875 else exp - 8
    return min(max(k + 127, 0), 254)


def _mx_scale_bytes(max_abs: np.ndarray) -> np.ndarray:
    mant, exp = np.frexp(max_abs)
    k = np.where(mant <= 0.875, exp - 9, exp - 8)
    scales = np.clip(k + 127, 0, 254)
    return np.where(max_abs == 0.0, 127, scales).astype(np.uint8)


def mx_encode_stream(values) -> np.ndarray:
    """Encode float values (length multiple of 32) into raw MXFP8 bytes.

    Output layout is the HBM wire format: scale byte followed by 32 element
    bytes, repeated.  An all-zero block encodes as scale 127, elements 0.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.size % MX_BLOCK != 0:
        raise ValueError(f"value count {arr.size} not a multiple of {MX_BLOCK}")
    blocks = arr.reshape(-1, MX_BLOCK)
    max_abs = np.abs(blocks).max(axis=1)
    scales = _mx_scale_bytes(max_abs)
    scaled = blocks / np.exp2(scales.astype(np.float64) - 127.0)[:, None]
    elems = e4m3_encode_array(scaled).reshape(-1, MX_BLOCK)
    out = np.empty((blocks.shape[0], MX_BLOCK_BYTES), dtype=np.uint8)
    out[:, 0] = scales
    out[:, 1:] = elems
    return out.reshape(-1)


def mx_decode_stream(raw) -> np.ndarray:
    """Decode raw MXFP8 bytes back to BF16-valued float32 elements.

    Element i of a block decodes to bf16_round(e4m3(elements[i]) *
    2^(scale-127)); the product is exact in float32 for every encodable
    pattern, so a single float32 multiply before BF16 rounding is bit-exact.
    """
    buf = np.asarray(raw, dtype=np.uint8)
    if buf.size % MX_BLOCK_BYTES != 0:
        raise ValueError(f"byte count {buf.size} not a multiple of {MX_BLOCK_BYTES}")
    with np.errstate(over="ignore", under="ignore"):
        return mx_decode_stream_fast(buf)


def mx_decode_stream_fast(buf: np.ndarray) -> np.ndarray:
    """Unchecked decode of a contiguous uint8 MX block stream (hot path)."""
    blocks = buf.reshape(-1, MX_BLOCK_BYTES)
    vals = _E4M3_TABLE[blocks[:, 1:]]
    vals *= np.exp2(blocks[:, 0].astype(np.float32) - 127.0)[:, None]
    return bf16_round_inplace(vals.reshape(-1))


def mx_encode_block(values) -> tuple[int, np.ndarray]:
    """Encode exactly 32 values; returns (scale_byte, element_bytes)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size != MX_BLOCK:
        raise ValueError(f"block length must be {MX_BLOCK}, got {arr.size}")
    raw = mx_encode_stream(arr)
    return int(raw[0]), raw[1:].copy()


def mx_decode_block(scale: int, elements) -> np.ndarray:
    """Decode one block given its scale byte and 32 element bytes."""
    elems = np.asarray(elements, dtype=np.uint8)
    if elems.size != MX_BLOCK:
        raise ValueError(f"block length must be {MX_BLOCK}, got {elems.size}")
    raw = np.concatenate([[np.uint8(scale)], elems])
    return mx_decode_stream(raw)


# ---------------------------------------------------------------------------
# Scalar transcendentals (FP unit)
# ---------------------------------------------------------------------------

def exp32(x):
    """e^x evaluated in float64 and rounded once to float32.

    Both the simulated FP unit and the oracle call this, so the two sides
    agree bit-for-bit on every transcendental result.
    """
    arr = np.asarray(x, dtype=np.float64)
    with np.errstate(over="ignore", under="ignore"):
        out = np.exp(arr).astype(np.float32)
    return np.float32(out) if arr.ndim == 0 else out


def recip32(x):
    """1/x evaluated in float64 and rounded once to float32."""
    arr = np.asarray(x, dtype=np.float64)
    with np.errstate(divide="ignore", over="ignore", under="ignore"):
        out = (1.0 / arr).astype(np.float32)
    return np.float32(out) if arr.ndim == 0 else out
