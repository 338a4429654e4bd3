"""Format-conversion tests against independently written reference decoders."""

import math
import struct

import numpy as np
import pytest

from diffnpu import numerics
from diffnpu.numerics import (
    MX_BLOCK,
    bf16_bits,
    bf16_from_bits,
    bf16_round,
    e4m3_decode,
    e4m3_decode_array,
    e4m3_encode_array,
    exp32,
    mx_decode_block,
    mx_decode_stream,
    mx_encode_block,
    mx_encode_stream,
    recip32,
)


# ---------------------------------------------------------------------------
# Reference decoders (independent of the implementations under test)
# ---------------------------------------------------------------------------

def ref_e4m3_decode(byte: int) -> float:
    """Field-by-field E4M3 decoder using fractions, no shared code."""
    sign = -1 if (byte >> 7) & 1 else 1
    exp_field = (byte >> 3) & 0b1111
    man_field = byte & 0b111
    if exp_field == 0b1111 and man_field == 0b111:
        return float("nan")
    if exp_field == 0:
        return sign * (man_field / 8) * 2 ** (-6)
    return sign * (1 + man_field / 8) * 2 ** (exp_field - 7)


def ref_bf16_from_bits(bits: int) -> float:
    """BF16 decode by zero-extending into an IEEE float32 pattern."""
    return struct.unpack("<f", struct.pack("<I", (bits & 0xFFFF) << 16))[0]


def test_e4m3_decode_matches_reference_for_all_patterns():
    for byte in range(256):
        got = e4m3_decode(byte)
        want = ref_e4m3_decode(byte)
        if math.isnan(want):
            assert math.isnan(got), f"0x{byte:02X} should be NaN, got {got}"
        else:
            assert got == want, f"0x{byte:02X}: got {got}, want {want}"


def test_e4m3_decode_spec_values():
    assert e4m3_decode(0x00) == 0.0
    assert e4m3_decode(0x38) == 1.0
    assert math.isnan(e4m3_decode(0x7F))
    assert math.isnan(e4m3_decode(0xFF))
    assert e4m3_decode(0x7E) == 448.0
    assert e4m3_decode(0xFE) == -448.0
    assert e4m3_decode(0x01) == 2.0 ** -9


def test_e4m3_decode_array_matches_scalar():
    data = np.arange(256, dtype=np.uint8)
    vec = e4m3_decode_array(data)
    for byte in range(256):
        if np.isnan(vec[byte]):
            assert math.isnan(e4m3_decode(byte))
        else:
            assert vec[byte] == e4m3_decode(byte)


class TestE4M3EncodeAgainstMlDtypes:
    """Cross-check against the reference numpy implementation of the format."""

    ml_dtypes = pytest.importorskip("ml_dtypes")

    def test_decode_all_patterns(self):
        e4m3 = np.arange(256, dtype=np.uint8).view(self.ml_dtypes.float8_e4m3fn)
        ref = e4m3.astype(np.float32)
        ours = e4m3_decode_array(np.arange(256, dtype=np.uint8))
        both_nan = np.isnan(ref) & np.isnan(ours)
        assert np.all(both_nan | (ref == ours))

    def test_encode_spread_of_values(self):
        rng = np.random.default_rng(7)
        vals = np.concatenate([
            rng.uniform(-500, 500, 4000),
            rng.uniform(-1, 1, 2000),
            rng.uniform(-0.01, 0.01, 2000),
            np.array([0.0, -0.0, 448.0, -448.0, 449.0, 2.0 ** -9, 2.0 ** -10]),
        ])
        ours = e4m3_encode_array(vals)
        ref = vals.astype(np.float32).astype(self.ml_dtypes.float8_e4m3fn)
        ref_bytes = ref.view(np.uint8)
        # ml_dtypes encodes overflow as NaN; ours saturates (no-inf format).
        overflow = np.abs(vals) > 464.0  # beyond the RNE threshold of 448
        same = ours == ref_bytes
        assert np.all(same | overflow)
        assert np.all(ours[overflow] & 0x7F == 0x7E)


def test_e4m3_encode_roundtrip_exact_on_representable():
    codes = np.array([b for b in range(256) if b not in (0x7F, 0xFF)], dtype=np.uint8)
    vals = e4m3_decode_array(codes)
    back = e4m3_encode_array(vals)
    assert np.array_equal(back, codes)


def test_e4m3_encode_midpoint_ties_to_even():
    # midpoint between 1.0 (0x38) and 1.125 (0x39) goes to the even code
    assert e4m3_encode_array([1.0625])[0] == 0x38
    # midpoint between 1.125 (0x39) and 1.25 (0x3A) goes up to even
    assert e4m3_encode_array([1.1875])[0] == 0x3A


def test_e4m3_encode_rejects_non_finite():
    with pytest.raises(ValueError):
        e4m3_encode_array([np.inf])
    with pytest.raises(ValueError):
        e4m3_encode_array([np.nan])


# ---------------------------------------------------------------------------
# BF16 rounding
# ---------------------------------------------------------------------------

def test_bf16_roundtrip_identity_for_all_finite_patterns():
    bits = np.arange(1 << 16, dtype=np.uint16)
    vals = bf16_from_bits(bits)
    finite = np.isfinite(vals)
    rounded = bf16_round(vals[finite])
    assert np.array_equal(bf16_bits(rounded), bits[finite])


def test_bf16_nan_canonicalization():
    for pattern in (0x7FC0, 0x7F81, 0xFFC0, 0xFFFF):
        val = bf16_from_bits(np.array([pattern], dtype=np.uint16))
        out = bf16_round(val)
        assert bf16_bits(out)[0] == numerics.BF16_NAN_BITS


def test_bf16_round_to_nearest_even():
    # 1.0 + 2^-8 is exactly halfway between 1.0 and 1.0 + 2^-7: ties to even (1.0)
    assert bf16_round(np.float32(1.0) + np.float32(2.0 ** -8)) == np.float32(1.0)
    # 1.0 + 3*2^-8 is halfway between 1+2^-7 and 1+2^-6: even is 1+2^-6
    assert bf16_round(np.float32(1.0) + np.float32(3 * 2.0 ** -8)) == np.float32(1.0 + 2.0 ** -6)
    # just above the midpoint rounds up
    assert bf16_round(np.float32(1.0) + np.float32(2.0 ** -8 + 2.0 ** -20)) == np.float32(1.0 + 2.0 ** -7)


def test_bf16_no_flush_to_zero():
    tiny = np.float32(2.0 ** -130)  # subnormal in BF16
    out = bf16_round(tiny)
    assert out != 0.0
    assert np.array_equal(bf16_round(out), out)


def test_bf16_overflow_rounds_to_inf():
    assert np.isinf(bf16_round(np.float32(3.4e38)))
    assert bf16_round(np.float32(3.389e38)) == bf16_from_bits([0x7F7F])[0]


def test_bf16_reference_agreement_random():
    rng = np.random.default_rng(11)
    vals = rng.standard_normal(10000).astype(np.float32) * rng.choice(
        [1e-30, 1e-3, 1.0, 1e6, 1e30], size=10000
    ).astype(np.float32)
    ours = bf16_bits(bf16_round(vals))
    if hasattr(np, "frombuffer"):
        ml_dtypes = pytest.importorskip("ml_dtypes")
        ref = vals.astype(ml_dtypes.bfloat16).view(np.uint16)
        assert np.array_equal(ours, ref)


# ---------------------------------------------------------------------------
# MXFP8 blocks
# ---------------------------------------------------------------------------

def test_mx_decode_matches_per_element_reference():
    rng = np.random.default_rng(3)
    raw = rng.integers(0, 256, size=33 * 64, dtype=np.uint8).reshape(-1, 33)
    raw[:, 0] = rng.integers(90, 160, size=64)  # keep scales in a sane band
    # drop NaN element codes so comparisons stay simple
    raw[:, 1:][raw[:, 1:] & 0x7F == 0x7F] = 0
    got = mx_decode_stream(raw.reshape(-1))
    for b in range(64):
        scale = 2.0 ** (int(raw[b, 0]) - 127)
        for i in range(MX_BLOCK):
            want = bf16_round(np.float64(ref_e4m3_decode(int(raw[b, 1 + i])) * scale))
            assert got[b * MX_BLOCK + i] == want


def test_mx_block_trivial_cases():
    scale, elems = mx_encode_block(np.zeros(MX_BLOCK))
    assert scale == 127
    assert np.all(elems == 0)
    assert np.all(mx_decode_block(scale, elems) == 0.0)

    ones = np.ones(MX_BLOCK)
    scale, elems = mx_encode_block(ones)
    assert np.all(mx_decode_block(scale, elems) == 1.0)

    # scale byte 128 doubles the decoded value of element 0x38
    vals = mx_decode_block(128, np.full(MX_BLOCK, 0x38, dtype=np.uint8))
    assert np.all(vals == 2.0)


def test_mx_roundtrip_error_bound_uniform():
    rng = np.random.default_rng(5)
    vals = rng.uniform(-8.0, 8.0, size=MX_BLOCK * 512)
    back = mx_decode_stream(mx_encode_stream(vals))
    rel = np.abs(back - vals.astype(np.float32)) / np.maximum(np.abs(vals), 1e-12)
    assert rel.max() <= 2.0 ** -2


def test_mx_roundtrip_exact_for_representable_values():
    rng = np.random.default_rng(9)
    # construct blocks whose elements are e4m3 codes at a common scale and
    # whose max is exactly 256 * scale (so the encoder picks that scale back)
    for k in (-8, 0, 5):
        codes = rng.integers(0, 0x7F, size=MX_BLOCK, dtype=np.uint8)
        codes[codes & 0x7F == 0x7F] = 0
        vals = e4m3_decode_array(codes).astype(np.float64) * 2.0 ** k
        vals[0] = 256.0 * 2.0 ** k  # forces mx_scale_exponent to pick 2^k
        back = mx_decode_stream(mx_encode_stream(vals))
        assert np.array_equal(back, vals.astype(np.float32))


def test_mx_encode_rejects_bad_block_length():
    with pytest.raises(ValueError):
        mx_encode_stream(np.ones(33))
    with pytest.raises(ValueError):
        mx_decode_stream(np.zeros(34, dtype=np.uint8))


# ---------------------------------------------------------------------------
# Scalar transcendentals
# ---------------------------------------------------------------------------

def test_exp_trivial():
    assert exp32(0.0) == np.float32(1.0)
    assert recip32(1.0) == np.float32(1.0)
    assert recip32(2.0) == np.float32(0.5)


def test_exp_matches_reference_within_one_ulp():
    rng = np.random.default_rng(13)
    xs = rng.uniform(-20, 20, size=5000).astype(np.float32)
    got = exp32(xs)
    want = np.array([math.exp(float(x)) for x in xs], dtype=np.float64)
    want32 = want.astype(np.float32)
    ulp = np.spacing(want32)
    assert np.all(np.abs(got.astype(np.float64) - want) <= ulp.astype(np.float64))
    assert exp32(np.float32(-2.5)) == np.float32(math.exp(-2.5))


def test_recip_matches_float64_reference():
    rng = np.random.default_rng(17)
    xs = rng.uniform(0.01, 100, size=5000).astype(np.float32)
    got = recip32(xs)
    want = (1.0 / xs.astype(np.float64)).astype(np.float32)
    assert np.array_equal(got, want)
