#!/usr/bin/env python3
"""Walk through the storage formats: E4M3 elements, shared scales, BF16.

Shows how a block of float logits becomes 33 bytes of HBM traffic and what
the dequantizer reconstructs on the way into Vector SRAM.
"""
import numpy as np

from diffnpu.numerics import (
    bf16_bits,
    bf16_round,
    e4m3_decode,
    mx_decode_stream,
    mx_encode_stream,
)

rng = np.random.default_rng(1)

print("A few E4M3 byte patterns and their values:")
for byte in (0x00, 0x01, 0x38, 0x40, 0x7E, 0xB8, 0x7F):
    print(f"  0x{byte:02X} -> {e4m3_decode(byte)}")

print("\nOne 32-element block of uniform[-8, 8) logits:")
values = rng.uniform(-8, 8, 32)
raw = mx_encode_stream(values)
print(f"  encoded bytes : {raw.size} (1 scale + 32 elements)")
print(f"  shared scale  : byte {raw[0]} -> 2^{int(raw[0]) - 127}")

decoded = mx_decode_stream(raw)
err = np.abs(decoded - values.astype(np.float32)) / np.abs(values)
print(f"  max round-trip relative error: {err.max():.4f} (bound 0.25)")

print("\nBF16 rounding is ties-to-even on the top 16 bits of a float32:")
for x in (1.0 + 2.0 ** -8, 1.0 + 3 * 2.0 ** -8, 0.1):
    r = bf16_round(np.float32(x))
    print(f"  {x!r:24} -> {float(r)!r:22} bits 0x{bf16_bits(r)[0]:04X}")

print("\nEvery value the dequantizer writes to SRAM is exactly BF16:")
again = bf16_round(decoded)
print(f"  re-rounding changes nothing: {bool(np.array_equal(again, decoded))}")
