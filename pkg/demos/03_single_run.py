#!/usr/bin/env python3
"""One end-to-end sampling run with the software reference riding along.

Uses the default edge-mode workload (B=2, T=1, L=64, V=2048, V_chunk=128):
the whole block is denoised in a single step, so every position commits its
argmax token.
"""
import numpy as np

from diffnpu.codegen import SamplingConfig
from diffnpu.logits import build_hbm_image
from diffnpu.machine import sram_footprint
from diffnpu.oracle import format_trace, oracle_sample
from diffnpu.runner import simulate_sampling

cfg = SamplingConfig(B=2, T=4, L=16, V=2048, V_chunk=128, VLEN=64, seed=11)
print(f"config: {cfg}")
foot = sram_footprint(cfg)
print(f"SRAM footprint: vector {foot['vector_bytes']} B, "
      f"fp {foot['fp_bytes']} B, int {foot['int_bytes']} B")

image = build_hbm_image(cfg)
print(f"HBM image: {image.size / 1e6:.2f} MB of MX blocks")

run = simulate_sampling(cfg, image=image, collect_step_tokens=True)
r = run.report
print(f"\ncycles: total {r.total_cycles} = vector {r.vector_cycles} + "
      f"memory {r.memory_cycles} + scalar {r.scalar_cycles} + other {r.other_cycles}")
print(f"HBM: {r.hbm_bytes_moved} bytes moved, "
      f"{r.achieved_bandwidth() / 1e9:.1f} GB/s achieved at 1 GHz")

reference = oracle_sample(cfg, image=image)
print(f"\ntokens equal to the reference: {bool(np.array_equal(run.tokens, reference.x))}")
print("reference commit trace:")
for line in format_trace(reference).splitlines():
    print("   ", line)
print("\nfirst batch row of final tokens:")
print("   ", run.tokens[0].tolist())
