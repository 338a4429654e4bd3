#!/usr/bin/env python3
"""Assemble a small hand-written kernel, run it, and round-trip the text.

The kernel is the single-window Stable-Max sequence: max+argmax, subtract,
exponentiate in place, sum, reciprocal.
"""
import numpy as np

from diffnpu.core import Simulator
from diffnpu.isa import assemble, disassemble
from diffnpu.machine import MachineState, MemoryParams
from diffnpu.numerics import bf16_round

SOURCE = """
; stable-max over one 64-lane window at vector address 0
    s_li x1, 0          ; window address
    s_li x3, 0          ; absolute base index
    v_red_max_idx f1, x1, x2, x3
    v_sub_scalar x1, f1, 64
    v_exp x1, 64
    v_red_sum f3, x1
    s_recip f7, f3
    s_halt
"""

program = assemble(SOURCE)
print(f"assembled {len(program.instructions)} instructions")

canonical = disassemble(program)
print("canonical text:")
for line in canonical.splitlines():
    print("   ", line)
assert assemble(canonical) == program
print("fixed point: assemble(disassemble(p)) == p\n")

state = MachineState(MemoryParams(vector_sram_bytes=4096, fp_sram_bytes=256, int_sram_bytes=256))
rng = np.random.default_rng(7)
logits = bf16_round(rng.uniform(-8, 8, 64).astype(np.float32))
state.sram_write_vector(0, logits)

report = Simulator(vlen=64).run(state, program)
print(f"ran in {report.total_cycles} cycles "
      f"(vector {report.vector_cycles}, scalar {report.scalar_cycles})")
print(f"argmax index   : {state.gp[2]}  (numpy says {int(np.argmax(logits))})")
print(f"confidence 1/s : {float(state.fp[7]):.6f}")
