"""Glue: build the HBM image, generate the program, simulate, collect results."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .codegen import SamplingConfig, gen_sampling_program
from .core import CycleReport, Simulator
from .logits import build_hbm_image
from .machine import MachineState, MemoryParams
from .units import UnitTimings


@dataclass
class SamplingRun:
    config: SamplingConfig
    report: CycleReport
    tokens: np.ndarray                      # (B, L) int32, from the FIFO
    step_tokens: list[np.ndarray] = field(default_factory=list)


def simulate_sampling(
    config: SamplingConfig,
    params: MemoryParams | None = None,
    timings: UnitTimings | None = None,
    image: np.ndarray | None = None,
    collect_step_tokens: bool = False,
    max_cycles: int | None = None,
    trace=None,
) -> SamplingRun:
    """Run the generated sampling program for one config end to end."""
    params = params or MemoryParams()
    program = gen_sampling_program(config, params)
    if image is None:
        image = build_hbm_image(config)
    state = MachineState(params, hbm_image=image)
    sim = Simulator(config.VLEN, timings)

    hooks = None
    step_tokens: list[np.ndarray] = []
    if collect_step_tokens:
        n = config.B * config.L
        hooks = {
            program.labels["step_commit"]: lambda st: step_tokens.append(
                st.int_sram_read(config.x_base, n).reshape(config.B, config.L).copy()
            )
        }
    report = sim.run(state, program, max_cycles=max_cycles, trace=trace, hooks=hooks)
    tokens = np.array(report.fifo, dtype=np.int32).reshape(config.B, config.L)
    return SamplingRun(config, report, tokens, step_tokens)
