"""Cycle-level simulator and toolchain for diffusion-LLM sampling on a
vector-scalar NPU: numeric formats, custom instruction set, memory
hierarchy model, code generation, and an exact software reference."""

from .codegen import ConfigError, KSchedule, SamplingConfig, gen_sampling_program, num_transfer_tokens
from .core import CycleReport, SimTimeout, Simulator
from .isa import AsmError, Instruction, Opcode, Program, assemble, disassemble
from .machine import MachineState, MemoryParams, SimFault, load_hbm_image, save_hbm_image, sram_footprint
from .oracle import OracleResult, oracle_sample, row_confidence, softmax_confidence
from .runner import SamplingRun, simulate_sampling
from .units import UnitTimings

__version__ = "0.1.0"

__all__ = [
    "AsmError",
    "ConfigError",
    "CycleReport",
    "Instruction",
    "KSchedule",
    "MachineState",
    "MemoryParams",
    "Opcode",
    "OracleResult",
    "Program",
    "SamplingConfig",
    "SamplingRun",
    "SimFault",
    "SimTimeout",
    "Simulator",
    "UnitTimings",
    "assemble",
    "disassemble",
    "gen_sampling_program",
    "load_hbm_image",
    "num_transfer_tokens",
    "oracle_sample",
    "row_confidence",
    "save_hbm_image",
    "simulate_sampling",
    "softmax_confidence",
    "sram_footprint",
    "__version__",
]
