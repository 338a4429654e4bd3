"""Decode-execute loop: instruction semantics, cycle accounting, reports.

Execution is single-issue and in-order; vector units are fully pipelined at
the instruction-cost level and the only overlap modeled is HBM prefetch
double buffering (handled inside MachineState.hbm_prefetch).  Every
instruction charges exactly one cycle category: vector, memory, scalar or
other (control).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import units
from .isa import Instruction, Opcode, Program, format_instruction
from .machine import MachineState, SimFault
from .numerics import bf16_round_inplace
from .units import UnitTimings

VECTOR, MEMORY, SCALAR, OTHER = "vector", "memory", "scalar", "other"


class SimTimeout(RuntimeError):
    """Raised when a run exceeds max_cycles; carries the partial report."""

    def __init__(self, report: "CycleReport"):
        super().__init__(f"max_cycles exceeded after {report.total_cycles} cycles")
        self.report = report


@dataclass
class ExecOutcome:
    next_pc: int
    cycles_charged: list[tuple[str, int]]
    fault: tuple[str, str] | None = None


@dataclass
class CycleReport:
    vector_cycles: int
    memory_cycles: int
    scalar_cycles: int
    other_cycles: int
    hbm_bytes_moved: int
    instructions: int
    fifo: list[int] = field(default_factory=list)
    sram_highwater: dict[str, int] = field(default_factory=dict)
    halted: bool = True

    @property
    def total_cycles(self) -> int:
        return self.vector_cycles + self.memory_cycles + self.scalar_cycles + self.other_cycles

    @property
    def category_cycles(self) -> dict[str, int]:
        return {
            VECTOR: self.vector_cycles,
            MEMORY: self.memory_cycles,
            SCALAR: self.scalar_cycles,
            OTHER: self.other_cycles,
        }

    def achieved_bandwidth(self, clock_hz: float = 1e9) -> float:
        """Average HBM traffic in bytes/second at the given clock."""
        if self.total_cycles == 0:
            return 0.0
        return self.hbm_bytes_moved / (self.total_cycles / clock_hz)

    def latency_ms(self, clock_hz: float = 1e9) -> float:
        return self.total_cycles / clock_hz * 1e3


class Simulator:
    """Executes Programs against a MachineState with VLEN-wide vector units."""

    def __init__(self, vlen: int, timings: UnitTimings | None = None):
        if vlen <= 0 or vlen % 32:
            raise ValueError(f"VLEN must be a positive multiple of 32, got {vlen}")
        self.vlen = vlen
        self.timings = timings or UnitTimings()
        self._reduction_cost = self.timings.reduction_latency(vlen)
        self._elementwise_cost = self.timings.elementwise_cost()
        self._dispatch = [getattr(self, "_op_" + op.name.lower()) for op in Opcode]

    # -- single step (spec-level API) ---------------------------------------

    def step(self, state: MachineState, program: Program) -> ExecOutcome:
        if not 0 <= state.pc < len(program.instructions):
            raise SimFault("pc-bounds", f"pc {state.pc} outside program of {len(program.instructions)}")
        ins = program.instructions[state.pc]
        with np.errstate(over="ignore", under="ignore"):
            next_pc, category, cost = self._execute(state, ins)
        self._charge(state, category, cost)
        state.pc = next_pc
        return ExecOutcome(next_pc, [(category, cost)])

    def _charge(self, state: MachineState, category: str, cost: int) -> None:
        c = state.cycles
        if category == VECTOR:
            c.vector += cost
            state.compute_credit += cost
        elif category == MEMORY:
            c.memory += cost
        elif category == SCALAR:
            c.scalar += cost
            state.compute_credit += cost
        else:
            c.other += cost
            state.compute_credit += cost

    def _execute(self, state: MachineState, ins: Instruction) -> tuple[int, str, int]:
        try:
            return self._dispatch[ins.opcode](state, ins)
        except SimFault as fault:
            fault.pc = state.pc
            raise SimFault(
                fault.kind, f"{fault.detail} [instruction: {format_instruction(ins)}]", state.pc
            ) from None

    # -- full run ------------------------------------------------------------

    def run(
        self,
        state: MachineState,
        program: Program,
        max_cycles: int | None = None,
        trace=None,
        hooks: dict[int, object] | None = None,
    ) -> CycleReport:
        """Execute until S_HALT; raises SimTimeout past max_cycles.

        ``hooks`` maps instruction indices to callables invoked with the
        state every time the pc reaches that index (host-side debugging,
        e.g. step-boundary snapshots); they cost no cycles.
        """
        program.validate()
        instructions = program.instructions
        n = len(instructions)
        dispatch = self._dispatch
        cycles = state.cycles
        charge = self._charge
        pc = state.pc
        halted = False
        executed = 0
        with np.errstate(over="ignore", under="ignore"):
            while 0 <= pc < n:
                if hooks is not None and pc in hooks:
                    hooks[pc](state)
                ins = instructions[pc]
                state.pc = pc
                try:
                    next_pc, category, cost = dispatch[ins.opcode](state, ins)
                except SimFault as fault:
                    raise SimFault(
                        fault.kind, f"{fault.detail} [instruction: {format_instruction(ins)}]", pc
                    ) from None
                charge(state, category, cost)
                executed += 1
                if trace is not None:
                    trace.write(f"{pc}\t{format_instruction(ins)}\t{cost}\t{category}\n")
                if next_pc == _HALT_PC:
                    halted = True
                    break
                if max_cycles is not None and cycles.total > max_cycles:
                    state.pc = next_pc
                    raise SimTimeout(self._report(state, executed, halted=False))
                pc = next_pc
        if not halted and not 0 <= pc < n:
            raise SimFault("pc-bounds", f"pc {pc} ran off the program (no s_halt?)", pc)
        return self._report(state, executed, halted=halted)

    def _report(self, state: MachineState, executed: int, halted: bool) -> CycleReport:
        c = state.cycles
        return CycleReport(
            vector_cycles=c.vector,
            memory_cycles=c.memory,
            scalar_cycles=c.scalar,
            other_cycles=c.other,
            hbm_bytes_moved=c.hbm_bytes_moved,
            instructions=executed,
            fifo=list(state.fifo_out),
            sram_highwater=dict(state.highwater),
            halted=halted,
        )

    # -- instruction semantics ------------------------------------------------
    # each handler returns (next_pc, category, cycle_cost)

    def _op_h_prefetch_v(self, state, ins):
        cost = state.hbm_prefetch(state.gp[ins.rs1], state.gp[ins.rs2], state.gp[ins.rd])
        return state.pc + 1, MEMORY, cost

    def _op_v_red_max(self, state, ins):
        vals = state.sram_read_vector(state.gp[ins.rs1], self.vlen)
        state.fp[ins.rd] = units.reduce_max(vals)
        return state.pc + 1, VECTOR, self._reduction_cost

    def _op_v_red_max_idx(self, state, ins):
        vals = state.sram_read_vector(state.gp[ins.rs1], self.vlen)
        value, index = units.reduce_max_idx(vals, state.gp[ins.rs3])
        state.fp[ins.rd] = value
        state.write_gp(ins.rs2, index)
        return state.pc + 1, VECTOR, self._reduction_cost

    def _op_v_red_sum(self, state, ins):
        vals = state.sram_read_vector(state.gp[ins.rs1], self.vlen)
        state.fp[ins.rd] = units.tree_sum(vals)
        return state.pc + 1, VECTOR, self._reduction_cost

    def _check_count(self, count: int) -> int:
        if count < 1:
            raise SimFault("vector-count", f"element count {count} must be positive")
        return count

    def _elementwise_beats(self, count: int) -> int:
        # counts beyond VLEN run the elementwise unit for multiple beats
        return self._elementwise_cost * (-(-count // self.vlen))

    def _op_v_sub_scalar(self, state, ins):
        # in-place form of units.elementwise_sub_scalar on the SRAM view
        count = self._check_count(ins.imm)
        view = state.sram_read_vector(state.gp[ins.rs1], count)
        view -= state.fp[ins.rd]
        bf16_round_inplace(view)
        return state.pc + 1, VECTOR, self._elementwise_beats(count)

    def _op_v_exp(self, state, ins):
        # in-place form of units.elementwise_exp on the SRAM view
        count = self._check_count(ins.imm)
        view = state.sram_read_vector(state.gp[ins.rs1], count)
        view[:] = np.exp(view.astype(np.float64))
        bf16_round_inplace(view)
        return state.pc + 1, VECTOR, self._elementwise_beats(count)

    def _op_v_sub(self, state, ins):
        count = self._check_count(ins.imm)
        dst = state.sram_read_vector(state.gp[ins.rs1], count)
        src = state.sram_read_vector(state.gp[ins.rs2], count)
        dst -= src
        bf16_round_inplace(dst)
        return state.pc + 1, VECTOR, self._elementwise_beats(count)

    def _op_v_topk_mask(self, state, ins):
        count = self._check_count(ins.imm)
        conf = state.sram_read_vector(state.gp[ins.rs1], count)
        elig = state.sram_read_vector(state.gp[ins.rs2], count) != 0.0
        mask = units.topk_mask(conf, elig, state.gp[ins.rs3])
        state.sram_write_vector(state.gp[ins.rd], mask.astype(np.float32))
        return state.pc + 1, VECTOR, count * self.timings.topk_per_element

    def _op_v_select_int(self, state, ins):
        count = self._check_count(ins.imm)
        mask = state.sram_read_vector(state.gp[ins.rs1], count) != 0.0
        a = state.int_sram_read(state.gp[ins.rs2], count)
        b = state.int_sram_read(state.gp[ins.rs3], count)
        state.int_sram_write_array(state.gp[ins.rd], units.select_int(mask, a, b))
        return state.pc + 1, VECTOR, self._elementwise_beats(count)

    def _op_s_st_fp(self, state, ins):
        state.fp_sram_write(state.gp[ins.rs1] + ins.imm, state.fp[ins.rd])
        return state.pc + 1, SCALAR, self.timings.scalar_latency

    def _op_s_st_int(self, state, ins):
        state.int_sram_write(state.gp[ins.rs1] + ins.imm, state.gp[ins.rd])
        return state.pc + 1, SCALAR, self.timings.scalar_latency

    def _op_s_map_v_fp(self, state, ins):
        count = ins.imm
        if count <= 0:
            raise SimFault("vector-count", f"map element count {count} must be positive")
        vals = state.fp_sram_read(state.gp[ins.rs1], count)
        state.sram_write_vector(state.gp[ins.rd], vals)
        cost = -(-count // self.vlen) + 1
        return state.pc + 1, MEMORY, cost

    def _op_s_exp(self, state, ins):
        # same float64->float32 evaluation as numerics.exp32
        state.fp[ins.rd] = np.exp(np.float64(state.fp[ins.rs1]))
        return state.pc + 1, SCALAR, self.timings.fp_exp_latency

    def _op_s_recip(self, state, ins):
        if state.fp[ins.rs1] == 0.0:
            raise SimFault("recip-zero", "reciprocal of zero")
        state.fp[ins.rd] = 1.0 / np.float64(state.fp[ins.rs1])
        return state.pc + 1, SCALAR, self.timings.fp_recip_latency

    def _op_s_fmul(self, state, ins):
        state.fp[ins.rd] = state.fp[ins.rs1] * state.fp[ins.rs2]
        return state.pc + 1, SCALAR, self.timings.scalar_latency

    def _op_s_fadd(self, state, ins):
        state.fp[ins.rd] = state.fp[ins.rs1] + state.fp[ins.rs2]
        return state.pc + 1, SCALAR, self.timings.scalar_latency

    def _op_s_fmax_idx(self, state, ins):
        new, cur = state.fp[ins.rs1], state.fp[ins.rd]
        if new > cur or (new == cur and state.gp[ins.rs3] < state.gp[ins.rs2]):
            state.fp[ins.rd] = new
            state.write_gp(ins.rs2, state.gp[ins.rs3])
        return state.pc + 1, SCALAR, self.timings.scalar_latency

    def _op_s_li(self, state, ins):
        if ins.rs1:  # float-file destination
            state.fp[ins.rd] = np.float32(ins.imm)
        else:
            state.write_gp(ins.rd, ins.imm)
        return state.pc + 1, SCALAR, self.timings.scalar_latency

    def _op_s_addi(self, state, ins):
        state.write_gp(ins.rd, state.gp[ins.rs1] + ins.imm)
        return state.pc + 1, SCALAR, self.timings.scalar_latency

    def _op_s_bne(self, state, ins):
        taken = state.gp[ins.rs1] != state.gp[ins.rs2]
        return (ins.imm if taken else state.pc + 1), OTHER, self.timings.scalar_latency

    def _op_s_bge(self, state, ins):
        taken = state.gp[ins.rs1] >= state.gp[ins.rs2]
        return (ins.imm if taken else state.pc + 1), OTHER, self.timings.scalar_latency

    def _op_s_halt(self, state, ins):
        return _HALT_PC, OTHER, self.timings.scalar_latency

    def _op_fifo_push(self, state, ins):
        value = int(state.int_sram_read(state.gp[ins.rs1] + ins.imm, 1)[0])
        state.fifo_out.append(value)
        return state.pc + 1, SCALAR, self.timings.scalar_latency


_HALT_PC = -1
