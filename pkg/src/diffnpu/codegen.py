"""Lowering of the blocked diffusion sampling loop onto the instruction set.

The generated program runs, per diffusion step t and per (batch b, position l):

  phase 1  stream logits HBM -> Vector SRAM in chunks; per VLEN window keep a
           running (max, argmax) via V_RED_MAX_IDX + S_FMAX_IDX and a running
           sum of shifted exponentials with online rescaling
           s <- s * e^(m_old - m_new) + sum(e^(window - m_new)); finish with
           the confidence x0_p = 1 / s (S_RECIP);
  phase 2  store x0_p to FP SRAM slot l and the argmax token to Int SRAM;
  phase 3  rebuild the L-vector of confidences in Vector SRAM (S_MAP_V_FP)
           and produce the transfer mask with V_TOPK_MASK over the still-
           masked positions (eligibility vector operand);
  phase 4  two V_SELECT_INT ops commit tokens in the integer domain, then
           the eligibility vector is updated in place (V_SUB).

After the last step every token is pushed through the host FIFO.

Register-level conventions the emitted code relies on:

  x0 hardwired zero; chunk/window addresses travel in GP registers as byte
  addresses; per-row pad lanes (when VLEN or the MX block size do not divide
  V) are "poisoned" by subtracting e^88 so they lose every max reduction and
  contribute exactly 0.0 to every sum.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .isa import Instruction, Opcode, Program
from .logits import row_bytes, row_elements_padded
from .machine import FP_ELEM_BYTES, INT_ELEM_BYTES, MemoryParams, VECTOR_ELEM_BYTES, sram_footprint


class ConfigError(ValueError):
    pass


@dataclass
class SamplingConfig:
    """Workload and hardware parameters of one sampling run."""

    B: int = 2
    T: int = 1
    L: int = 64
    V: int = 2048
    V_chunk: int = 128
    VLEN: int = 64
    R: int = 1
    mask_id: int = -1
    seed: int = 1
    mode: str = ""  # "edge" | "performance"; inferred from V_chunk when empty

    def __post_init__(self):
        if not self.mode:
            self.mode = "edge" if self.V_chunk < self.V else "performance"
        self.validate()

    def validate(self) -> None:
        for name in ("B", "T", "L", "V", "V_chunk", "VLEN", "R"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.VLEN % 32:
            raise ConfigError(f"VLEN={self.VLEN} must be a multiple of 32")
        if self.VLEN > self.V_chunk:
            raise ConfigError(f"VLEN={self.VLEN} must not exceed V_chunk={self.V_chunk}")
        if self.V_chunk > self.V:
            raise ConfigError(f"V_chunk={self.V_chunk} must not exceed V={self.V}")
        if self.mode not in ("edge", "performance"):
            raise ConfigError(f"mode must be 'edge' or 'performance', not {self.mode!r}")
        if self.mode == "edge":
            if self.V_chunk >= self.V:
                raise ConfigError("edge mode requires V_chunk < V")
            if self.V_chunk % self.VLEN:
                raise ConfigError(
                    f"V_chunk={self.V_chunk} must be a multiple of VLEN={self.VLEN} (edge chunking)"
                )
        else:
            if self.V_chunk != self.V:
                raise ConfigError("performance mode preloads whole rows: V_chunk must equal V")
            if self.B % self.R:
                raise ConfigError(f"R={self.R} must divide B={self.B}")

    # -- derived layout ----------------------------------------------------

    @property
    def windows_per_row(self) -> int:
        return -(-self.V // self.VLEN)

    @property
    def row_slot_elements(self) -> int:
        """Vector-SRAM stride of one resident row (performance mode)."""
        return self.windows_per_row * self.VLEN

    @property
    def conf_base(self) -> int:
        return 0

    @property
    def elig_base(self) -> int:
        return self.B * self.L * VECTOR_ELEM_BYTES

    @property
    def transfer_base(self) -> int:
        return 2 * self.B * self.L * VECTOR_ELEM_BYTES

    @property
    def buffer_base(self) -> int:
        return 3 * self.B * self.L * VECTOR_ELEM_BYTES

    @property
    def x_base(self) -> int:
        return 0

    @property
    def x0_base(self) -> int:
        return self.B * self.L * INT_ELEM_BYTES

    def required_sram_bytes(self) -> dict[str, int]:
        """Actual allocation the generated program addresses, per domain.

        Vector needs the closed-form footprint plus (performance mode) the
        VLEN alignment slack of resident rows; Int/FP match the closed forms.
        """
        foot = sram_footprint(self)
        if self.mode == "edge":
            vector = self.buffer_base + self.V_chunk * VECTOR_ELEM_BYTES
        else:
            vector = self.buffer_base + self.R * self.L * self.row_slot_elements * VECTOR_ELEM_BYTES
        return {
            "vector": max(vector, foot["vector_bytes"]),
            "fp": foot["fp_bytes"],
            "int": foot["int_bytes"],
        }

    def check_capacity(self, params: MemoryParams) -> None:
        need = self.required_sram_bytes()
        foot = sram_footprint(self)
        if need["vector"] > params.vector_sram_bytes:
            formula = (
                f"3*B*L + V_chunk = {foot['vector_elements']}"
                if self.mode == "edge"
                else f"3*B*L + V*L*R = {foot['vector_elements']}"
            )
            raise ConfigError(
                f"vector SRAM requirement ({formula} elements, {need['vector']} bytes"
                f" with row alignment) exceeds capacity {params.vector_sram_bytes}"
            )
        if need["int"] > params.int_sram_bytes:
            raise ConfigError(
                f"int SRAM requirement (2*B*L = {foot['int_elements']} elements,"
                f" {need['int']} bytes) exceeds capacity {params.int_sram_bytes}"
            )
        if need["fp"] > params.fp_sram_bytes:
            raise ConfigError(
                f"fp SRAM requirement (max(L, VLEN) = {foot['fp_elements']} elements,"
                f" {need['fp']} bytes) exceeds capacity {params.fp_sram_bytes}"
            )


def num_transfer_tokens(masked_count: int, T: int) -> list[int]:
    """Tokens to commit per step: floor split with the remainder up front."""
    if T < 1:
        raise ConfigError("T must be >= 1")
    if masked_count < 0:
        raise ConfigError("masked_count must be >= 0")
    base, rem = divmod(masked_count, T)
    return [base + (1 if t < rem else 0) for t in range(T)]


@dataclass
class KSchedule:
    """Per-step, per-batch transfer counts; rows all start fully masked."""

    counts: list[list[int]]  # counts[t][b]

    @classmethod
    def for_config(cls, config: SamplingConfig) -> "KSchedule":
        per_step = num_transfer_tokens(config.L, config.T)
        return cls([[k] * config.B for k in per_step])


# ---------------------------------------------------------------------------
# Register map used by the generated code
# ---------------------------------------------------------------------------

X_SCRATCH = 1      # init/fifo cursor
X_HBM = 2          # HBM byte cursor (monotone over the whole run)
X_PFDST = 3        # prefetch destination byte address
X_WIN = 4          # window read cursor (vector bytes)
X_VBASE = 5        # absolute vocab index of the current window
X_COUNT = 6        # chunk / pending-prefetch counter
X_CHUNKIDX = 7     # argmax index out of V_RED_MAX_IDX
X_ROWIDX = 8       # running argmax of the row
X_FPCUR = 9        # FP SRAM store cursor
X_X0CUR = 10       # Int SRAM x0 store cursor
X_LCTR = 11        # l loop counter
X_BCTR = 12        # b loop counter
X_TCTR = 13        # t loop counter
X_K = 14           # transfer count for the current step
X_CONF = 15        # confidence row address
X_ELIG = 16        # eligibility row address
X_TRANSFER = 17    # transfer-mask row address
X_XROW = 18        # Int SRAM x row address
X_X0ROW = 19       # Int SRAM x0 row address
X_MASKID = 20      # mask_id constant
X_PFCNT = 21       # prefetch element count constant
X_SLOT = 22        # resident-row read cursor (performance mode)
X_FIFOCUR = 23     # fifo drain cursor
X_TMP = 24         # scratch (poison address, loop bounds)
X_LCONST = 25      # L
X_GCTR = 26        # group loop counter (performance mode)
X_BBOUND = 27      # B (edge) / R (performance) loop bound
X_TBOUND = 28      # T
X_KREM = 29        # remainder of the k schedule
X_TAILCNT = 30     # tail-chunk prefetch count (edge mode)
X_GBOUND = 31      # B // R (performance mode)

F_ZERO = 0         # +0.0
F_M = 1            # running max
F_WMAX = 2         # window max / window sum scratch
F_S = 3            # running sum of shifted exponentials
F_T = 4            # rescale scratch
F_NEG1 = 5         # -1.0
F_MOLD = 6         # previous running max
F_CONF = 7         # confidence 1/s
F_BIG = 8          # e^88 poison magnitude
F_EXPARG = 9       # holds the constant 88


class _Builder:
    def __init__(self):
        self.instructions: list[Instruction] = []
        self.labels: dict[str, int] = {}
        self._fixups: list[tuple[int, str]] = []
        self._serial = 0

    def fresh(self, stem: str) -> str:
        self._serial += 1
        return f"{stem}_{self._serial}"

    def label(self, name: str) -> None:
        self.labels[name] = len(self.instructions)

    def emit(self, opcode: Opcode, rd=0, rs1=0, rs2=0, rs3=0, imm=0) -> None:
        self.instructions.append(Instruction(opcode, rd, rs1, rs2, rs3, imm))

    def branch(self, opcode: Opcode, rs1: int, rs2: int, target: str) -> None:
        self._fixups.append((len(self.instructions), target))
        self.instructions.append(Instruction(opcode, rs1=rs1, rs2=rs2, imm=-1))

    def li(self, reg: int, imm: int) -> None:
        self.emit(Opcode.S_LI, rd=reg, imm=imm)

    def li_f(self, reg: int, imm: int) -> None:
        self.emit(Opcode.S_LI, rd=reg, rs1=1, imm=imm)

    def addi(self, rd: int, rs1: int, imm: int) -> None:
        self.emit(Opcode.S_ADDI, rd=rd, rs1=rs1, imm=imm)

    def finish(self) -> Program:
        instructions = list(self.instructions)
        for pos, target in self._fixups:
            if target not in self.labels:
                raise ValueError(f"internal codegen error: unresolved label {target}")
            ins = instructions[pos]
            instructions[pos] = replace(ins, imm=self.labels[target])
        program = Program(instructions, dict(self.labels))
        program.validate()
        return program


def _emit_window(b: _Builder, vlen: int, poison: tuple[int, int] | None) -> None:
    """One VLEN window of the streaming Stable-Max, advancing X_WIN/X_VBASE.

    poison = (byte offset within the window, lane count) neutralizes pad or
    stale lanes before they can reach a reduction.
    """
    if poison is not None:
        off, count = poison
        b.addi(X_TMP, X_WIN, off)
        b.emit(Opcode.V_SUB_SCALAR, rd=F_BIG, rs1=X_TMP, imm=count)
    b.emit(Opcode.V_RED_MAX_IDX, rd=F_WMAX, rs1=X_WIN, rs2=X_CHUNKIDX, rs3=X_VBASE)
    b.emit(Opcode.S_FADD, rd=F_MOLD, rs1=F_M, rs2=F_ZERO)
    b.emit(Opcode.S_FMAX_IDX, rd=F_M, rs1=F_WMAX, rs2=X_ROWIDX, rs3=X_CHUNKIDX)
    b.emit(Opcode.S_FMUL, rd=F_T, rs1=F_M, rs2=F_NEG1)
    b.emit(Opcode.S_FADD, rd=F_T, rs1=F_MOLD, rs2=F_T)
    b.emit(Opcode.S_EXP, rd=F_T, rs1=F_T)
    b.emit(Opcode.S_FMUL, rd=F_S, rs1=F_S, rs2=F_T)
    b.emit(Opcode.V_SUB_SCALAR, rd=F_M, rs1=X_WIN, imm=vlen)
    b.emit(Opcode.V_EXP, rs1=X_WIN, imm=vlen)
    b.emit(Opcode.V_RED_SUM, rd=F_WMAX, rs1=X_WIN)
    b.emit(Opcode.S_FADD, rd=F_S, rs1=F_S, rs2=F_WMAX)
    b.addi(X_WIN, X_WIN, vlen * VECTOR_ELEM_BYTES)
    b.addi(X_VBASE, X_VBASE, vlen)


def _emit_row_init(b: _Builder) -> None:
    b.emit(Opcode.S_FMUL, rd=F_M, rs1=F_BIG, rs2=F_NEG1)  # m = -e^88
    b.li_f(F_S, 0)
    b.li(X_ROWIDX, 0)
    b.li(X_VBASE, 0)


def _emit_row_finish(b: _Builder) -> None:
    b.emit(Opcode.S_RECIP, rd=F_CONF, rs1=F_S)
    b.emit(Opcode.S_ST_FP, rd=F_CONF, rs1=X_FPCUR, imm=0)
    b.addi(X_FPCUR, X_FPCUR, FP_ELEM_BYTES)
    b.emit(Opcode.S_ST_INT, rd=X_ROWIDX, rs1=X_X0CUR, imm=0)
    b.addi(X_X0CUR, X_X0CUR, INT_ELEM_BYTES)


def _emit_phase34(b: _Builder, cfg: SamplingConfig) -> None:
    L = cfg.L
    b.emit(Opcode.S_MAP_V_FP, rd=X_CONF, rs1=0, imm=L)  # fp src address 0 (x0)
    b.emit(Opcode.V_TOPK_MASK, rd=X_TRANSFER, rs1=X_CONF, rs2=X_ELIG, rs3=X_K, imm=L)
    b.emit(Opcode.V_SELECT_INT, rd=X_X0ROW, rs1=X_ELIG, rs2=X_X0ROW, rs3=X_XROW, imm=L)
    b.emit(Opcode.V_SELECT_INT, rd=X_XROW, rs1=X_TRANSFER, rs2=X_X0ROW, rs3=X_XROW, imm=L)
    b.emit(Opcode.V_SUB, rs1=X_ELIG, rs2=X_TRANSFER, imm=L)
    b.addi(X_CONF, X_CONF, L * VECTOR_ELEM_BYTES)
    b.addi(X_ELIG, X_ELIG, L * VECTOR_ELEM_BYTES)
    b.addi(X_TRANSFER, X_TRANSFER, L * VECTOR_ELEM_BYTES)
    b.addi(X_XROW, X_XROW, L * INT_ELEM_BYTES)
    b.addi(X_X0ROW, X_X0ROW, L * INT_ELEM_BYTES)


def _emit_prologue(b: _Builder, cfg: SamplingConfig) -> None:
    b.li_f(F_ZERO, 0)
    b.li_f(F_NEG1, -1)
    b.li_f(F_EXPARG, 88)
    b.emit(Opcode.S_EXP, rd=F_BIG, rs1=F_EXPARG)
    b.li(X_LCONST, cfg.L)
    b.li(X_TBOUND, cfg.T)
    b.li(X_KREM, cfg.L % cfg.T)
    # initialize x to mask_id
    b.li(X_MASKID, cfg.mask_id)
    b.li(X_SCRATCH, cfg.x_base)
    b.li(X_TMP, cfg.x_base + cfg.B * cfg.L * INT_ELEM_BYTES)
    init_x = b.fresh("init_x")
    b.label(init_x)
    b.emit(Opcode.S_ST_INT, rd=X_MASKID, rs1=X_SCRATCH, imm=0)
    b.addi(X_SCRATCH, X_SCRATCH, INT_ELEM_BYTES)
    b.branch(Opcode.S_BNE, X_SCRATCH, X_TMP, init_x)
    # eligibility := 1.0 everywhere (zero via self-subtract, then -(-1))
    total = cfg.B * cfg.L
    done = 0
    while done < total:
        n = min(cfg.VLEN, total - done)
        b.li(X_SCRATCH, cfg.elig_base + done * VECTOR_ELEM_BYTES)
        b.emit(Opcode.V_SUB, rs1=X_SCRATCH, rs2=X_SCRATCH, imm=n)
        b.emit(Opcode.V_SUB_SCALAR, rd=F_NEG1, rs1=X_SCRATCH, imm=n)
        done += n


def _emit_step_prologue(b: _Builder, cfg: SamplingConfig) -> None:
    """Per-step k computation and cursor resets."""
    b.li(X_K, cfg.L // cfg.T)
    k_done = b.fresh("k_done")
    b.branch(Opcode.S_BGE, X_TCTR, X_KREM, k_done)
    b.addi(X_K, X_K, 1)
    b.label(k_done)
    b.li(X_CONF, cfg.conf_base)
    b.li(X_ELIG, cfg.elig_base)
    b.li(X_TRANSFER, cfg.transfer_base)
    b.li(X_XROW, cfg.x_base)
    b.li(X_X0ROW, cfg.x0_base)


def _emit_fifo_drain(b: _Builder, cfg: SamplingConfig) -> None:
    b.li(X_FIFOCUR, cfg.x_base)
    b.li(X_TMP, cfg.x_base + cfg.B * cfg.L * INT_ELEM_BYTES)
    loop = b.fresh("fifo")
    b.label(loop)
    b.emit(Opcode.FIFO_PUSH, rs1=X_FIFOCUR, imm=0)
    b.addi(X_FIFOCUR, X_FIFOCUR, INT_ELEM_BYTES)
    b.branch(Opcode.S_BNE, X_FIFOCUR, X_TMP, loop)
    b.emit(Opcode.S_HALT)


def _edge_phase1(b: _Builder, cfg: SamplingConfig) -> None:
    """Chunked streaming over one row (edge mode)."""
    vlen = cfg.VLEN
    n_full = cfg.V // cfg.V_chunk
    tail = cfg.V - n_full * cfg.V_chunk
    chunk_blk_bytes = cfg.V_chunk // 32 * 33
    _emit_row_init(b)
    if n_full:
        b.li(X_COUNT, n_full)
        loop = b.fresh("chunk")
        b.label(loop)
        b.emit(Opcode.H_PREFETCH_V, rd=X_PFDST, rs1=X_HBM, rs2=X_PFCNT)
        b.addi(X_HBM, X_HBM, chunk_blk_bytes)
        b.addi(X_WIN, X_PFDST, 0)
        for _ in range(cfg.V_chunk // vlen):
            _emit_window(b, vlen, poison=None)
        b.addi(X_COUNT, X_COUNT, -1)
        b.branch(Opcode.S_BNE, X_COUNT, 0, loop)
    if tail:
        tail32 = -(-tail // 32) * 32
        b.emit(Opcode.H_PREFETCH_V, rd=X_PFDST, rs1=X_HBM, rs2=X_TAILCNT)
        b.addi(X_HBM, X_HBM, tail32 // 32 * 33)
        b.addi(X_WIN, X_PFDST, 0)
        windows = -(-tail // vlen)
        pad = windows * vlen - tail
        for w in range(windows):
            poison = None
            if w == windows - 1 and pad:
                poison = ((vlen - pad) * VECTOR_ELEM_BYTES, pad)
            _emit_window(b, vlen, poison)
    _emit_row_finish(b)


def _perf_phase1_row(b: _Builder, cfg: SamplingConfig, skip_label: str) -> None:
    """One resident row (performance mode): pipelined next-row prefetch, then
    reductions over the row's VLEN windows in Vector SRAM."""
    vlen = cfg.VLEN
    stride_bytes = cfg.row_slot_elements * VECTOR_ELEM_BYTES
    b.branch(Opcode.S_BGE, 0, X_COUNT, skip_label)  # no prefetches pending
    b.emit(Opcode.H_PREFETCH_V, rd=X_PFDST, rs1=X_HBM, rs2=X_PFCNT)
    b.addi(X_HBM, X_HBM, row_bytes(cfg.V))
    b.addi(X_PFDST, X_PFDST, stride_bytes)
    b.addi(X_COUNT, X_COUNT, -1)
    b.label(skip_label)
    _emit_row_init(b)
    b.addi(X_WIN, X_SLOT, 0)
    windows = cfg.windows_per_row
    pad = windows * vlen - cfg.V
    for w in range(windows):
        poison = None
        if w == windows - 1 and pad:
            poison = ((vlen - pad) * VECTOR_ELEM_BYTES, pad)
        _emit_window(b, vlen, poison)
    b.addi(X_SLOT, X_SLOT, stride_bytes)
    _emit_row_finish(b)


def gen_sampling_program(config: SamplingConfig, params: MemoryParams | None = None) -> Program:
    """Lower the sampling loop for one config into a Program.

    When memory parameters are given, the config is first checked against
    the SRAM capacities (generation-time error on violation).  The returned
    program's labels include ``step_commit``, hit once per diffusion step
    after all batches commit (host snapshot hook point).
    """
    if params is not None:
        config.check_capacity(params)
    cfg = config
    b = _Builder()
    _emit_prologue(b, cfg)
    if cfg.mode == "edge":
        b.li(X_PFCNT, cfg.V_chunk)
        tail = cfg.V % cfg.V_chunk
        if tail:
            b.li(X_TAILCNT, -(-tail // 32) * 32)
        b.li(X_PFDST, cfg.buffer_base)
        b.li(X_BBOUND, cfg.B)
    else:
        b.li(X_PFCNT, row_elements_padded(cfg.V))
        b.li(X_BBOUND, cfg.R)
        b.li(X_GBOUND, cfg.B // cfg.R)
    b.li(X_HBM, 0)
    b.li(X_TCTR, 0)
    t_loop = b.fresh("t_loop")
    b.label(t_loop)
    _emit_step_prologue(b, cfg)

    if cfg.mode == "edge":
        b.li(X_BCTR, 0)
        b_loop = b.fresh("b_loop")
        b.label(b_loop)
        b.li(X_FPCUR, 0)
        b.addi(X_X0CUR, X_X0ROW, 0)
        b.li(X_LCTR, 0)
        l_loop = b.fresh("l_loop")
        b.label(l_loop)
        _edge_phase1(b, cfg)
        b.addi(X_LCTR, X_LCTR, 1)
        b.branch(Opcode.S_BNE, X_LCTR, X_LCONST, l_loop)
        _emit_phase34(b, cfg)
        b.addi(X_BCTR, X_BCTR, 1)
        b.branch(Opcode.S_BNE, X_BCTR, X_BBOUND, b_loop)
    else:
        rows_per_group = cfg.R * cfg.L
        stride_bytes = cfg.row_slot_elements * VECTOR_ELEM_BYTES
        b.li(X_GCTR, 0)
        g_loop = b.fresh("g_loop")
        b.label(g_loop)
        # preload the group's first row, then pipeline one row ahead
        b.li(X_PFDST, cfg.buffer_base)
        b.emit(Opcode.H_PREFETCH_V, rd=X_PFDST, rs1=X_HBM, rs2=X_PFCNT)
        b.addi(X_HBM, X_HBM, row_bytes(cfg.V))
        b.addi(X_PFDST, X_PFDST, stride_bytes)
        b.li(X_COUNT, rows_per_group - 1)
        b.li(X_SLOT, cfg.buffer_base)
        b.li(X_BCTR, 0)
        b_loop = b.fresh("b_loop")
        b.label(b_loop)
        b.li(X_FPCUR, 0)
        b.addi(X_X0CUR, X_X0ROW, 0)
        b.li(X_LCTR, 0)
        l_loop = b.fresh("l_loop")
        b.label(l_loop)
        _perf_phase1_row(b, cfg, b.fresh("no_pf"))
        b.addi(X_LCTR, X_LCTR, 1)
        b.branch(Opcode.S_BNE, X_LCTR, X_LCONST, l_loop)
        _emit_phase34(b, cfg)
        b.addi(X_BCTR, X_BCTR, 1)
        b.branch(Opcode.S_BNE, X_BCTR, X_BBOUND, b_loop)
        b.addi(X_GCTR, X_GCTR, 1)
        b.branch(Opcode.S_BNE, X_GCTR, X_GBOUND, g_loop)

    b.label("step_commit")
    b.addi(X_TCTR, X_TCTR, 1)
    b.branch(Opcode.S_BNE, X_TCTR, X_TBOUND, t_loop)
    _emit_fifo_drain(b, cfg)
    return b.finish()
