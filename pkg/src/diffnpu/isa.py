"""Instruction set: decoded instruction structures, assembler, disassembler.

Instructions are kept as decoded structures plus a canonical text form; no
binary encoding is defined.  Two 32-entry register files exist: general
purpose integers ``x0..x31`` (``x0`` is hardwired to zero) and scalar
floats ``f0..f31``.  Vector operands are Vector/FP/Int-SRAM byte addresses
held in integer registers; element counts travel in registers or in the
immediate field.

Assembly grammar: one instruction per line, ``label:`` definitions,
``;`` comments, lower-case mnemonics, comma-separated operands,
immediates in decimal or ``0x`` hex, branch targets by label.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field


class Opcode(enum.IntEnum):
    # custom extension
    V_RED_MAX_IDX = 0
    S_ST_FP = 1
    S_ST_INT = 2
    S_MAP_V_FP = 3
    V_TOPK_MASK = 4
    V_SELECT_INT = 5
    # base subset used by the sampling program
    H_PREFETCH_V = 6
    V_RED_MAX = 7
    V_RED_SUM = 8
    V_SUB_SCALAR = 9
    V_EXP = 10
    V_SUB = 11
    S_EXP = 12
    S_RECIP = 13
    S_FMUL = 14
    S_FADD = 15
    S_FMAX_IDX = 16
    S_LI = 17
    S_ADDI = 18
    S_BNE = 19
    S_BGE = 20
    S_HALT = 21
    FIFO_PUSH = 22


CUSTOM_OPCODES = (
    Opcode.V_RED_MAX_IDX,
    Opcode.S_ST_FP,
    Opcode.S_ST_INT,
    Opcode.S_MAP_V_FP,
    Opcode.V_TOPK_MASK,
    Opcode.V_SELECT_INT,
)

# operand kinds
GP = "x"      # general-purpose integer register
FP = "f"      # scalar float register
ANY = "xf"    # either file (s_li); the file flag is stored in rs1
IMM = "imm"
LABEL = "label"

# opcode -> ordered (field, kind) operand signature
SIGNATURES: dict[Opcode, tuple[tuple[str, str], ...]] = {
    Opcode.V_RED_MAX_IDX: (("rd", FP), ("rs1", GP), ("rs2", GP), ("rs3", GP)),
    Opcode.S_ST_FP: (("rd", FP), ("rs1", GP), ("imm", IMM)),
    Opcode.S_ST_INT: (("rd", GP), ("rs1", GP), ("imm", IMM)),
    Opcode.S_MAP_V_FP: (("rd", GP), ("rs1", GP), ("imm", IMM)),
    Opcode.V_TOPK_MASK: (("rd", GP), ("rs1", GP), ("rs2", GP), ("rs3", GP), ("imm", IMM)),
    Opcode.V_SELECT_INT: (("rd", GP), ("rs1", GP), ("rs2", GP), ("rs3", GP), ("imm", IMM)),
    Opcode.H_PREFETCH_V: (("rd", GP), ("rs1", GP), ("rs2", GP)),
    Opcode.V_RED_MAX: (("rd", FP), ("rs1", GP)),
    Opcode.V_RED_SUM: (("rd", FP), ("rs1", GP)),
    Opcode.V_SUB_SCALAR: (("rs1", GP), ("rd", FP), ("imm", IMM)),
    Opcode.V_EXP: (("rs1", GP), ("imm", IMM)),
    Opcode.V_SUB: (("rs1", GP), ("rs2", GP), ("imm", IMM)),
    Opcode.S_EXP: (("rd", FP), ("rs1", FP)),
    Opcode.S_RECIP: (("rd", FP), ("rs1", FP)),
    Opcode.S_FMUL: (("rd", FP), ("rs1", FP), ("rs2", FP)),
    Opcode.S_FADD: (("rd", FP), ("rs1", FP), ("rs2", FP)),
    Opcode.S_FMAX_IDX: (("rd", FP), ("rs1", FP), ("rs2", GP), ("rs3", GP)),
    Opcode.S_LI: (("rd", ANY), ("imm", IMM)),
    Opcode.S_ADDI: (("rd", GP), ("rs1", GP), ("imm", IMM)),
    Opcode.S_BNE: (("rs1", GP), ("rs2", GP), ("imm", LABEL)),
    Opcode.S_BGE: (("rs1", GP), ("rs2", GP), ("imm", LABEL)),
    Opcode.S_HALT: (),
    Opcode.FIFO_PUSH: (("rs1", GP), ("imm", IMM)),
}

MNEMONICS = {op.name.lower(): op for op in Opcode}
BRANCH_OPCODES = (Opcode.S_BNE, Opcode.S_BGE)

NUM_REGS = 32
IMM_MIN = -(2 ** 31)
IMM_MAX = 2 ** 31 - 1


class AsmError(ValueError):
    """Assembly input error, carrying the 1-based source line number."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True, slots=True)
class Instruction:
    opcode: Opcode
    rd: int = 0
    rs1: int = 0
    rs2: int = 0
    rs3: int = 0
    imm: int = 0


@dataclass
class Program:
    """Ordered instruction list with resolved labels.

    Branch targets are stored as absolute instruction indices in ``imm``;
    ``labels`` keeps the name -> index map for inspection and host hooks.
    Two programs compare equal when their instruction sequences match.
    """

    instructions: list[Instruction] = field(default_factory=list)
    labels: dict[str, int] = field(default_factory=dict)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Program):
            return NotImplemented
        return self.instructions == other.instructions

    def __len__(self) -> int:
        return len(self.instructions)

    def validate(self) -> None:
        n = len(self.instructions)
        for pc, ins in enumerate(self.instructions):
            if ins.opcode in BRANCH_OPCODES and not 0 <= ins.imm < n:
                raise ValueError(f"pc {pc}: branch target {ins.imm} out of range")
        for name, idx in self.labels.items():
            if not 0 <= idx <= n:
                raise ValueError(f"label {name!r} resolves outside the program")


def _parse_register(token: str, kind: str, lineno: int) -> tuple[int, str]:
    token = token.strip()
    file = token[:1]
    if file not in ("x", "f") or file not in kind:
        raise AsmError(lineno, f"expected {kind!r}-file register, got {token!r}")
    try:
        idx = int(token[1:])
    except ValueError:
        raise AsmError(lineno, f"bad register {token!r}") from None
    if not 0 <= idx < NUM_REGS:
        raise AsmError(lineno, f"register {token!r} out of range (0..{NUM_REGS - 1})")
    return idx, file


def _parse_imm(token: str, lineno: int) -> int:
    try:
        value = int(token.strip(), 0)
    except ValueError:
        raise AsmError(lineno, f"bad immediate {token!r}") from None
    if not IMM_MIN <= value <= IMM_MAX:
        raise AsmError(lineno, f"immediate {value} outside 32-bit signed range")
    return value


def assemble(source: str) -> Program:
    """Assemble canonical text into a Program with resolved labels."""
    labels: dict[str, int] = {}
    pending: list[tuple[int, str, list[str]]] = []  # (lineno, mnemonic, operands)

    for lineno, raw in enumerate(source.splitlines(), start=1):
        line = raw.split(";", 1)[0].strip()
        while line:
            head, colon, rest = line.partition(":")
            if colon and " " not in head and "," not in head and head:
                name = head.strip()
                if not name.isidentifier():
                    raise AsmError(lineno, f"bad label name {name!r}")
                if name in labels:
                    raise AsmError(lineno, f"duplicate label {name!r}")
                labels[name] = len(pending)
                line = rest.strip()
                continue
            break
        if not line:
            continue
        parts = line.split(None, 1)
        mnemonic = parts[0].lower()
        operands = [t.strip() for t in parts[1].split(",")] if len(parts) > 1 else []
        if operands == [""]:
            operands = []
        pending.append((lineno, mnemonic, operands))

    instructions: list[Instruction] = []
    for lineno, mnemonic, operands in pending:
        opcode = MNEMONICS.get(mnemonic)
        if opcode is None:
            raise AsmError(lineno, f"unknown mnemonic {mnemonic!r}")
        sig = SIGNATURES[opcode]
        if len(operands) != len(sig):
            raise AsmError(
                lineno,
                f"{mnemonic} expects {len(sig)} operand(s), got {len(operands)}",
            )
        fields = {"rd": 0, "rs1": 0, "rs2": 0, "rs3": 0, "imm": 0}
        for token, (name, kind) in zip(operands, sig):
            if kind == IMM:
                fields[name] = _parse_imm(token, lineno)
            elif kind == LABEL:
                if token in labels:
                    fields[name] = labels[token]
                elif _looks_numeric(token):
                    fields[name] = _parse_imm(token, lineno)
                elif token.isidentifier():
                    raise AsmError(lineno, f"unresolved label {token!r}")
                else:
                    raise AsmError(lineno, f"bad branch target {token!r}")
            else:
                idx, file = _parse_register(token, kind, lineno)
                fields[name] = idx
                if kind == ANY:
                    fields["rs1"] = 1 if file == "f" else 0
        instructions.append(Instruction(opcode, **fields))

    program = Program(instructions, labels)
    program.validate()
    return program


def _looks_numeric(token: str) -> bool:
    try:
        int(token, 0)
        return True
    except ValueError:
        return False


def format_instruction(ins: Instruction, target_labels: dict[int, str] | None = None) -> str:
    """Canonical one-line text of a single instruction."""
    sig = SIGNATURES[ins.opcode]
    parts = []
    for name, kind in sig:
        value = getattr(ins, name)
        if kind == IMM:
            parts.append(str(value))
        elif kind == LABEL:
            if target_labels and value in target_labels:
                parts.append(target_labels[value])
            else:
                parts.append(str(value))
        elif kind == ANY:
            parts.append(f"{'f' if ins.rs1 else 'x'}{value}")
        else:
            parts.append(f"{kind}{value}")
    text = ins.opcode.name.lower()
    if parts:
        text += " " + ", ".join(parts)
    return text


def disassemble(program: Program) -> str:
    """Canonical text for a Program; stable across runs.

    Branch targets become generated labels ``L0, L1, ...`` in target order,
    so ``assemble(disassemble(p)) == p`` structurally.
    """
    targets = sorted(
        {ins.imm for ins in program.instructions if ins.opcode in BRANCH_OPCODES}
    )
    names = {idx: f"L{n}" for n, idx in enumerate(targets)}
    lines = []
    for pc, ins in enumerate(program.instructions):
        if pc in names:
            lines.append(f"{names[pc]}:")
        lines.append("    " + format_instruction(ins, names))
    return "\n".join(lines) + ("\n" if lines else "")
