"""Assembler / disassembler round-trip and error reporting tests."""

import pytest

from diffnpu.isa import (
    CUSTOM_OPCODES,
    SIGNATURES,
    AsmError,
    Instruction,
    Opcode,
    Program,
    assemble,
    disassemble,
)


def test_custom_opcode_set():
    names = {op.name for op in CUSTOM_OPCODES}
    assert names == {
        "V_RED_MAX_IDX", "S_ST_FP", "S_ST_INT",
        "S_MAP_V_FP", "V_TOPK_MASK", "V_SELECT_INT",
    }
    assert all(op in SIGNATURES for op in Opcode)


def test_assemble_s_li():
    prog = assemble("s_li x1, 5")
    assert len(prog) == 1
    ins = prog.instructions[0]
    assert ins.opcode == Opcode.S_LI
    assert ins.rd == 1 and ins.imm == 5 and ins.rs1 == 0


def test_assemble_s_li_float_file():
    ins = assemble("s_li f3, -1").instructions[0]
    assert ins.rd == 3 and ins.imm == -1 and ins.rs1 == 1
    assert disassemble(Program([ins])).strip() == "s_li f3, -1"


def test_assemble_v_red_max_idx():
    ins = assemble("v_red_max_idx f2, x3, x1, x2").instructions[0]
    assert ins.opcode == Opcode.V_RED_MAX_IDX
    assert (ins.rd, ins.rs1, ins.rs2, ins.rs3) == (2, 3, 1, 2)


def test_assemble_labels_and_branches():
    src = """
    ; count x1 down to zero
    s_li x1, 3
    loop:
        s_addi x1, x1, -1
        s_bne x1, x0, loop
    s_halt
    """
    prog = assemble(src)
    assert prog.labels == {"loop": 1}
    assert prog.instructions[2].imm == 1
    assert prog.instructions[2].opcode == Opcode.S_BNE


def test_empty_source_and_halt():
    assert disassemble(assemble("")) == ""
    assert disassemble(assemble("s_halt")).strip() == "s_halt"


@pytest.mark.parametrize(
    "src,fragment",
    [
        ("frobnicate x1, x2", "unknown mnemonic"),
        ("s_li x1", "expects 2 operand"),
        ("s_li x1, 2, 3", "expects 2 operand"),
        ("s_bne x1, x0, nowhere", "unresolved label"),
        ("s_li x32, 1", "out of range"),
        ("s_li x1, banana", "bad immediate"),
        ("v_red_max_idx x2, x3, x1, x2", "register"),
        ("s_addi f1, x1, 1", "register"),
    ],
)
def test_assemble_errors_carry_line_numbers(src, fragment):
    with pytest.raises(AsmError) as err:
        assemble("s_halt\n" + src)
    assert "line 2" in str(err.value)
    assert fragment in str(err.value)


def test_duplicate_label_rejected():
    with pytest.raises(AsmError, match="duplicate label"):
        assemble("a:\na:\ns_halt")


def test_branch_target_validation():
    with pytest.raises(ValueError, match="branch target"):
        Program([Instruction(Opcode.S_BNE, rs1=1, rs2=0, imm=5)]).validate()


def test_roundtrip_fixed_point_small():
    src = """
    s_li x1, 4
    s_li f5, -1
    top:
        v_red_max_idx f2, x3, x7, x5
        s_fmax_idx f1, f2, x8, x7
        v_sub_scalar x4, f1, 64
        v_exp x4, 64
        v_red_sum f2, x4
        s_addi x1, x1, -1
        s_bne x1, x0, top
    h_prefetch_v x3, x2, x21
    v_topk_mask x17, x15, x16, x14, 64
    v_select_int x19, x16, x19, x18, 64
    s_map_v_fp x15, x0, 64
    s_st_fp f7, x9, 0
    s_st_int x8, x10, 4
    fifo_push x23, 0
    s_halt
    """
    prog = assemble(src)
    text = disassemble(prog)
    again = assemble(text)
    assert again == prog
    assert disassemble(again) == text


def test_roundtrip_fixed_point_generated_program():
    # builds a synthetic 500+ instruction program covering every opcode
    import itertools
    import random

    rng = random.Random(42)
    instructions = []
    for opcode in itertools.islice(itertools.cycle(Opcode), 520):
        fields = {"rd": 0, "rs1": 0, "rs2": 0, "rs3": 0, "imm": 0}
        for name, kind in SIGNATURES[opcode]:
            if kind == "imm":
                fields[name] = rng.randrange(-1000, 1000)
            elif kind == "label":
                fields[name] = rng.randrange(0, 520)
            elif kind == "xf":
                fields[name] = rng.randrange(32)
                fields["rs1"] = rng.randrange(2)
            else:
                fields[name] = rng.randrange(32)
        instructions.append(Instruction(opcode, **fields))
    prog = Program(instructions)
    prog.validate()
    text = disassemble(prog)
    assert assemble(text) == prog
