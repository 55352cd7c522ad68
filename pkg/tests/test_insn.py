"""Instruction encode/decode against hand-assembled reference words.

The FROZEN table was worked out by hand from the base-ISA bit layouts,
independently of this codebase, so encoder and decoder are checked against
a separate source of truth.
"""

from __future__ import annotations

import random

import pytest

from odrgsim.insn import (
    CSR_MSCRATCH,
    CSR_NUMBERS,
    ENCODINGS,
    decode,
    disasm,
    enc_branch,
    enc_csr,
    enc_i,
    enc_j,
    enc_load,
    enc_r,
    enc_shift,
    enc_store,
    enc_sys,
    enc_u,
    sext,
    zext,
)

# word -> (name, rd, rs1, rs2, imm, csr)
FROZEN = {
    0x00500093: ("addi", 1, 0, 0, 5, 0),
    0xFFF00293: ("addi", 5, 0, 0, -1, 0),
    0x002081B3: ("add", 3, 1, 2, 0, 0),
    0x402081B3: ("sub", 3, 1, 2, 0, 0),
    0x00852283: ("lw", 5, 10, 0, 8, 0),
    0x00512623: ("sw", 0, 2, 5, 12, 0),
    0x00208463: ("beq", 0, 1, 2, 8, 0),
    0xFE208EE3: ("beq", 0, 1, 2, -4, 0),
    0x010000EF: ("jal", 1, 0, 0, 16, 0),
    0x00008067: ("jalr", 0, 1, 0, 0, 0),
    0x123452B7: ("lui", 5, 0, 0, 0x12345, 0),
    0x00001317: ("auipc", 6, 0, 0, 0x1, 0),
    0x340312F3: ("csrrw", 5, 6, 0, 0, CSR_MSCRATCH),
    0x027302B3: ("mul", 5, 6, 7, 0, 0),
    0x027342B3: ("div", 5, 6, 7, 0, 0),
    0x40315093: ("srai", 1, 2, 0, 3, 0),
    0x30200073: ("mret", 0, 0, 0, 0, 0),
    0x10500073: ("wfi", 0, 0, 0, 0, 0),
    0x00000073: ("ecall", 0, 0, 0, 0, 0),
    0x00100073: ("ebreak", 0, 0, 0, 0, 0),
}


def test_decode_frozen_words() -> None:
    for word, (name, rd, rs1, rs2, imm, csr) in FROZEN.items():
        d = decode(word)
        got = (d.name, d.rd, d.rs1, d.rs2, d.imm, d.csr)
        assert got == (name, rd, rs1, rs2, imm, csr), f"{word:#010x}: {got}"


def test_encode_frozen_words() -> None:
    def enc(name, rd, rs1, rs2, imm, csr):
        fmt = ENCODINGS[name][0]
        if fmt == "r":
            return enc_r(name, rd, rs1, rs2)
        if fmt in ("i", "jalr"):
            return enc_i(name, rd, rs1, imm)
        if fmt == "shift":
            return enc_shift(name, rd, rs1, imm)
        if fmt == "load":
            return enc_load(name, rd, rs1, imm)
        if fmt == "store":
            return enc_store(name, rs2, rs1, imm)
        if fmt == "branch":
            return enc_branch(name, rs1, rs2, imm)
        if fmt == "u":
            return enc_u(name, rd, imm)
        if fmt == "j":
            return enc_j(name, rd, imm)
        if fmt == "csr":
            return enc_csr(name, rd, csr, rs1)
        return enc_sys(name)

    for word, fields in FROZEN.items():
        assert enc(fields[0], *fields[1:]) == word, f"{fields[0]} != {word:#010x}"


def test_encode_decode_round_trip_random() -> None:
    rng = random.Random(1234)
    for name, (fmt, _op, _f3, _f7) in ENCODINGS.items():
        if fmt in ("sys", "fence"):
            continue
        for _ in range(40):
            rd = rng.randrange(32)
            rs1 = rng.randrange(32)
            rs2 = rng.randrange(32)
            if fmt == "r":
                word = enc_r(name, rd, rs1, rs2)
                want = (name, rd, rs1, rs2)
                d = decode(word)
                assert (d.name, d.rd, d.rs1, d.rs2) == want
            elif fmt == "shift":
                shamt = rng.randrange(32)
                d = decode(enc_shift(name, rd, rs1, shamt))
                assert (d.name, d.rd, d.rs1, d.imm) == (name, rd, rs1, shamt)
            elif fmt in ("i", "jalr", "load"):
                imm = rng.randrange(-2048, 2048)
                d = decode(enc_i(name, rd, rs1, imm))
                assert (d.name, d.rd, d.rs1, d.imm) == (name, rd, rs1, imm)
            elif fmt == "store":
                imm = rng.randrange(-2048, 2048)
                d = decode(enc_store(name, rs2, rs1, imm))
                assert (d.name, d.rs1, d.rs2, d.imm) == (name, rs1, rs2, imm)
            elif fmt == "branch":
                imm = rng.randrange(-4096, 4096) & ~1
                d = decode(enc_branch(name, rs1, rs2, imm))
                assert (d.name, d.rs1, d.rs2, d.imm) == (name, rs1, rs2, imm)
            elif fmt == "u":
                imm = rng.randrange(1 << 20)
                d = decode(enc_u(name, rd, imm))
                assert (d.name, d.rd, d.imm) == (name, rd, imm)
            elif fmt == "j":
                imm = rng.randrange(-(1 << 20), 1 << 20) & ~1
                d = decode(enc_j(name, rd, imm))
                assert (d.name, d.rd, d.imm) == (name, rd, imm)
            elif fmt == "csr":
                csr = rng.randrange(1 << 12)
                d = decode(enc_csr(name, rd, csr, rs1))
                assert (d.name, d.rd, d.rs1, d.csr) == (name, rd, rs1, csr)
            elif fmt == "csri":
                zimm = rng.randrange(32)
                csr = rng.randrange(1 << 12)
                d = decode(enc_csr(name, rd, csr, zimm))
                assert (d.name, d.rd, d.imm, d.csr) == (name, rd, zimm, csr)


def test_illegal_words() -> None:
    assert decode(0x00000000).name == "illegal"
    assert decode(0xFFFFFFFF).name == "illegal"
    # valid add with a corrupted funct7
    assert decode(enc_r("add", 1, 2, 3) | (0x55 << 25)).name == "illegal"
    # system ops must have rd = rs1 = 0
    assert decode(enc_sys("mret") | (1 << 7)).name == "illegal"
    assert decode(enc_sys("wfi") | (1 << 15)).name == "illegal"


def test_sys_rejects_nonzero_fields_but_fence_ignores_them() -> None:
    # fence's hints (pred/succ/fm) are ignorable: still decodes
    assert decode(0x0000000F | (0xFF << 20)).name == "fence"


def test_disasm_frozen() -> None:
    assert disasm(0x00500093) == "addi x1, x0, 5"
    assert disasm(0x00852283) == "lw x5, 8(x10)"
    assert disasm(0x00512623) == "sw x5, 12(x2)"
    assert disasm(0xFE208EE3) == "beq x1, x2, -4"
    assert disasm(0x123452B7) == "lui x5, 0x12345"
    assert disasm(0x340312F3) == "csrrw x5, mscratch, x6"
    assert disasm(0x30200073) == "mret"
    assert disasm(0x00000000) == ".word 0x00000000"


def test_sext_zext() -> None:
    assert sext(0xFFF, 12) == -1
    assert sext(0x7FF, 12) == 2047
    assert sext(0x800, 12) == -2048
    assert zext(-1, 12) == 0xFFF
    assert zext(0x1_0000_0005) == 5


def test_csr_number_table() -> None:
    assert CSR_NUMBERS["mstatus"] == 0x300
    assert CSR_NUMBERS["mie"] == 0x304
    assert CSR_NUMBERS["mtvec"] == 0x305
    assert CSR_NUMBERS["mscratch"] == 0x340
    assert CSR_NUMBERS["mepc"] == 0x341
    assert CSR_NUMBERS["mcause"] == 0x342
    assert CSR_NUMBERS["mtval"] == 0x343
    assert CSR_NUMBERS["mip"] == 0x344
    assert CSR_NUMBERS["mcycle"] == 0xB00
    assert CSR_NUMBERS["mhartid"] == 0xF14


def test_every_encoding_has_a_decoder_entry() -> None:
    # round-trip by name through a generic minimal encode
    for name, (fmt, _op, _f3, _f7) in ENCODINGS.items():
        if fmt == "r":
            word = enc_r(name, 1, 2, 3)
        elif fmt == "shift":
            word = enc_shift(name, 1, 2, 3)
        elif fmt in ("i", "jalr", "load"):
            word = enc_i(name, 1, 2, 4)
        elif fmt == "store":
            word = enc_store(name, 3, 2, 4)
        elif fmt == "branch":
            word = enc_branch(name, 1, 2, 8)
        elif fmt == "u":
            word = enc_u(name, 1, 0x1000)
        elif fmt == "j":
            word = enc_j(name, 1, 2048)
        elif fmt in ("csr", "csri"):
            word = enc_csr(name, 1, 0x340, 2)
        elif fmt == "fence":
            word = 0x0000000F
        else:
            word = enc_sys(name)
        assert decode(word).name == name


@pytest.mark.parametrize("imm", [-2048, -1, 0, 1, 2047])
def test_store_immediate_extremes(imm: int) -> None:
    d = decode(enc_store("sw", 5, 2, imm))
    assert d.imm == imm
