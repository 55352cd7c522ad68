"""RV32IM instruction encodings, decoder and disassembler.

Supported subset: RV32I base, M extension, Zicsr register ops, mret, wfi,
ecall/ebreak and fence (decoded as a no-op).  Everything here works on plain
32-bit integers; execution semantics live in core.py.
"""

from __future__ import annotations

MASK32 = 0xFFFFFFFF


def zext(value: int, bits: int = 32) -> int:
    return value & ((1 << bits) - 1)


def sext(value: int, bits: int) -> int:
    value &= (1 << bits) - 1
    if value & (1 << (bits - 1)):
        value -= 1 << bits
    return value


# CSR numbers modeled by the core.
CSR_MSTATUS = 0x300
CSR_MIE = 0x304
CSR_MTVEC = 0x305
CSR_MSCRATCH = 0x340
CSR_MEPC = 0x341
CSR_MCAUSE = 0x342
CSR_MTVAL = 0x343
CSR_MIP = 0x344
CSR_MCYCLE = 0xB00
CSR_MHARTID = 0xF14

CSR_NAMES = {
    CSR_MSTATUS: "mstatus",
    CSR_MIE: "mie",
    CSR_MTVEC: "mtvec",
    CSR_MSCRATCH: "mscratch",
    CSR_MEPC: "mepc",
    CSR_MCAUSE: "mcause",
    CSR_MTVAL: "mtval",
    CSR_MIP: "mip",
    CSR_MCYCLE: "mcycle",
    CSR_MHARTID: "mhartid",
}
CSR_NUMBERS = {name: num for num, name in CSR_NAMES.items()}

# name -> (format, opcode, funct3, funct7)
# format is one of r/i/shift/load/store/branch/u/j/jalr/csr/csri/sys/fence
ENCODINGS = {
    "lui": ("u", 0b0110111, None, None),
    "auipc": ("u", 0b0010111, None, None),
    "jal": ("j", 0b1101111, None, None),
    "jalr": ("jalr", 0b1100111, 0b000, None),
    "beq": ("branch", 0b1100011, 0b000, None),
    "bne": ("branch", 0b1100011, 0b001, None),
    "blt": ("branch", 0b1100011, 0b100, None),
    "bge": ("branch", 0b1100011, 0b101, None),
    "bltu": ("branch", 0b1100011, 0b110, None),
    "bgeu": ("branch", 0b1100011, 0b111, None),
    "lb": ("load", 0b0000011, 0b000, None),
    "lh": ("load", 0b0000011, 0b001, None),
    "lw": ("load", 0b0000011, 0b010, None),
    "lbu": ("load", 0b0000011, 0b100, None),
    "lhu": ("load", 0b0000011, 0b101, None),
    "sb": ("store", 0b0100011, 0b000, None),
    "sh": ("store", 0b0100011, 0b001, None),
    "sw": ("store", 0b0100011, 0b010, None),
    "addi": ("i", 0b0010011, 0b000, None),
    "slti": ("i", 0b0010011, 0b010, None),
    "sltiu": ("i", 0b0010011, 0b011, None),
    "xori": ("i", 0b0010011, 0b100, None),
    "ori": ("i", 0b0010011, 0b110, None),
    "andi": ("i", 0b0010011, 0b111, None),
    "slli": ("shift", 0b0010011, 0b001, 0b0000000),
    "srli": ("shift", 0b0010011, 0b101, 0b0000000),
    "srai": ("shift", 0b0010011, 0b101, 0b0100000),
    "add": ("r", 0b0110011, 0b000, 0b0000000),
    "sub": ("r", 0b0110011, 0b000, 0b0100000),
    "sll": ("r", 0b0110011, 0b001, 0b0000000),
    "slt": ("r", 0b0110011, 0b010, 0b0000000),
    "sltu": ("r", 0b0110011, 0b011, 0b0000000),
    "xor": ("r", 0b0110011, 0b100, 0b0000000),
    "srl": ("r", 0b0110011, 0b101, 0b0000000),
    "sra": ("r", 0b0110011, 0b101, 0b0100000),
    "or": ("r", 0b0110011, 0b110, 0b0000000),
    "and": ("r", 0b0110011, 0b111, 0b0000000),
    "mul": ("r", 0b0110011, 0b000, 0b0000001),
    "mulh": ("r", 0b0110011, 0b001, 0b0000001),
    "mulhsu": ("r", 0b0110011, 0b010, 0b0000001),
    "mulhu": ("r", 0b0110011, 0b011, 0b0000001),
    "div": ("r", 0b0110011, 0b100, 0b0000001),
    "divu": ("r", 0b0110011, 0b101, 0b0000001),
    "rem": ("r", 0b0110011, 0b110, 0b0000001),
    "remu": ("r", 0b0110011, 0b111, 0b0000001),
    "fence": ("fence", 0b0001111, 0b000, None),
    "ecall": ("sys", 0b1110011, 0b000, 0x000),
    "ebreak": ("sys", 0b1110011, 0b000, 0x001),
    "mret": ("sys", 0b1110011, 0b000, 0x302),
    "wfi": ("sys", 0b1110011, 0b000, 0x105),
    "csrrw": ("csr", 0b1110011, 0b001, None),
    "csrrs": ("csr", 0b1110011, 0b010, None),
    "csrrc": ("csr", 0b1110011, 0b011, None),
    "csrrwi": ("csri", 0b1110011, 0b101, None),
    "csrrsi": ("csri", 0b1110011, 0b110, None),
    "csrrci": ("csri", 0b1110011, 0b111, None),
}


class Decoded:
    """Field-level view of one instruction word."""

    __slots__ = ("name", "rd", "rs1", "rs2", "imm", "csr", "word")

    def __init__(self, name, rd=0, rs1=0, rs2=0, imm=0, csr=0, word=0):
        self.name = name
        self.rd = rd
        self.rs1 = rs1
        self.rs2 = rs2
        self.imm = imm
        self.csr = csr
        self.word = word

    def __repr__(self):
        return f"<{self.name} rd={self.rd} rs1={self.rs1} rs2={self.rs2} imm={self.imm}>"


def _imm_i(word):
    return sext(word >> 20, 12)


def _imm_s(word):
    return sext(((word >> 25) << 5) | ((word >> 7) & 0x1F), 12)


def _imm_b(word):
    imm = (
        (((word >> 31) & 1) << 12)
        | (((word >> 7) & 1) << 11)
        | (((word >> 25) & 0x3F) << 5)
        | (((word >> 8) & 0xF) << 1)
    )
    return sext(imm, 13)


def _imm_j(word):
    imm = (
        (((word >> 31) & 1) << 20)
        | (((word >> 12) & 0xFF) << 12)
        | (((word >> 20) & 1) << 11)
        | (((word >> 21) & 0x3FF) << 1)
    )
    return sext(imm, 21)


_ILLEGAL = "illegal"

# (opcode, funct3, funct7-or-None) -> name, built once from ENCODINGS
_DECODE_R = {}
_DECODE_OTHER = {}
_DECODE_NOF3 = {}  # u/j formats carry no funct3
for _name, (_fmt, _op, _f3, _f7) in ENCODINGS.items():
    if _fmt in ("r", "shift"):
        _DECODE_R[(_op, _f3, _f7)] = (_name, _fmt)
    elif _fmt == "sys":
        _DECODE_OTHER[(_op, _f3, _f7)] = (_name, _fmt)
    elif _fmt in ("u", "j"):
        _DECODE_NOF3[_op] = (_name, _fmt)
    else:
        _DECODE_OTHER[(_op, _f3)] = (_name, _fmt)


def decode(word: int) -> Decoded:
    """Decode one instruction word; unknown encodings yield name 'illegal'."""
    word &= MASK32
    opcode = word & 0x7F
    rd = (word >> 7) & 0x1F
    funct3 = (word >> 12) & 0x7
    rs1 = (word >> 15) & 0x1F
    rs2 = (word >> 20) & 0x1F
    funct7 = word >> 25

    if opcode == 0b0110011:  # register-register ops need funct7
        hit = _DECODE_R.get((opcode, funct3, funct7))
        if hit is None:
            return Decoded(_ILLEGAL, word=word)
        return Decoded(hit[0], rd=rd, rs1=rs1, rs2=rs2, word=word)

    if opcode == 0b0010011 and funct3 in (0b001, 0b101):  # shifts carry funct7
        hit = _DECODE_R.get((opcode, funct3, funct7))
        if hit is None:
            return Decoded(_ILLEGAL, word=word)
        return Decoded(hit[0], rd=rd, rs1=rs1, imm=rs2, word=word)  # imm = shamt

    if opcode == 0b1110011 and funct3 == 0b000:
        hit = _DECODE_OTHER.get((opcode, funct3, word >> 20))
        if hit is None or rd != 0 or rs1 != 0:
            return Decoded(_ILLEGAL, word=word)
        return Decoded(hit[0], word=word)

    hit = _DECODE_NOF3.get(opcode)
    if hit is None:
        hit = _DECODE_OTHER.get((opcode, funct3))
    if hit is None:
        return Decoded(_ILLEGAL, word=word)
    name, fmt = hit

    if fmt == "u":
        return Decoded(name, rd=rd, imm=word >> 12, word=word)
    if fmt == "j":
        return Decoded(name, rd=rd, imm=_imm_j(word), word=word)
    if fmt == "jalr" or fmt == "i":
        return Decoded(name, rd=rd, rs1=rs1, imm=_imm_i(word), word=word)
    if fmt == "load":
        return Decoded(name, rd=rd, rs1=rs1, imm=_imm_i(word), word=word)
    if fmt == "store":
        return Decoded(name, rs1=rs1, rs2=rs2, imm=_imm_s(word), word=word)
    if fmt == "branch":
        return Decoded(name, rs1=rs1, rs2=rs2, imm=_imm_b(word), word=word)
    if fmt == "csr":
        return Decoded(name, rd=rd, rs1=rs1, csr=word >> 20, word=word)
    if fmt == "csri":
        return Decoded(name, rd=rd, imm=rs1, csr=word >> 20, word=word)  # imm = zimm5
    if fmt == "fence":
        return Decoded(name, word=word)
    return Decoded(_ILLEGAL, word=word)


# ---------------------------------------------------------------- encoding

def enc_r(name, rd, rs1, rs2):
    _, op, f3, f7 = ENCODINGS[name]
    return (f7 << 25) | (rs2 << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | op


def enc_i(name, rd, rs1, imm):
    _, op, f3, _ = ENCODINGS[name]
    return (zext(imm, 12) << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | op


def enc_shift(name, rd, rs1, shamt):
    _, op, f3, f7 = ENCODINGS[name]
    return (f7 << 25) | (shamt << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | op


def enc_load(name, rd, rs1, imm):
    return enc_i(name, rd, rs1, imm)


def enc_store(name, rs2, rs1, imm):
    _, op, f3, _ = ENCODINGS[name]
    imm = zext(imm, 12)
    return (
        ((imm >> 5) << 25)
        | (rs2 << 20)
        | (rs1 << 15)
        | (f3 << 12)
        | ((imm & 0x1F) << 7)
        | op
    )


def enc_branch(name, rs1, rs2, offset):
    _, op, f3, _ = ENCODINGS[name]
    imm = zext(offset, 13)
    return (
        (((imm >> 12) & 1) << 31)
        | (((imm >> 5) & 0x3F) << 25)
        | (rs2 << 20)
        | (rs1 << 15)
        | (f3 << 12)
        | (((imm >> 1) & 0xF) << 8)
        | (((imm >> 11) & 1) << 7)
        | op
    )


def enc_u(name, rd, imm20):
    _, op, _, _ = ENCODINGS[name]
    return (zext(imm20, 20) << 12) | (rd << 7) | op


def enc_j(name, rd, offset):
    _, op, _, _ = ENCODINGS[name]
    imm = zext(offset, 21)
    return (
        (((imm >> 20) & 1) << 31)
        | (((imm >> 1) & 0x3FF) << 21)
        | (((imm >> 11) & 1) << 20)
        | (((imm >> 12) & 0xFF) << 12)
        | (rd << 7)
        | op
    )


def enc_csr(name, rd, csr, rs1_or_zimm):
    _, op, f3, _ = ENCODINGS[name]
    return (csr << 20) | (rs1_or_zimm << 15) | (f3 << 12) | (rd << 7) | op


def enc_sys(name):
    _, op, f3, f12 = ENCODINGS[name]
    return (f12 << 20) | (f3 << 12) | op


# ------------------------------------------------------------- disassembly

def _reg(n):
    return f"x{n}"


def _csr_text(num):
    return CSR_NAMES.get(num, f"0x{num:x}")


def disasm(word: int) -> str:
    """Canonical text for one word; re-assembling it reproduces the word."""
    d = decode(word)
    name = d.name
    if name == _ILLEGAL:
        return f".word 0x{word & MASK32:08x}"
    fmt = ENCODINGS[name][0]
    if fmt == "r":
        return f"{name} {_reg(d.rd)}, {_reg(d.rs1)}, {_reg(d.rs2)}"
    if fmt == "i":
        return f"{name} {_reg(d.rd)}, {_reg(d.rs1)}, {d.imm}"
    if fmt == "shift":
        return f"{name} {_reg(d.rd)}, {_reg(d.rs1)}, {d.imm}"
    if fmt == "load":
        return f"{name} {_reg(d.rd)}, {d.imm}({_reg(d.rs1)})"
    if fmt == "store":
        return f"{name} {_reg(d.rs2)}, {d.imm}({_reg(d.rs1)})"
    if fmt == "branch":
        return f"{name} {_reg(d.rs1)}, {_reg(d.rs2)}, {d.imm}"
    if fmt == "u":
        return f"{name} {_reg(d.rd)}, 0x{d.imm:x}"
    if fmt == "j":
        return f"{name} {_reg(d.rd)}, {d.imm}"
    if fmt == "jalr":
        return f"{name} {_reg(d.rd)}, {_reg(d.rs1)}, {d.imm}"
    if fmt == "csr":
        return f"{name} {_reg(d.rd)}, {_csr_text(d.csr)}, {_reg(d.rs1)}"
    if fmt == "csri":
        return f"{name} {_reg(d.rd)}, {_csr_text(d.csr)}, {d.imm}"
    return name  # sys / fence
