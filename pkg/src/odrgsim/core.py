"""Single RV32IM core model.

The core is stepped by the cluster in two phases per cycle:

 * ``fetch_part()`` / ``build_bundle(op)`` expose the core's outgoing
   interface for the current cycle as one packed integer, so that a
   redundancy group can vote on it bit by bit;
 * ``commit(...)`` consumes the (possibly voted) fetch/data responses and
   performs at most one architectural update.

Timing model (cycles per retired instruction, stalls excluded):
ALU/CSR/MUL 1, loads 4, stores 3, taken branches and jumps 2, DIV/REM 37,
trap or interrupt entry 4, mret 4, wfi 1.  Extra cycles are modeled as
``busy`` padding during which the core presents an idle interface.
``mcycle`` is modeled as plain storage (no free-running tick).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

from .insn import (
    CSR_MCAUSE,
    CSR_MCYCLE,
    CSR_MEPC,
    CSR_MHARTID,
    CSR_MIE,
    CSR_MIP,
    CSR_MSCRATCH,
    CSR_MSTATUS,
    CSR_MTVAL,
    CSR_MTVEC,
    MASK32,
    decode,
)

# trap causes (mcause values; interrupts additionally carry bit 31)
CAUSE_FETCH_MISALIGNED = 0
CAUSE_FETCH_FAULT = 1
CAUSE_ILLEGAL = 2
CAUSE_EBREAK = 3
CAUSE_LOAD_MISALIGNED = 4
CAUSE_LOAD_FAULT = 5
CAUSE_STORE_MISALIGNED = 6
CAUSE_STORE_FAULT = 7
CAUSE_ECALL_M = 11
IRQ_RESYNC = 30  # group resynchronization interrupt, non-maskable

MSTATUS_MIE = 0x8
MSTATUS_MPIE = 0x80

CSR_RESET = {
    CSR_MSTATUS: 0,
    CSR_MIE: 0,
    CSR_MTVEC: 0,
    CSR_MSCRATCH: 0,
    CSR_MEPC: 0,
    CSR_MCAUSE: 0,
    CSR_MTVAL: 0,
    CSR_MIP: 0,
    CSR_MCYCLE: 0,
    CSR_MHARTID: 0,
}

# cycles of busy padding after the issue cycle
BUSY_LOAD = 3
BUSY_STORE = 2
BUSY_TAKEN = 1
BUSY_DIV = 36
BUSY_TRAP = 3
BUSY_MRET = 3

# ------------------------------------------------------------ interface bits
#
# Packed outgoing interface, one integer per core per cycle.  Invalid
# requests carry all-zero payloads so bitwise comparison across a group is
# meaningful.
IFACE_FIELDS = {
    "fetch_valid": (0, 1),
    "fetch_addr": (1, 32),
    "data_valid": (33, 1),
    "data_write": (34, 1),
    "data_be": (35, 4),
    "data_addr": (39, 32),
    "data_wdata": (71, 32),
    "barrier_hit": (103, 1),
    "sleeping": (104, 1),
}
IFACE_BITS = 105

BUNDLE_IDLE = 0
BUNDLE_SLEEPING = 1 << 104

_B_DATA_VALID = 1 << 33
_B_DATA_WRITE = 1 << 34
_B_BARRIER = 1 << 103


@dataclass
class IfaceView:
    """Unpacked view of one interface bundle, for tests and diagnostics."""

    fetch_valid: int = 0
    fetch_addr: int = 0
    data_valid: int = 0
    data_write: int = 0
    data_be: int = 0
    data_addr: int = 0
    data_wdata: int = 0
    barrier_hit: int = 0
    sleeping: int = 0

    @classmethod
    def from_bundle(cls, bundle: int) -> "IfaceView":
        v = cls()
        for name, (off, width) in IFACE_FIELDS.items():
            setattr(v, name, (bundle >> off) & ((1 << width) - 1))
        return v

    def pack(self) -> int:
        b = 0
        for name, (off, width) in IFACE_FIELDS.items():
            b |= (getattr(self, name) & ((1 << width) - 1)) << off
        return b


def iface_bit_offset(signal: str, bit: int) -> int:
    """Absolute bundle bit for (signal, bit-within-signal)."""
    off, width = IFACE_FIELDS[signal]
    if not 0 <= bit < width:
        raise UnknownTarget(f"bit {bit} out of range for signal {signal}")
    return off + bit


class UnknownTarget(ValueError):
    """Raised for fault-injection targets that do not exist."""


# ------------------------------------------------------------- op compiling

K_SIMPLE = 0  # fully handled by op.fn(core)
K_LOAD = 1
K_STORE = 2


class Op:
    __slots__ = ("name", "cls", "fn", "rd", "rs1", "rs2", "imm", "size", "signed", "bflag", "word")

    def __init__(self, name, cls, fn=None, rd=0, rs1=0, rs2=0, imm=0, size=4, signed=False, bflag=0, word=0):
        self.name = name
        self.cls = cls
        self.fn = fn
        self.rd = rd
        self.rs1 = rs1
        self.rs2 = rs2
        self.imm = imm
        self.size = size
        self.signed = signed
        self.bflag = bflag
        self.word = word


def _s32(v):
    return v - 0x100000000 if v & 0x80000000 else v


def _adv(c):
    c.pc = (c.pc + 4) & MASK32


def _c_alu_imm(name, rd, rs1, imm):
    if name == "addi":
        def fn(c):
            c.x[rd] = (c.x[rs1] + imm) & MASK32
            c.pc = (c.pc + 4) & MASK32
    elif name == "slti":
        def fn(c):
            c.x[rd] = 1 if _s32(c.x[rs1]) < imm else 0
            c.pc = (c.pc + 4) & MASK32
    elif name == "sltiu":
        uimm = imm & MASK32
        def fn(c):
            c.x[rd] = 1 if c.x[rs1] < uimm else 0
            c.pc = (c.pc + 4) & MASK32
    elif name == "xori":
        def fn(c):
            c.x[rd] = (c.x[rs1] ^ imm) & MASK32
            c.pc = (c.pc + 4) & MASK32
    elif name == "ori":
        def fn(c):
            c.x[rd] = (c.x[rs1] | imm) & MASK32
            c.pc = (c.pc + 4) & MASK32
    elif name == "andi":
        def fn(c):
            c.x[rd] = (c.x[rs1] & imm) & MASK32
            c.pc = (c.pc + 4) & MASK32
    else:
        raise AssertionError(name)
    return fn


def _c_shift_imm(name, rd, rs1, shamt):
    if name == "slli":
        def fn(c):
            c.x[rd] = (c.x[rs1] << shamt) & MASK32
            c.pc = (c.pc + 4) & MASK32
    elif name == "srli":
        def fn(c):
            c.x[rd] = c.x[rs1] >> shamt
            c.pc = (c.pc + 4) & MASK32
    else:  # srai
        def fn(c):
            c.x[rd] = (_s32(c.x[rs1]) >> shamt) & MASK32
            c.pc = (c.pc + 4) & MASK32
    return fn


def _c_alu_reg(name, rd, rs1, rs2):
    if name == "add":
        def fn(c):
            c.x[rd] = (c.x[rs1] + c.x[rs2]) & MASK32
            c.pc = (c.pc + 4) & MASK32
    elif name == "sub":
        def fn(c):
            c.x[rd] = (c.x[rs1] - c.x[rs2]) & MASK32
            c.pc = (c.pc + 4) & MASK32
    elif name == "sll":
        def fn(c):
            c.x[rd] = (c.x[rs1] << (c.x[rs2] & 31)) & MASK32
            c.pc = (c.pc + 4) & MASK32
    elif name == "slt":
        def fn(c):
            c.x[rd] = 1 if _s32(c.x[rs1]) < _s32(c.x[rs2]) else 0
            c.pc = (c.pc + 4) & MASK32
    elif name == "sltu":
        def fn(c):
            c.x[rd] = 1 if c.x[rs1] < c.x[rs2] else 0
            c.pc = (c.pc + 4) & MASK32
    elif name == "xor":
        def fn(c):
            c.x[rd] = c.x[rs1] ^ c.x[rs2]
            c.pc = (c.pc + 4) & MASK32
    elif name == "srl":
        def fn(c):
            c.x[rd] = c.x[rs1] >> (c.x[rs2] & 31)
            c.pc = (c.pc + 4) & MASK32
    elif name == "sra":
        def fn(c):
            c.x[rd] = (_s32(c.x[rs1]) >> (c.x[rs2] & 31)) & MASK32
            c.pc = (c.pc + 4) & MASK32
    elif name == "or":
        def fn(c):
            c.x[rd] = c.x[rs1] | c.x[rs2]
            c.pc = (c.pc + 4) & MASK32
    elif name == "and":
        def fn(c):
            c.x[rd] = c.x[rs1] & c.x[rs2]
            c.pc = (c.pc + 4) & MASK32
    elif name == "mul":
        def fn(c):
            c.x[rd] = (c.x[rs1] * c.x[rs2]) & MASK32
            c.pc = (c.pc + 4) & MASK32
    elif name == "mulh":
        def fn(c):
            c.x[rd] = ((_s32(c.x[rs1]) * _s32(c.x[rs2])) >> 32) & MASK32
            c.pc = (c.pc + 4) & MASK32
    elif name == "mulhsu":
        def fn(c):
            c.x[rd] = ((_s32(c.x[rs1]) * c.x[rs2]) >> 32) & MASK32
            c.pc = (c.pc + 4) & MASK32
    elif name == "mulhu":
        def fn(c):
            c.x[rd] = ((c.x[rs1] * c.x[rs2]) >> 32) & MASK32
            c.pc = (c.pc + 4) & MASK32
    elif name == "div":
        def fn(c):
            a, b = _s32(c.x[rs1]), _s32(c.x[rs2])
            if b == 0:
                q = -1
            elif a == -0x80000000 and b == -1:
                q = a
            else:
                q = abs(a) // abs(b)
                if (a < 0) != (b < 0):
                    q = -q
            c.x[rd] = q & MASK32
            c.busy = BUSY_DIV
            c.pc = (c.pc + 4) & MASK32
    elif name == "divu":
        def fn(c):
            b = c.x[rs2]
            c.x[rd] = MASK32 if b == 0 else c.x[rs1] // b
            c.busy = BUSY_DIV
            c.pc = (c.pc + 4) & MASK32
    elif name == "rem":
        def fn(c):
            a, b = _s32(c.x[rs1]), _s32(c.x[rs2])
            if b == 0:
                r = a
            elif a == -0x80000000 and b == -1:
                r = 0
            else:
                r = abs(a) % abs(b)
                if a < 0:
                    r = -r
            c.x[rd] = r & MASK32
            c.busy = BUSY_DIV
            c.pc = (c.pc + 4) & MASK32
    elif name == "remu":
        def fn(c):
            b = c.x[rs2]
            c.x[rd] = c.x[rs1] if b == 0 else c.x[rs1] % b
            c.busy = BUSY_DIV
            c.pc = (c.pc + 4) & MASK32
    else:
        raise AssertionError(name)
    return fn


def _c_branch(name, rs1, rs2, off):
    if name == "beq":
        def taken(c):
            return c.x[rs1] == c.x[rs2]
    elif name == "bne":
        def taken(c):
            return c.x[rs1] != c.x[rs2]
    elif name == "blt":
        def taken(c):
            return _s32(c.x[rs1]) < _s32(c.x[rs2])
    elif name == "bge":
        def taken(c):
            return _s32(c.x[rs1]) >= _s32(c.x[rs2])
    elif name == "bltu":
        def taken(c):
            return c.x[rs1] < c.x[rs2]
    elif name == "bgeu":
        def taken(c):
            return c.x[rs1] >= c.x[rs2]
    else:
        raise AssertionError(name)

    def fn(c):
        if taken(c):
            c.pc = (c.pc + off) & MASK32
            c.busy = BUSY_TAKEN
        else:
            c.pc = (c.pc + 4) & MASK32
    return fn


def _c_csr(name, rd, rs1_or_zimm, num):
    known = num in CSR_RESET
    write_csr = name in ("csrrw", "csrrwi") or (name in ("csrrs", "csrrc", "csrrsi", "csrrci") and rs1_or_zimm != 0)
    if not known or (write_csr and num == CSR_MHARTID):
        # nonexistent CSR, or write to a read-only one: illegal instruction
        def fn(c):
            c.trap(CAUSE_ILLEGAL, c._op_word)
        return fn

    imm_form = name.endswith("i")

    def fn(c):
        old = c.csr_read(num)
        if write_csr:
            arg = rs1_or_zimm if imm_form else c.x[rs1_or_zimm]
            if name in ("csrrw", "csrrwi"):
                new = arg
            elif name in ("csrrs", "csrrsi"):
                new = old | arg
            else:
                new = old & ~arg
            c.csr[num] = new & MASK32
        if rd:
            c.x[rd] = old
        c.pc = (c.pc + 4) & MASK32
    return fn


def compile_op(word: int) -> Op:
    d = decode(word)
    name = d.name
    if name == "illegal":
        def fn(c, w=word):
            c.trap(CAUSE_ILLEGAL, w)
        return Op(name, K_SIMPLE, fn, word=word)

    if name in ("lb", "lh", "lw", "lbu", "lhu"):
        size = {"lb": 1, "lbu": 1, "lh": 2, "lhu": 2, "lw": 4}[name]
        return Op(name, K_LOAD, rd=d.rd, rs1=d.rs1, imm=d.imm, size=size,
                  signed=name in ("lb", "lh"), word=word)
    if name in ("sb", "sh", "sw"):
        size = {"sb": 1, "sh": 2, "sw": 4}[name]
        return Op(name, K_STORE, rs1=d.rs1, rs2=d.rs2, imm=d.imm, size=size, word=word)

    if name in ("addi", "slti", "sltiu", "xori", "ori", "andi"):
        fn = _c_alu_imm(name, d.rd, d.rs1, d.imm) if d.rd else _c_nowrite(name, d.rs1, d.imm)
    elif name in ("slli", "srli", "srai"):
        fn = _c_shift_imm(name, d.rd, d.rs1, d.imm) if d.rd else _adv
    elif name in ("add", "sub", "sll", "slt", "sltu", "xor", "srl", "sra", "or", "and",
                  "mul", "mulh", "mulhsu", "mulhu"):
        fn = _c_alu_reg(name, d.rd, d.rs1, d.rs2) if d.rd else _adv
    elif name in ("div", "divu", "rem", "remu"):
        # rd == x0 still costs divider cycles
        if d.rd:
            fn = _c_alu_reg(name, d.rd, d.rs1, d.rs2)
        else:
            def fn(c):
                c.busy = BUSY_DIV
                c.pc = (c.pc + 4) & MASK32
    elif name in ("beq", "bne", "blt", "bge", "bltu", "bgeu"):
        fn = _c_branch(name, d.rs1, d.rs2, d.imm)
    elif name == "lui":
        val = (d.imm << 12) & MASK32
        if d.rd:
            def fn(c, rd=d.rd, v=val):
                c.x[rd] = v
                c.pc = (c.pc + 4) & MASK32
        else:
            fn = _adv
    elif name == "auipc":
        ofs = (d.imm << 12) & MASK32
        if d.rd:
            def fn(c, rd=d.rd, o=ofs):
                c.x[rd] = (c.pc + o) & MASK32
                c.pc = (c.pc + 4) & MASK32
        else:
            fn = _adv
    elif name == "jal":
        def fn(c, rd=d.rd, off=d.imm):
            link = (c.pc + 4) & MASK32
            c.pc = (c.pc + off) & MASK32
            if rd:
                c.x[rd] = link
            c.busy = BUSY_TAKEN
    elif name == "jalr":
        def fn(c, rd=d.rd, rs1=d.rs1, imm=d.imm):
            link = (c.pc + 4) & MASK32
            c.pc = (c.x[rs1] + imm) & MASK32 & ~1
            if rd:
                c.x[rd] = link
            c.busy = BUSY_TAKEN
    elif name in ("csrrw", "csrrs", "csrrc"):
        fn = _c_csr(name, d.rd, d.rs1, d.csr)
    elif name in ("csrrwi", "csrrsi", "csrrci"):
        fn = _c_csr(name, d.rd, d.imm, d.csr)
    elif name == "fence":
        fn = _adv
    elif name == "wfi":
        def fn(c):
            c.pc = (c.pc + 4) & MASK32
            c.sleeping = True
    elif name == "mret":
        def fn(c):
            st = c.csr[CSR_MSTATUS]
            mpie = (st >> 7) & 1
            st = (st & ~(MSTATUS_MIE | MSTATUS_MPIE)) | (mpie << 3) | MSTATUS_MPIE
            c.csr[CSR_MSTATUS] = st
            c.pc = c.csr[CSR_MEPC] & MASK32
            c.busy = BUSY_MRET
    elif name == "ecall":
        def fn(c, w=word):
            c.trap(CAUSE_ECALL_M, 0)
    elif name == "ebreak":
        def fn(c, w=word):
            c.trap(CAUSE_EBREAK, 0)
    else:
        raise AssertionError(name)

    bflag = _B_BARRIER if name == "wfi" else 0
    return Op(name, K_SIMPLE, fn, word=word, bflag=bflag)


def _c_nowrite(name, rs1, imm):
    # writes to x0 are dropped but the instruction still retires
    return _adv


_OP_CACHE: dict[int, Op] = {}


def cached_op(word: int) -> Op:
    op = _OP_CACHE.get(word)
    if op is None:
        op = compile_op(word)
        _OP_CACHE[word] = op
    return op


# ------------------------------------------------------------- data helpers

def store_lanes(size: int, ea: int, value: int) -> tuple[int, int]:
    """(byte_enable, lane-aligned write data) for a store."""
    if size == 4:
        return 0xF, value & MASK32
    if size == 2:
        sh = (ea & 2) * 8
        return 0x3 << (ea & 2), (value & 0xFFFF) << sh
    lane = ea & 3
    return 1 << lane, (value & 0xFF) << (lane * 8)


def load_extract(size: int, ea: int, word: int, signed: bool) -> int:
    if size == 4:
        return word & MASK32
    if size == 2:
        half = (word >> ((ea & 2) * 8)) & 0xFFFF
        if signed and half & 0x8000:
            half -= 0x10000
        return half & MASK32
    byte = (word >> ((ea & 3) * 8)) & 0xFF
    if signed and byte & 0x80:
        byte -= 0x100
    return byte & MASK32


# -------------------------------------------------------------------- core

class ArchSnapshot(NamedTuple):
    """Architectural state only: 32 GPRs, pc, and the modeled CSRs."""

    gprs: tuple
    pc: int
    csrs: tuple  # sorted (number, value) pairs


class Core:
    __slots__ = ("x", "pc", "csr", "busy", "sleeping", "irq_pending", "hartid_override",
                 "_op_word", "_trapped")

    def __init__(self, hartid: int = 0, boot_pc: int = 0):
        self.x = [0] * 32
        self.pc = boot_pc & MASK32
        self.csr = dict(CSR_RESET)
        self.csr[CSR_MHARTID] = hartid
        self.busy = 0
        self.sleeping = False
        self.irq_pending: Optional[int] = None
        self.hartid_override: Optional[int] = None
        self._op_word = 0
        self._trapped = False

    def reset(self, boot_pc: int) -> None:
        """Power-on state; the stored hart id survives (cluster-assigned)."""
        hartid = self.csr[CSR_MHARTID]
        self.x = [0] * 32
        self.pc = boot_pc & MASK32
        self.csr = dict(CSR_RESET)
        self.csr[CSR_MHARTID] = hartid
        self.busy = 0
        self.sleeping = False
        self.irq_pending = None
        self.hartid_override = None
        self._op_word = 0
        self._trapped = False

    # ---------------------------------------------------------- interfaces

    def fetch_part(self) -> int:
        """Fetch request portion of this cycle's bundle (valid | addr<<1).

        A core with a pending interrupt presents an idle interface: its
        commit will enter the handler this cycle, so it must not issue a
        fetch or data request that would be half-performed by the fabric.
        """
        if self.sleeping:
            return BUNDLE_SLEEPING
        if self.busy or self.irq_pending is not None:
            return BUNDLE_IDLE
        return 1 | (self.pc << 1)

    def build_bundle(self, op: Optional[Op]) -> int:
        """Full outgoing bundle once the fetched instruction is known."""
        if self.sleeping:
            return BUNDLE_SLEEPING
        if self.busy or self.irq_pending is not None:
            return BUNDLE_IDLE
        if op is None:
            return 1 | (self.pc << 1)
        b = 1 | (self.pc << 1)
        k = op.cls
        if k == K_LOAD:
            ea = (self.x[op.rs1] + op.imm) & MASK32
            if not ea % op.size:
                b |= _B_DATA_VALID | (ea << 39)
        elif k == K_STORE:
            ea = (self.x[op.rs1] + op.imm) & MASK32
            if not ea % op.size:
                be, wd = store_lanes(op.size, ea, self.x[op.rs2])
                b |= _B_DATA_VALID | _B_DATA_WRITE | (be << 35) | (ea << 39) | (wd << 71)
        else:
            b |= op.bflag
        return b

    # -------------------------------------------------------------- commit

    def commit(self, op: Optional[Op], rdata: int = 0, stall: bool = False,
               bus_error: bool = False, fetch_fault: int = -1, wake: bool = False) -> bool:
        """Consume one cycle; returns True when an instruction retired."""
        if self.sleeping:
            if self.irq_pending is not None:
                self.sleeping = False
                self.take_irq(self.irq_pending)
            elif wake:
                self.sleeping = False
            return False
        if self.busy:
            self.busy -= 1
            return False
        if self.irq_pending is not None:
            self.take_irq(self.irq_pending)
            return False
        if fetch_fault >= 0:
            self.trap(fetch_fault, self.pc)
            return False
        if op is None or stall:
            return False

        k = op.cls
        if k == K_SIMPLE:
            self._op_word = op.word
            self._trapped = False
            op.fn(self)
            return not self._trapped
        if k == K_LOAD:
            ea = (self.x[op.rs1] + op.imm) & MASK32
            if ea % op.size:
                self.trap(CAUSE_LOAD_MISALIGNED, ea)
                return False
            if bus_error:
                self.trap(CAUSE_LOAD_FAULT, ea)
                return False
            if op.rd:
                self.x[op.rd] = load_extract(op.size, ea, rdata, op.signed)
            self.pc = (self.pc + 4) & MASK32
            self.busy = BUSY_LOAD
            return True
        # store
        ea = (self.x[op.rs1] + op.imm) & MASK32
        if ea % op.size:
            self.trap(CAUSE_STORE_MISALIGNED, ea)
            return False
        if bus_error:
            self.trap(CAUSE_STORE_FAULT, ea)
            return False
        self.pc = (self.pc + 4) & MASK32
        self.busy = BUSY_STORE
        return True

    # --------------------------------------------------------------- traps

    def trap(self, cause: int, tval: int) -> None:
        """Synchronous trap entry."""
        self._trapped = True
        self.csr[CSR_MEPC] = self.pc
        self.csr[CSR_MCAUSE] = cause
        self.csr[CSR_MTVAL] = tval & MASK32
        st = self.csr[CSR_MSTATUS]
        mie = (st >> 3) & 1
        self.csr[CSR_MSTATUS] = (st & ~(MSTATUS_MIE | MSTATUS_MPIE)) | (mie << 7)
        self.pc = self.csr[CSR_MTVEC] & ~3 & MASK32
        self.busy = BUSY_TRAP
        self.sleeping = False

    def take_irq(self, cause: int) -> None:
        """Interrupt entry; mirrors trap() but sets the interrupt bit."""
        self.csr[CSR_MEPC] = self.pc
        self.csr[CSR_MCAUSE] = (0x80000000 | cause) & MASK32
        self.csr[CSR_MTVAL] = 0
        st = self.csr[CSR_MSTATUS]
        mie = (st >> 3) & 1
        self.csr[CSR_MSTATUS] = (st & ~(MSTATUS_MIE | MSTATUS_MPIE)) | (mie << 7)
        self.pc = self.csr[CSR_MTVEC] & ~3 & MASK32
        self.busy = BUSY_TRAP
        self.sleeping = False
        self.irq_pending = None

    # ----------------------------------------------------- CSR access path

    def csr_read(self, num: int) -> int:
        if num == CSR_MHARTID and self.hartid_override is not None:
            return self.hartid_override
        return self.csr[num]

    # ------------------------------------------------- snapshots and clones

    def snapshot(self) -> ArchSnapshot:
        return ArchSnapshot(tuple(self.x), self.pc, tuple(sorted(self.csr.items())))

    def restore(self, snap: ArchSnapshot) -> None:
        self.x = list(snap.gprs)
        self.pc = snap.pc
        self.csr = dict(snap.csrs)

    def clone(self) -> "Core":
        c = Core.__new__(Core)
        c.x = list(self.x)
        c.pc = self.pc
        c.csr = dict(self.csr)
        c.busy = self.busy
        c.sleeping = self.sleeping
        c.irq_pending = self.irq_pending
        c.hartid_override = self.hartid_override
        c._op_word = self._op_word
        c._trapped = self._trapped
        return c

    def same_state(self, other: "Core") -> bool:
        """Architectural and micro state equality (lockstep check)."""
        return (
            self.x == other.x
            and self.pc == other.pc
            and self.busy == other.busy
            and self.sleeping == other.sleeping
            and self.irq_pending == other.irq_pending
            and self.csr == other.csr
        )

    # ------------------------------------------------------ fault injection

    def flip_gpr(self, idx: int, bit: int) -> None:
        if not 0 <= idx < 32 or not 0 <= bit < 32:
            raise UnknownTarget(f"gpr {idx} bit {bit}")
        if idx:  # x0 is hardwired; the flip lands on a constant-zero net
            self.x[idx] ^= 1 << bit

    def flip_pc(self, bit: int) -> None:
        if not 0 <= bit < 32:
            raise UnknownTarget(f"pc bit {bit}")
        self.pc ^= 1 << bit

    def flip_csr(self, num: int, bit: int) -> None:
        if num not in self.csr or not 0 <= bit < 32:
            raise UnknownTarget(f"csr 0x{num:x} bit {bit}")
        self.csr[num] ^= 1 << bit


# ---------------------------------------------------- pure step() interface

@dataclass
class CoreInput:
    """One cycle of inputs as delivered by the cluster (post-vote in a
    redundancy group): fetched instruction word, load data, stall/grant,
    interrupt and wake lines."""

    instr: Optional[int] = None
    rdata: int = 0
    stall: bool = False
    bus_error: bool = False
    fetch_fault: int = -1
    irq: Optional[int] = None
    wake: bool = False
    hartid_override: Optional[int] = None


def step(core: Core, inp: CoreInput) -> tuple[Core, int]:
    """Pure single-cycle step: returns (next state, next-cycle bundle).

    The returned bundle carries the fetch portion (data requests are
    composed by the cluster once the next instruction word is known).
    """
    nxt = core.clone()
    if inp.hartid_override is not None:
        nxt.hartid_override = inp.hartid_override
    if inp.irq is not None:
        nxt.irq_pending = inp.irq
    op = cached_op(inp.instr) if inp.instr is not None else None
    nxt.commit(op, rdata=inp.rdata, stall=inp.stall, bus_error=inp.bus_error,
               fetch_fault=inp.fetch_fault, wake=inp.wake)
    return nxt, nxt.fetch_part()
