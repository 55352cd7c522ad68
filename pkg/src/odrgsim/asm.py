"""Small two-pass RV32IM assembler used to build the bundled programs.

Supported syntax: one instruction or directive per line, optional
``label:`` prefixes, ``#`` comments, ABI or ``xN`` register names, CSRs
by name or number, and the usual convenience pseudo-instructions
(``li``, ``la``, ``mv``, ``j``, ``ret``, ``csrr`` ...).  Directives:
``.org`` (forward only), ``.word``, ``.space``, ``.equ``.  All errors
carry the source line number.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .insn import (
    CSR_NUMBERS,
    ENCODINGS,
    enc_branch,
    enc_csr,
    enc_i,
    enc_j,
    enc_r,
    enc_shift,
    enc_store,
    enc_sys,
    enc_u,
)

IMEM_BASE = 0x0000_1000


class AsmError(ValueError):
    pass


class UnknownMnemonic(AsmError):
    pass


class UndefinedLabel(AsmError):
    pass


class RangeError(AsmError):
    pass


@dataclass
class ProgramImage:
    """Assembled program plus optional pre-initialized data regions."""

    words: list[int]
    load_addr: int
    entry: int
    data_init: list[tuple[int, list[int]]] = field(default_factory=list)
    symbols: dict[str, int] = field(default_factory=dict)


_REGS = {f"x{i}": i for i in range(32)}
_REGS.update(zero=0, ra=1, sp=2, gp=3, tp=4, t0=5, t1=6, t2=7, s0=8, fp=8, s1=9)
_REGS.update({f"a{i}": 10 + i for i in range(8)})
_REGS.update({f"s{i}": 16 + i for i in range(2, 12)})
_REGS.update({f"t{i}": 25 + i for i in range(3, 7)})

_LABEL_RE = re.compile(r"^\s*([A-Za-z_.$][\w.$]*)\s*:\s*")
_SYM_RE = re.compile(r"^[A-Za-z_.$][\w.$]*$")

_LOADS = {"lb", "lh", "lw", "lbu", "lhu"}
_STORES = {"sb", "sh", "sw"}
_BRANCHES = {"beq", "bne", "blt", "bge", "bltu", "bgeu"}
_R_OPS = {
    "add", "sub", "sll", "slt", "sltu", "xor", "srl", "sra", "or", "and",
    "mul", "mulh", "mulhsu", "mulhu", "div", "divu", "rem", "remu",
}
_I_OPS = {"addi", "slti", "sltiu", "xori", "ori", "andi"}
_SHIFTS = {"slli", "srli", "srai"}
_CSR_REG = {"csrrw", "csrrs", "csrrc"}
_CSR_IMM = {"csrrwi", "csrrsi", "csrrci"}
_BARE = {"ecall", "ebreak", "mret", "wfi"}
_BZ = {"beqz": "beq", "bnez": "bne", "bltz": "blt", "bgez": "bge"}


def _reg(tok: str, line: int) -> int:
    r = _REGS.get(tok.strip())
    if r is None:
        raise AsmError(f"line {line}: not a register: {tok.strip()!r}")
    return r


def _csrnum(tok: str, line: int) -> int:
    tok = tok.strip()
    if tok in CSR_NUMBERS:
        return CSR_NUMBERS[tok]
    try:
        num = int(tok, 0)
    except ValueError:
        raise AsmError(f"line {line}: unknown CSR {tok!r}") from None
    if not 0 <= num < 0x1000:
        raise RangeError(f"line {line}: CSR number {num} out of range")
    return num


def _split_mem(tok: str, line: int) -> tuple[str, str]:
    """'off(reg)' -> (off, reg)."""
    m = re.match(r"^\s*([^()]*)\(\s*([^()]+?)\s*\)\s*$", tok)
    if not m:
        raise AsmError(f"line {line}: expected offset(reg), got {tok.strip()!r}")
    off = m.group(1).strip() or "0"
    return off, m.group(2)


@dataclass
class _Item:
    line: int
    addr: int
    kind: str  # insn | word | pseudo2
    mn: str = ""
    args: tuple = ()


class _Eval:
    def __init__(self, symbols: dict[str, int]):
        self.symbols = symbols

    def value(self, expr: str, line: int) -> int:
        """Integer literal, symbol, or symbol±literal."""
        expr = expr.strip()
        try:
            return int(expr, 0)
        except ValueError:
            pass
        m = re.match(r"^([A-Za-z_.$][\w.$]*)\s*([+-]\s*\d+|[+-]\s*0[xX][0-9a-fA-F]+)?$", expr)
        if not m:
            raise AsmError(f"line {line}: cannot evaluate {expr!r}")
        name = m.group(1)
        if name not in self.symbols:
            raise UndefinedLabel(f"line {line}: undefined symbol {name!r}")
        base = self.symbols[name]
        if m.group(2):
            base += int(m.group(2).replace(" ", ""), 0)
        return base


def _imm_range(value: int, bits: int, line: int, what: str) -> int:
    lo, hi = -(1 << (bits - 1)), (1 << (bits - 1)) - 1
    if not lo <= value <= hi:
        raise RangeError(f"line {line}: {what} {value} outside [{lo}, {hi}]")
    return value


def _li_words(imm: int) -> int:
    imm &= 0xFFFFFFFF
    signed = imm - 0x100000000 if imm & 0x80000000 else imm
    return 1 if -2048 <= signed <= 2047 else 2


def assemble(text: str, load_addr: int = IMEM_BASE, entry: int | None = None) -> ProgramImage:
    symbols: dict[str, int] = {}
    items: list[_Item] = []
    lc = load_addr

    # pass 1: sizes and symbols
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        while True:
            m = _LABEL_RE.match(line)
            if not m:
                break
            name = m.group(1)
            if name in symbols:
                raise AsmError(f"line {lineno}: duplicate label {name!r}")
            symbols[name] = lc
            line = line[m.end():]
        line = line.strip()
        if not line:
            continue
        parts = line.split(None, 1)
        mn = parts[0].lower()
        rest = parts[1] if len(parts) > 1 else ""
        args = tuple(a.strip() for a in rest.split(",")) if rest.strip() else ()

        if mn == ".equ":
            if len(args) != 2:
                raise AsmError(f"line {lineno}: .equ needs name, value")
            if not _SYM_RE.match(args[0]):
                raise AsmError(f"line {lineno}: bad symbol name {args[0]!r}")
            try:
                symbols[args[0]] = int(args[1], 0)
            except ValueError:
                raise AsmError(f"line {lineno}: .equ value must be a literal") from None
            continue
        if mn == ".org":
            try:
                target = int(args[0], 0) if args else -1
            except ValueError:
                raise AsmError(f"line {lineno}: .org needs a literal address") from None
            if target < lc or target & 3:
                raise AsmError(f"line {lineno}: .org must move forward, word-aligned")
            items.append(_Item(lineno, lc, "org", args=(target,)))
            lc = target
            continue
        if mn == ".space":
            try:
                nbytes = int(args[0], 0)
            except (ValueError, IndexError):
                raise AsmError(f"line {lineno}: .space needs a byte count") from None
            if nbytes < 0 or nbytes & 3:
                raise AsmError(f"line {lineno}: .space must be a multiple of 4")
            items.append(_Item(lineno, lc, "space", args=(nbytes // 4,)))
            lc += nbytes
            continue
        if mn == ".word":
            if not args:
                raise AsmError(f"line {lineno}: .word needs at least one value")
            items.append(_Item(lineno, lc, "word", args=args))
            lc += 4 * len(args)
            continue
        if mn.startswith("."):
            raise UnknownMnemonic(f"line {lineno}: unknown directive {mn!r}")

        size = 1
        if mn == "la":
            size = 2
        elif mn == "li":
            if len(args) != 2:
                raise AsmError(f"line {lineno}: li needs rd, imm")
            try:
                size = _li_words(int(args[1], 0))
            except ValueError:
                raise AsmError(f"line {lineno}: li immediate must be a literal (use la for symbols)") from None
        items.append(_Item(lineno, lc, "insn", mn, args))
        lc += 4 * size

    # pass 2: encode
    ev = _Eval(symbols)
    words: list[int] = []

    def emit(w: int) -> None:
        words.append(w & 0xFFFFFFFF)

    for it in items:
        n, a, mn = it.line, it.args, it.mn
        here = it.addr
        if it.kind == "org":
            words.extend([0] * ((a[0] - load_addr - 4 * len(words)) // 4))
            continue
        if it.kind == "space":
            words.extend([0] * a[0])
            continue
        if it.kind == "word":
            for expr in a:
                emit(ev.value(expr, n))
            continue

        def need(k: int) -> None:
            if len(a) != k:
                raise AsmError(f"line {n}: {mn} expects {k} operands, got {len(a)}")

        if mn in _R_OPS:
            need(3)
            emit(enc_r(mn, _reg(a[0], n), _reg(a[1], n), _reg(a[2], n)))
        elif mn in _I_OPS:
            need(3)
            imm = _imm_range(ev.value(a[2], n), 12, n, "immediate")
            emit(enc_i(mn, _reg(a[0], n), _reg(a[1], n), imm))
        elif mn in _SHIFTS:
            need(3)
            sh = ev.value(a[2], n)
            if not 0 <= sh < 32:
                raise RangeError(f"line {n}: shift amount {sh} outside [0, 31]")
            emit(enc_shift(mn, _reg(a[0], n), _reg(a[1], n), sh))
        elif mn in _LOADS:
            need(2)
            off, rs1 = _split_mem(a[1], n)
            imm = _imm_range(ev.value(off, n), 12, n, "offset")
            emit(enc_i(mn, _reg(a[0], n), _reg(rs1, n), imm))
        elif mn in _STORES:
            need(2)
            off, rs1 = _split_mem(a[1], n)
            imm = _imm_range(ev.value(off, n), 12, n, "offset")
            emit(enc_store(mn, _reg(a[0], n), _reg(rs1, n), imm))
        elif mn in _BRANCHES:
            need(3)
            off = ev.value(a[2], n) - here
            if off & 1:
                raise RangeError(f"line {n}: branch target misaligned")
            _imm_range(off, 13, n, "branch offset")
            emit(enc_branch(mn, _reg(a[0], n), _reg(a[1], n), off))
        elif mn in _BZ:
            need(2)
            off = ev.value(a[1], n) - here
            _imm_range(off, 13, n, "branch offset")
            emit(enc_branch(_BZ[mn], _reg(a[0], n), 0, off))
        elif mn == "jal":
            if len(a) == 1:
                rd, target = 1, a[0]
            else:
                need(2)
                rd, target = _reg(a[0], n), a[1]
            off = ev.value(target, n) - here
            _imm_range(off, 21, n, "jump offset")
            emit(enc_j("jal", rd, off))
        elif mn == "j":
            need(1)
            off = ev.value(a[0], n) - here
            _imm_range(off, 21, n, "jump offset")
            emit(enc_j("jal", 0, off))
        elif mn == "call":
            need(1)
            off = ev.value(a[0], n) - here
            _imm_range(off, 21, n, "jump offset")
            emit(enc_j("jal", 1, off))
        elif mn == "jalr":
            if len(a) == 1:
                emit(enc_i("jalr", 1, _reg(a[0], n), 0))
            elif len(a) == 2 and "(" in a[1]:
                off, rs1 = _split_mem(a[1], n)
                imm = _imm_range(ev.value(off, n), 12, n, "offset")
                emit(enc_i("jalr", _reg(a[0], n), _reg(rs1, n), imm))
            else:
                need(3)
                imm = _imm_range(ev.value(a[2], n), 12, n, "offset")
                emit(enc_i("jalr", _reg(a[0], n), _reg(a[1], n), imm))
        elif mn == "jr":
            need(1)
            emit(enc_i("jalr", 0, _reg(a[0], n), 0))
        elif mn == "ret":
            need(0)
            emit(enc_i("jalr", 0, 1, 0))
        elif mn in ("lui", "auipc"):
            need(2)
            imm = ev.value(a[1], n)
            if not 0 <= imm <= 0xFFFFF:
                raise RangeError(f"line {n}: {mn} immediate {imm} outside [0, 0xfffff]")
            emit(enc_u(mn, _reg(a[0], n), imm))
        elif mn in _CSR_REG:
            need(3)
            emit(enc_csr(mn, _reg(a[0], n), _csrnum(a[1], n), _reg(a[2], n)))
        elif mn in _CSR_IMM:
            need(3)
            z = ev.value(a[2], n)
            if not 0 <= z < 32:
                raise RangeError(f"line {n}: csr immediate {z} outside [0, 31]")
            emit(enc_csr(mn, _reg(a[0], n), _csrnum(a[1], n), z))
        elif mn == "csrr":
            need(2)
            emit(enc_csr("csrrs", _reg(a[0], n), _csrnum(a[1], n), 0))
        elif mn == "csrw":
            need(2)
            emit(enc_csr("csrrw", 0, _csrnum(a[0], n), _reg(a[1], n)))
        elif mn == "csrwi":
            need(2)
            z = ev.value(a[1], n)
            if not 0 <= z < 32:
                raise RangeError(f"line {n}: csr immediate {z} outside [0, 31]")
            emit(enc_csr("csrrwi", 0, _csrnum(a[0], n), z))
        elif mn in _BARE:
            need(0)
            emit(enc_sys(mn))
        elif mn == "fence":
            emit(0x0000000F)
        elif mn == "nop":
            need(0)
            emit(enc_i("addi", 0, 0, 0))
        elif mn == "mv":
            need(2)
            emit(enc_i("addi", _reg(a[0], n), _reg(a[1], n), 0))
        elif mn == "not":
            need(2)
            emit(enc_i("xori", _reg(a[0], n), _reg(a[1], n), -1))
        elif mn == "neg":
            need(2)
            emit(enc_r("sub", _reg(a[0], n), 0, _reg(a[1], n)))
        elif mn == "li":
            rd = _reg(a[0], n)
            imm = int(a[1], 0) & 0xFFFFFFFF
            signed = imm - 0x100000000 if imm & 0x80000000 else imm
            if -2048 <= signed <= 2047:
                emit(enc_i("addi", rd, 0, signed))
            else:
                hi = ((imm + 0x800) >> 12) & 0xFFFFF
                lo = imm - ((hi << 12) & 0xFFFFFFFF)
                lo = (lo + 0x80000000) % 0x100000000 - 0x80000000
                emit(enc_u("lui", rd, hi))
                emit(enc_i("addi", rd, rd, lo))
        elif mn == "la":
            rd = _reg(a[0], n)
            val = ev.value(a[1], n) & 0xFFFFFFFF
            hi = ((val + 0x800) >> 12) & 0xFFFFF
            lo = val - ((hi << 12) & 0xFFFFFFFF)
            lo = (lo + 0x80000000) % 0x100000000 - 0x80000000
            emit(enc_u("lui", rd, hi))
            emit(enc_i("addi", rd, rd, lo))
        elif mn in ENCODINGS:
            raise AsmError(f"line {n}: unsupported operand form for {mn!r}")
        else:
            raise UnknownMnemonic(f"line {n}: unknown mnemonic {mn!r}")

    return ProgramImage(
        words=words,
        load_addr=load_addr,
        entry=entry if entry is not None else load_addr,
        symbols=symbols,
    )
