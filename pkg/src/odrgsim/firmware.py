"""Program generators: re-synchronization handler and benchmark workloads.

Programs are emitted as assembly text and assembled with the bundled
assembler.  The same workload source is generated for either operating
mode; only the participant count (six independent cores, or two
redundant groups acting as two logical cores) is baked in.

The re-synchronization handler implements the unload/reload protocol:
on the resync interrupt every group member executes the same voted
instruction stream, pushing all 31 general registers and the 10 CSRs
through the voter into a 41-word stack frame, publishing the voted
stack pointer through the group wrapper's SP_STORE register, then
reloading the full frame and returning with mret.  The majority value
of every architectural register thereby overwrites any diverged copy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .asm import ProgramImage, assemble
from .insn import CSR_NUMBERS, decode

TCDM_BASE = 0x1000_0000
PERIPH_BASE = 0x1020_0000
EU_BASE = PERIPH_BASE + 0x800
EXIT_ADDR = PERIPH_BASE + 0xFF0

KERNELS = ("conv16", "matmul24", "matmul32")

# CSR order inside the resync frame (after the 31 GPR slots)
FRAME_CSRS = (
    "mstatus", "mie", "mtvec", "mscratch", "mepc",
    "mcause", "mtval", "mip", "mcycle", "mhartid",
)
FRAME_WORDS = 31 + len(FRAME_CSRS)  # 41
FRAME_BYTES = 4 * FRAME_WORDS  # 164

STACK_REGION = (0x1000_E000, 0x1001_0000)
_STACK_BASE = STACK_REGION[0]
_STACK_STRIDE = 0x200

_FAIL_BASE = 0x1000_7F00
_CHECK_BASE = 0x1000_7E00

_LCG_MUL = 1664525
_LCG_ADD = 1013904223
_M32 = 0xFFFFFFFF


def lcg_words(seed: int, count: int) -> list[int]:
    out = []
    x = seed & _M32
    for _ in range(count):
        x = (_LCG_MUL * x + _LCG_ADD) & _M32
        out.append(x)
    return out


def _gpr_slot(n: int) -> int:
    # x1..x31 at frame offsets -164 .. -44 from the interrupted sp
    return -FRAME_BYTES + 4 * (n - 1)


def _csr_slot(k: int) -> int:
    # CSRs at -40 .. -4, in FRAME_CSRS order
    return -40 + 4 * k


def resync_handler_text() -> str:
    """The trap handler shared by every program.

    Synchronous traps are treated as fatal (the workloads are trap-free
    by construction) and funnel to a failure exit.  The interrupt path
    is the resync protocol; it contains exactly 41 frame stores and 41
    frame loads, all sp-relative, which the static analyzer and the
    group wrapper's FSM both rely on.
    """
    lines = [
        "resync_handler:",
        # t0's slot first, freeing one scratch register for the dispatch
        f"    sw   t0, {_gpr_slot(5)}(sp)",
        "    csrr t0, mcause",
        "    bgez t0, resync_fail",
    ]
    for n in range(1, 32):
        if n == 5:
            continue
        lines.append(f"    sw   x{n}, {_gpr_slot(n)}(sp)")
    for k, csr in enumerate(FRAME_CSRS):
        lines.append(f"    csrr t0, {csr}")
        lines.append(f"    sw   t0, {_csr_slot(k)}(sp)")
    lines += [
        # group wrapper base: 0x10200000 + group-id * 0x100; SP_STORE at +8
        "    csrr t1, mhartid",
        "    slli t1, t1, 8",
        "    lui  t2, 0x10200",
        "    add  t1, t1, t2",
        "    sw   sp, 8(t1)",  # unload done: publish the voted sp
        "    lw   sp, 8(t1)",  # reload starts: every member takes the voted sp
    ]
    for k, csr in enumerate(FRAME_CSRS):
        lines.append(f"    lw   t0, {_csr_slot(k)}(sp)")
        if csr != "mhartid":  # read-only CSR: the voted value is fetched but not written
            lines.append(f"    csrw {csr}, t0")
    for n in range(1, 32):
        if n in (2, 5):
            continue
        lines.append(f"    lw   x{n}, {_gpr_slot(n)}(sp)")
    lines += [
        f"    lw   t0, {_gpr_slot(5)}(sp)",
        f"    lw   sp, {_gpr_slot(2)}(sp)",  # sp last; nothing after needs the frame
        "    mret",
        "resync_fail:",
        f"    li   t0, {EXIT_ADDR:#x}",
        "    li   t1, 0xDEAD",
        "    sw   t1, 0(t0)",
        "resync_spin:",
        "    wfi",
        "    j    resync_spin",
        "resync_handler_end:",
    ]
    return "\n".join(lines) + "\n"


def scan_dead_state(image: ProgramImage) -> tuple[frozenset[int], frozenset[int]]:
    """Registers that nothing outside the trap handler ever reads.

    A diverged copy of such a register on one group member cannot reach
    the voted interface during normal execution (the handler, which does
    read everything, only runs during a resync episode, and then every
    register is overwritten from the voted frame).  The campaign engine
    uses this to decide when group members are behaviorally lockstep.
    """
    start = image.symbols["resync_handler"]
    end = image.symbols["resync_handler_end"]
    no_sources = {"lui", "auipc", "jal", "fence", "ecall", "ebreak", "mret", "wfi"}
    two_sources = {
        "sb", "sh", "sw", "beq", "bne", "blt", "bge", "bltu", "bgeu",
        "add", "sub", "sll", "slt", "sltu", "xor", "srl", "sra", "or", "and",
        "mul", "mulh", "mulhsu", "mulhu", "div", "divu", "rem", "remu",
    }
    gpr_reads: set[int] = set()
    csr_reads: set[int] = set()
    for i, word in enumerate(image.words):
        addr = image.load_addr + 4 * i
        if start <= addr < end:
            continue
        d = decode(word)
        name = d.name
        if name == "illegal" or name in no_sources:
            continue
        if name in ("csrrw", "csrrs", "csrrc", "csrrwi", "csrrsi", "csrrci"):
            if not name.endswith("i"):
                gpr_reads.add(d.rs1)
            # csrrw/csrrwi with rd=x0 are pure writes; all others observe
            # the previous CSR value
            if not (name in ("csrrw", "csrrwi") and d.rd == 0):
                csr_reads.add(d.csr)
            continue
        gpr_reads.add(d.rs1)
        if name in two_sources:
            gpr_reads.add(d.rs2)
    gpr_reads.discard(0)
    dead_gprs = frozenset(range(1, 32)) - gpr_reads
    dead_csrs = frozenset(CSR_NUMBERS.values()) - csr_reads
    return dead_gprs, dead_csrs


def analyze_resync_handler(image: ProgramImage) -> tuple[int, int]:
    """Count sp-relative frame stores and loads in the assembled handler.

    Counts actual encoded instructions between the handler symbols, so it
    validates the binary rather than the generator's intent.
    """
    start = image.symbols["resync_handler"]
    end = image.symbols["resync_handler_end"]
    stores = loads = 0
    for addr in range(start, end, 4):
        word = image.words[(addr - image.load_addr) // 4]
        d = decode(word)
        if d.name == "sw" and d.rs1 == 2 and -FRAME_BYTES <= d.imm < 0:
            stores += 1
        elif d.name == "lw" and d.rs1 == 2 and -FRAME_BYTES <= d.imm < 0:
            loads += 1
    return stores, loads


def _prologue_text(nharts: int) -> str:
    return f"""
_start:
    la   t0, resync_handler
    csrw mtvec, t0
    li   t0, 0x88
    csrw mstatus, t0
    csrr a0, mhartid
    li   t1, {nharts}
    blt  a0, t1, hart_go
park_extra:
    wfi
    j    park_extra
hart_go:
    addi t2, a0, 1
    li   sp, {_STACK_STRIDE}
    mul  sp, t2, sp
    li   t2, {_STACK_BASE:#x}
    add  sp, sp, t2
    j    main
"""


def _range_text(q: int, r: int) -> str:
    # start = h*q + min(h, r); count = q + (h < r)
    return f"""
    li   t0, {q}
    mul  s1, a0, t0
    li   t1, {r}
    blt  a0, t1, range_small
    add  s1, s1, t1
    li   s2, {q}
    j    range_done
range_small:
    add  s1, s1, a0
    li   s2, {q + 1}
range_done:
"""


def _epilogue_text(nharts: int) -> str:
    return f"""
finish:
    li   t0, {_FAIL_BASE:#x}
    slli t1, a0, 2
    add  t0, t0, t1
    sw   a1, 0(t0)
    call barrier
    bnez a0, park
    li   t0, {_FAIL_BASE:#x}
    li   a2, 0
    li   t2, 0
sum_fail:
    lw   t3, 0(t0)
    add  a2, a2, t3
    addi t0, t0, 4
    addi t2, t2, 1
    li   t3, {nharts}
    blt  t2, t3, sum_fail
    li   t0, {EXIT_ADDR:#x}
    beqz a2, exit_ok
    li   t3, 0xBAD00000
    or   a2, a2, t3
    sw   a2, 0(t0)
park:
    wfi
    j    park
exit_ok:
    sw   zero, 0(t0)
    j    park

barrier:
    li   t0, {EU_BASE:#x}
    lw   t1, 12(t0)
    li   t2, {nharts}
    sw   t2, 0(t0)
    sw   zero, 4(t0)
barrier_poll:
    lw   t2, 12(t0)
    bne  t2, t1, barrier_done
    wfi
    j    barrier_poll
barrier_done:
    ret
"""


# --------------------------------------------------------------- workloads

@dataclass
class KernelProgram:
    name: str
    mode: str
    nharts: int
    image: ProgramImage
    layout: dict[str, int]
    output_regions: list[tuple[int, int]]  # (byte addr, word count)
    expected: dict[int, list[int]]  # byte addr -> expected words
    stack_region: tuple[int, int] = STACK_REGION
    dead_gprs: frozenset[int] = frozenset()
    dead_csrs: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        if not self.dead_gprs and not self.dead_csrs:
            self.dead_gprs, self.dead_csrs = scan_dead_state(self.image)


def _pack_halves(halves: list[int]) -> list[int]:
    if len(halves) & 1:
        halves = halves + [0]
    return [
        (halves[i] & 0xFFFF) | ((halves[i + 1] & 0xFFFF) << 16)
        for i in range(0, len(halves), 2)
    ]


def _split_rows(total: int, nharts: int) -> tuple[int, int]:
    return total // nharts, total % nharts


def _matmul_program(n: int, mode: str, seed: int | None = None) -> KernelProgram:
    nharts = 6 if mode == "performance" else 2
    a_base = 0x1000_0100
    b_base = a_base + 4 * n * n
    c_base = b_base + 4 * n * n + 0x100
    q, r = _split_rows(n, nharts)

    if seed is None:
        seed = 0xC0FFEE00 + n
    words = lcg_words(seed, 2 * n * n)
    a = words[: n * n]
    b = words[n * n :]
    c = [0] * (n * n)
    for i in range(n):
        for j in range(n):
            acc = 0
            for k in range(n):
                acc = (acc + ((a[i * n + k] * b[k * n + j]) & _M32)) & _M32
            c[i * n + j] = acc
    check = [sum(c[i * n : (i + 1) * n]) & _M32 for i in range(n)]

    text = _prologue_text(nharts)
    text += "main:\n" + _range_text(q, r)
    text += f"""
    li   a1, 0
    mv   s4, s1
    add  s5, s1, s2
row_loop:
    li   t0, {4 * n}
    mul  a3, s4, t0
    li   t1, {a_base:#x}
    add  a3, a3, t1
    li   t1, {c_base - a_base}
    add  a4, a3, t1
    li   s6, 0
    li   s7, 0
col_loop:
    li   t0, {b_base:#x}
    slli t1, s7, 2
    add  t0, t0, t1
    mv   t1, a3
    li   a5, 0
    li   a6, {n}
k_loop:
    lw   t2, 0(t1)
    lw   t3, 0(t0)
    mul  t2, t2, t3
    add  a5, a5, t2
    addi t1, t1, 4
    addi t0, t0, {4 * n}
    addi a6, a6, -1
    bnez a6, k_loop
    slli t2, s7, 2
    add  t2, a4, t2
    sw   a5, 0(t2)
    add  s6, s6, a5
    addi s7, s7, 1
    li   t2, {n}
    blt  s7, t2, col_loop
    li   t0, {_CHECK_BASE:#x}
    slli t1, s4, 2
    add  t0, t0, t1
    lw   t1, 0(t0)
    beq  t1, s6, row_ok
    addi a1, a1, 1
row_ok:
    addi s4, s4, 1
    blt  s4, s5, row_loop
    j    finish
"""
    text += _epilogue_text(nharts)
    text += resync_handler_text()

    image = assemble(text)
    image.data_init = [(a_base, a), (b_base, b), (_CHECK_BASE, check)]
    return KernelProgram(
        name=f"matmul{n}",
        mode=mode,
        nharts=nharts,
        image=image,
        layout={"a": a_base, "b": b_base, "c": c_base,
                "check": _CHECK_BASE, "fail": _FAIL_BASE},
        output_regions=[(c_base, n * n), (_FAIL_BASE, 6)],
        expected={c_base: c, _FAIL_BASE: [0] * 6},
    )


def _conv16_program(mode: str, seed: int | None = None) -> KernelProgram:
    nharts = 6 if mode == "performance" else 2
    n = 32
    pad = n + 2  # zero border baked into the input buffer
    in_base = 0x1000_0100
    ker_base = 0x1000_0C00
    out_base = 0x1000_1000
    q, r = _split_rows(n, nharts)

    stream = lcg_words(0xC0FFEE10 if seed is None else seed, n * n + 9)
    vals = [w >> 16 for w in stream[: n * n]]
    kern = [w >> 16 for w in stream[n * n :]]
    padded = [0] * (pad * pad)
    for i in range(n):
        for j in range(n):
            padded[(i + 1) * pad + (j + 1)] = vals[i * n + j]
    out = [0] * (n * n)
    for i in range(n):
        for j in range(n):
            acc = 0
            for di in range(3):
                for dj in range(3):
                    acc = (acc + padded[(i + di) * pad + (j + dj)] * kern[di * 3 + dj]) & _M32
            out[i * n + j] = acc & 0xFFFF
    check = [sum(out[i * n : (i + 1) * n]) & _M32 for i in range(n)]

    taps = []
    for di in range(3):
        row_reg = ("a4", "a5", "a6")[di]
        for dj in range(3):
            coeff = f"s{3 + di * 3 + dj}"
            taps.append(f"    lhu  t0, {2 * dj}({row_reg})")
            if di == 0 and dj == 0:
                taps.append(f"    mul  t3, t0, {coeff}")
            else:
                taps.append(f"    mul  t4, t0, {coeff}")
                taps.append("    add  t3, t3, t4")
    tap_text = "\n".join(taps)

    hoist = "\n".join(
        f"    lhu  s{3 + k}, {2 * k}(t0)" for k in range(9)
    )

    text = _prologue_text(nharts)
    text += "main:\n" + _range_text(q, r)
    text += f"""
    li   a1, 0
    li   t0, {ker_base:#x}
{hoist}
    mv   gp, s1
    add  tp, s1, s2
row_loop:
    li   t0, {2 * pad}
    mul  a4, gp, t0
    li   t1, {in_base:#x}
    add  a4, a4, t1
    addi a5, a4, {2 * pad}
    addi a6, a5, {2 * pad}
    li   t0, {2 * n}
    mul  a2, gp, t0
    li   t1, {out_base:#x}
    add  a2, a2, t1
    li   a7, 0
    li   a3, 0
col_loop:
{tap_text}
    sh   t3, 0(a2)
    slli t4, t3, 16
    srli t4, t4, 16
    add  a7, a7, t4
    addi a4, a4, 2
    addi a5, a5, 2
    addi a6, a6, 2
    addi a2, a2, 2
    addi a3, a3, 1
    li   t4, {n}
    blt  a3, t4, col_loop
    li   t0, {_CHECK_BASE:#x}
    slli t4, gp, 2
    add  t0, t0, t4
    lw   t4, 0(t0)
    beq  t4, a7, row_ok
    addi a1, a1, 1
row_ok:
    addi gp, gp, 1
    blt  gp, tp, row_loop
    j    finish
"""
    text += _epilogue_text(nharts)
    text += resync_handler_text()

    image = assemble(text)
    image.data_init = [
        (in_base, _pack_halves(padded)),
        (ker_base, _pack_halves(kern)),
        (_CHECK_BASE, check),
    ]
    out_words = _pack_halves(out)
    return KernelProgram(
        name="conv16",
        mode=mode,
        nharts=nharts,
        image=image,
        layout={"in": in_base, "kernel": ker_base, "out": out_base,
                "check": _CHECK_BASE, "fail": _FAIL_BASE},
        output_regions=[(out_base, len(out_words)), (_FAIL_BASE, 6)],
        expected={out_base: out_words, _FAIL_BASE: [0] * 6},
    )


def build_kernel(name: str, mode: str, seed: int | None = None) -> KernelProgram:
    """Build a workload image; `seed` overrides the default input data seed
    (expected outputs are recomputed, so self-checks stay valid)."""
    if mode not in ("performance", "tmr"):
        raise ValueError(f"unknown mode {mode!r}")
    if name == "conv16":
        return _conv16_program(mode, seed)
    if name == "matmul24":
        return _matmul_program(24, mode, seed)
    if name == "matmul32":
        return _matmul_program(32, mode, seed)
    raise ValueError(f"unknown kernel {name!r} (choose from {', '.join(KERNELS)})")
