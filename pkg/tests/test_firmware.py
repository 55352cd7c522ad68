"""Generated programs: handler structure, dead-state scan, workload goldens.

Workload expected outputs are cross-checked against numpy computations
that share nothing with the generator's scalar reference loops.
"""

from __future__ import annotations

import numpy as np
import pytest

from odrgsim.asm import assemble
from odrgsim.cluster import Cluster
from odrgsim.firmware import (
    FRAME_CSRS,
    FRAME_WORDS,
    KERNELS,
    STACK_REGION,
    analyze_resync_handler,
    build_kernel,
    lcg_words,
    resync_handler_text,
    scan_dead_state,
)
from odrgsim.insn import CSR_NUMBERS


def test_lcg_sequence_frozen() -> None:
    # first values of the classic 32-bit linear congruential generator
    assert lcg_words(0, 2) == [1013904223, 1196435762]
    assert lcg_words(1, 1) == [1015568748]
    seq = lcg_words(0xC0FFEE00, 4)
    assert seq == [(1664525 * x + 1013904223) & 0xFFFFFFFF
                   for x in [0xC0FFEE00] + seq[:-1]]


def test_frame_layout_constants() -> None:
    assert FRAME_WORDS == 41
    assert len(FRAME_CSRS) == 10
    assert FRAME_CSRS[-1] == "mhartid"  # loaded for the vote, never written


def test_handler_has_41_stores_and_41_loads() -> None:
    for mode in ("performance", "tmr"):
        prog = build_kernel("conv16", mode)
        assert analyze_resync_handler(prog.image) == (41, 41)


def test_handler_assembles_standalone() -> None:
    img = assemble(resync_handler_text())
    stores, loads = analyze_resync_handler(img)
    assert (stores, loads) == (41, 41)


def test_stack_frames_fit_the_reserved_region() -> None:
    lo, hi = STACK_REGION
    for h in range(6):
        sp = lo + 0x200 * (h + 1)
        assert lo <= sp - 4 * FRAME_WORDS and sp <= hi


# ---------------------------------------------------------- dead-state scan

def test_scan_dead_state_on_a_toy_program() -> None:
    img = assemble(
        "    addi t0, t0, 1\n"  # reads x5
        "    addi t1, t0, 0\n"  # writes x6, never read
        "    csrw mscratch, t0\n"  # pure CSR write: not a read
        "    csrr t2, mcause\n"  # CSR read
        "    csrrs t3, mie, zero\n"  # CSR read (set with zero mask)
        "resync_handler:\n"
        "    lw x7, 0(sp)\n"  # handler body: excluded from the scan
        "resync_handler_end:\n"
        "    nop\n"
    )
    dead_gprs, dead_csrs = scan_dead_state(img)
    assert 5 not in dead_gprs  # t0 is read
    assert 6 in dead_gprs  # t1 written but never read
    assert 2 in dead_gprs  # sp only read inside the handler
    assert CSR_NUMBERS["mscratch"] in dead_csrs
    assert CSR_NUMBERS["mcause"] not in dead_csrs
    assert CSR_NUMBERS["mie"] not in dead_csrs
    assert CSR_NUMBERS["mcycle"] in dead_csrs


def test_kernel_dead_sets_exclude_live_workload_registers() -> None:
    prog = build_kernel("conv16", "tmr")
    live = set(range(1, 32)) - set(prog.dead_gprs)
    # the coefficient registers and row counters must be live
    for reg in (2, 3, 4, 10) + tuple(range(19, 28)):  # sp, gp, tp, a0, s3..s11
        assert reg in live, f"x{reg}"
    assert prog.dead_csrs  # the workloads read no CSR except mhartid
    assert CSR_NUMBERS["mhartid"] not in prog.dead_csrs


# ----------------------------------------------------------- kernel goldens

def _matmul_reference(n: int) -> tuple[list[int], list[int]]:
    words = lcg_words(0xC0FFEE00 + n, 2 * n * n)
    a = np.array(words[: n * n], dtype=np.uint64).reshape(n, n)
    b = np.array(words[n * n :], dtype=np.uint64).reshape(n, n)
    c = (a @ b) & 0xFFFFFFFF
    check = c.sum(axis=1) & 0xFFFFFFFF
    return [int(v) for v in c.reshape(-1)], [int(v) for v in check]


@pytest.mark.parametrize("n", [24, 32])
def test_matmul_expected_against_numpy(n: int) -> None:
    prog = build_kernel(f"matmul{n}", "tmr")
    c, check = _matmul_reference(n)
    c_base = prog.layout["c"]
    assert prog.expected[c_base] == c
    init = dict(prog.image.data_init)
    assert init[prog.layout["check"]] == check
    assert prog.output_regions[0] == (c_base, n * n)


def test_conv16_expected_against_numpy() -> None:
    n, pad = 32, 34
    stream = lcg_words(0xC0FFEE10, n * n + 9)
    vals = np.array([w >> 16 for w in stream[: n * n]], dtype=np.uint64).reshape(n, n)
    kern = [w >> 16 for w in stream[n * n :]]
    p = np.zeros((pad, pad), dtype=np.uint64)
    p[1 : n + 1, 1 : n + 1] = vals
    acc = np.zeros((n, n), dtype=np.uint64)
    for di in range(3):
        for dj in range(3):
            acc += kern[di * 3 + dj] * p[di : di + n, dj : dj + n]
    out = acc & 0xFFFF
    flat = [int(v) for v in out.reshape(-1)]
    packed = [(flat[i] | (flat[i + 1] << 16)) for i in range(0, len(flat), 2)]

    prog = build_kernel("conv16", "tmr")
    assert prog.expected[prog.layout["out"]] == packed
    init = dict(prog.image.data_init)
    check = [int(v) for v in (out.sum(axis=1) & 0xFFFFFFFF)]
    assert init[prog.layout["check"]] == check


def test_expected_outputs_are_mode_independent() -> None:
    for name in KERNELS:
        perf = build_kernel(name, "performance")
        tmr = build_kernel(name, "tmr")
        assert perf.expected == tmr.expected
        assert perf.output_regions == tmr.output_regions
        assert perf.nharts == 6 and tmr.nharts == 2


def test_layout_regions_do_not_collide() -> None:
    for name in KERNELS:
        prog = build_kernel(name, "tmr")
        spans = []
        for addr, data in prog.image.data_init:
            spans.append((addr, addr + 4 * len(data)))
        for addr, nwords in prog.output_regions:
            spans.append((addr, addr + 4 * nwords))
        spans.append(STACK_REGION)
        spans.sort()
        for (a_lo, a_hi), (b_lo, b_hi) in zip(spans, spans[1:]):
            assert a_hi <= b_lo, f"{name}: [{a_lo:#x},{a_hi:#x}) overlaps [{b_lo:#x},{b_hi:#x})"


def test_build_kernel_validates_names() -> None:
    with pytest.raises(ValueError):
        build_kernel("fft", "tmr")
    with pytest.raises(ValueError):
        build_kernel("conv16", "turbo")


def test_conv16_runs_clean_on_the_cluster() -> None:
    prog = build_kernel("conv16", "performance")
    cl = Cluster()
    cl.reset_and_boot("performance", prog.image)
    assert cl.run(100_000) == "exit"
    assert cl.exit_code == 0
    for addr, nwords in prog.output_regions:
        base = (addr - 0x1000_0000) >> 2
        assert cl.tcdm[base : base + nwords] == prog.expected[addr]
