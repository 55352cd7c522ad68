"""Cluster fabric: banked memory, arbitration, event unit, boot, stepping."""

from __future__ import annotations

import pytest

from odrgsim.asm import assemble
from odrgsim.cluster import (
    Cluster,
    EventUnit,
    ImageTooLarge,
    IMEM_BASE,
    N_BANKS,
    N_CORES,
    OutOfRange,
    PERIPH_BASE,
    TCDM_BASE,
    TCDM_SIZE,
    arbitrate,
    bank_route,
)
from odrgsim.core import IfaceView
from odrgsim.insn import CSR_MHARTID

EXIT_ADDR = PERIPH_BASE + 0xFF0
EU_BASE = PERIPH_BASE + 0x800


# ---------------------------------------------------------------- bank map

def test_bank_route_word_interleaving() -> None:
    assert bank_route(TCDM_BASE) == (0, 0)
    assert bank_route(TCDM_BASE + 4) == (1, 0)
    assert bank_route(TCDM_BASE + 60) == (15, 0)
    assert bank_route(TCDM_BASE + 64) == (0, 1)
    assert bank_route(TCDM_BASE + TCDM_SIZE - 4) == (15, (TCDM_SIZE - 4) >> 6)


def test_bank_route_rejects_out_of_range() -> None:
    with pytest.raises(OutOfRange):
        bank_route(TCDM_BASE - 4)
    with pytest.raises(OutOfRange):
        bank_route(TCDM_BASE + TCDM_SIZE)


def test_unit_stride_never_self_conflicts() -> None:
    banks = [bank_route(TCDM_BASE + 4 * i)[0] for i in range(N_BANKS + 1)]
    assert len(set(banks[:N_BANKS])) == N_BANKS
    assert banks[N_BANKS] == banks[0]


# -------------------------------------------------------------- arbitration

def test_single_requester_granted_pointer_unmoved() -> None:
    rr = [5] * N_BANKS
    grants, new_rr = arbitrate([None, 3, None, None, None, None], rr)
    assert grants == [False, True, False, False, False, False]
    assert new_rr == rr  # uncontended: pointer stays


def test_contended_grant_scans_from_pointer() -> None:
    rr = [0] * N_BANKS
    rr[2] = 2
    # ports 1 and 4 both want bank 2; scan 2,3,4 -> port 4 wins
    grants, rr = arbitrate([None, 2, None, None, 2, None], rr)
    assert grants == [False, False, False, False, True, False]
    assert rr[2] == 5
    # same conflict again: scan 5,0,1 -> port 1 wins
    grants, rr = arbitrate([None, 2, None, None, 2, None], rr)
    assert grants == [False, True, False, False, False, False]
    assert rr[2] == 2


def test_pointer_at_requester_grants_it() -> None:
    rr = [0] * N_BANKS
    rr[7] = 4
    grants, rr = arbitrate([7, None, None, None, 7, None], rr)
    assert grants == [False, False, False, False, True, False]
    assert rr[7] == 5


def test_banks_arbitrate_independently() -> None:
    rr = [0] * N_BANKS
    grants, _ = arbitrate([0, 0, 7, 7, None, None], rr)
    assert grants.count(True) == 2
    assert grants[0] or grants[1]
    assert grants[2] or grants[3]


def test_full_contention_is_fair() -> None:
    # all six ports hammer one bank; each must get exactly 1 grant in 6
    rr = [0] * N_BANKS
    won = [0] * N_CORES
    gap = [0] * N_CORES
    worst = 0
    for _ in range(600):
        grants, rr = arbitrate([9] * N_CORES, rr)
        assert grants.count(True) == 1
        for p in range(N_CORES):
            if grants[p]:
                won[p] += 1
                gap[p] = 0
            else:
                gap[p] += 1
                worst = max(worst, gap[p])
    assert won == [100] * N_CORES
    assert worst <= N_CORES  # bounded waiting


def test_two_port_contention_alternates() -> None:
    rr = [0] * N_BANKS
    seq = []
    for _ in range(6):
        grants, rr = arbitrate([4, None, None, 4, None, None], rr)
        seq.append(grants.index(True))
    assert seq == [0, 3, 0, 3, 0, 3]


# --------------------------------------------------------------- event unit

def test_event_unit_barrier_round() -> None:
    eu = EventUnit()
    assert eu.write(0x00, 6, 0, 0) is True  # TARGET
    for lid in range(5):
        eu.write(0x04, 1, lid, 10 + lid)
        assert eu.gen == 0
    assert eu.read(0x08) == 5  # arrival count so far
    eu.write(0x04, 1, 5, 20)
    assert eu.gen == 1
    assert eu.arrived == 0
    assert eu.wake_pending == 0x3F
    assert eu.read(0x0C) == 1
    assert [lid for _, lid in eu.arrivals] == [0, 1, 2, 3, 4, 5]


def test_event_unit_rearrival_is_idempotent() -> None:
    eu = EventUnit()
    eu.write(0x00, 3, 0, 0)
    eu.write(0x04, 1, 2, 1)
    eu.write(0x04, 1, 2, 2)  # same core again: still one arrival bit
    assert eu.read(0x08) == 1
    assert eu.gen == 0


def test_event_unit_unmapped_offsets() -> None:
    eu = EventUnit()
    assert eu.read(0x10) is None
    assert eu.write(0x10, 1, 0, 0) is False
    eu.write(0x08, 99, 0, 0)  # read-only: ignored
    assert eu.read(0x08) == 0


# ------------------------------------------------------------- memory phase

def _read_bundle(pc: int, addr: int) -> int:
    return IfaceView(fetch_valid=1, fetch_addr=pc, data_valid=1, data_addr=addr).pack()


def _write_bundle(pc: int, addr: int, wdata: int, be: int = 0xF) -> int:
    return IfaceView(fetch_valid=1, fetch_addr=pc, data_valid=1, data_write=1,
                     data_be=be, data_addr=addr, data_wdata=wdata).pack()


def test_memory_phase_read_write_round_trip() -> None:
    cl = Cluster()
    b = [_write_bundle(0x1000, TCDM_BASE + 8, 0xCAFE0001),
         _read_bundle(0x1000, TCDM_BASE + 12)]
    cl.tcdm[3] = 77
    rdata, stall, err = cl._memory_phase(b, [0, 1])
    assert cl.tcdm[2] == 0xCAFE0001
    assert rdata[1] == 77
    assert stall == [False, False] and err == [False, False]


def test_memory_phase_subword_write_merges() -> None:
    cl = Cluster()
    cl.tcdm[0] = 0x11223344
    b = [_write_bundle(0x1000, TCDM_BASE + 2, 0xBEEF0000, be=0b1100)]
    cl._memory_phase(b, [0])
    assert cl.tcdm[0] == 0xBEEF3344


def test_memory_phase_conflict_stalls_loser() -> None:
    cl = Cluster()
    same_bank = TCDM_BASE + 64  # bank 0, like TCDM_BASE
    b = [_read_bundle(0x1000, TCDM_BASE), _read_bundle(0x1000, same_bank)]
    _, stall, _ = cl._memory_phase(b, [0, 1])
    assert stall.count(True) == 1
    # different banks: both proceed
    b = [_read_bundle(0x1000, TCDM_BASE), _read_bundle(0x1000, TCDM_BASE + 4)]
    _, stall, _ = cl._memory_phase(b, [0, 1])
    assert stall == [False, False]


def test_memory_phase_bus_errors() -> None:
    cl = Cluster()
    cases = [
        _write_bundle(0x1000, IMEM_BASE, 1),  # instruction memory is read-only
        _write_bundle(0x1000, PERIPH_BASE + 0x20, 1),  # unmapped unit register
        _read_bundle(0x1000, PERIPH_BASE + 0x20),
        _write_bundle(0x1000, PERIPH_BASE, 1, be=0b0011),  # sub-word periph write
        _read_bundle(0x1000, 0x2000_0000),  # hole in the map
    ]
    for b in cases:
        _, _, err = cl._memory_phase([b], [0])
        assert err == [True], f"bundle {b:#x}"


def test_memory_phase_imem_load_allowed() -> None:
    cl = Cluster()
    cl.imem[1] = 0xA5A5A5A5
    rdata, _, err = cl._memory_phase([_read_bundle(0x1000, IMEM_BASE + 4)], [0])
    assert rdata == [0xA5A5A5A5] and err == [False]


def test_exit_register_halts() -> None:
    cl = Cluster()
    cl._memory_phase([_write_bundle(0x1000, EXIT_ADDR, 0xBAD00001)], [0])
    assert cl.halted and cl.exit_code == 0xBAD00001


# ------------------------------------------------------------ boot and runs

BOOT_FIXED = 1000 + 4  # controller sequence + one write per unit register


def test_reset_and_boot_cost_and_ids() -> None:
    img = assemble("nop\nnop\n")
    cl = Cluster()
    cost = cl.reset_and_boot("performance", img)
    assert cost == BOOT_FIXED + 2
    assert [c.csr[CSR_MHARTID] for c in cl.cores] == [0, 1, 2, 3, 4, 5]
    assert all(c.hartid_override is None for c in cl.cores)
    cost = cl.reset_and_boot("tmr", img)
    assert cost == BOOT_FIXED + 2
    assert [c.csr[CSR_MHARTID] for c in cl.cores] == [0, 0, 0, 1, 1, 1]
    assert [c.hartid_override for c in cl.cores] == [0, 0, 0, 1, 1, 1]
    assert all(c.pc == img.entry for c in cl.cores)


def test_boot_rejects_bad_mode_and_big_image() -> None:
    img = assemble("nop\n")
    cl = Cluster()
    with pytest.raises(ValueError):
        cl.reset_and_boot("fast", img)
    img.words = [0] * 20000
    with pytest.raises(ImageTooLarge):
        cl.reset_and_boot("performance", img)


_EXIT42 = """
    .equ EXITREG, 0x10200FF0
    la t0, EXITREG
    li t1, 42
    sw t1, 0(t0)
spin:
    j spin
"""


def test_trivial_program_runs_in_both_modes() -> None:
    img = assemble(_EXIT42)
    for mode in ("performance", "tmr"):
        cl = Cluster()
        cl.reset_and_boot(mode, img)
        assert cl.run(1000) == "exit"
        assert cl.exit_code == 42


def test_tmr_groups_stay_identical_and_counters_zero() -> None:
    img = assemble(_EXIT42)
    cl = Cluster()
    cl.reset_and_boot("tmr", img)
    cl.run(1000)
    for g in (0, 1):
        c0, c1, c2 = cl.cores[3 * g : 3 * g + 3]
        assert c0.same_state(c1) and c1.same_state(c2)
    assert cl.odrg[0].mismatch == [0, 0, 0]
    assert cl.odrg[1].mismatch == [0, 0, 0]
    assert cl.odrg[0].episodes == []


def test_deterministic_repeat_runs() -> None:
    img = assemble(_EXIT42)
    results = []
    for _ in range(2):
        cl = Cluster()
        cl.reset_and_boot("performance", img)
        cl.run(1000)
        results.append((cl.cycle, cl.exit_code, list(cl.tcdm[:64])))
    assert results[0] == results[1]


def test_unmapped_fetch_traps_to_handler() -> None:
    # jump into the hole; the trap handler reports a recognizable exit code
    text = """
    .equ EXITREG, 0x10200FF0
    la t0, handler
    csrw mtvec, t0
    li t0, 0x20000000
    jr t0
handler:
    la t0, EXITREG
    csrr t1, mcause
    sw t1, 0(t0)
spin:
    j spin
"""
    cl = Cluster()
    cl.reset_and_boot("performance", assemble(text))
    assert cl.run(1000) == "exit"
    assert cl.exit_code == 1  # instruction access fault


def test_timeout_reported() -> None:
    cl = Cluster()
    cl.reset_and_boot("performance", assemble("spin: j spin\n"))
    assert cl.run(200) == "timeout"
    assert cl.cycle == 200


# six harts: each stores its id, all meet at the barrier, hart 0 sums
_BARRIER_SUM = """
    .equ TCDM, 0x10000000
    .equ EU, 0x10200800
    .equ EXITREG, 0x10200FF0
    csrr a0, mhartid
    la t0, TCDM
    slli t1, a0, 2
    add t1, t1, t0
    # stagger the arrivals so the barrier has real work to do
    slli t2, a0, 5
delay:
    beqz t2, arrive
    addi t2, t2, -1
    j delay
arrive:
    sw a0, 0(t1)
    # barrier: read generation, arrive, sleep until it advances
    la t3, EU
    lw t4, 12(t3)
    li t5, 6
    sw t5, 0(t3)
    sw a0, 4(t3)
poll:
    lw t6, 12(t3)
    bne t6, t4, passed
    wfi
    j poll
passed:
    bnez a0, park
    # hart 0: sum the six slots
    li t1, 0
    li t2, 0
sum:
    slli t4, t2, 2
    add t4, t4, t0
    lw t5, 0(t4)
    add t1, t1, t5
    addi t2, t2, 1
    li t4, 6
    blt t2, t4, sum
    la t0, EXITREG
    sw t1, 0(t0)
park:
    wfi
    j park
"""


def test_barrier_no_early_proceed() -> None:
    cl = Cluster()
    cl.reset_and_boot("performance", assemble(_BARRIER_SUM))
    assert cl.run(5000) == "exit"
    assert cl.exit_code == 15  # 0+1+2+3+4+5: all stores seen despite stagger
    assert cl.eu.gen == 1


def test_barrier_in_tmr_mode_two_participants() -> None:
    # two logical harts in redundant mode; target patched accordingly
    text = _BARRIER_SUM.replace("li t5, 6", "li t5, 2").replace("li t4, 6\n", "li t4, 2\n")
    cl = Cluster()
    cl.reset_and_boot("tmr", assemble(text))
    assert cl.run(5000) == "exit"
    assert cl.exit_code == 1  # 0+1
    assert cl.eu.gen == 1


# ----------------------------------------------------------- host interface

def test_host_access_round_trip() -> None:
    cl = Cluster()
    cl.host_write(TCDM_BASE + 8, 1234)
    assert cl.host_read(TCDM_BASE + 8) == 1234
    cl.host_write(PERIPH_BASE + 0xC00, 0xAB)  # controller scratch word
    assert cl.host_read(PERIPH_BASE + 0xC00) == 0xAB
    with pytest.raises(OutOfRange):
        cl.host_read(0x3000_0000)
    with pytest.raises(OutOfRange):
        cl.host_write(0x3000_0000, 1)


def test_clone_is_independent_and_replays_identically() -> None:
    img = assemble(_BARRIER_SUM)
    cl = Cluster()
    cl.reset_and_boot("performance", img)
    for _ in range(300):
        cl.cycle_once()
    snap = cl.clone()
    snap_cycle = snap.cycle
    cl.run(5000)
    assert snap.cycle == snap_cycle  # original run did not disturb the clone
    snap.run(5000)
    assert (snap.cycle, snap.exit_code) == (cl.cycle, cl.exit_code)
    assert snap.tcdm == cl.tcdm
