"""Six-core cluster fabric: memory map, banked data memory, event unit.

The cluster steps all cores one cycle at a time through fixed phases:
fetch, interface-bundle formation (voted per group in TMR operation),
data-memory arbitration, peripheral access, irq delivery, and commit.
Everything is deterministic; two runs from the same reset state produce
identical cycle-by-cycle behavior.
"""

from __future__ import annotations

from typing import Callable, Optional

from .core import (
    BUNDLE_IDLE,
    CAUSE_FETCH_FAULT,
    CAUSE_FETCH_MISALIGNED,
    IRQ_RESYNC,
    Core,
    cached_op,
)
from .insn import CSR_MHARTID
from .odrg import (
    FSM_TMR_RELOAD,
    FSM_TMR_RUN,
    MODE_PERFORMANCE,
    MODE_TMR,
    OdrgUnit,
)

N_CORES = 6
N_BANKS = 16

IMEM_BASE = 0x0000_1000
IMEM_SIZE = 0x0001_0000
TCDM_BASE = 0x1000_0000
TCDM_SIZE = 0x0001_0000
PERIPH_BASE = 0x1020_0000
PERIPH_SIZE = 0x0000_1000

ODRG0_OFF = 0x000
ODRG1_OFF = 0x100
EU_OFF = 0x800
CTRL_OFF = 0xC00
EXIT_OFF = 0xFF0

# event unit register offsets (within its window)
EU_TARGET = 0x00
EU_ARRIVE = 0x04
EU_STATUS = 0x08
EU_GEN = 0x0C

_FETCH_FIELD = (1 << 33) - 1  # bundle bits 0..32: fetch_valid + fetch_addr


class OutOfRange(ValueError):
    pass


class ImageTooLarge(ValueError):
    pass


def bank_route(addr: int) -> tuple[int, int]:
    """Map a data-memory byte address to (bank, word-index-within-bank).

    Banks are word-interleaved: consecutive words land in consecutive
    banks, so unit-stride word accesses from one core never self-conflict.
    """
    off = addr - TCDM_BASE
    if not 0 <= off < TCDM_SIZE:
        raise OutOfRange(f"address 0x{addr:08x} outside data memory")
    return (off >> 2) & (N_BANKS - 1), off >> 6


def arbitrate(bank_req: list[Optional[int]], rr: list[int]) -> tuple[list[bool], list[int]]:
    """One cycle of per-bank round-robin arbitration.

    bank_req[port] is the bank that port requests this cycle (None when
    idle).  Each bank grants one port per cycle: the first requester at or
    after its round-robin pointer, scanning cyclically by port index.  The
    pointer moves to (granted + 1) only when the bank was contended; an
    uncontended grant leaves it in place.
    """
    n = len(bank_req)
    grants = [False] * n
    new_rr = list(rr)
    by_bank: dict[int, list[int]] = {}
    for port, bank in enumerate(bank_req):
        if bank is not None:
            by_bank.setdefault(bank, []).append(port)
    for bank, ports in by_bank.items():
        if len(ports) == 1:
            grants[ports[0]] = True
            continue
        ptr = new_rr[bank]
        want = set(ports)
        for k in range(n):
            cand = (ptr + k) % n
            if cand in want:
                grants[cand] = True
                new_rr[bank] = (cand + 1) % n
                break
    return grants, new_rr


class EventUnit:
    """Generation-counter barrier with explicit wake delivery.

    A barrier round: participants read GEN, store to ARRIVE, then spin on
    GEN (sleeping via wfi between polls) until it advances.  When the
    arrival count reaches TARGET the generation increments, arrivals
    clear, and every participant gets a pending wake that is delivered
    the next cycle its (voted) interface shows it asleep.  Spurious wakes
    from other irqs are harmless because waiters re-check GEN.
    """

    def __init__(self) -> None:
        self.target = 0
        self.arrived = 0  # bitmask by logical core id
        self.gen = 0
        self.wake_pending = 0
        self.arrivals: list[tuple[int, int]] = []  # (cycle, logical id)

    def read(self, offset: int) -> Optional[int]:
        if offset == EU_TARGET:
            return self.target
        if offset == EU_ARRIVE:
            return self.arrived
        if offset == EU_STATUS:
            return bin(self.arrived).count("1")
        if offset == EU_GEN:
            return self.gen
        return None

    def write(self, offset: int, value: int, logical: int, cycle: int) -> bool:
        if offset == EU_TARGET:
            self.target = value & 0xFF
        elif offset == EU_ARRIVE:
            self.arrived |= 1 << logical
            self.arrivals.append((cycle, logical))
            if self.target and bin(self.arrived).count("1") >= self.target:
                self.gen = (self.gen + 1) & 0xFFFFFFFF
                self.arrived = 0
                self.wake_pending = (1 << N_CORES) - 1
        elif offset in (EU_STATUS, EU_GEN):
            pass  # read-only
        else:
            return False
        return True

    def clone(self) -> "EventUnit":
        e = EventUnit.__new__(EventUnit)
        e.target = self.target
        e.arrived = self.arrived
        e.gen = self.gen
        e.wake_pending = self.wake_pending
        e.arrivals = list(self.arrivals)
        return e


class Cluster:
    """The six-core cluster with two redundancy-group wrappers."""

    def __init__(self) -> None:
        self.cores = [Core(i) for i in range(N_CORES)]
        self.imem = [0] * (IMEM_SIZE // 4)
        self.tcdm = [0] * (TCDM_SIZE // 4)
        self.rr = [0] * N_BANKS
        self.odrg = [OdrgUnit(0), OdrgUnit(1)]
        self.eu = EventUnit()
        self.ctrl = [0, 0]
        self.mode = "performance"  # latched at reboot from the MODE registers
        self.cycle = 0
        self.halted = False
        self.exit_code: Optional[int] = None
        self.trace_hook: Optional[Callable[[int, int, int, int], None]] = None
        # campaign hooks: one-shot interface flip (core id, xor mask)
        self.iface_flip: Optional[tuple[int, int]] = None
        # representative stepping: run one core per group while provably
        # in lockstep (engine-controlled; off by default)
        self.rep_mode = False

    # ------------------------------------------------------------- booting

    def load_image(self, image) -> int:
        """Copy an executable image into memory; returns words copied."""
        words = 0
        base = (image.load_addr - IMEM_BASE) >> 2
        if base < 0 or base + len(image.words) > len(self.imem):
            raise ImageTooLarge("program does not fit in instruction memory")
        for i, w in enumerate(image.words):
            self.imem[base + i] = w
        words += len(image.words)
        for addr, data in image.data_init:
            off = (addr - TCDM_BASE) >> 2
            if off < 0 or off + len(data) > len(self.tcdm):
                raise ImageTooLarge("data section does not fit in data memory")
            for i, w in enumerate(data):
                self.tcdm[off + i] = w
            words += len(data)
        return words

    def reset_and_boot(self, mode: str, image, resync_delay: int = 0) -> int:
        """Full reboot into the given operating mode.

        Returns the modeled reboot cost in cycles: a fixed controller
        sequence plus one cycle per configuration write and per program
        word copied in.  The cores then start from the image entry point
        at cluster cycle zero.
        """
        if mode not in ("performance", "tmr"):
            raise ValueError(f"unknown mode {mode!r}")
        mode_bit = MODE_TMR if mode == "tmr" else MODE_PERFORMANCE
        config_writes = 0
        for unit in self.odrg:
            unit.mode_reg = mode_bit
            unit.resync_delay = resync_delay
            config_writes += 2
        self.imem = [0] * (IMEM_SIZE // 4)
        self.tcdm = [0] * (TCDM_SIZE // 4)
        words = self.load_image(image)
        for unit in self.odrg:
            unit.latch_mode()
        self.mode = mode
        self.rr = [0] * N_BANKS
        self.eu = EventUnit()
        self.ctrl = [0, 0]
        self.cycle = 0
        self.halted = False
        self.exit_code = None
        self.iface_flip = None
        self.rep_mode = False
        for i, core in enumerate(self.cores):
            core.reset(image.entry)
            if mode == "tmr":
                # group members boot indistinguishable: the stored hart id
                # is the group id, and reads are overridden by the wrapper
                core.csr[CSR_MHARTID] = i // 3
                core.hartid_override = i // 3
            else:
                core.csr[CSR_MHARTID] = i
                core.hartid_override = None
        return 1000 + config_writes + words

    # ------------------------------------------------------- memory helpers

    def _fetch(self, addr: int) -> tuple[int, int]:
        """Returns (instruction word, fetch fault cause or -1)."""
        if addr & 3:
            return 0, CAUSE_FETCH_MISALIGNED
        off = addr - IMEM_BASE
        if not 0 <= off < IMEM_SIZE:
            return 0, CAUSE_FETCH_FAULT
        return self.imem[off >> 2], -1

    def _periph_read(self, addr: int) -> Optional[int]:
        off = addr - PERIPH_BASE
        if ODRG0_OFF <= off < ODRG0_OFF + 0x100:
            return self.odrg[0].reg_read(off - ODRG0_OFF)
        if ODRG1_OFF <= off < ODRG1_OFF + 0x100:
            return self.odrg[1].reg_read(off - ODRG1_OFF)
        if EU_OFF <= off < EU_OFF + 0x100:
            return self.eu.read(off - EU_OFF)
        if CTRL_OFF <= off < CTRL_OFF + 8:
            return self.ctrl[(off - CTRL_OFF) >> 2]
        if off == EXIT_OFF:
            return self.exit_code if self.exit_code is not None else 0
        return None

    def _periph_write(self, addr: int, value: int, logical: int) -> bool:
        off = addr - PERIPH_BASE
        if ODRG0_OFF <= off < ODRG0_OFF + 0x100:
            return self.odrg[0].reg_write(off - ODRG0_OFF, value)
        if ODRG1_OFF <= off < ODRG1_OFF + 0x100:
            return self.odrg[1].reg_write(off - ODRG1_OFF, value)
        if EU_OFF <= off < EU_OFF + 0x100:
            return self.eu.write(off - EU_OFF, value, logical, self.cycle)
        if CTRL_OFF <= off < CTRL_OFF + 8:
            self.ctrl[(off - CTRL_OFF) >> 2] = value & 0xFFFFFFFF
            return True
        if off == EXIT_OFF:
            self.halted = True
            self.exit_code = value & 0xFFFFFFFF
            return True
        return False

    def host_read(self, addr: int) -> int:
        """Debug/host access, outside the simulated cycle stream."""
        if TCDM_BASE <= addr < TCDM_BASE + TCDM_SIZE:
            return self.tcdm[(addr - TCDM_BASE) >> 2]
        if IMEM_BASE <= addr < IMEM_BASE + IMEM_SIZE:
            return self.imem[(addr - IMEM_BASE) >> 2]
        value = self._periph_read(addr)
        if value is None:
            raise OutOfRange(f"host read from unmapped 0x{addr:08x}")
        return value

    def host_write(self, addr: int, value: int) -> None:
        if TCDM_BASE <= addr < TCDM_BASE + TCDM_SIZE:
            self.tcdm[(addr - TCDM_BASE) >> 2] = value & 0xFFFFFFFF
            return
        if not self._periph_write(addr, value, 0):
            raise OutOfRange(f"host write to unmapped 0x{addr:08x}")

    # ------------------------------------------------------------ stepping

    def cycle_once(self) -> None:
        if self.mode == "tmr":
            if self.rep_mode:
                self._cycle_tmr_rep()
            else:
                self._cycle_tmr()
        else:
            self._cycle_performance()
        self.cycle += 1

    def _flip_mask(self, core_id: int) -> int:
        if self.iface_flip is not None and self.iface_flip[0] == core_id:
            mask = self.iface_flip[1]
            self.iface_flip = None
            return mask
        return 0

    def _cycle_performance(self) -> None:
        cores = self.cores
        ops: list = [None] * N_CORES
        faults = [-1] * N_CORES
        bundles = [BUNDLE_IDLE] * N_CORES
        for i, core in enumerate(cores):
            flip = self._flip_mask(i)
            fpart = core.fetch_part() ^ (flip & _FETCH_FIELD)
            if fpart & 1:
                word, fault = self._fetch(fpart >> 1)
                faults[i] = fault
                if fault < 0:
                    ops[i] = cached_op(word)
            bundle = core.build_bundle(ops[i])
            bundle = (bundle & ~_FETCH_FIELD) | (fpart & _FETCH_FIELD)
            bundles[i] = bundle ^ (flip & ~_FETCH_FIELD)
        rdata, stall, bus_err = self._memory_phase(bundles, list(range(N_CORES)))
        irq = [False] * N_CORES
        for g, unit in enumerate(self.odrg):
            if unit.tick(self.cycle):
                for i in range(3 * g, 3 * g + 3):
                    irq[i] = True
        wake = self._wake_phase(bundles, list(range(N_CORES)))
        for i, core in enumerate(cores):
            retired = core.commit(ops[i], rdata[i], stall[i], bus_err[i], faults[i], wake[i])
            if retired and self.trace_hook is not None and ops[i] is not None:
                self.trace_hook(self.cycle, i, (bundles[i] >> 1) & 0xFFFFFFFF, ops[i].word)
            if irq[i]:
                core.irq_pending = IRQ_RESYNC

    def _cycle_tmr(self) -> None:
        cores = self.cores
        group_ops: list = [None, None]
        group_faults = [-1, -1]
        voted_bundles = [BUNDLE_IDLE, BUNDLE_IDLE]
        member_bundles: list[list[int]] = [[], []]
        for g in (0, 1):
            members = cores[3 * g : 3 * g + 3]
            flips = [self._flip_mask(3 * g + k) for k in range(3)]
            fparts = [
                m.fetch_part() ^ (flips[k] & _FETCH_FIELD) for k, m in enumerate(members)
            ]
            fpart_v = (fparts[0] & fparts[1]) | (fparts[1] & fparts[2]) | (fparts[0] & fparts[2])
            if fpart_v & 1:
                word, fault = self._fetch(fpart_v >> 1)
                group_faults[g] = fault
                if fault < 0:
                    group_ops[g] = cached_op(word)
            op = group_ops[g]
            bundles = []
            for k, m in enumerate(members):
                b = m.build_bundle(op)
                b = (b & ~_FETCH_FIELD) | (fparts[k] & _FETCH_FIELD)
                bundles.append(b ^ (flips[k] & ~_FETCH_FIELD))
            member_bundles[g] = bundles
            voted_bundles[g] = self.odrg[g].vote_bundles(*bundles)
        rdata, stall, bus_err = self._memory_phase(voted_bundles, [0, 1])
        irq = [False, False]
        for g, unit in enumerate(self.odrg):
            irq[g] = unit.tick(self.cycle)
        wake = self._wake_phase(voted_bundles, [0, 1])
        for g in (0, 1):
            op = group_ops[g]
            retired = False
            for k in range(3):
                core = cores[3 * g + k]
                r = core.commit(op, rdata[g], stall[g], bus_err[g], group_faults[g], wake[g])
                retired = retired or r
            if retired and self.trace_hook is not None and op is not None:
                self.trace_hook(self.cycle, 3 * g, (voted_bundles[g] >> 1) & 0xFFFFFFFF, op.word)
            unit = self.odrg[g]
            if retired and op is not None and op.name == "mret" and unit.fsm == FSM_TMR_RELOAD:
                unit.reload_finished(self.cycle)
            if irq[g]:
                for k in range(3):
                    cores[3 * g + k].irq_pending = IRQ_RESYNC

    def _cycle_tmr_rep(self) -> None:
        """Step one representative per group; members are provably identical.

        Entered only by the campaign engine once it has established that
        all three members of each group are in the same state and no
        resync is pending.  Voting is skipped (all bundles would be
        equal), so mismatch counters are untouched, exactly as in the
        full path.  Any event that could start a resync drops back to
        full stepping before it can take effect.
        """
        cores = self.cores
        reps = [cores[0], cores[3]]
        group_ops: list = [None, None]
        group_faults = [-1, -1]
        bundles = [BUNDLE_IDLE, BUNDLE_IDLE]
        for g in (0, 1):
            rep = reps[g]
            fpart = rep.fetch_part()
            if fpart & 1:
                word, fault = self._fetch(fpart >> 1)
                group_faults[g] = fault
                if fault < 0:
                    group_ops[g] = cached_op(word)
            bundles[g] = rep.build_bundle(group_ops[g])
        rdata, stall, bus_err = self._memory_phase(bundles, [0, 1])
        irq = [False, False]
        for g, unit in enumerate(self.odrg):
            irq[g] = unit.tick(self.cycle)
        wake = self._wake_phase(bundles, [0, 1])
        for g in (0, 1):
            op = group_ops[g]
            retired = reps[g].commit(op, rdata[g], stall[g], bus_err[g], group_faults[g], wake[g])
            unit = self.odrg[g]
            if retired and op is not None and op.name == "mret" and unit.fsm == FSM_TMR_RELOAD:
                unit.reload_finished(self.cycle)
            if irq[g]:
                reps[g].irq_pending = IRQ_RESYNC
        self._check_rep_safe()

    def _check_rep_safe(self) -> None:
        for g, unit in enumerate(self.odrg):
            if unit.fsm != FSM_TMR_RUN or unit.pending is not None or self.cores[3 * g].irq_pending is not None:
                self.materialize()
                return

    def materialize(self) -> None:
        """Leave representative stepping: copy each rep onto its group.

        Group members share one stored hart id (the group id), so a plain
        clone reproduces the twins exactly.
        """
        if not self.rep_mode:
            return
        for g in (0, 1):
            rep = self.cores[3 * g]
            for k in (1, 2):
                self.cores[3 * g + k] = rep.clone()
        self.rep_mode = False

    # ------------------------------------------------- memory + peripherals

    def _memory_phase(
        self, bundles: list[int], logical_ids: list[int]
    ) -> tuple[list[int], list[bool], list[bool]]:
        n = len(bundles)
        rdata = [0] * n
        stall = [False] * n
        bus_err = [False] * n
        reqs: list[Optional[tuple[int, int, int, int]]] = [None] * n
        bank_req: list[Optional[int]] = [None] * n
        for p, b in enumerate(bundles):
            if not (b >> 33) & 1:
                continue
            write = (b >> 34) & 1
            be = (b >> 35) & 0xF
            addr = (b >> 39) & 0xFFFFFFFF
            wdata = (b >> 71) & 0xFFFFFFFF
            reqs[p] = (write, be, addr, wdata)
            if TCDM_BASE <= addr < TCDM_BASE + TCDM_SIZE:
                bank_req[p] = ((addr - TCDM_BASE) >> 2) & (N_BANKS - 1)
        if any(b is not None for b in bank_req):
            pad = bank_req + [None] * (N_CORES - n)
            grants, self.rr = arbitrate(pad, self.rr)
        else:
            grants = [False] * n
        for p in range(n):
            if reqs[p] is None:
                continue
            write, be, addr, wdata = reqs[p]
            if bank_req[p] is not None:
                if not grants[p]:
                    stall[p] = True
                    continue
                idx = (addr - TCDM_BASE) >> 2
                if write:
                    if be == 0xF:
                        self.tcdm[idx] = wdata
                    else:
                        mask = 0
                        for lane in range(4):
                            if be & (1 << lane):
                                mask |= 0xFF << (8 * lane)
                        self.tcdm[idx] = (self.tcdm[idx] & ~mask) | (wdata & mask)
                else:
                    rdata[p] = self.tcdm[idx]
                continue
            word_addr = addr & ~3
            if IMEM_BASE <= addr < IMEM_BASE + IMEM_SIZE:
                if write:
                    bus_err[p] = True
                else:
                    rdata[p] = self.imem[(word_addr - IMEM_BASE) >> 2]
                continue
            if PERIPH_BASE <= addr < PERIPH_BASE + PERIPH_SIZE:
                if write:
                    if be != 0xF:
                        bus_err[p] = True
                    elif not self._periph_write(word_addr, wdata, logical_ids[p]):
                        bus_err[p] = True
                else:
                    value = self._periph_read(word_addr)
                    if value is None:
                        bus_err[p] = True
                    else:
                        rdata[p] = value
                continue
            bus_err[p] = True
        return rdata, stall, bus_err

    def _wake_phase(self, bundles: list[int], logical_ids: list[int]) -> list[bool]:
        wake = [False] * len(bundles)
        if self.eu.wake_pending:
            for p, b in enumerate(bundles):
                lid = logical_ids[p]
                if (b >> 104) & 1 and self.eu.wake_pending & (1 << lid):
                    self.eu.wake_pending &= ~(1 << lid)
                    wake[p] = True
        return wake

    # --------------------------------------------------------------- runner

    def run(self, max_cycles: int) -> str:
        """Run until the program exits or the cycle budget is spent."""
        while not self.halted and self.cycle < max_cycles:
            self.cycle_once()
        return "exit" if self.halted else "timeout"

    def clone(self) -> "Cluster":
        cl = Cluster.__new__(Cluster)
        cl.cores = [c.clone() for c in self.cores]
        cl.imem = self.imem  # never written after boot; safe to share
        cl.tcdm = list(self.tcdm)
        cl.rr = list(self.rr)
        cl.odrg = [u.clone() for u in self.odrg]
        cl.eu = self.eu.clone()
        cl.ctrl = list(self.ctrl)
        cl.mode = self.mode
        cl.cycle = self.cycle
        cl.halted = self.halted
        cl.exit_code = self.exit_code
        cl.trace_hook = None
        cl.iface_flip = None
        cl.rep_mode = self.rep_mode
        return cl
