"""Redundancy-group wrapper: per-bit voter, mismatch counters, resync FSM.

One unit sits in front of each group of three cores.  In TMR operation it
votes the three outgoing interface bundles bit by bit, flags any core whose
bundle differed from the vote, and runs the unload/reload state machine that
sequences the software re-synchronization protocol.  In independent
operation it passes interfaces straight through and never touches its
counters.
"""

from __future__ import annotations

import logging
from typing import Optional

log = logging.getLogger(__name__)

MODE_PERFORMANCE = 0
MODE_TMR = 1

FSM_INDEPENDENT = 0
FSM_TMR_RUN = 1
FSM_TMR_UNLOAD = 2
FSM_TMR_RELOAD = 3

FSM_NAMES = {
    FSM_INDEPENDENT: "independent",
    FSM_TMR_RUN: "tmr_run",
    FSM_TMR_UNLOAD: "tmr_unload",
    FSM_TMR_RELOAD: "tmr_reload",
}

_SAT = 0xFFFFFFFF

# register word offsets within one unit's 0x100 window
REG_MODE = 0x00
REG_RESYNC_DELAY = 0x04
REG_SP_STORE = 0x08
REG_MISMATCH0 = 0x0C
REG_MISMATCH1 = 0x10
REG_MISMATCH2 = 0x14
REG_STATUS = 0x18
REG_FORCE_RESYNC = 0x1C


def vote3(a: int, b: int, c: int) -> tuple[int, tuple[bool, bool, bool]]:
    """Per-bit majority of three equal-width bitvectors.

    Returns the voted value and one mismatch flag per input (set when that
    input differed from the vote in any bit position).
    """
    voted = (a & b) | (b & c) | (a & c)
    return voted, (a != voted, b != voted, c != voted)


class OdrgUnit:
    """State and registers of one redundancy-group wrapper."""

    def __init__(self, group: int):
        self.group = group
        self.mode_reg = MODE_PERFORMANCE  # takes effect at the next reboot
        self.resync_delay = 0
        self.saved_sp = 0
        self.mismatch = [0, 0, 0]
        self.fsm = FSM_INDEPENDENT
        self.pending: Optional[int] = None  # countdown until the irq fires
        self.violations = 0
        # episode bookkeeping (diagnostics; deterministic)
        self.resync_start: Optional[int] = None
        self.episodes: list[tuple[int, int]] = []

    # ------------------------------------------------------------- voting

    def vote_bundles(self, b0: int, b1: int, b2: int) -> int:
        """Vote one cycle's bundles; count mismatches and arm the FSM.

        Active in every TMR sub-state.  Mismatches observed outside
        tmr_run are corrected and counted but do not start a new episode.
        """
        voted = (b0 & b1) | (b1 & b2) | (b0 & b2)
        if b0 == b1 == b2:
            return voted
        m = self.mismatch
        if b0 != voted and m[0] != _SAT:
            m[0] += 1
        if b1 != voted and m[1] != _SAT:
            m[1] += 1
        if b2 != voted and m[2] != _SAT:
            m[2] += 1
        if self.fsm == FSM_TMR_RUN and self.pending is None:
            self.pending = self.resync_delay
        return voted

    # ---------------------------------------------------------------- FSM

    def tick(self, cycle: int) -> bool:
        """Advance the countdown; returns True the cycle the irq fires."""
        if self.fsm == FSM_TMR_RUN and self.pending is not None:
            if self.pending == 0:
                self.pending = None
                self.fsm = FSM_TMR_UNLOAD
                self.resync_start = cycle
                return True
            self.pending -= 1
        return False

    def reload_finished(self, cycle: int) -> None:
        self.fsm = FSM_TMR_RUN
        if self.resync_start is not None:
            self.episodes.append((self.resync_start, cycle))
            self.resync_start = None

    def latch_mode(self) -> None:
        """Apply MODE at reboot; clears episode state and counters."""
        self.fsm = FSM_TMR_RUN if self.mode_reg == MODE_TMR else FSM_INDEPENDENT
        self.mismatch = [0, 0, 0]
        self.pending = None
        self.saved_sp = 0
        self.resync_start = None
        self.episodes = []
        self.violations = 0

    # ----------------------------------------------------------- registers

    def reg_read(self, offset: int) -> Optional[int]:
        if offset == REG_MODE:
            return self.mode_reg
        if offset == REG_RESYNC_DELAY:
            return self.resync_delay
        if offset == REG_SP_STORE:
            return self.saved_sp
        if offset == REG_MISMATCH0:
            return self.mismatch[0]
        if offset == REG_MISMATCH1:
            return self.mismatch[1]
        if offset == REG_MISMATCH2:
            return self.mismatch[2]
        if offset == REG_STATUS:
            return self.fsm
        if offset == REG_FORCE_RESYNC:
            return 0
        return None

    def reg_write(self, offset: int, value: int) -> bool:
        """Returns False for unmapped offsets (bus error at the core)."""
        value &= 0xFFFFFFFF
        if offset == REG_MODE:
            self.mode_reg = value & 1
        elif offset == REG_RESYNC_DELAY:
            self.resync_delay = value
        elif offset == REG_SP_STORE:
            if self.fsm == FSM_TMR_UNLOAD:
                self.saved_sp = value
                self.fsm = FSM_TMR_RELOAD
            elif self.fsm in (FSM_TMR_RUN, FSM_TMR_RELOAD):
                # protocol violation: logged and ignored
                self.violations += 1
                log.warning("group %d: SP_STORE written in %s", self.group, FSM_NAMES[self.fsm])
            else:
                self.saved_sp = value
        elif offset in (REG_MISMATCH0, REG_MISMATCH1, REG_MISMATCH2):
            self.mismatch[(offset - REG_MISMATCH0) // 4] = 0
        elif offset == REG_STATUS:
            pass  # read-only
        elif offset == REG_FORCE_RESYNC:
            if value & 1 and self.fsm == FSM_TMR_RUN and self.pending is None:
                self.pending = self.resync_delay
        else:
            return False
        return True

    # ---------------------------------------------------------------- misc

    def clone(self) -> "OdrgUnit":
        u = OdrgUnit.__new__(OdrgUnit)
        u.group = self.group
        u.mode_reg = self.mode_reg
        u.resync_delay = self.resync_delay
        u.saved_sp = self.saved_sp
        u.mismatch = list(self.mismatch)
        u.fsm = self.fsm
        u.pending = self.pending
        u.violations = self.violations
        u.resync_start = self.resync_start
        u.episodes = list(self.episodes)
        return u
