"""Workload timing: cycle counts per operating mode and the speedup ratio.

All benchmark runs use the full cycle-accurate path (no representative
stepping) so that reported cycle counts are honest measurements of both
configurations.
"""

from __future__ import annotations

from .cluster import Cluster
from .firmware import KERNELS, build_kernel


def run_kernel_once(kernel: str, mode: str, resync_delay: int = 0,
                    max_cycles: int = 3_000_000) -> dict:
    """Boot and run one workload to completion; returns timing facts."""
    prog = build_kernel(kernel, mode)
    cl = Cluster()
    reboot_cycles = cl.reset_and_boot(mode, prog.image, resync_delay)
    reason = cl.run(max_cycles)
    ok = reason == "exit" and cl.exit_code == 0
    for addr, nwords in prog.output_regions:
        base = (addr - 0x1000_0000) >> 2
        if cl.tcdm[base : base + nwords] != prog.expected[addr]:
            ok = False
    return {
        "kernel": kernel,
        "mode": mode,
        "cycles": cl.cycle,
        "reboot_cycles": reboot_cycles,
        "exit_code": cl.exit_code,
        "reason": reason,
        "outputs_ok": ok,
    }


def bench(kernels: tuple[str, ...] = KERNELS) -> dict:
    """Run every workload in both modes; report cycles and speedups."""
    rows = {}
    for k in kernels:
        perf = run_kernel_once(k, "performance")
        tmr = run_kernel_once(k, "tmr")
        rows[k] = {
            "performance_cycles": perf["cycles"],
            "tmr_cycles": tmr["cycles"],
            "speedup": tmr["cycles"] / perf["cycles"],
            "ok": perf["outputs_ok"] and tmr["outputs_ok"],
        }
    return rows
