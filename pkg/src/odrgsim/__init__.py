"""Cycle-level simulator of a six-core RV32IM compute cluster whose cores
can be rebooted into two triple-redundant lockstep groups with per-bit
majority voting and software-driven re-synchronization."""

from .asm import AsmError, ProgramImage, assemble
from .bench import bench, run_kernel_once
from .cluster import Cluster, arbitrate, bank_route
from .core import Core, IfaceView
from .faults import (
    CampaignConfig,
    ConfigError,
    FaultSpec,
    InvalidFault,
    Outcome,
    Timeout,
    golden_run,
    load_campaign_config,
    measure_resync,
    run_campaign,
    run_with_fault,
    write_csv,
    write_report,
    write_summary_csv,
)
from .firmware import KERNELS, build_kernel
from .insn import decode, disasm
from .odrg import OdrgUnit, vote3

__all__ = [
    "AsmError",
    "CampaignConfig",
    "Cluster",
    "ConfigError",
    "Core",
    "FaultSpec",
    "IfaceView",
    "InvalidFault",
    "KERNELS",
    "OdrgUnit",
    "Outcome",
    "ProgramImage",
    "Timeout",
    "arbitrate",
    "assemble",
    "bank_route",
    "bench",
    "build_kernel",
    "decode",
    "disasm",
    "golden_run",
    "load_campaign_config",
    "measure_resync",
    "run_campaign",
    "run_kernel_once",
    "run_with_fault",
    "vote3",
    "write_csv",
    "write_report",
    "write_summary_csv",
]

__version__ = "0.1.0"
