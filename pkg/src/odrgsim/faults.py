"""Fault-injection campaigns: single-event upsets against a running cluster.

A campaign replays a fault-free ("golden") run from periodic checkpoints,
applies one single-bit flip (architectural register, CSR, pc, or a bit of
a core's outgoing interface), and classifies the outcome:

 * Masked: result and exit identical to golden, no resync occurred;
 * DetectedCorrected: identical result after one or more resync episodes;
 * SilentDataCorruption: wrong exit code or wrong output memory;
 * Hang: no exit within 4x the golden cycle count.

For speed the faulty run is compared against the next golden checkpoint;
once the cluster has provably reconverged (all state equal modulo dead
trap-bookkeeping CSRs and the unread stack scratch area), the remainder
of the golden run is adopted verbatim.  Every Nth fault is audited with
a plain full-length simulation to cross-check the shortcut.
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

from .cluster import Cluster
from .core import Core, UnknownTarget
from .firmware import KERNELS, KernelProgram, build_kernel
from .insn import (
    CSR_MCAUSE,
    CSR_MCYCLE,
    CSR_MEPC,
    CSR_MHARTID,
    CSR_MTVAL,
    CSR_NAMES,
)
from .odrg import FSM_TMR_RUN

OUTCOME_MASKED = "Masked"
OUTCOME_CORRECTED = "DetectedCorrected"
OUTCOME_SDC = "SilentDataCorruption"
OUTCOME_HANG = "Hang"

# Trap bookkeeping that is rewritten on every trap entry before anything
# reads it; a stale copy cannot influence future behavior.  Per-program
# dead registers (from the static scan over the workload text) extend it.
DEAD_CSRS = frozenset({CSR_MEPC, CSR_MCAUSE, CSR_MTVAL, CSR_MCYCLE})

TARGETS = ("gpr", "csr", "pc", "iface")


class ConfigError(ValueError):
    pass


class InvalidFault(ConfigError):
    """The fault names a target that does not exist on the machine."""


class Timeout(RuntimeError):
    """A reference run did not reach the exit register within its limit."""


@dataclass(frozen=True)
class FaultSpec:
    """One single-bit upset: flip `bit` of the named target on `core`
    immediately before cycle `cycle` executes (interface flips perturb
    that cycle's outgoing bundle instead)."""

    cycle: int
    core: int
    target: str  # gpr | csr | pc | iface
    index: int  # gpr number / CSR number / 0 / interface bit
    bit: int


@dataclass
class Outcome:
    outcome: str
    exit_code: Optional[int]
    total_cycles: int
    episodes: list[tuple[int, int]]
    mismatch_counts: list[list[int]]
    post_resync_equal: Optional[bool]
    converged_at: Optional[int] = None
    # total cycles spent inside resync episodes; None when none occurred
    resync_cycles: Optional[int] = None


@dataclass
class GoldenRun:
    kernel: str
    mode: str
    resync_delay: int
    program: KernelProgram
    boot_cycles: int
    checkpoints: list[tuple[int, Cluster]]
    exit_code: int
    total_cycles: int
    outputs: dict[int, list[int]]


def _apply_flip(cl: Cluster, spec: FaultSpec) -> None:
    if not 0 <= spec.core < len(cl.cores):
        raise InvalidFault(f"no core {spec.core}")
    core = cl.cores[spec.core]
    try:
        if spec.target == "gpr":
            core.flip_gpr(spec.index, spec.bit)
        elif spec.target == "csr":
            core.flip_csr(spec.index, spec.bit)
        elif spec.target == "pc":
            core.flip_pc(spec.bit)
        elif spec.target == "iface":
            if not 0 <= spec.index < 105:
                raise InvalidFault(f"no interface bit {spec.index}")
            cl.iface_flip = (spec.core, 1 << spec.index)
        else:
            raise InvalidFault(f"unknown fault target {spec.target!r}")
    except UnknownTarget as e:
        raise InvalidFault(str(e)) from None


def golden_run(
    kernel: str,
    mode: str = "tmr",
    resync_delay: int = 0,
    checkpoint_every: int = 2500,
    max_cycles: int = 5_000_000,
    use_rep: bool = True,
) -> GoldenRun:
    """Fault-free reference run with periodic full-state checkpoints."""
    prog = build_kernel(kernel, mode)
    cl = Cluster()
    boot = cl.reset_and_boot(mode, prog.image, resync_delay)
    if mode == "tmr" and use_rep:
        cl.rep_mode = True
    checkpoints = []
    while not cl.halted and cl.cycle < max_cycles:
        if cl.cycle % checkpoint_every == 0:
            checkpoints.append((cl.cycle, cl.clone()))
        cl.cycle_once()
    if not cl.halted:
        raise Timeout(f"golden run of {kernel}/{mode} did not exit within {max_cycles} cycles")
    if cl.exit_code != 0:
        raise RuntimeError(f"golden run of {kernel}/{mode} exited {cl.exit_code:#x}")
    outputs = {}
    for addr, nwords in prog.output_regions:
        base = (addr - 0x1000_0000) >> 2
        outputs[addr] = cl.tcdm[base : base + nwords]
        if outputs[addr] != prog.expected[addr]:
            raise RuntimeError(f"golden output mismatch for {kernel} at {addr:#x}")
    return GoldenRun(
        kernel=kernel,
        mode=mode,
        resync_delay=resync_delay,
        program=prog,
        boot_cycles=boot,
        checkpoints=checkpoints,
        exit_code=cl.exit_code,
        total_cycles=cl.cycle,
        outputs=outputs,
    )


def _cores_equal_mod(a: Core, b: Core, dead_gprs: frozenset[int],
                     dead_csrs: frozenset[int]) -> bool:
    if a.pc != b.pc or a.busy != b.busy or a.sleeping != b.sleeping \
            or a.irq_pending != b.irq_pending:
        return False
    if a.x != b.x:
        for i in range(1, 32):
            if a.x[i] != b.x[i] and i not in dead_gprs:
                return False
    if a.csr != b.csr:
        for num, val in a.csr.items():
            if b.csr[num] != val and num not in dead_csrs:
                return False
    return True


def _tcdm_equal_mod_stack(a: Cluster, b: Cluster, stack_region: tuple[int, int]) -> bool:
    lo = (stack_region[0] - 0x1000_0000) >> 2
    hi = (stack_region[1] - 0x1000_0000) >> 2
    return a.tcdm[:lo] == b.tcdm[:lo] and a.tcdm[hi:] == b.tcdm[hi:]


def _converged(faulty: Cluster, golden: Cluster, stack_region: tuple[int, int],
               dead_gprs: frozenset[int], dead_csrs: frozenset[int]) -> bool:
    """Behavioral state equality: everything that can influence the future."""
    if faulty.halted != golden.halted or faulty.exit_code != golden.exit_code:
        return False
    for unit in faulty.odrg:
        if unit.fsm != FSM_TMR_RUN or unit.pending is not None:
            return False
    ga, gb = faulty.eu, golden.eu
    if (ga.target, ga.arrived, ga.gen, ga.wake_pending) != (gb.target, gb.arrived, gb.gen, gb.wake_pending):
        return False
    if faulty.rr != golden.rr:
        return False
    gold_cores = golden.cores
    if golden.rep_mode:
        gold_cores = [golden.cores[(i // 3) * 3] for i in range(6)]
    fault_cores = faulty.cores
    if faulty.rep_mode:
        fault_cores = [faulty.cores[(i // 3) * 3] for i in range(6)]
    for fc, gc in zip(fault_cores, gold_cores):
        if not _cores_equal_mod(fc, gc, dead_gprs, dead_csrs):
            return False
    return _tcdm_equal_mod_stack(faulty, golden, stack_region)


def _groups_identical(cl: Cluster) -> bool:
    for g in (0, 1):
        c0, c1, c2 = cl.cores[3 * g : 3 * g + 3]
        if not (c0.same_state(c1) and c1.same_state(c2)):
            return False
    return True


def _groups_lockstep_mod(cl: Cluster, dead_gprs: frozenset[int],
                         dead_csrs: frozenset[int]) -> bool:
    """Members equal up to statically-dead registers: safe for
    representative stepping (a dead diverged copy can only surface inside
    a resync episode, and representative stepping is abandoned before any
    episode can begin)."""
    for g in (0, 1):
        c0, c1, c2 = cl.cores[3 * g : 3 * g + 3]
        if not (_cores_equal_mod(c0, c1, dead_gprs, dead_csrs)
                and _cores_equal_mod(c1, c2, dead_gprs, dead_csrs)):
            return False
    return True


def run_with_fault(golden: GoldenRun, spec: FaultSpec, full_sim: bool = False,
                   timeout_factor: float = 4.0) -> Outcome:
    """Replay from the nearest checkpoint, inject, classify."""
    if spec.cycle >= golden.total_cycles:
        raise InvalidFault(
            f"fault cycle {spec.cycle} is past the golden run ({golden.total_cycles} cycles)")
    base_cycle, base = None, None
    for cyc, ck in golden.checkpoints:
        if cyc <= spec.cycle:
            base_cycle, base = cyc, ck
        else:
            break
    if base is None:
        raise ConfigError(f"fault cycle {spec.cycle} precedes the first checkpoint")
    cl = base.clone()
    while cl.cycle < spec.cycle and not cl.halted:
        cl.cycle_once()
    cl.materialize()
    _apply_flip(cl, spec)

    prog = golden.program
    dead_gprs = prog.dead_gprs
    dead_csrs = prog.dead_csrs | DEAD_CSRS
    stack_region = prog.stack_region
    limit = int(timeout_factor * golden.total_cycles)
    seen_episodes = [len(u.episodes) for u in cl.odrg]
    post_equal: Optional[bool] = None
    converged_at: Optional[int] = None
    ckpts = [(c, k) for c, k in golden.checkpoints if c > spec.cycle]
    ckpt_idx = 0

    while not cl.halted and cl.cycle < limit:
        cl.cycle_once()
        for g, unit in enumerate(cl.odrg):
            if len(unit.episodes) != seen_episodes[g]:
                seen_episodes[g] = len(unit.episodes)
                post_equal = _groups_identical(cl)
        if full_sim:
            continue
        if ckpt_idx < len(ckpts) and cl.cycle == ckpts[ckpt_idx][0]:
            if _converged(cl, ckpts[ckpt_idx][1], stack_region, dead_gprs, dead_csrs):
                converged_at = cl.cycle
                break
            ckpt_idx += 1
        # a resync shifts timing, so a corrected run never lines up with a
        # golden checkpoint again; once the members are provably lockstep
        # the tail is finished with one representative per group
        if not cl.rep_mode and cl.mode == "tmr" and cl.cycle % 64 == 0 \
                and all(u.fsm == FSM_TMR_RUN and u.pending is None for u in cl.odrg) \
                and all(c.irq_pending is None for c in cl.cores) \
                and _groups_lockstep_mod(cl, dead_gprs, dead_csrs):
            cl.rep_mode = True

    episodes = [ep for u in cl.odrg for ep in u.episodes]
    mismatch = [list(u.mismatch) for u in cl.odrg]
    rs = sum(e - s for s, e in episodes) if episodes else None

    if converged_at is not None:
        outcome = OUTCOME_CORRECTED if episodes else OUTCOME_MASKED
        return Outcome(outcome, golden.exit_code, golden.total_cycles,
                       episodes, mismatch, post_equal, converged_at, rs)
    if not cl.halted:
        return Outcome(OUTCOME_HANG, None, cl.cycle, episodes, mismatch, post_equal,
                       resync_cycles=rs)

    ok = cl.exit_code == golden.exit_code
    if ok:
        for addr, nwords in golden.program.output_regions:
            basew = (addr - 0x1000_0000) >> 2
            if cl.tcdm[basew : basew + nwords] != golden.outputs[addr]:
                ok = False
                break
    if not ok:
        return Outcome(OUTCOME_SDC, cl.exit_code, cl.cycle, episodes, mismatch, post_equal,
                       resync_cycles=rs)
    outcome = OUTCOME_CORRECTED if episodes else OUTCOME_MASKED
    return Outcome(outcome, cl.exit_code, cl.cycle, episodes, mismatch, post_equal,
                   resync_cycles=rs)


# ------------------------------------------------------------ fault sampling

_CSR_TARGETS = sorted(set(CSR_NAMES) - {CSR_MHARTID})  # read-only: no storage to upset


def random_faults(
    count: int,
    seed: int,
    window: tuple[int, int],
    targets: tuple[str, ...] = ("gpr", "csr", "iface"),
) -> list[FaultSpec]:
    """Uniform single-bit faults over cores, targets, and the cycle window."""
    rng = random.Random(seed)
    lo, hi = window
    specs = []
    for _ in range(count):
        target = targets[rng.randrange(len(targets))]
        cycle = rng.randrange(lo, hi)
        core = rng.randrange(6)
        if target == "gpr":
            spec = FaultSpec(cycle, core, "gpr", rng.randrange(1, 32), rng.randrange(32))
        elif target == "csr":
            spec = FaultSpec(cycle, core, "csr", _CSR_TARGETS[rng.randrange(len(_CSR_TARGETS))],
                             rng.randrange(32))
        elif target == "pc":
            spec = FaultSpec(cycle, core, "pc", 0, rng.randrange(32))
        elif target == "iface":
            spec = FaultSpec(cycle, core, "iface", rng.randrange(105), 0)
        else:
            raise InvalidFault(f"unknown fault target {target!r}")
        specs.append(spec)
    return specs


def measure_resync(
    kernel: str = "conv16",
    points: int = 50,
    resync_delay: int = 0,
    golden: Optional[GoldenRun] = None,
) -> list[dict]:
    """Sweep interface upsets across the run; report each resync length."""
    if golden is None:
        golden = golden_run(kernel, "tmr", resync_delay)
    lo = 500
    hi = golden.total_cycles - 2000
    results = []
    for i in range(points):
        cycle = lo + (hi - lo) * i // max(points - 1, 1)
        spec = FaultSpec(cycle, i % 6, "iface", (i * 7) % 105, 0)
        out = run_with_fault(golden, spec)
        first = out.episodes[0] if out.episodes else None
        results.append({
            "inject_cycle": cycle,
            "core": spec.core,
            "iface_bit": spec.index,
            "outcome": out.outcome,
            "exit_code": out.exit_code,
            "resync_cycles": (first[1] - first[0]) if first else None,
            "episodes": len(out.episodes),
        })
    return results


# ---------------------------------------------------------------- campaigns

@dataclass
class CampaignConfig:
    kernel: str
    mode: str = "tmr"
    faults: int = 1000
    seed: int = 1
    targets: tuple[str, ...] = ("gpr", "csr", "iface")
    resync_delay: int = 0
    timeout_factor: float = 4.0
    audit_every: int = 16
    out: Optional[str] = None
    # enumerated faults instead of seeded sampling (config `faults: {explicit: [...]}`)
    explicit: Optional[list[FaultSpec]] = None


def _parse_explicit_fault(entry, i: int) -> FaultSpec:
    if not isinstance(entry, dict):
        raise ConfigError(f"faults.explicit[{i}]: must be a mapping")
    unknown = set(entry) - {"cycle", "core", "target", "index", "bit"}
    if unknown:
        raise ConfigError(f"faults.explicit[{i}]: unknown field {sorted(unknown)[0]!r}")
    for req in ("cycle", "core", "target"):
        if req not in entry:
            raise ConfigError(f"faults.explicit[{i}]: missing field {req!r}")
    cycle, core, target = entry["cycle"], entry["core"], entry["target"]
    index, bit = entry.get("index", 0), entry.get("bit", 0)
    for name, val in (("cycle", cycle), ("core", core), ("index", index), ("bit", bit)):
        if not isinstance(val, int) or isinstance(val, bool) or val < 0:
            raise ConfigError(
                f"faults.explicit[{i}].{name}: {val!r} must be a non-negative integer")
    if not core < 6:
        raise ConfigError(f"faults.explicit[{i}].core: {core} must be 0..5")
    if target not in TARGETS:
        raise ConfigError(
            f"faults.explicit[{i}].target: {target!r} is not one of {', '.join(TARGETS)}")
    return FaultSpec(cycle, core, target, index, bit)


def load_campaign_config(data: dict) -> CampaignConfig:
    """Validate a parsed config mapping; errors name the offending field."""
    if not isinstance(data, dict):
        raise ConfigError("campaign config must be a mapping")
    known = set(CampaignConfig.__dataclass_fields__) - {"explicit"}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown config field {key!r}")
    if "kernel" not in data:
        raise ConfigError("missing required field 'kernel'")
    kernel = data["kernel"]
    if kernel not in KERNELS:
        raise ConfigError(f"kernel: {kernel!r} is not one of {', '.join(KERNELS)}")
    mode = data.get("mode", "tmr")
    if mode not in ("performance", "tmr"):
        raise ConfigError(f"mode: {mode!r} must be 'performance' or 'tmr'")
    faults = data.get("faults", 1000)
    seed = data.get("seed", 1)
    targets = data.get("targets", ("gpr", "csr", "iface"))
    explicit = None
    if isinstance(faults, dict):
        # nested forms: faults.random {count, seed, targets} | faults.explicit [...]
        if set(faults) == {"random"}:
            sub = faults["random"]
            if not isinstance(sub, dict):
                raise ConfigError("faults.random: must be a mapping")
            unknown = set(sub) - {"count", "seed", "targets"}
            if unknown:
                raise ConfigError(f"faults.random: unknown field {sorted(unknown)[0]!r}")
            faults = sub.get("count", 1000)
            seed = sub.get("seed", seed)
            targets = sub.get("targets", targets)
        elif set(faults) == {"explicit"}:
            lst = faults["explicit"]
            if not isinstance(lst, list):
                raise ConfigError("faults.explicit: must be a list")
            explicit = [_parse_explicit_fault(e, i) for i, e in enumerate(lst)]
            faults = len(explicit)
        else:
            raise ConfigError(
                "faults: mapping must contain exactly one of 'random' or 'explicit'")
    if explicit is None:
        if not isinstance(faults, int) or isinstance(faults, bool) or faults <= 0:
            raise ConfigError(f"faults: {faults!r} must be a positive integer")
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError(f"seed: {seed!r} must be an integer")
    targets = tuple(targets)
    for t in targets:
        if t not in TARGETS:
            raise ConfigError(f"targets: {t!r} is not one of {', '.join(TARGETS)}")
    if not targets:
        raise ConfigError("targets: must not be empty")
    delay = data.get("resync_delay", 0)
    if not isinstance(delay, int) or isinstance(delay, bool) or delay < 0:
        raise ConfigError(f"resync_delay: {delay!r} must be a non-negative integer")
    factor = data.get("timeout_factor", 4.0)
    if not isinstance(factor, (int, float)) or isinstance(factor, bool) or factor < 1:
        raise ConfigError(f"timeout_factor: {factor!r} must be a number >= 1")
    audit = data.get("audit_every", 16)
    if not isinstance(audit, int) or isinstance(audit, bool) or audit < 0:
        raise ConfigError(f"audit_every: {audit!r} must be a non-negative integer")
    out = data.get("out")
    if out is not None and not isinstance(out, str):
        raise ConfigError(f"out: {out!r} must be a path string")
    return CampaignConfig(kernel=kernel, mode=mode, faults=faults, seed=seed,
                          targets=targets, resync_delay=delay,
                          timeout_factor=float(factor), audit_every=audit, out=out,
                          explicit=explicit)


@dataclass
class CampaignResult:
    config: CampaignConfig
    golden_cycles: int
    records: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    audits: int = 0
    audit_failures: int = 0


def run_campaign(
    cfg: CampaignConfig,
    golden: Optional[GoldenRun] = None,
    progress: Optional[Callable[[int, int], None]] = None,
) -> CampaignResult:
    if golden is None:
        golden = golden_run(cfg.kernel, cfg.mode, cfg.resync_delay)
    window = (500, max(501, golden.total_cycles - 2000))
    if cfg.explicit is not None:
        specs = list(cfg.explicit)
    else:
        specs = random_faults(cfg.faults, cfg.seed, window, cfg.targets)
    result = CampaignResult(config=cfg, golden_cycles=golden.total_cycles)
    counts: dict[str, int] = {}
    for i, spec in enumerate(specs):
        out = run_with_fault(golden, spec, timeout_factor=cfg.timeout_factor)
        if cfg.audit_every and i % cfg.audit_every == 0:
            result.audits += 1
            ref = run_with_fault(golden, spec, full_sim=True,
                                 timeout_factor=cfg.timeout_factor)
            if (ref.outcome, ref.exit_code, ref.total_cycles, ref.episodes) != (
                    out.outcome, out.exit_code, out.total_cycles, out.episodes):
                result.audit_failures += 1
        counts[out.outcome] = counts.get(out.outcome, 0) + 1
        rec = {"fault": asdict(spec)}
        rec.update(asdict(out))
        result.records.append(rec)
        if progress is not None:
            progress(i + 1, len(specs))
    hist: dict[int, int] = {}
    for rec in result.records:
        for s, e in rec["episodes"]:
            hist[e - s] = hist.get(e - s, 0) + 1
    result.summary = {
        "kernel": cfg.kernel,
        "mode": cfg.mode,
        "faults": len(specs),
        "outcomes": counts,
        "resync_episodes": sum(len(r["episodes"]) for r in result.records),
        "resync_histogram": {str(k): hist[k] for k in sorted(hist)},
        "audits": result.audits,
        "audit_failures": result.audit_failures,
    }
    if cfg.out:
        write_report(result, cfg.out)
    return result


def write_report(result: CampaignResult, path: str) -> None:
    """One JSON object per line: faults first, then a summary record."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in result.records:
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
        fh.write(json.dumps({"summary": result.summary}, separators=(",", ":")) + "\n")


def write_csv(result: CampaignResult, path: str) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["cycle", "core", "target", "index", "bit",
                    "outcome", "exit_code", "total_cycles", "episodes"])
        for rec in result.records:
            f = rec["fault"]
            w.writerow([f["cycle"], f["core"], f["target"], f["index"], f["bit"],
                        rec["outcome"], rec["exit_code"], rec["total_cycles"],
                        len(rec["episodes"])])


def write_summary_csv(result: CampaignResult, path: str) -> None:
    """Aggregate view only: outcome class counts and the resync histogram."""
    import csv

    s = result.summary
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "key", "value"])
        w.writerow(["kernel", "", s["kernel"]])
        w.writerow(["mode", "", s["mode"]])
        w.writerow(["faults", "", s["faults"]])
        for name in sorted(s["outcomes"]):
            w.writerow(["outcome", name, s["outcomes"][name]])
        for length, n in s["resync_histogram"].items():
            w.writerow(["resync_cycles", length, n])
        w.writerow(["audits", "", s["audits"]])
        w.writerow(["audit_failures", "", s["audit_failures"]])
