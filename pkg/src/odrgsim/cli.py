"""Command-line interface.

Subcommands:
  run           run one bundled workload or a user assembly program
  bench         cycle counts for both operating modes plus speedups
  resync-sweep  inject interface upsets across a run; report resync lengths
  campaign      fault-injection campaign driven by a YAML config
"""

from __future__ import annotations

import argparse
import json
import sys

import yaml

from .asm import assemble
from .bench import bench, run_kernel_once
from .cluster import Cluster
from .faults import (
    ConfigError,
    load_campaign_config,
    measure_resync,
    run_campaign,
    write_csv,
    write_summary_csv,
)
from .firmware import KERNELS, build_kernel
from .insn import disasm


def _cmd_run(args) -> int:
    if bool(args.kernel) == bool(args.program):
        print("run: give exactly one of --kernel or --program", file=sys.stderr)
        return 2
    if args.kernel:
        prog = build_kernel(args.kernel, args.mode, args.seed)
        image = prog.image
    else:
        with open(args.program, encoding="utf-8") as fh:
            image = assemble(fh.read())
    cl = Cluster()
    reboot = cl.reset_and_boot(args.mode, image, args.resync_delay)
    trace_fh = None
    if args.trace:
        trace_fh = open(args.trace, "w", encoding="utf-8")

        def hook(cycle, core, pc, word):
            trace_fh.write(f"{cycle} {core} {pc:#010x} {word:08x} {disasm(word)}\n")

        cl.trace_hook = hook
    try:
        reason = cl.run(args.max_cycles)
    finally:
        if trace_fh:
            trace_fh.close()
    counters = "/".join(",".join(str(n) for n in u.mismatch) for u in cl.odrg)
    print(f"mode={args.mode} reboot_cycles={reboot} run_cycles={cl.cycle} "
          f"reason={reason} exit={cl.exit_code if cl.exit_code is not None else '-'} "
          f"mismatch={counters}")
    if reason != "exit":
        return 2
    return 0 if cl.exit_code == 0 else 1


def _cmd_bench(args) -> int:
    rows = bench(tuple(args.kernels.split(",")) if args.kernels else KERNELS)
    print(f"{'kernel':<10} {'perf cycles':>12} {'tmr cycles':>12} {'speedup':>8}")
    ok = True
    for k, r in rows.items():
        print(f"{k:<10} {r['performance_cycles']:>12} {r['tmr_cycles']:>12} "
              f"{r['speedup']:>8.3f}")
        ok = ok and r["ok"]
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)
    return 0 if ok else 1


def _cmd_resync_sweep(args) -> int:
    results = measure_resync(args.kernel, args.points, args.resync_delay)
    lengths = [r["resync_cycles"] for r in results if r["resync_cycles"] is not None]
    for r in results:
        print(f"cycle={r['inject_cycle']:>7} core={r['core']} bit={r['iface_bit']:>3} "
              f"resync={r['resync_cycles']} outcome={r['outcome']}")
    if lengths:
        print(f"points={len(results)} min={min(lengths)} max={max(lengths)} "
              f"mean={sum(lengths) / len(lengths):.1f} "
              f"spread={max(lengths) - min(lengths)}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(results, fh, indent=2)
    bad = [r for r in results if r["outcome"] not in ("DetectedCorrected", "Masked")]
    return 1 if bad else 0


def _cmd_campaign(args) -> int:
    with open(args.config, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if isinstance(data, dict) and set(data) == {"campaign"}:
        data = data["campaign"]
    try:
        cfg = load_campaign_config(data)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    if args.out:
        cfg.out = args.out

    def progress(done, total):
        if done % 100 == 0 or done == total:
            print(f"  {done}/{total} faults", file=sys.stderr)

    result = run_campaign(cfg, progress=progress)
    print(json.dumps(result.summary, indent=2))
    if args.csv:
        write_csv(result, args.csv)
    if args.summary_csv:
        write_summary_csv(result, args.summary_csv)
    bad = result.summary["outcomes"].get("SilentDataCorruption", 0) \
        + result.summary["outcomes"].get("Hang", 0)
    if result.audit_failures:
        print(f"audit failures: {result.audit_failures}", file=sys.stderr)
        return 1
    return 1 if bad else 0


def main(argv=None) -> int:
    p = argparse.ArgumentParser(
        prog="odrgsim",
        description="Cycle-level simulator of a six-core cluster with "
                    "run-time-selectable triple-redundant operation.",
    )
    sub = p.add_subparsers(dest="cmd", required=True)

    runp = sub.add_parser("run", help="run one workload")
    runp.add_argument("--kernel", choices=KERNELS)
    runp.add_argument("--program", help="assembly source file")
    runp.add_argument("--mode", choices=("performance", "tmr"), default="performance")
    runp.add_argument("--resync-delay", type=int, default=0)
    runp.add_argument("--max-cycles", type=int, default=3_000_000)
    runp.add_argument("--seed", type=int, default=None,
                      help="override the bundled kernel's input data seed")
    runp.add_argument("--trace", help="write a retired-instruction trace to this file")
    runp.set_defaults(fn=_cmd_run)

    benchp = sub.add_parser("bench", help="cycle counts and speedups")
    benchp.add_argument("--kernels", help="comma-separated subset")
    benchp.add_argument("--json", help="write results to this file")
    benchp.set_defaults(fn=_cmd_bench)

    sweepp = sub.add_parser("resync-sweep", help="resync latency sweep")
    sweepp.add_argument("--kernel", choices=KERNELS, default="conv16")
    sweepp.add_argument("--points", type=int, default=50)
    sweepp.add_argument("--resync-delay", type=int, default=0)
    sweepp.add_argument("--json", help="write results to this file")
    sweepp.set_defaults(fn=_cmd_resync_sweep)

    campp = sub.add_parser("campaign", help="fault-injection campaign")
    campp.add_argument("--config", required=True, help="YAML campaign config")
    campp.add_argument("--out", help="override the report path")
    campp.add_argument("--csv", help="also write per-fault rows as CSV")
    campp.add_argument("--summary-csv", help="also write the aggregate summary as CSV")
    campp.set_defaults(fn=_cmd_campaign)

    args = p.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
