"""Command line: bench, checkpoint, recover, verify."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

from .bench import WorkloadKind, WorkloadSpec, format_report, run_baseline_centr, run_benchmark
from .checkpoint import run_checkpoint
from .core import Config, ConfigError, PoplarError
from .device import CrashController, DirectoryStorage, parse_crash_script
from .engine import Engine, read_manifest
from .recovery import recover


def _config(args, buffers: int | None = None) -> Config:
    return Config(
        num_buffers=buffers if buffers is not None else args.buffers,
        buffer_capacity=args.buffer_mb << 20,
        io_unit_size=args.io_unit,
        flush_interval=args.flush_ms / 1e3,
        checkpoint_threads=getattr(args, "ckpt_threads", 2),
        checkpoint_files_per_thread=getattr(args, "ckpt_files", 2),
    )


def cmd_bench(args) -> int:
    spec = WorkloadSpec(kind=WorkloadKind(args.workload), record_count=args.records, value_size=args.value_size,
                        scan_length=args.scan_len, txn_count=args.txns, worker_threads=args.threads,
                        think_time=args.think_us / 1e6, seed=args.seed)
    storage = None
    if args.data_dir:
        if os.path.isdir(args.data_dir) and os.listdir(args.data_dir):
            raise ConfigError(f"{args.data_dir} is not empty; bench loads a fresh database")
        storage = DirectoryStorage(args.data_dir)
    crash = None
    if args.crash_script:
        with open(args.crash_script) as f:
            points = parse_crash_script(f.read())
        if any(p.event is not None for p in points):
            raise ConfigError("'crash at event' needs the deterministic scheduler; bench supports byte points only")
        crash = CrashController(points, seed=args.seed)
    kw = dict(devices=args.devices, bandwidth=args.bandwidth_mb * 1e6, latency=args.latency_us / 1e6,
              storage=storage, out=args.out, crash=crash)
    if args.baseline == "centr":
        if args.buffers != 1:
            raise ConfigError("the centralized baseline uses exactly one buffer and one device (--buffers 1)")
        report = run_baseline_centr(spec, _config(args, 1), **kw)
    else:
        report = run_benchmark(spec, _config(args), **kw)
    print(format_report(report))
    return 0


def cmd_checkpoint(args) -> int:
    storage = DirectoryStorage(args.data_dir)
    cfg = Config(num_buffers=read_manifest(storage).get("num_buffers", 1),
                 checkpoint_threads=args.threads, checkpoint_files_per_thread=args.files)
    engine = Engine.open(storage, cfg, threads=args.threads, checkpoint=False)
    t0 = time.perf_counter()
    meta = run_checkpoint(engine, args.threads, args.files, quiescent=True)
    print(f"checkpoint {meta.epoch}: rsn {meta.rsn}, {len(meta.files)} files, "
          f"max observed ssn {max(meta.max_observed, default=0)}, {meta.status.name}, "
          f"{time.perf_counter() - t0:.3f} s")
    return 0


def cmd_recover(args) -> int:
    storage = DirectoryStorage(args.data_dir)
    t0 = time.perf_counter()
    table, plan, stats = recover(storage, args.threads)
    out = {"rsns": plan.rsns, "rsne": plan.rsne, "checkpoint_epoch": plan.checkpoint.epoch if plan.checkpoint else None,
           "tuples": len(table), "seconds": round(time.perf_counter() - t0, 4), **stats.as_dict()}
    if args.json:
        print(json.dumps(out, sort_keys=True))
    else:
        for k, v in out.items():
            print(f"{k:<16} {v}")
    return 0


def cmd_verify(args) -> int:
    from . import verify

    failed = 0
    if args.scenarios == "fig1":
        for name, (sc, verdict) in verify.run_dependency_scenarios().items():
            got = bool(verdict)
            mark = "consistent" if got else "inconsistent"
            agree = "ok" if got == sc.consistent else "UNEXPECTED"
            print(f"({name}) {sc.note:<32} {mark:<13} {agree}")
            failed += got != sc.consistent
    if args.boundaries:
        out = verify.exhaustive_boundaries(args.seed)
        bad = [(label, v) for label, v in out if not v]
        print(f"boundary crashes: {len(out)} runs, {len(bad)} violations")
        for label, v in bad[:10]:
            print(f"  {label}: {v.details[:3]}")
        failed += len(bad)
    if args.fuzz:
        broken = tuple(args.broken or ())
        detected = 0
        t0 = time.perf_counter()
        for seed in range(args.seed, args.seed + args.seeds):
            case = verify.make_case(seed, max_workers=args.threads, max_keys=args.keys, max_txns=args.txns,
                                    broken=broken)
            if args.crash_points == "all":
                results = verify.fuzz_all_points(case)
            else:
                results = [verify.fuzz_one(case)]
            for r in results:
                if not r.ok:
                    detected += 1
                    if not broken:
                        print(f"seed {seed} crash {r.crash}: {r.details[:3]}")
        total = args.seeds
        if broken:
            print(f"broken mode {','.join(broken)}: detected in {detected} run(s) over {total} seed(s)")
            failed += detected == 0
        else:
            print(f"fuzz: {total} seed(s), {detected} violation(s), {time.perf_counter() - t0:.1f} s")
            failed += detected
    if not (args.scenarios or args.fuzz or args.boundaries):
        print("nothing to verify: pass --scenarios fig1, --fuzz or --boundaries", file=sys.stderr)
        return 2
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="poplar", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    b = sub.add_parser("bench", help="run a workload and report throughput and latency")
    b.add_argument("--workload", choices=[k.value for k in WorkloadKind], default="ycsb-write")
    b.add_argument("--records", type=int, default=100_000)
    b.add_argument("--txns", type=int, default=100_000)
    b.add_argument("--threads", type=int, default=4)
    b.add_argument("--buffers", type=int, default=2)
    b.add_argument("--devices", choices=["sim", "real"], default="sim")
    b.add_argument("--scan-len", type=int, default=10)
    b.add_argument("--value-size", type=int, default=1000)
    b.add_argument("--flush-ms", type=float, default=5.0)
    b.add_argument("--io-unit", type=int, default=16384)
    b.add_argument("--buffer-mb", type=int, default=30)
    b.add_argument("--bandwidth-mb", type=float, default=1200.0, help="simulated device MB/s")
    b.add_argument("--latency-us", type=float, default=21.5, help="simulated per-write latency")
    b.add_argument("--think-us", type=float, default=0.0, help="pause per worker between transactions")
    b.add_argument("--baseline", choices=["poplar", "centr"], default="poplar")
    b.add_argument("--data-dir")
    b.add_argument("--crash-script")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", help="append a JSON line per run to this file")
    b.set_defaults(fn=cmd_bench)

    c = sub.add_parser("checkpoint", help="recover a data directory and write a checkpoint")
    c.add_argument("--data-dir", required=True)
    c.add_argument("--threads", type=int, default=2)
    c.add_argument("--files", type=int, default=2)
    c.set_defaults(fn=cmd_checkpoint)

    r = sub.add_parser("recover", help="recover a data directory and print replay statistics")
    r.add_argument("--data-dir", required=True)
    r.add_argument("--threads", type=int, default=4)
    r.add_argument("--json", action="store_true")
    r.set_defaults(fn=cmd_recover)

    v = sub.add_parser("verify", help="run the correctness oracles")
    v.add_argument("--scenarios", choices=["fig1"])
    v.add_argument("--fuzz", action="store_true")
    v.add_argument("--boundaries", action="store_true", help="exhaustive crash points of a fixed script")
    v.add_argument("--seeds", type=int, default=100)
    v.add_argument("--seed", type=int, default=0, help="first seed")
    v.add_argument("--threads", type=int, default=8, help="max workers per fuzz case")
    v.add_argument("--keys", type=int, default=64)
    v.add_argument("--txns", type=int, default=200)
    v.add_argument("--crash-points", choices=["all", "random"], default="random")
    v.add_argument("--broken", action="append", choices=["skip_durability", "skip_waw"],
                   help="run against a deliberately broken engine; success means it gets caught")
    v.set_defaults(fn=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except (PoplarError, ValueError, OSError) as e:
        print(f"poplar: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
