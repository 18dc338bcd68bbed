"""Command line: run a scenario, a suite, a crash enumeration or the acceptance checks.

Exit codes: 0 success, 1 configuration error, 2 a property or acceptance
check failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from vcubecast.errors import ConfigError, EnumerationLimitError, ProtocolError
from vcubecast.harness import SUITES, load_config, run_suite, scenario_from_dict, suite_from_dict
from vcubecast.metrics import mean_latency, message_counts
from vcubecast.sim import PROTOCOLS, AppBroadcast, iter_crash_timings

OK, CONFIG_ERROR, VIOLATION = 0, 1, 2


def _with_timing(data: dict, args) -> dict:
    over = {k: getattr(args, k) for k in ("t_s", "t_r", "t_t") if getattr(args, k, None) is not None}
    if over:
        data = {**data, "timing": {**(data.get("timing") or {}), **over}}
    return data


def cmd_run(args) -> int:
    from vcubecast.acceptance import delivery_violations

    data = _with_timing(load_config(args.config), args)
    sc = scenario_from_dict(data, seed=args.seed, protocol=args.protocol, n=args.n, crashes=args.crashes)
    trace = sc.execute(record=bool(args.trace))
    if args.trace:
        Path(args.trace).write_text(trace.to_text())
    tree, ack, nack = message_counts(trace)
    print(f"protocol\t{sc.protocol}")
    print(f"n\t{sc.n}")
    print(f"crashes\t{' '.join(f'{p}@{t:g}' for p, t in trace.schedule.entries) or '-'}")
    print(f"TREE\t{tree}\nACK\t{ack}\nNACK\t{nack}")
    errs = delivery_violations(trace)
    for e in errs:
        print(f"violation\t{e}")
    if errs:
        return VIOLATION
    if trace.message_ids():
        print(f"latency\t{mean_latency(trace):.6f}")
    return OK


def cmd_suite(args) -> int:
    if args.name in SUITES:
        data = {"suite": args.name}
    else:
        data = load_config(args.name)
    data = _with_timing(data, args)
    protocols = args.protocols.split(",") if args.protocols else None
    spec = suite_from_dict(data, protocols=protocols, seeds=args.seeds, workers=args.workers)
    tables = run_suite(spec, args.out)
    for name in tables:
        print(Path(args.out) / name)
    return OK


def cmd_enumerate(args) -> int:
    from vcubecast.acceptance import agreement_violations, delivery_violations

    if args.protocol not in PROTOCOLS or args.protocol == "tree":
        raise ConfigError(f"unknown broadcast protocol {args.protocol!r}")
    workload = [AppBroadcast(0.0, args.source, b"m%d" % k) for k in range(args.messages)]
    reliable = args.protocol.endswith("-r")
    runs = bad = 0
    try:
        for trace in iter_crash_timings(args.n, workload, args.protocol, args.crash, cap=args.cap):
            runs += 1
            errs = agreement_violations(trace) if reliable else delivery_violations(trace)
            if errs:
                bad += 1
                print(f"violation\t{trace.schedule.entries}\t{errs[0]}")
    except EnumerationLimitError as e:
        raise ConfigError(str(e)) from e
    print(f"runs\t{runs}\nviolations\t{bad}")
    return VIOLATION if bad else OK


def cmd_verify(args) -> int:
    from vcubecast.acceptance import all_checks

    checks = all_checks(seeds=args.seeds, workers=args.workers, skip_sweep=args.skip_sweep)
    for c in checks:
        print(c.line())
    return OK if all(c.ok for c in checks) else VIOLATION


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vcubecast", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def timing_flags(p):
        p.add_argument("--t-s", dest="t_s", type=float)
        p.add_argument("--t-r", dest="t_r", type=float)
        p.add_argument("--t-t", dest="t_t", type=float)

    p = sub.add_parser("run", help="run one scenario from a YAML or JSON file")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--protocol")
    p.add_argument("--n", type=int)
    p.add_argument("--crashes", type=int)
    p.add_argument("--trace", help="write the event trace to this file")
    timing_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("suite", help="run a named suite or a suite file, writing TSV tables")
    p.add_argument("name", help=f"one of {', '.join(SUITES)} or a suite config file")
    p.add_argument("--out", default="results")
    p.add_argument("--protocols", help="comma separated, e.g. atree-b,all-b")
    p.add_argument("--seeds", type=int)
    p.add_argument("--workers", type=int)
    timing_flags(p)
    p.set_defaults(func=cmd_suite)

    p = sub.add_parser("enumerate", help="crash each given process at every event boundary")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--protocol", default="atree-b")
    p.add_argument("--crash", type=int, action="append", required=True)
    p.add_argument("--source", type=int, default=0)
    p.add_argument("--messages", type=int, default=1)
    p.add_argument("--cap", type=int, default=100_000)
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("verify", help="run the acceptance checks")
    p.add_argument("--seeds", type=int, default=100)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--skip-sweep", action="store_true", help="leave out the n=512 fault sweep")
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return CONFIG_ERROR
    except ProtocolError as e:
        print(f"protocol violation: {e}", file=sys.stderr)
        return VIOLATION


if __name__ == "__main__":
    sys.exit(main())
