"""Acceptance checks, one function per criterion.

Each check returns a Check(name, ok, detail). The CLI `verify` command
and the test suite both run these.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

from vcubecast.failures import CrashSchedule
from vcubecast.harness import SuiteSpec, read_tsv, run_suite
from vcubecast.messages import ACK, TREE
from vcubecast.metrics import DeliveryError, latency_of, message_counts, tree_children, tree_depth
from vcubecast.sim import RECEIVE, AppBroadcast, TimingParams, Trace, iter_crash_timings, run
from vcubecast.topology import cluster_members


@dataclass
class Check:
    name: str
    ok: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'}  {self.name}: {self.detail}"


ONE = [AppBroadcast(0.0, 0)]
SIZES = [2**k for k in range(1, 11)]


def _one_edges(trace: Trace) -> set[tuple[int, int]]:
    return set(trace.edges(TREE))


def check_tree_shape() -> Check:
    t0 = time.perf_counter()
    fault_free = _one_edges(run(8, workload=ONE))
    want_a = {(0, 1), (0, 2), (0, 4), (2, 3), (4, 5), (4, 6), (6, 7)}
    # p4 crashes at 0, everyone knows by 4.0, the broadcast starts at 5.0
    crashed = _one_edges(run(8, CrashSchedule.of({4: 0.0}), [AppBroadcast(5.0, 0)]))
    want_b = {(0, 1), (0, 2), (0, 5), (2, 3), (5, 7), (7, 6)}
    secs = time.perf_counter() - t0
    ok = fault_free == want_a and crashed == want_b and secs < 1.0
    return Check("tree shape n=8", ok, f"fault-free {sorted(fault_free)}; p4 crashed {sorted(crashed)}; {secs:.3f}s")


def check_message_count() -> Check:
    t0 = time.perf_counter()
    bad = []
    for n in SIZES:
        total = sum(message_counts(run(n, workload=ONE, record=False)))
        if total != 2 * (n - 1):
            bad.append((n, total))
    secs = time.perf_counter() - t0
    return Check("2(n-1) messages, n=2..1024", not bad and secs < 10, f"mismatches {bad}; {secs:.2f}s")


def extra_messages(n: int, s: int, f: int) -> tuple[int, int]:
    """(observed, expected) surplus when the head j of cluster s of process 0 crashes after its subtree answered.

    The other f-1 faulty members of the cluster are crashed and known
    before the broadcast; the surplus is measured against that same
    setting with j correct.
    """
    members = cluster_members(0, s)
    j = members[0]
    others = members[1 : f]
    pre = {p: 0.0 for p in others}
    start = [AppBroadcast(5.0, 0)]
    timing = TimingParams()
    base = run(n, CrashSchedule.of(pre), start, timing=timing)
    # j's last child ACK, then j dies as it would send its own ACK
    acks_at_j = [r.tick for r in base.records if r.process == j and r.action == RECEIVE and r.kind == ACK]
    crash_tick = max(acks_at_j) + timing.ticks(timing.t_r)
    crashed = run(n, CrashSchedule.of({**pre, j: timing.units(crash_tick)}), start, timing=timing)
    n_prime = len(members)
    return sum(message_counts(crashed)) - sum(message_counts(base)), 1 + 2 * (n_prime - 1 - f)


def check_extra_messages() -> Check:
    results = {(s, f): extra_messages(16, s, f) for s, f in [(3, 1), (3, 2), (4, 1)]}
    ok = all(obs == exp for obs, exp in results.values())
    detail = "; ".join(f"s={s} f={f}: {obs} vs {exp}" for (s, f), (obs, exp) in results.items())
    return Check("extra-message formula n=16", ok, detail)


def check_all_latency() -> Check:
    timing = TimingParams()
    out = []
    ok = True
    for n in (8, 64, 512):
        trace = run(n, workload=ONE, protocol="all-b", record=False)
        (m,) = trace.message_ids()
        got = max(trace.deliveries[m].values()) - trace.started[m]
        want = (n - 2) * timing.ticks(timing.t_s) + timing.ticks(timing.t_t) + timing.ticks(timing.t_r)
        ok &= got == want
        out.append(f"n={n}: {timing.units(got)} vs {timing.units(want)}")
    return Check("ALL latency closed form", ok, "; ".join(out))


def delivery_violations(trace: Trace) -> list[str]:
    """Broken validity, integrity or (with a correct source) termination."""
    errs = []
    if trace.duplicate_deliveries:
        errs.append(f"duplicates {trace.duplicate_deliveries}")
    broadcast = set(trace.started)
    for m in trace.deliveries:
        if m not in broadcast:
            errs.append(f"{m} delivered but never broadcast")
    for m in trace.message_ids():
        if m.source in trace.crash_ticks:
            continue
        try:
            latency_of(trace, m)
        except DeliveryError as e:
            errs.append(str(e))
    if not trace.quiescent:
        errs.append(f"not quiescent: {trace.pending[:3]}")
    return errs


def check_exhaustive_be(n: int = 8, cap: int = 100_000) -> Check:
    t0 = time.perf_counter()
    runs = 0
    bad = []
    others = range(1, n)
    sets = [c for k in (1, 2) for c in itertools.combinations(others, k)]
    for crash_set in sets:
        for trace in iter_crash_timings(n, ONE, "atree-b", crash_set, cap=cap):
            runs += 1
            errs = delivery_violations(trace)
            if errs:
                bad.append((trace.schedule.entries, errs[0]))
    secs = time.perf_counter() - t0
    ok = not bad and runs < 100_000 and secs < 300
    return Check("exhaustive single/double crashes n=8", ok, f"{runs} runs, {len(bad)} violations {bad[:2]}; {secs:.1f}s")


def agreement_violations(trace: Trace) -> list[str]:
    survivors = trace.correct_at_end()
    sets = {p: frozenset(trace.delivered_by(p)) for p in survivors}
    distinct = set(sets.values())
    errs = []
    if len(distinct) > 1:
        errs.append(f"delivered sets differ: { {p: sorted(s) for p, s in sets.items()} }")
    if trace.duplicate_deliveries:
        errs.append(f"duplicates {trace.duplicate_deliveries}")
    if not trace.quiescent:
        errs.append(f"not quiescent: {trace.pending[:3]}")
    return errs


def check_rb_agreement(n: int = 8) -> Check:
    runs = 0
    bad = []
    workload = [AppBroadcast(0.0, 0, b"a"), AppBroadcast(0.0, 0, b"b")]
    for trace in iter_crash_timings(n, workload, "atree-r", [0]):
        runs += 1
        errs = agreement_violations(trace)
        if errs:
            bad.append((trace.schedule.entries, errs[0]))
    return Check("reliable agreement, source crash n=8", not bad, f"{runs} runs, {len(bad)} violations {bad[:2]}")


def check_tree_bounds() -> Check:
    bad = []
    for n in SIZES:
        d = int(math.log2(n))
        trace = run(n, workload=ONE)
        children = tree_children(trace)
        depth = tree_depth(children, 0)
        reached = 1 + sum(len(c) for c in children.values())
        widest = max(len(c) for c in children.values())
        if depth > d or len(children.get(0, ())) != d or widest > d or reached != n:
            bad.append((n, depth, len(children.get(0, ())), widest, reached))
    return Check("tree depth/degree bounds n=2..1024", not bad, f"violations (n, depth, root degree, max children, reached) {bad}")


def crossover(tables: dict[str, str]) -> Check:
    atree = {int(r["p"]): r for r in read_tsv(tables["fault-free-sweep.atree-b.tsv"])}
    alls = {int(r["p"]): r for r in read_tsv(tables["fault-free-sweep.all-b.tsv"])}
    small = atree[8]["latency"] > alls[8]["latency"]
    large = atree[1024]["latency"] < alls[1024]["latency"]
    thr = all(atree[n]["throughput"] > alls[n]["throughput"] for n in atree if n >= 256)
    detail = (
        f"n=8 ATREE {atree[8]['latency']} vs ALL {alls[8]['latency']}; "
        f"n=1024 ATREE {atree[1024]['latency']} vs ALL {alls[1024]['latency']}; throughput n>=256 {thr}"
    )
    return Check("latency/throughput crossover", small and large and thr, detail)


def check_crossover(workers: int = 1) -> Check:
    tables = run_suite(SuiteSpec("fault-free-sweep", protocols=("atree-b", "all-b"), workers=workers))
    return crossover(tables)


def dominance(tables: dict[str, str], tolerance: float = 0.05) -> Check:
    def totals(proto):
        rows = read_tsv(tables[f"fault-sweep.{proto}.tsv"])
        return {int(r["f"]): (r["TREE"] + r["ACK"] + r["NACK"], r["errors"]) for r in rows}

    atree, alls, natree = totals("atree-b"), totals("all-b"), totals("natree-b")
    notes = []
    ok = True
    for f in sorted(atree):
        a, al, na = atree[f][0], alls[f][0], natree[f][0]
        errors = atree[f][1] + alls[f][1] + natree[f][1]
        rel = abs(a - al) / al
        row_ok = rel <= tolerance and errors == 0 and (f == 0 or na > a)
        ok &= row_ok
        notes.append(f"f={f}: ATREE {a:.1f} ALL {al:.1f} NATREE {na:.1f} (|ATREE-ALL|/ALL={rel:.4f}, errors {errors:g})")
    return Check("fault-sweep message dominance n=512", ok, "; ".join(notes))


def check_dominance(seeds: int = 100, workers: int = 1) -> Check:
    t0 = time.perf_counter()
    tables = run_suite(SuiteSpec("fault-sweep", seeds=seeds, workers=workers))
    c = dominance(tables)
    c.detail += f"; {seeds} seeds, {time.perf_counter() - t0:.0f}s"
    return c


def check_determinism() -> Check:
    a = run(16, CrashSchedule.of({4: 1.7, 9: 2.2}), [AppBroadcast(0.0, 0), AppBroadcast(0.5, 3)], "atree-r")
    b = run(16, CrashSchedule.of({4: 1.7, 9: 2.2}), [AppBroadcast(0.0, 0), AppBroadcast(0.5, 3)], "atree-r")
    same_trace = a.to_text() == b.to_text()
    spec = dict(suite="fault-sweep", n=64, crash_counts=(0, 1, 3), seeds=3)
    first = run_suite(SuiteSpec(**spec))
    second = run_suite(SuiteSpec(**spec))
    ff = SuiteSpec("fault-free-sweep", sizes=(8, 16, 32))
    same_tables = first == second and run_suite(ff) == run_suite(ff)
    return Check("determinism", same_trace and same_tables, f"trace identical {same_trace}; TSV identical {same_tables}")


def all_checks(seeds: int = 100, workers: int = 1, skip_sweep: bool = False) -> list[Check]:
    checks = [
        check_tree_shape(),
        check_message_count(),
        check_extra_messages(),
        check_all_latency(),
        check_exhaustive_be(),
        check_rb_agreement(),
        check_tree_bounds(),
        check_crossover(workers),
    ]
    if not skip_sweep:
        checks.append(check_dominance(seeds, workers))
    checks.append(check_determinism())
    return checks
