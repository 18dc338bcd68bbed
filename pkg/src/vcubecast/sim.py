"""Deterministic discrete-event kernel.

Timing model, per copy of every message:

* a send occupies the sender for ``t_s``; copies emitted by one handler go
  out back to back, in the order the handler returned them;
* the copy arrives ``t_t`` after its send completes;
* arrivals queue FIFO at the receiver; the handler runs when service
  starts, the receive occupies the receiver for ``t_r`` and the handler's
  sends begin after it;
* crash notifications, application requests and timers queue like
  arrivals but take no service time.

Time is kept in integer ticks (``TimingParams.resolution`` per time unit) so
runs are exact and bit-reproducible.
"""

from __future__ import annotations

import heapq
import itertools
import math
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple

from vcubecast.baselines import AllProcess, NatreeProcess
from vcubecast.broadcast import AtreeProcess
from vcubecast.errors import ConfigError, EnumerationLimitError
from vcubecast.failures import CrashSchedule, DetectorPolicy, detection_time
from vcubecast.messages import Complete, Deliver, MessageId, Multicast, Send, Timer
from vcubecast.topology import dimension
from vcubecast.tree import TreeProcess

PROTOCOLS = {
    "tree": lambda me, n: TreeProcess(me, n),
    "atree-b": lambda me, n: AtreeProcess(me, n, reliable=False),
    "atree-r": lambda me, n: AtreeProcess(me, n, reliable=True),
    "all-b": lambda me, n: AllProcess(me, n, reliable=False),
    "all-r": lambda me, n: AllProcess(me, n, reliable=True),
    "natree-b": lambda me, n: NatreeProcess(me, n, reliable=False),
    "natree-r": lambda me, n: NatreeProcess(me, n, reliable=True),
}

SEND, RECEIVE, DELIVER, CRASH, DETECT = "SEND", "RECEIVE", "DELIVER", "CRASH", "DETECT"

# heap entry kinds; (time, seq) is unique, so kinds are never compared
_ARRIVE, _DETECT, _APP, _CRASH, _TIMER = range(5)


@dataclass(frozen=True)
class TimingParams:
    t_s: float = 0.1
    t_r: float = 0.1
    t_t: float = 0.8
    resolution: int = 1000

    def __post_init__(self):
        for name in ("t_s", "t_r", "t_t"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.resolution < 1:
            raise ConfigError("resolution must be >= 1")
        for name in ("t_s", "t_r", "t_t"):
            self.ticks(getattr(self, name))

    def ticks(self, x: float) -> int:
        """Convert a time in units to integer ticks; rejects unrepresentable values."""
        v = x * self.resolution
        r = round(v)
        if abs(v - r) > 1e-6 * max(1.0, abs(v)):
            raise ConfigError(f"time {x} is not a multiple of 1/{self.resolution}")
        return int(r)

    def units(self, ticks: int) -> float:
        return ticks / self.resolution

    def default_policy(self) -> DetectorPolicy:
        return DetectorPolicy.for_timing(self.t_s, self.t_r, self.t_t)


class AppBroadcast(NamedTuple):
    """Application request: `source` broadcasts `payload` at `time`."""

    time: float
    source: int
    payload: bytes = b""


class Record(NamedTuple):
    tick: int
    process: int
    action: str
    kind: str
    counterpart: int
    source: int
    ts: int


@dataclass
class Trace:
    n: int
    protocol: str
    timing: TimingParams
    schedule: CrashSchedule
    records: list[Record] = field(default_factory=list)
    sends: Counter = field(default_factory=Counter)
    # mid -> {process: tick of delivery}
    deliveries: dict = field(default_factory=dict)
    # mid -> tick the source delivered it locally, i.e. the broadcast began
    started: dict = field(default_factory=dict)
    requested: dict = field(default_factory=dict)
    completions: dict = field(default_factory=dict)
    crash_ticks: dict = field(default_factory=dict)
    pending: list = field(default_factory=list)
    duplicate_deliveries: list = field(default_factory=list)
    processes: list = field(default_factory=list, repr=False)
    truncated: bool = False
    end_tick: int = 0
    events: int = 0

    def time(self, tick: int) -> float:
        return tick / self.timing.resolution

    @property
    def quiescent(self) -> bool:
        return not self.truncated and not self.pending

    def correct_at_end(self) -> list[int]:
        return [p for p in range(self.n) if p not in self.crash_ticks]

    def message_ids(self) -> list[MessageId]:
        return sorted(self.started)

    def delivered_by(self, p: int) -> set[MessageId]:
        return {m for m, who in self.deliveries.items() if p in who}

    def edges(self, kind: str = "TREE") -> list[tuple[int, int]]:
        return [(r.process, r.counterpart) for r in self.records if r.action == SEND and r.kind == kind]

    def to_text(self) -> str:
        """One line per record: time, process, action, kind, counterpart, source, ts."""
        digits = max(0, math.ceil(math.log10(self.timing.resolution)))
        lines = []
        for r in self.records:
            lines.append(
                f"{r.tick / self.timing.resolution:.{digits}f}\t{r.process}\t{r.action}\t{r.kind}"
                f"\t{r.counterpart}\t{r.source}\t{r.ts}"
            )
        return "\n".join(lines) + ("\n" if lines else "")


def run(
    n: int,
    schedule: CrashSchedule | None = None,
    workload: Iterable[AppBroadcast] = (),
    protocol: str = "atree-b",
    seed: int = 0,
    timing: TimingParams | None = None,
    policy: DetectorPolicy | None = None,
    horizon: float | None = None,
    max_events: int | None = None,
    record: bool = True,
) -> Trace:
    """Simulate `protocol` on n processes until quiescence (or the horizon).

    `seed` is accepted for interface symmetry with the harness; the kernel
    itself draws no random numbers.
    """
    dimension(n)
    if protocol not in PROTOCOLS:
        raise ConfigError(f"unknown protocol {protocol!r}; choose from {sorted(PROTOCOLS)}")
    timing = timing or TimingParams()
    schedule = schedule or CrashSchedule()
    schedule.validate(n)
    policy = policy or timing.default_policy()
    workload = list(workload)
    for w in workload:
        if not 0 <= w.source < n:
            raise ConfigError(f"workload source {w.source} outside [0, {n - 1}]")
        if w.time < 0:
            raise ConfigError("workload times must be >= 0")

    tk = timing.ticks
    t_s, t_r, t_t = tk(timing.t_s), tk(timing.t_r), tk(timing.t_t)
    tick_policy = DetectorPolicy(
        tk(policy.test_interval),
        tk(policy.timeout),
        {o: tk(ph) for o, ph in policy.phases.items()},
    )
    horizon_tick = tk(horizon) if horizon is not None else None

    factory = PROTOCOLS[protocol]
    procs = [factory(p, n) for p in range(n)]
    on_message = [proc.on_message for proc in procs]
    trace = Trace(n, protocol, timing, schedule)
    records = trace.records
    sends = trace.sends
    deliveries = trace.deliveries

    heap: list = []
    seq = itertools.count()
    push = heapq.heappush

    inf = float("inf")
    crash_tick = [inf] * n
    for p, c in schedule.entries:
        crash_tick[p] = tk(c)
    for p, c in schedule.entries:
        push(heap, (crash_tick[p], next(seq), _CRASH, p, None))
    for j, _ in schedule.entries:
        c = crash_tick[j]
        for o in range(n):
            if o == j:
                continue
            dt = detection_time(tick_policy, o, j, c)
            if crash_tick[o] > dt:
                push(heap, (dt, next(seq), _DETECT, o, j))
    for w in workload:
        t0 = tk(w.time)
        push(heap, (t0, next(seq), _APP, w.source, (t0, w.payload)))

    # A process serves its arrivals strictly in arrival order, and nothing
    # but its own served items touches its state, so each item can be
    # handled as soon as it is popped, at max(arrival, busy_until).
    busy_until = [0] * n
    pend_requests: dict[int, deque] = {}
    started = trace.started
    pop = heapq.heappop
    events = 0
    now = 0
    last_tick = 0
    while heap:
        now, sq, kind, p, data = pop(heap)
        if kind == _ARRIVE:
            # one heap entry walks through a handler's whole batch of sends,
            # which arrive t_s apart
            i = data[0]
            items = data[1]
            p, msg = items[i]
            if i + 1 < len(items):
                data[0] = i + 1
                push(heap, (now + t_s, sq, _ARRIVE, None, data))
            sender = data[2]
        if horizon_tick is not None and now > horizon_tick:
            trace.truncated = True
            break
        events += 1
        if max_events is not None and events > max_events:
            trace.truncated = True
            break
        if kind == _CRASH:
            trace.crash_ticks[p] = now
            if record:
                records.append(Record(now, p, CRASH, "-", -1, -1, 0))
            continue
        start = busy_until[p]
        if start < now:
            start = now
        dead_at = crash_tick[p]
        if start >= dead_at:
            continue
        if kind == _ARRIVE:
            if record:
                mid = msg.mid
                records.append(
                    Record(start, p, RECEIVE, msg.kind, sender, mid.source if mid else -1, mid.ts if mid else 0)
                )
            actions = on_message[p](sender, msg)
            base = start + t_r
        elif kind == _DETECT:
            if record:
                records.append(Record(start, p, DETECT, "-", data, -1, 0))
            actions = procs[p].on_crash(data)
            base = start
        elif kind == _APP:
            requested_at, payload = data
            pend_requests.setdefault(p, deque()).append(requested_at)
            actions = procs[p].on_app(payload)
            base = start
        else:
            actions = procs[p].on_timer(data)
            base = start
        k = 0
        out = None
        for a in actions:
            ta = type(a)
            if ta is Send:
                s = base + k * t_s
                if s >= dead_at:
                    continue
                k += 1
                msg = a.msg
                sends[msg.kind] += 1
                if record:
                    mid = msg.mid
                    records.append(Record(s, p, SEND, msg.kind, a.to, mid.source if mid else -1, mid.ts if mid else 0))
                if out is None:
                    out = [0, [], p]
                    push(heap, (s + t_s + t_t, next(seq), _ARRIVE, None, out))
                out[1].append((a.to, msg))
            elif ta is Multicast:
                msg = a.msg
                targets = a.targets
                s = base + k * t_s
                room = len(targets)
                if dead_at != inf:
                    room = min(room, max(0, -((s - dead_at) // t_s)))
                if not room:
                    continue
                if room < len(targets):
                    targets = targets[:room]
                sends[msg.kind] += room
                if record:
                    mid = msg.mid
                    src, ts = (mid.source, mid.ts) if mid else (-1, 0)
                    for i, to in enumerate(targets):
                        records.append(Record(s + i * t_s, p, SEND, msg.kind, to, src, ts))
                if out is None:
                    out = [0, [], p]
                    push(heap, (s + t_s + t_t, next(seq), _ARRIVE, None, out))
                out[1].extend([(to, msg) for to in targets])
                k += room
            elif ta is Deliver:
                mid = a.mid
                if record:
                    records.append(Record(start, p, DELIVER, "TREE", mid.source, mid.source, mid.ts))
                who = deliveries.get(mid)
                if who is None:
                    who = deliveries[mid] = {}
                if p in who:
                    trace.duplicate_deliveries.append((p, mid))
                else:
                    who[p] = start
                if mid.source == p and mid not in started:
                    started[mid] = start
                    q = pend_requests.get(p)
                    trace.requested[mid] = q.popleft() if q else start
            elif ta is Complete:
                trace.completions[a.mid] = start
            elif ta is Timer:
                push(heap, (start, next(seq), _TIMER, p, a.tag))
        busy = base + k * t_s
        busy_until[p] = busy
        if busy > last_tick:
            last_tick = busy

    if record:
        records.sort(key=lambda r: r.tick)
    trace.end_tick = max(now, last_tick)
    trace.events = events
    for p in range(n):
        if crash_tick[p] == inf:
            trace.pending += [(p,) + tuple(e) for e in procs[p].pending()]
    trace.processes = procs
    return trace


def boundary_ticks(trace: Trace) -> list[int]:
    """Crash instants that separate every pair of distinct event times of `trace`.

    Each event time itself (the crash pre-empts that instant's actions), a
    point strictly between consecutive event times, tick 0 and one tick
    past the end.
    """
    times = sorted({r.tick for r in trace.records} | {0})
    points = set(times)
    for a, b in zip(times, times[1:]):
        if b - a > 1:
            points.add((a + b) // 2)
    points.add(trace.end_tick + 1)
    return sorted(points)


def iter_crash_timings(
    n: int,
    workload: Iterable[AppBroadcast],
    protocol: str,
    crash_set: Iterable[int],
    timing: TimingParams | None = None,
    policy: DetectorPolicy | None = None,
    cap: int = 100_000,
) -> Iterator[Trace]:
    """Runs with each process of `crash_set` crashing at every event boundary of the fault-free run."""
    crash_set = sorted(set(crash_set))
    if len(crash_set) > n - 1:
        raise ConfigError(f"at most n-1 = {n - 1} processes may crash")
    timing = timing or TimingParams()
    workload = list(workload)
    base = run(n, CrashSchedule(), workload, protocol, timing=timing, policy=policy)
    points = boundary_ticks(base)
    count = len(points) ** len(crash_set)
    if count > cap:
        raise EnumerationLimitError(count, cap)
    res = timing.resolution
    for combo in itertools.product(points, repeat=len(crash_set)):
        schedule = CrashSchedule(tuple((p, c / res) for p, c in zip(crash_set, combo)))
        yield run(n, schedule, workload, protocol, timing=timing, policy=policy)


def enumerate_crash_timings(n, base_workload, protocol, crash_set, **kwargs) -> list[Trace]:
    return list(iter_crash_timings(n, base_workload, protocol, crash_set, **kwargs))
