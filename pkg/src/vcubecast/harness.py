"""Scenario generation and the experiment suites.

A suite writes one tab-separated file per protocol. Scenarios are pure
functions of their fields (the seed included), so suites are
byte-reproducible whatever the number of worker processes.
"""

from __future__ import annotations

import json
import logging
import random
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

from vcubecast.errors import ConfigError, ProtocolError
from vcubecast.failures import CrashSchedule, DetectorPolicy
from vcubecast.metrics import mean_latency, message_counts
from vcubecast.sim import PROTOCOLS, AppBroadcast, TimingParams, Trace, run
from vcubecast.topology import dimension

log = logging.getLogger(__name__)

SUITES = ("fault-free-sweep", "fault-sweep")
DEFAULT_PROTOCOLS = ("atree-b", "all-b", "natree-b")
DISTRIBUTIONS = ("uniform",)


@dataclass(frozen=True)
class Scenario:
    """Everything a run depends on.

    Crash targets are drawn without replacement and crash times uniformly
    in ``[0, crash_window)``. With no explicit window, the window is the
    fault-free ATREE-B duration of the same workload, so every protocol
    of a suite faces the same schedule. Broadcast sources are only
    candidates when ``source_may_crash`` (default: reliable protocols).
    """

    n: int
    protocol: str = "atree-b"
    messages: int = 1
    sources: tuple[int, ...] = (0,)
    crashes: int = 0
    seed: int = 0
    timing: TimingParams = field(default_factory=TimingParams)
    policy: DetectorPolicy | None = None
    crash_window: float | None = None
    source_may_crash: bool | None = None
    distribution: str = "uniform"
    schedule_override: CrashSchedule | None = None

    def __post_init__(self):
        dimension(self.n)
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}; choose from {sorted(PROTOCOLS)}")
        if self.messages < 0:
            raise ConfigError("messages must be >= 0")
        if not self.sources:
            raise ConfigError("at least one source is required")
        if any(not 0 <= s < self.n for s in self.sources):
            raise ConfigError(f"sources must lie in [0, {self.n - 1}]")
        if not 0 <= self.crashes <= self.n - 1:
            raise ConfigError(f"crash count must lie in [0, {self.n - 1}]")
        if self.distribution not in DISTRIBUTIONS:
            raise ConfigError(f"unknown crash-time distribution {self.distribution!r}")

    def workload(self) -> list[AppBroadcast]:
        """All requests are issued at time 0; each source queues its own."""
        srcs = self.sources
        return [AppBroadcast(0.0, srcs[k % len(srcs)], b"m%d" % k) for k in range(self.messages)]

    def schedule(self) -> CrashSchedule:
        if self.schedule_override is not None:
            return self.schedule_override
        if self.crashes == 0:
            return CrashSchedule()
        may_crash = self.source_may_crash
        if may_crash is None:
            may_crash = self.protocol.endswith("-r")
        candidates = [p for p in range(self.n) if may_crash or p not in self.sources]
        if self.crashes > len(candidates):
            raise ConfigError(f"{self.crashes} crashes requested but only {len(candidates)} processes may crash")
        rng = random.Random(f"scenario/{self.n}/{self.crashes}/{self.seed}")
        targets = rng.sample(candidates, self.crashes)
        window = self.window_ticks()
        entries = {}
        for p in targets:
            # a source never crashes before its first send
            lo = 1 if p in self.sources else 0
            entries[p] = self.timing.units(lo + rng.randrange(max(1, window - lo)))
        return CrashSchedule.of(entries)

    def window_ticks(self) -> int:
        if self.crash_window is not None:
            return max(1, self.timing.ticks(self.crash_window))
        return _fault_free_span(self.n, self.messages, self.sources, self.timing, self.policy)

    def execute(self, record: bool = False) -> Trace:
        return run(
            self.n,
            self.schedule(),
            self.workload(),
            self.protocol,
            seed=self.seed,
            timing=self.timing,
            policy=self.policy,
            record=record,
        )


@lru_cache(maxsize=64)
def _fault_free_span(n, messages, sources, timing, policy) -> int:
    sc = Scenario(n, "atree-b", messages, sources, timing=timing, policy=policy)
    trace = sc.execute()
    return max(1, max(trace.completions.values(), default=trace.end_tick))


@dataclass(frozen=True)
class RunResult:
    latency: float | None
    tree: int
    ack: int
    nack: int
    error: str | None = None

    @property
    def total(self) -> int:
        return self.tree + self.ack + self.nack


def run_scenario(sc: Scenario) -> RunResult:
    """Run one scenario; protocol failures become an error string, not an exception."""
    trace = sc.execute()
    tree, ack, nack = message_counts(trace)
    try:
        if trace.truncated:
            raise ProtocolError("run truncated before quiescence")
        if trace.duplicate_deliveries:
            raise ProtocolError(f"duplicate deliveries {trace.duplicate_deliveries[:3]}")
        lat = mean_latency(trace)
    except ProtocolError as e:
        return RunResult(None, tree, ack, nack, str(e))
    return RunResult(lat, tree, ack, nack)


def _run_key(sc: Scenario):
    return (sc.n, sc.protocol, sc.messages, sc.sources, sc.timing, sc.policy, sc.schedule())


def run_many(scenarios: list[Scenario], workers: int = 1) -> list[RunResult]:
    """Results in input order. Scenarios with identical inputs run once."""
    keys = [_run_key(sc) for sc in scenarios]
    unique: dict = {}
    for k, sc in zip(keys, scenarios):
        unique.setdefault(k, sc)
    todo = list(unique.items())
    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_scenario, [sc for _, sc in todo], chunksize=1))
    else:
        results = [run_scenario(sc) for _, sc in todo]
    by_key = {k: r for (k, _), r in zip(todo, results)}
    return [by_key[k] for k in keys]


# suites


@dataclass
class SuiteSpec:
    suite: str
    protocols: tuple[str, ...] = DEFAULT_PROTOCOLS
    sizes: tuple[int, ...] = tuple(2**k for k in range(3, 11))
    n: int = 512
    crash_counts: tuple[int, ...] = tuple(range(0, 9))
    seeds: int = 100
    messages: int | None = None
    timing: TimingParams = field(default_factory=TimingParams)
    policy: DetectorPolicy | None = None
    workers: int = 1

    def __post_init__(self):
        if self.suite not in SUITES:
            raise ConfigError(f"unknown suite {self.suite!r}; choose from {list(SUITES)}")
        for p in self.protocols:
            if p not in PROTOCOLS or p == "tree":
                raise ConfigError(f"unknown broadcast protocol {p!r}")
        if self.seeds < 1:
            raise ConfigError("seeds must be >= 1")
        if self.messages is None:
            self.messages = 1 if self.suite == "fault-free-sweep" else 10


def _fmt(x) -> str:
    if x is None:
        return "nan"
    if isinstance(x, int):
        return str(x)
    return f"{x:.6f}"


def _tsv(header: list[str], rows: list[list]) -> str:
    lines = ["\t".join(header)]
    lines += ["\t".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def _stdev(xs: list[float]) -> float:
    return statistics.stdev(xs) if len(xs) > 1 else 0.0


def fault_free_table(spec: SuiteSpec, protocol: str) -> str:
    scenarios = [
        Scenario(n, protocol, spec.messages, timing=spec.timing, policy=spec.policy) for n in sorted(spec.sizes)
    ]
    results = run_many(scenarios, spec.workers)
    rows = []
    for sc, r in zip(scenarios, results):
        thr = 1.0 / r.latency if r.latency else None
        rows.append([sc.n, r.latency, thr, 1 if r.error else 0])
    return _tsv(["p", "latency", "throughput", "errors"], rows)


def fault_sweep_results(spec: SuiteSpec, protocol: str) -> dict[int, list[RunResult]]:
    scenarios = [
        Scenario(spec.n, protocol, spec.messages, crashes=f, seed=seed, timing=spec.timing, policy=spec.policy)
        for f in sorted(spec.crash_counts)
        for seed in range(spec.seeds)
    ]
    results = run_many(scenarios, spec.workers)
    out: dict[int, list[RunResult]] = {}
    for sc, r in zip(scenarios, results):
        out.setdefault(sc.crashes, []).append(r)
    return out


def fault_table(per_f: dict[int, list[RunResult]]) -> str:
    """Means over the runs that completed; desvpad2 is the latency stddev, desvpad1 the total-count stddev."""
    rows = []
    for f in sorted(per_f):
        ok = [r for r in per_f[f] if r.error is None]
        errors = len(per_f[f]) - len(ok)
        if not ok:
            rows.append([f, None, None, None, None, None, None, errors])
            continue
        lats = [r.latency for r in ok]
        rows.append(
            [
                f,
                statistics.fmean(lats),
                _stdev(lats),
                statistics.fmean(r.tree for r in ok),
                statistics.fmean(r.ack for r in ok),
                statistics.fmean(r.nack for r in ok),
                _stdev([float(r.total) for r in ok]),
                errors,
            ]
        )
    return _tsv(["f", "latency", "desvpad2", "TREE", "ACK", "NACK", "desvpad1", "errors"], rows)


def run_suite(spec: SuiteSpec, out_dir: str | Path | None = None) -> dict[str, str]:
    """Run a suite; returns {file name: TSV text} and writes the files when `out_dir` is given."""
    tables = {}
    for protocol in spec.protocols:
        log.info("suite %s: %s", spec.suite, protocol)
        if spec.suite == "fault-free-sweep":
            text = fault_free_table(spec, protocol)
        else:
            text = fault_table(fault_sweep_results(spec, protocol))
        tables[f"{spec.suite}.{protocol}.tsv"] = text
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in tables.items():
            (out / name).write_text(text)
    return tables


def read_tsv(text: str) -> list[dict[str, float]]:
    lines = text.strip().splitlines()
    header = lines[0].split("\t")
    return [dict(zip(header, map(float, line.split("\t")))) for line in lines[1:]]


# config files


def load_config(path: str | Path) -> dict:
    """Read a YAML or JSON mapping."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read {p}: {e}") from e
    try:
        if p.suffix == ".json":
            data = json.loads(text)
        else:
            import yaml

            data = yaml.safe_load(text)
    except ValueError as e:
        raise ConfigError(f"{p}: {e}") from e
    except Exception as e:  # yaml.YAMLError does not derive from ValueError
        raise ConfigError(f"{p}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: expected a mapping at top level")
    return data


def _timing(data: dict) -> TimingParams:
    t = data.get("timing") or {}
    if not isinstance(t, dict):
        raise ConfigError("timing must be a mapping")
    unknown = set(t) - {"t_s", "t_r", "t_t", "resolution"}
    if unknown:
        raise ConfigError(f"unknown timing fields {sorted(unknown)}")
    return TimingParams(**t)


def _policy(data: dict) -> DetectorPolicy | None:
    d = data.get("detector")
    if d is None:
        return None
    if not isinstance(d, dict):
        raise ConfigError("detector must be a mapping")
    unknown = set(d) - {"test_interval", "timeout", "random_phases"}
    if unknown:
        raise ConfigError(f"unknown detector fields {sorted(unknown)}")
    pol = DetectorPolicy(float(d.get("test_interval", 5.0)), float(d.get("timeout", 4.0)))
    if d.get("random_phases") is not None:
        pol = pol.with_random_phases(int(data["n"]), int(d["random_phases"]))
    return pol


_SCENARIO_REQUIRED = ("n", "protocol", "messages", "crashes", "seed")
_SCENARIO_FIELDS = set(_SCENARIO_REQUIRED) | {
    "sources",
    "timing",
    "detector",
    "crash_window",
    "source_may_crash",
    "distribution",
    "schedule",
}


def scenario_from_dict(data: dict, **overrides) -> Scenario:
    data = {**data, **{k: v for k, v in overrides.items() if v is not None}}
    unknown = set(data) - _SCENARIO_FIELDS
    if unknown:
        raise ConfigError(f"unknown scenario fields {sorted(unknown)}")
    missing = [k for k in _SCENARIO_REQUIRED if k not in data]
    if missing:
        raise ConfigError(f"missing scenario fields {missing}")
    schedule = None
    if data.get("schedule") is not None:
        sched = data["schedule"]
        if not isinstance(sched, dict):
            raise ConfigError("schedule must map process id to crash time")
        schedule = CrashSchedule.of({int(p): float(t) for p, t in sched.items()})
        schedule.validate(int(data["n"]))
    try:
        return Scenario(
            n=int(data["n"]),
            protocol=str(data["protocol"]),
            messages=int(data["messages"]),
            sources=tuple(int(s) for s in data.get("sources", [0])),
            crashes=int(data["crashes"]) if schedule is None else len(schedule),
            seed=int(data["seed"]),
            timing=_timing(data),
            policy=_policy(data),
            crash_window=data.get("crash_window"),
            source_may_crash=data.get("source_may_crash"),
            distribution=data.get("distribution", "uniform"),
            schedule_override=schedule,
        )
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e)) from e


_SUITE_FIELDS = {"suite", "protocols", "sizes", "n", "crash_counts", "seeds", "messages", "timing", "detector", "workers"}


def suite_from_dict(data: dict, **overrides) -> SuiteSpec:
    data = {**data, **{k: v for k, v in overrides.items() if v is not None}}
    unknown = set(data) - _SUITE_FIELDS
    if unknown:
        raise ConfigError(f"unknown suite fields {sorted(unknown)}")
    if "suite" not in data:
        raise ConfigError("missing suite field")
    kw = {}
    for name in ("protocols", "sizes", "crash_counts"):
        if name in data:
            kw[name] = tuple(data[name])
    for name in ("n", "seeds", "messages", "workers"):
        if name in data:
            kw[name] = int(data[name])
    try:
        return replace(
            SuiteSpec(str(data["suite"])),
            timing=_timing(data),
            policy=_policy({**data, "n": data.get("n", 512)}),
            **kw,
        )
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e)) from e
