"""Crash schedules and the perfect failure detector's timing contract.

The detector is modelled as a latency policy rather than as test traffic:
an observer tests in rounds every `test_interval` and reports a crash one
`timeout` after the first round at or after the crash.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from vcubecast.errors import ConfigError, ParameterError


@dataclass(frozen=True)
class CrashSchedule:
    """Permanent crashes as (process, crash_time) pairs."""

    entries: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        entries = tuple((int(p), t) for p, t in self.entries)
        seen = set()
        for p, t in entries:
            if p in seen:
                raise ConfigError(f"process {p} appears twice in the crash schedule")
            if t < 0:
                raise ConfigError(f"crash time of process {p} is negative ({t})")
            seen.add(p)
        object.__setattr__(self, "entries", tuple(sorted(entries, key=lambda e: (e[1], e[0]))))

    @classmethod
    def of(cls, crashes: Mapping[int, float] | Iterable[tuple[int, float]] = ()) -> "CrashSchedule":
        if isinstance(crashes, Mapping):
            crashes = crashes.items()
        return cls(tuple(crashes))

    def validate(self, n: int) -> None:
        if len(self.entries) > n - 1:
            raise ConfigError(f"at most n-1 = {n - 1} processes may crash, got {len(self.entries)}")
        for p, _ in self.entries:
            if not 0 <= p < n:
                raise ConfigError(f"crashed process {p} outside [0, {n - 1}]")

    def crash_time(self, p: int):
        for q, t in self.entries:
            if q == p:
                return t
        return None

    def as_dict(self) -> dict[int, float]:
        return dict(self.entries)

    def processes(self) -> list[int]:
        return [p for p, _ in self.entries]

    def __len__(self):
        return len(self.entries)


def is_correct_at(schedule: CrashSchedule, p: int, t) -> bool:
    """True iff `p` has not crashed by time `t` (a crash at t is already in effect)."""
    c = schedule.crash_time(p)
    return c is None or c > t


@dataclass(frozen=True)
class DetectorPolicy:
    test_interval: float = 5.0
    timeout: float = 4.0
    # observer -> offset of its test rounds; empty means every observer
    # tests at 0, I, 2I, ...
    phases: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.test_interval > 0:
            raise ConfigError(f"test_interval must be > 0, got {self.test_interval}")
        if not self.timeout > 0:
            raise ConfigError(f"timeout must be > 0, got {self.timeout}")
        for o, ph in self.phases.items():
            if not 0 <= ph < self.test_interval:
                raise ConfigError(f"phase of observer {o} must lie in [0, test_interval)")

    @classmethod
    def for_timing(cls, t_s: float, t_r: float, t_t: float, test_interval: float = 5.0) -> "DetectorPolicy":
        """Default policy: a test is answered within 4 round trips or the tested process is crashed."""
        return cls(test_interval=test_interval, timeout=4 * (t_s + t_r + t_t))

    def __hash__(self):
        return hash((self.test_interval, self.timeout, tuple(sorted(self.phases.items()))))

    def with_random_phases(self, n: int, seed: int, resolution: int = 1000) -> "DetectorPolicy":
        """Per-observer offsets drawn uniformly on the 1/resolution grid."""
        rng = random.Random(seed)
        steps = max(1, round(self.test_interval * resolution))
        return DetectorPolicy(
            self.test_interval,
            self.timeout,
            {o: rng.randrange(steps) / resolution for o in range(n)},
        )


def detection_time(policy: DetectorPolicy, observer: int, crashed: int, crash_time):
    """When `observer` is notified of the crash of `crashed`.

    Works on any numeric time type; the simulator passes integer ticks so
    the result is exact.
    """
    if observer == crashed:
        raise ParameterError(f"process {observer} cannot observe its own crash")
    phase = policy.phases.get(observer, 0)
    interval = policy.test_interval
    # first test round phase + k*interval at or after the crash
    k = -((phase - crash_time) // interval)
    if k < 0:
        k = 0
    return phase + k * interval + policy.timeout
