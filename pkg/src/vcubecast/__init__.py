"""Autonomic spanning-tree broadcast over the VCube virtual hypercube.

The package holds the VCube topology functions, the tree / best-effort /
reliable broadcast state machines, the ALL and NATREE comparison strategies,
a deterministic discrete-event simulator and an experiment harness.
"""

from vcubecast.errors import ConfigError, ParameterError, ProtocolError
from vcubecast.topology import (
    View,
    cluster_index,
    cluster_members,
    ff_neighbor,
    neighborhood,
)
from vcubecast.failures import CrashSchedule, DetectorPolicy, detection_time, is_correct_at
from vcubecast.messages import MessageId
from vcubecast.sim import PROTOCOLS, AppBroadcast, TimingParams, Trace, enumerate_crash_timings, run

__all__ = [
    "AppBroadcast",
    "ConfigError",
    "CrashSchedule",
    "DetectorPolicy",
    "MessageId",
    "PROTOCOLS",
    "ParameterError",
    "ProtocolError",
    "TimingParams",
    "Trace",
    "View",
    "cluster_index",
    "cluster_members",
    "detection_time",
    "enumerate_crash_timings",
    "ff_neighbor",
    "is_correct_at",
    "neighborhood",
    "run",
]

__version__ = "0.1.0"
