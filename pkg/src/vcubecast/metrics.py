"""Latency, message counts and tree shape, computed from a Trace."""

from __future__ import annotations

from collections import defaultdict, deque

from vcubecast.errors import ProtocolError
from vcubecast.messages import ACK, NACK, REBUILD, TREE, MessageId
from vcubecast.sim import SEND, Trace


class DeliveryError(ProtocolError):
    """A broadcast did not reach every process that stayed correct."""

    def __init__(self, mid: MessageId, missing: set[int]):
        self.mid = mid
        self.missing = set(missing)
        super().__init__(f"{mid} not delivered at correct processes {sorted(self.missing)}")


def latency_of(trace: Trace, m: MessageId) -> float:
    """Time from the start of broadcast `m` to its last delivery.

    The start is the source's own delivery, i.e. the moment the message
    leaves the application queue. Raises DeliveryError when a process
    correct at the end of the run never delivered `m`.
    """
    if m not in trace.started:
        raise KeyError(f"{m} was never broadcast in this trace")
    who = trace.deliveries.get(m, {})
    missing = {p for p in trace.correct_at_end() if p not in who}
    if missing:
        raise DeliveryError(m, missing)
    return trace.time(max(who.values()) - trace.started[m])


def mean_latency(trace: Trace) -> float:
    """Mean latency over messages whose source never crashed."""
    mids = [m for m in trace.message_ids() if m.source not in trace.crash_ticks]
    if not mids:
        raise ProtocolError("no broadcast from a surviving source")
    return sum(latency_of(trace, m) for m in mids) / len(mids)


def message_counts(trace: Trace) -> tuple[int, int, int]:
    """(TREE, ACK, NACK) sends. REBUILD control messages count as NACK."""
    s = trace.sends
    return s[TREE], s[ACK], s[NACK] + s[REBUILD]


def tree_children(trace: Trace, m: MessageId | None = None) -> dict[int, list[int]]:
    """Parent -> children of the TREE edges that first reached each process.

    Only the first copy a process receives counts, so re-sent copies and
    flood duplicates do not add edges.
    """
    reached: set[int] = set()
    children: dict[int, list[int]] = defaultdict(list)
    for r in trace.records:
        if r.action != SEND or r.kind != TREE:
            continue
        if m is not None and (r.source, r.ts) != (m.source, m.ts):
            continue
        if r.counterpart in reached or r.counterpart == r.source:
            continue
        reached.add(r.counterpart)
        children[r.process].append(r.counterpart)
    return dict(children)


def tree_depth(children: dict[int, list[int]], root: int) -> int:
    """Longest root-to-leaf edge count."""
    depth = {root: 0}
    todo = deque([root])
    while todo:
        p = todo.popleft()
        for c in children.get(p, ()):
            if c in depth:
                raise ProtocolError(f"edges to {c} form a cycle or a join")
            depth[c] = depth[p] + 1
            todo.append(c)
    return max(depth.values())
