"""Hierarchical best-effort (ATREE-B) and reliable (ATREE-R) broadcast.

Each process is a run-to-completion state machine. Handlers never perform
I/O; they return Send / Deliver / Complete actions for the simulator to
schedule.

Pending acknowledgments are tuples (from, to, mid): the process received
`mid` from `from` (None when it originated the subtree itself) and
forwarded it to `to`.
"""

from __future__ import annotations

import logging
from collections import deque

from vcubecast.errors import ProtocolError
from vcubecast.messages import ACK, TREE, Complete, Deliver, Message, MessageId, Send
from vcubecast.topology import View, cluster_index, dimension, ff_neighbor, neighborhood

log = logging.getLogger(__name__)


class AckSet:
    """Ordered set of pending (from, to, mid) entries with wildcard lookups."""

    def __init__(self):
        self._entries: dict[tuple, None] = {}
        self._by_from: dict[tuple, dict] = {}
        self._by_to: dict[tuple, dict] = {}

    def add(self, p, q, mid) -> bool:
        key = (p, q, mid)
        if key in self._entries:
            return False
        self._entries[key] = None
        self._by_from.setdefault((p, mid), {})[q] = None
        self._by_to.setdefault((q, mid), {})[p] = None
        return True

    def discard(self, p, q, mid) -> bool:
        key = (p, q, mid)
        if key not in self._entries:
            return False
        del self._entries[key]
        tos = self._by_from[(p, mid)]
        del tos[q]
        if not tos:
            del self._by_from[(p, mid)]
        froms = self._by_to[(q, mid)]
        del froms[p]
        if not froms:
            del self._by_to[(q, mid)]
        return True

    def has_from(self, p, mid) -> bool:
        """Is any <p, *, mid> pending?"""
        return (p, mid) in self._by_from

    def sources_of(self, q, mid) -> list:
        """Every x with <x, q, mid> pending, oldest first."""
        return list(self._by_to.get((q, mid), ()))

    def snapshot(self) -> list[tuple]:
        return list(self._entries)

    def __contains__(self, entry) -> bool:
        return entry in self._entries

    def __len__(self):
        return len(self._entries)

    def __iter__(self):
        return iter(self.snapshot())


class AtreeProcess:
    """One process of the VCube spanning-tree broadcast.

    With ``reliable=True`` the process also relays messages whose source
    crashed, so every correct process delivers them (all-or-nothing).
    """

    name = "atree"

    def __init__(self, me: int, n: int, reliable: bool = False, view: View | None = None):
        self.me = me
        self.n = n
        self.d = dimension(n)
        self.reliable = reliable
        self.view = view if view is not None else View.full(me, n)
        self.last: list[MessageId | None] = [None] * n
        self.ack_set = AckSet()
        self.pending_app: deque[bytes] = deque()
        self.payloads: dict[MessageId, bytes] = {}
        self._next_ts = 1
        self._open: set[MessageId] = set()

    # topology hooks, overridden by the one-to-all baseline

    def _root_targets(self) -> list[int]:
        return neighborhood(self.view, self.d)

    def _forward_targets(self, sender: int) -> list[int]:
        return neighborhood(self.view, cluster_index(self.me, sender) - 1)

    def _replacement(self, j: int) -> int | None:
        return ff_neighbor(self.view, cluster_index(self.me, j))

    # application side

    def broadcast(self, payload: bytes = b"") -> list:
        """Broadcast a new application payload, or queue it behind the one in flight."""
        if self.busy:
            self.pending_app.append(payload)
            return []
        return self._start(payload)

    @property
    def busy(self) -> bool:
        own = self.last[self.me]
        return own is not None and self.ack_set.has_from(None, own)

    def _start(self, payload: bytes) -> list:
        m = MessageId(self.me, self._next_ts)
        self._next_ts += 1
        self.last[self.me] = m
        self.payloads[m] = payload
        self._open.add(m)
        actions = [Deliver(m, payload)]
        actions += self._send_to_all(m, payload)
        actions += self.check_acks(None, m)
        return actions

    def relay(self, m: MessageId) -> list:
        """Re-broadcast another source's message over this process's own tree."""
        return self._send_to_all(m, self.payloads.get(m, b""))

    def _send_to_all(self, m, payload) -> list:
        out = []
        msg = Message(TREE, m, payload)
        for j in self._root_targets():
            if self.ack_set.add(None, j, m):
                out.append(Send(j, msg))
        return out

    # message side

    def on_message(self, sender: int, msg: Message) -> list:
        if msg.kind == TREE:
            return self.on_tree(sender, msg.mid, msg.payload)
        if msg.kind == ACK:
            return self.on_ack(sender, msg.mid)
        raise ProtocolError(f"unexpected {msg.kind} at atree process {self.me}")

    def on_app(self, payload: bytes = b"") -> list:
        return self.broadcast(payload)

    def _accept(self, m: MessageId, payload: bytes) -> bool:
        last = self.last[m.source]
        if last is None or m.ts == last.ts + 1:
            self.last[m.source] = m
            self.payloads[m] = payload
            return True
        if m.ts > last.ts + 1:
            raise ProtocolError(
                f"process {self.me} got {m} after {last}: sources broadcast sequentially, gaps cannot occur"
            )
        return False

    def on_tree(self, sender: int, m: MessageId, payload: bytes = b"") -> list:
        correct = self.view.correct
        if sender not in correct:
            return []
        if not self.reliable and m.source not in correct:
            return []
        actions = []
        if self._accept(m, payload):
            actions.append(Deliver(m, payload))
            if self.reliable and m.source not in correct:
                actions += self.relay(m)
                # The sender still waits for this subtree; answer it so its
                # pending entry clears.
                actions += self.check_acks(sender, m)
                return actions
        msg = Message(TREE, m, payload)
        for k in self._forward_targets(sender):
            if self.ack_set.add(sender, k, m):
                actions.append(Send(k, msg))
        actions += self.check_acks(sender, m)
        return actions

    def _may_ack(self, j: int, m: MessageId) -> bool:
        correct = self.view.correct
        if self.reliable:
            return j in correct
        return j in correct and m.source in correct

    def check_acks(self, j, m: MessageId) -> list:
        if self.ack_set.has_from(j, m):
            return []
        if j is None:
            if m in self._open:
                self._open.discard(m)
                actions = [Complete(m)]
                if self.pending_app and not self.busy:
                    actions += self._start(self.pending_app.popleft())
                return actions
            return []
        if self._may_ack(j, m):
            return [Send(j, Message(ACK, m))]
        return []

    def on_ack(self, sender: int, m: MessageId) -> list:
        # An ACK from `sender` covers its whole subtree relative to this
        # process, whichever upstream the copy was forwarded for.
        froms = self.ack_set.sources_of(sender, m)
        if not froms:
            log.debug("process %d: ACK %s from %d has no pending entry", self.me, m, sender)
            return []
        for p in froms:
            self.ack_set.discard(p, sender, m)
        actions = []
        for p in froms:
            actions += self.check_acks(p, m)
        return actions

    def on_crash(self, j: int) -> list:
        if not self.view.remove(j):
            return []
        correct = self.view.correct
        actions = []
        for entry in self.ack_set.snapshot():
            if entry not in self.ack_set:
                continue
            p, q, m = entry
            upstream_dead = p is not None and p not in correct
            if upstream_dead or (not self.reliable and m.source not in correct):
                self.ack_set.discard(p, q, m)
            elif q == j:
                k = self._replacement(j)
                if k is not None and self.ack_set.add(p, k, m):
                    actions.append(Send(k, Message(TREE, m, self.payloads.get(m, b""))))
                self.ack_set.discard(p, j, m)
                actions += self.check_acks(p, m)
        if self.reliable and self.last[j] is not None:
            actions += self.relay(self.last[j])
        return actions

    def pending(self) -> list[tuple]:
        """Entries still awaiting an ACK from a process this one holds correct."""
        return [e for e in self.ack_set.snapshot() if e[1] in self.view.correct]
