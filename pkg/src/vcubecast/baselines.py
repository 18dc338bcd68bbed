"""Comparison strategies: one-to-all (ALL) and a flooding-built tree (NATREE)."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

from vcubecast.broadcast import AtreeProcess
from vcubecast.errors import ProtocolError
from vcubecast.messages import ACK, NACK, REBUILD, TREE, Complete, Deliver, Message, MessageId, Multicast, Send, Timer
from vcubecast.topology import View, dimension

log = logging.getLogger(__name__)


class AllProcess(AtreeProcess):
    """The source sends every message straight to each process it holds correct.

    Sends go out sequentially in ascending id order. Receivers never
    forward, so a crashed destination simply has its pending ACK dropped.
    """

    name = "all"

    def _root_targets(self):
        me = self.me
        return [k for k in sorted(self.view.correct) if k != me]

    def _forward_targets(self, sender):
        return []

    def _replacement(self, j):
        return None


@dataclass
class TreeState:
    """This process's membership in the tree rooted at some process."""

    epoch: int = 0
    joined: bool = False
    parent: int | None = None
    children: dict = field(default_factory=dict)
    # root only: the current epoch's flood has completed
    built: bool = False


@dataclass
class Pending:
    epoch: int
    upstream: int | None
    waiting: dict
    flood: bool


class NatreeProcess:
    """Non-autonomic tree: built by flooding the first message, rebuilt on failures.

    A flood copy of epoch e makes its first recipient join with the sender
    as parent; it delivers and forwards to everyone except the sender.
    Later epoch-e copies get a NACK. A child answers its parent's copy with
    ACK once its own forwards are all answered, which is how parents learn
    their children. Once built, messages travel along parent/children
    edges only.

    Every process may root a tree (own broadcasts, and relays in the
    reliable variant). Broadcasts rooted at one process are serialized.
    """

    name = "natree"

    def __init__(self, me: int, n: int, reliable: bool = False, view: View | None = None):
        self.me = me
        self.n = n
        self.d = dimension(n)
        self.reliable = reliable
        self.view = view if view is not None else View.full(me, n)
        self.last: list[MessageId | None] = [None] * n
        self.payloads: dict[MessageId, bytes] = {}
        self.trees: dict[int, TreeState] = {}
        self.pending_app: deque = deque()
        self.inflight: dict[tuple[int, MessageId], Pending] = {}
        self._next_ts = 1
        self._current: tuple[str, MessageId] | None = None
        self._rebuild_due = False

    def _tree(self, root: int) -> TreeState:
        t = self.trees.get(root)
        if t is None:
            t = self.trees[root] = TreeState()
        return t

    # root side

    def on_app(self, payload: bytes = b"") -> list:
        return self.broadcast(payload)

    def broadcast(self, payload: bytes = b"") -> list:
        self.pending_app.append(("own", payload))
        return self._dispatch()

    def relay(self, m: MessageId) -> list:
        self.pending_app.append(("relay", m))
        return self._dispatch()

    @property
    def busy(self) -> bool:
        return self._current is not None

    def _dispatch(self) -> list:
        actions = []
        while self._current is None and self.pending_app:
            what, item = self.pending_app.popleft()
            if what == "own":
                m = MessageId(self.me, self._next_ts)
                self._next_ts += 1
                self.last[self.me] = m
                self.payloads[m] = item
                actions.append(Deliver(m, item))
            else:
                m = item
            self._current = (what, m)
            actions += self._root_send(m, rebuild=False)
        return actions

    def _root_send(self, m: MessageId, rebuild: bool) -> list:
        t = self._tree(self.me)
        me = self.me
        correct = self.view.correct
        if t.built and not rebuild:
            targets = [c for c in t.children if c in correct]
            flood = False
        else:
            t.epoch += 1
            t.joined = True
            t.parent = None
            t.children = {}
            t.built = False
            targets = self.view.others()
            flood = True
        self.inflight[(me, m)] = Pending(t.epoch, None, dict.fromkeys(targets), flood)
        msg = Message(TREE, m, self.payloads.get(m, b""), root=me, epoch=t.epoch, flood=flood)
        return [Multicast(targets, msg)] + self._settle(me, m)

    def _finish_root(self, m: MessageId, flood: bool) -> list:
        t = self._tree(self.me)
        if flood:
            t.built = True
        actions = []
        what, cur = self._current if self._current else (None, None)
        if cur == m:
            self._current = None
            if what == "own":
                actions.append(Complete(m))
        return actions + self._dispatch()

    def _settle(self, root: int, m: MessageId) -> list:
        """Answer upstream once nothing forwarded for (root, m) is outstanding."""
        p = self.inflight.get((root, m))
        if p is None or p.waiting:
            return []
        del self.inflight[(root, m)]
        if p.upstream is None:
            return self._finish_root(m, p.flood)
        if p.upstream in self.view.correct:
            return [Send(p.upstream, Message(ACK, m, root=root, epoch=p.epoch))]
        return []

    # message side

    def on_message(self, sender: int, msg: Message) -> list:
        kind = msg.kind
        if kind == TREE:
            return self.on_tree(sender, msg)
        if kind == NACK or kind == ACK:
            return self.on_reply(sender, msg)
        if kind == REBUILD:
            return self.on_rebuild(sender, msg)
        raise ProtocolError(f"unexpected {kind} at natree process {self.me}")

    def _accept(self, m: MessageId, payload: bytes) -> bool:
        last = self.last[m.source]
        if last is None or m.ts == last.ts + 1:
            self.last[m.source] = m
            self.payloads[m] = payload
            return True
        if m.ts > last.ts + 1:
            raise ProtocolError(f"process {self.me} got {m} after {last}")
        return False

    def on_tree(self, sender: int, msg: Message) -> list:
        correct = self.view.correct
        m, root, e = msg.mid, msg.root, msg.epoch
        if sender not in correct or (not self.reliable and m.source not in correct):
            return []
        t = self.trees.get(root)
        if t is not None and msg.flood and t.joined and e == t.epoch:
            # the common case during a flood: a duplicate copy
            return [Send(sender, Message(NACK, m, root=root, epoch=e))]
        nack = [Send(sender, Message(NACK, m, root=root, epoch=e))]
        if t is None:
            t = self._tree(root)
        if e < t.epoch or root == self.me:
            return nack
        if e > t.epoch:
            t.epoch, t.joined, t.parent, t.children = e, False, None, {}
            for key in [k for k, p in self.inflight.items() if k[0] == root and p.epoch < e]:
                del self.inflight[key]
        if t.joined and msg.flood:
            return nack
        if not t.joined:
            t.joined, t.parent = True, sender
        actions = []
        if self._accept(m, msg.payload):
            actions.append(Deliver(m, msg.payload))
            if self.reliable and m.source not in correct:
                actions += self.relay(m)
                actions.append(Send(sender, Message(ACK, m, root=root, epoch=e)))
                return actions
        if msg.flood:
            targets = [k for k in self.view.others() if k != sender]
        else:
            targets = [c for c in t.children if c in correct]
        if (root, m) in self.inflight:
            # same message again down the same tree generation
            return actions + nack
        self.inflight[(root, m)] = Pending(e, sender, dict.fromkeys(targets), msg.flood)
        if targets:
            actions.append(Multicast(targets, msg))
        return actions + self._settle(root, m)

    def on_reply(self, sender: int, msg: Message) -> list:
        key = (msg.root, msg.mid)
        p = self.inflight.get(key)
        if p is None or p.epoch != msg.epoch or sender not in p.waiting:
            return []
        del p.waiting[sender]
        if msg.kind == ACK and p.flood:
            t = self._tree(msg.root)
            if t.epoch == msg.epoch:
                t.children[sender] = None
        return self._settle(*key)

    def on_rebuild(self, sender: int, msg: Message) -> list:
        t = self._tree(self.me)
        if msg.epoch != t.epoch:
            return []
        t.built = False
        return self._request_rebuild()

    def _request_rebuild(self) -> list:
        # Deferred through a timer so crashes detected at the same instant
        # share one re-flood.
        if self._current is None or self._rebuild_due:
            return []
        self._rebuild_due = True
        return [Timer("rebuild")]

    def on_timer(self, tag) -> list:
        if tag != "rebuild" or not self._rebuild_due:
            return []
        self._rebuild_due = False
        if self._current is None:
            return []
        _, m = self._current
        self.inflight.pop((self.me, m), None)
        return self._root_send(m, rebuild=True)

    def on_crash(self, j: int) -> list:
        if not self.view.remove(j):
            return []
        correct = self.view.correct
        actions = []
        escalate = {}
        for key, p in list(self.inflight.items()):
            root, m = key
            if not self.reliable and m.source not in correct:
                del self.inflight[key]
                continue
            if root == self.me or (j not in p.waiting and p.upstream != j):
                continue
            if root in correct:
                # The root re-floods; until the new epoch arrives this entry
                # must not report a subtree that lost members.
                escalate[root] = self._tree(root).epoch
                if p.upstream == j:
                    del self.inflight[key]
            elif p.upstream == j:
                del self.inflight[key]
            else:
                del p.waiting[j]
                actions += self._settle(root, m)
        for root, e in escalate.items():
            actions.append(Send(root, Message(REBUILD, root=root, epoch=e)))
        self._tree(self.me).built = False
        actions += self._request_rebuild()
        if self.reliable and self.last[j] is not None:
            actions += self.relay(self.last[j])
        return actions

    def pending(self) -> list[tuple]:
        out = []
        for (root, m), p in self.inflight.items():
            out += [(p.upstream, q, m) for q in p.waiting if q in self.view.correct]
        return out
