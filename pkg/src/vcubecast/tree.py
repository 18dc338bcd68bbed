"""Propagation of a single TREE message along the autonomic spanning tree.

One instance supports one propagation: the machine keeps no record of
what it sent, so a crash notification re-sends TREE to the next correct
member of the crashed process's cluster whenever one exists.
"""

from __future__ import annotations

from vcubecast.errors import ParameterError
from vcubecast.messages import TREE, Message, Send
from vcubecast.topology import View, cluster_index, dimension, ff_neighbor, neighborhood

_TREE = Message(TREE)


class TreeProcess:
    def __init__(self, me: int, n: int, view: View | None = None):
        self.me = me
        self.n = n
        self.d = dimension(n)
        self.view = view if view is not None else View.full(me, n)
        if self.view.owner != me:
            raise ParameterError("view owner must be the process itself")
        self.received_from: list[int] = []

    def start_tree(self) -> list[Send]:
        """Root: one TREE per cluster, to its first correct member."""
        return [Send(k, _TREE) for k in neighborhood(self.view, self.d)]

    def on_tree(self, sender: int) -> list[Send]:
        if sender not in self.view:
            return []
        self.received_from.append(sender)
        h = cluster_index(self.me, sender) - 1
        return [Send(k, _TREE) for k in neighborhood(self.view, h)]

    def on_crash(self, j: int) -> list[Send]:
        if not self.view.remove(j):
            return []
        k = ff_neighbor(self.view, cluster_index(self.me, j))
        return [Send(k, _TREE)] if k is not None else []

    # simulator adapter
    def on_app(self, payload=b""):
        return self.start_tree()

    def on_message(self, sender, msg):
        return self.on_tree(sender)

    def pending(self):
        return []
