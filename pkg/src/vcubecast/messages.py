"""Wire messages and the actions state machines hand back to the simulator."""

from __future__ import annotations

from typing import NamedTuple

TREE = "TREE"
ACK = "ACK"
NACK = "NACK"
REBUILD = "REBUILD"

KINDS = (TREE, ACK, NACK, REBUILD)


class MessageId(NamedTuple):
    """Broadcast identity: the source plus its per-source counter (from 1)."""

    source: int
    ts: int


class Message(NamedTuple):
    kind: str
    mid: MessageId | None = None
    payload: bytes = b""
    # NATREE only: tree root, tree generation, and whether this copy is
    # part of a building flood.
    root: int = -1
    epoch: int = 0
    flood: bool = False


class Send(NamedTuple):
    to: int
    msg: Message

    @property
    def kind(self) -> str:
        return self.msg.kind


class Multicast(NamedTuple):
    """The same message to several processes, sent one after another in order."""

    targets: list
    msg: Message


class Deliver(NamedTuple):
    mid: MessageId
    payload: bytes


class Complete(NamedTuple):
    """The local process finished broadcasting its own message `mid`."""

    mid: MessageId


class Timer(NamedTuple):
    """Ask to be woken with `tag` once the events already queued here are handled."""

    tag: str
