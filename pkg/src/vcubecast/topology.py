"""VCube cluster structure and view-dependent neighbor selection.

Processes are d-bit addresses in a system of n = 2**d members. Cluster s of
process i holds 2**(s-1) processes, listed in the order FF_neighbor searches
them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

from vcubecast.errors import ConfigError, ParameterError


def dimension(n: int) -> int:
    """Return d for n = 2**d, rejecting any other system size."""
    if not isinstance(n, int) or n < 2 or n & (n - 1):
        raise ConfigError(f"system size must be a power of two >= 2, got {n!r}")
    return n.bit_length() - 1


@dataclass
class View:
    """The set of processes `owner` currently believes correct."""

    owner: int
    correct: set[int] = field(default_factory=set)

    @classmethod
    def full(cls, owner: int, n: int) -> "View":
        return cls(owner, set(range(n)))

    def remove(self, j: int) -> bool:
        """Drop `j`; returns False when it was already gone."""
        if j in self.correct:
            self.correct.discard(j)
            return True
        return False

    def __contains__(self, p) -> bool:
        return p in self.correct

    def others(self) -> list[int]:
        """Correct processes other than the owner, ascending."""
        # views only shrink, so the size identifies the cached ordering
        cache = getattr(self, "_others", None)
        if cache is None or cache[0] != len(self.correct):
            ordered = sorted(self.correct)
            if self.owner in self.correct:
                ordered.remove(self.owner)
            cache = self._others = (len(self.correct), ordered)
        return cache[1]


@lru_cache(maxsize=None)
def _members(i: int, s: int) -> tuple[int, ...]:
    # Unrolling the recursive definition gives i ^ 2**(s-1) ^ r for r in
    # 0 .. 2**(s-1)-1, in increasing r.
    head = i ^ (1 << (s - 1))
    return tuple(head ^ r for r in range(1 << (s - 1)))


def cluster_members(i: int, s: int) -> tuple[int, ...]:
    """Ordered members of cluster `s` of process `i` (first is i xor 2**(s-1))."""
    if not isinstance(s, int) or s < 1:
        raise ParameterError(f"cluster index must be >= 1, got {s!r}")
    if i < 0:
        raise ParameterError(f"process id must be >= 0, got {i!r}")
    return _members(i, s)


def cluster_index(i: int, j: int) -> int:
    """The cluster s of `i` that contains `j`; symmetric in i and j."""
    if i == j:
        raise ParameterError(f"cluster_index undefined for i == j ({i})")
    if i < 0 or j < 0:
        raise ParameterError(f"process ids must be >= 0, got {i}, {j}")
    return (i ^ j).bit_length()


def ff_neighbor(view: View, s: int) -> int | None:
    """First member of cluster `s` of the view's owner that the view holds correct."""
    correct = view.correct
    for j in cluster_members(view.owner, s):
        if j in correct:
            return j
    return None


def neighborhood(view: View, h: int) -> list[int]:
    """FF neighbors over clusters 1..h, in ascending cluster order.

    h = 0 yields an empty list, so a leaf that received from its cluster-1
    neighbor forwards nothing.
    """
    if h < 0:
        raise ParameterError(f"neighborhood height must be >= 0, got {h}")
    out = []
    for s in range(1, h + 1):
        k = ff_neighbor(view, s)
        if k is not None:
            out.append(k)
    return out
