"""Communication graphs: square lattices and small custom graphs.

Node IDs are 1-based. Neighbor lists are kept in ascending order because that
ordering is the positional basis for trust arrays and action indices.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class Topology:
    node_count: int
    adjacency: tuple[tuple[int, ...], ...]
    grid_dim: int | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.node_count < 2:
            raise TopologyError("a topology needs at least 2 nodes")
        if len(self.adjacency) != self.node_count:
            raise TopologyError("adjacency must have one entry per node")
        for i, nbrs in enumerate(self.adjacency, start=1):
            if list(nbrs) != sorted(set(nbrs)):
                raise TopologyError(f"neighbors of node {i} must be ascending and unique")
            for j in nbrs:
                if j == i:
                    raise TopologyError(f"self-loop at node {i}")
                if not 1 <= j <= self.node_count:
                    raise TopologyError(f"node {i} has out-of-range neighbor {j}")
                if i not in self.adjacency[j - 1]:
                    raise TopologyError(f"edge ({i}, {j}) is not symmetric")
        if not _is_connected(self.adjacency):
            raise TopologyError("graph is not connected")

    def ne(self, i: int) -> tuple[int, ...]:
        """Ascending neighbor IDs of node ``i`` (1-based)."""
        return self.adjacency[i - 1]

    def degree(self, i: int) -> int:
        return len(self.adjacency[i - 1])

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.array([len(n) for n in self.adjacency], dtype=np.int64)

    @cached_property
    def max_degree(self) -> int:
        return int(self.degrees.max())

    @cached_property
    def neighbor_array(self) -> np.ndarray:
        """0-based neighbor table of shape (N, max_degree), padded with -1."""
        out = np.full((self.node_count, self.max_degree), -1, dtype=np.int64)
        for i, nbrs in enumerate(self.adjacency):
            out[i, : len(nbrs)] = [j - 1 for j in nbrs]
        return out


def _is_connected(adjacency: Sequence[Sequence[int]]) -> bool:
    seen = {1}
    queue = deque([1])
    while queue:
        i = queue.popleft()
        for j in adjacency[i - 1]:
            if j not in seen:
                seen.add(j)
                queue.append(j)
    return len(seen) == len(adjacency)


def build_grid(d: int) -> Topology:
    """Row-major ``d x d`` square lattice with 4-connectivity.

    Node ``i`` sits at row ``(i - 1) // d`` and column ``(i - 1) % d``.
    """
    if d < 2:
        raise TopologyError(f"grid dimension must be >= 2, got {d}")
    adjacency = []
    for i in range(1, d * d + 1):
        row, col = divmod(i - 1, d)
        nbrs = []
        if row > 0:
            nbrs.append(i - d)
        if col > 0:
            nbrs.append(i - 1)
        if col < d - 1:
            nbrs.append(i + 1)
        if row < d - 1:
            nbrs.append(i + d)
        adjacency.append(tuple(nbrs))
    return Topology(d * d, tuple(adjacency), grid_dim=d)


def build_custom(edges: Iterable[tuple[int, int]], node_count: int) -> Topology:
    """Build an arbitrary connected undirected graph from an edge list."""
    nbrs: list[set[int]] = [set() for _ in range(node_count)]
    for a, b in edges:
        if a == b:
            raise TopologyError(f"self-loop at node {a}")
        if not (1 <= a <= node_count and 1 <= b <= node_count):
            raise TopologyError(f"edge ({a}, {b}) references a node outside 1..{node_count}")
        if b in nbrs[a - 1]:
            raise TopologyError(f"duplicate edge ({a}, {b})")
        nbrs[a - 1].add(b)
        nbrs[b - 1].add(a)
    return Topology(node_count, tuple(tuple(sorted(n)) for n in nbrs))


def edge_list(t: Topology) -> list[tuple[int, int]]:
    """Each undirected edge once as ``(i, j)`` with ``i < j``, ascending."""
    return [(i, j) for i in range(1, t.node_count + 1) for j in t.ne(i) if i < j]
