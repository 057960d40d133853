"""Undirected communication graphs: incidence, Laplacian, connectivity."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class CommGraph:
    """Undirected graph on vertices ``1..vertex_count``.

    ``edges`` keeps the listed (head, tail) order; that order fixes the
    orientation used by :func:`incidence`.
    """

    vertex_count: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        if self.vertex_count < 1:
            raise GraphError(f"vertex_count must be positive, got {self.vertex_count}")
        seen: set[frozenset[int]] = set()
        for head, tail in self.edges:
            if not (1 <= head <= self.vertex_count and 1 <= tail <= self.vertex_count):
                raise GraphError(f"edge ({head}, {tail}) has an endpoint outside [1, {self.vertex_count}]")
            if head == tail:
                raise GraphError(f"self-loop at vertex {head}")
            key = frozenset((head, tail))
            if key in seen:
                raise GraphError(f"duplicate undirected edge ({head}, {tail})")
            seen.add(key)

    @classmethod
    def from_edges(cls, vertex_count: int, edges) -> CommGraph:
        return cls(int(vertex_count), tuple((int(a), int(b)) for a, b in edges))

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.vertex_count, self.vertex_count))
        for head, tail in self.edges:
            a[head - 1, tail - 1] = a[tail - 1, head - 1] = 1.0
        return a


def build_cycle(n: int) -> CommGraph:
    """Cycle ``(1,2), ..., (n-1,n), (n,1)``; for ``n == 2`` a single edge."""
    if n < 2:
        raise GraphError(f"a cycle needs at least 2 vertices, got {n}")
    if n == 2:
        return CommGraph(2, ((1, 2),))
    edges = tuple((i, i + 1) for i in range(1, n)) + ((n, 1),)
    return CommGraph(n, edges)


def incidence(graph: CommGraph) -> np.ndarray:
    d = np.zeros((graph.vertex_count, graph.edge_count))
    for k, (head, tail) in enumerate(graph.edges):
        d[head - 1, k] = 1.0
        d[tail - 1, k] = -1.0
    return d


def laplacian(graph: CommGraph) -> np.ndarray:
    """Graph Laplacian built as degree minus adjacency (equals ``D @ D.T``)."""
    a = graph.adjacency()
    return np.diag(a.sum(axis=1)) - a


def neighbors(graph: CommGraph, i: int) -> set[int]:
    if not 1 <= i <= graph.vertex_count:
        raise GraphError(f"vertex {i} outside [1, {graph.vertex_count}]")
    out = set()
    for head, tail in graph.edges:
        if head == i:
            out.add(tail)
        elif tail == i:
            out.add(head)
    return out


def neighbor_lists(graph: CommGraph) -> list[list[int]]:
    """0-indexed sorted neighbor lists, one per vertex."""
    out: list[list[int]] = [[] for _ in range(graph.vertex_count)]
    for head, tail in graph.edges:
        out[head - 1].append(tail - 1)
        out[tail - 1].append(head - 1)
    return [sorted(x) for x in out]


def is_connected(graph: CommGraph) -> bool:
    nbrs = neighbor_lists(graph)
    seen = {0}
    queue = deque([0])
    while queue:
        v = queue.popleft()
        for u in nbrs[v]:
            if u not in seen:
                seen.add(u)
                queue.append(u)
    return len(seen) == graph.vertex_count


def components(graph: CommGraph) -> list[list[int]]:
    """Connected components as sorted lists of 1-indexed vertices."""
    nbrs = neighbor_lists(graph)
    unseen = set(range(graph.vertex_count))
    comps = []
    while unseen:
        root = min(unseen)
        unseen.discard(root)
        comp = [root]
        queue = deque([root])
        while queue:
            v = queue.popleft()
            for u in nbrs[v]:
                if u in unseen:
                    unseen.discard(u)
                    comp.append(u)
                    queue.append(u)
        comps.append(sorted(c + 1 for c in comp))
    return comps
