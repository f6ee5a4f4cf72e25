"""Oriented graphs, incidence matrices and bipartitions.

Node ids are 1-based everywhere in the public API. An input pair ``(i, j)``
makes node ``i`` the head of the edge; node ``i`` is also the one that owns
the relative measurement ``x_i - x_j`` (see :mod:`l1fault.plant`).
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import GraphError, NotBipartiteError

RANK_RTOL = 1e-8


@dataclass(frozen=True)
class Graph:
    M: int
    edges: tuple[tuple[int, int], ...]
    _adjacency: tuple[frozenset[int], ...] = field(repr=False, compare=False, default=())

    def __post_init__(self) -> None:
        if not self._adjacency:
            adj: list[set[int]] = [set() for _ in range(self.M + 1)]
            for i, j in self.edges:
                adj[i].add(j)
                adj[j].add(i)
            object.__setattr__(self, "_adjacency", tuple(frozenset(a) for a in adj))

    @property
    def N(self) -> int:
        return len(self.edges)

    @property
    def nodes(self) -> range:
        return range(1, self.M + 1)

    def degree(self, i: int) -> int:
        return len(neighbors(self, i))

    def out_neighbors(self, i: int) -> list[int]:
        """Tails of the edges headed at ``i``, ascending."""
        _check_node(self, i)
        return sorted(t for h, t in self.edges if h == i)


@dataclass(frozen=True)
class Bipartition:
    class_one: frozenset[int]
    class_two: frozenset[int]

    def class_of(self, i: int) -> int:
        return 1 if i in self.class_one else 2


def build_graph(M: int, edges: Iterable[Sequence[int]]) -> Graph:
    if int(M) != M or M < 1:
        raise GraphError(f"node count must be a positive integer, got {M!r}")
    M = int(M)
    seen: set[frozenset[int]] = set()
    oriented: list[tuple[int, int]] = []
    for e in edges:
        if len(e) != 2:
            raise GraphError(f"edge {tuple(e)!r} must be a pair of node ids")
        i, j = int(e[0]), int(e[1])
        if not (1 <= i <= M and 1 <= j <= M):
            raise GraphError(f"edge ({i}, {j}) references a node outside 1..{M}")
        if i == j:
            raise GraphError(f"edge ({i}, {j}) is a self-loop")
        key = frozenset((i, j))
        if key in seen:
            raise GraphError(f"edge ({i}, {j}) duplicates an existing edge")
        seen.add(key)
        oriented.append((i, j))
    return Graph(M, tuple(oriented))


def _check_node(g: Graph, i: int) -> None:
    if not (1 <= i <= g.M):
        raise GraphError(f"node {i} is outside 1..{g.M}")


def neighbors(g: Graph, i: int) -> frozenset[int]:
    _check_node(g, i)
    return g._adjacency[i]


def incidence_matrix(g: Graph) -> np.ndarray:
    D = np.zeros((g.M, g.N))
    for col, (head, tail) in enumerate(g.edges):
        D[head - 1, col] = 1.0
        D[tail - 1, col] = -1.0
    return D


def numerical_rank(A: np.ndarray, rtol: float = RANK_RTOL) -> int:
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def check_weak_connectivity(g: Graph) -> tuple[bool, int]:
    """Return ``(connected, rank(D))`` for the undirected view of ``g``."""
    seen = {1}
    queue = deque([1])
    while queue:
        i = queue.popleft()
        for j in g._adjacency[i]:
            if j not in seen:
                seen.add(j)
                queue.append(j)
    return len(seen) == g.M, numerical_rank(incidence_matrix(g))


def bipartition(g: Graph) -> Bipartition:
    """Two-colour ``g`` by BFS from node 1 (which always lands in class one)."""
    connected, _ = check_weak_connectivity(g)
    if not connected:
        raise GraphError("bipartition requires a weakly connected graph")
    colour = {1: 1}
    queue = deque([1])
    while queue:
        i = queue.popleft()
        for j in sorted(g._adjacency[i]):
            if j not in colour:
                colour[j] = 3 - colour[i]
                queue.append(j)
    for i, j in g.edges:
        if colour[i] == colour[j]:
            raise NotBipartiteError(f"graph is not bipartite: edge ({i}, {j}) closes an odd cycle")
    one = frozenset(i for i, c in colour.items() if c == 1)
    two = frozenset(i for i, c in colour.items() if c == 2)
    return Bipartition(one, two)


def chain_graph(M: int) -> Graph:
    return build_graph(M, [(i, i + 1) for i in range(1, M)])


def grid_graph(rows: int, cols: int) -> Graph:
    """Row-major ``rows x cols`` grid; each edge is headed at its lower id."""
    edges = []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c + 1
            if c + 1 < cols:
                edges.append((i, i + 1))
            if r + 1 < rows:
                edges.append((i, i + cols))
    return build_graph(rows * cols, edges)
