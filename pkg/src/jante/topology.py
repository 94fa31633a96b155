"""Finite connected undirected graphs the process runs on.

Nodes are 0-based here. The edge-list text format read and written by
:func:`read_edge_list` / :func:`write_edge_list` is 1-based::

    N E
    u v
    ...
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from functools import cached_property, reduce
from pathlib import Path

import numpy as np

from jante.errors import (
    DisconnectedGraphError,
    DuplicateEdgeError,
    InvalidSizeError,
    NodeIndexError,
    SelfLoopError,
    TopologyError,
)


@dataclass(frozen=True)
class Topology:
    node_count: int
    adjacency: tuple[tuple[int, ...], ...]
    kind: str = "general"

    def __post_init__(self):
        _validate(self.node_count, self.adjacency, self.kind)

    @property
    def n(self) -> int:
        return self.node_count

    def neighbors(self, v: int) -> list[int]:
        return neighbors(self, v)

    def degree(self, v: int) -> int:
        return len(self.neighbors(v))

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.array([len(a) for a in self.adjacency], dtype=np.int64)

    @cached_property
    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u, nb in enumerate(self.adjacency) for v in nb if u < v]

    @property
    def is_cycle(self) -> bool:
        return self.kind == "cycle"

    @cached_property
    def leaves(self) -> list[int]:
        """Degree-1 nodes; convergence may fail on graphs that have them."""
        return [v for v, nb in enumerate(self.adjacency) if len(nb) == 1]

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        indptr = np.zeros(self.node_count + 1, dtype=np.int64)
        indptr[1:] = np.cumsum(self.degrees)
        indices = np.array([v for nb in self.adjacency for v in nb], dtype=np.int64)
        return indptr, indices

    @cached_property
    def padded_neighbors(self) -> np.ndarray:
        """(N, max_degree) neighbour table padded with the ghost index N."""
        width = int(self.degrees.max())
        table = np.full((self.node_count, width), self.node_count, dtype=np.int64)
        for v, nb in enumerate(self.adjacency):
            table[v, : len(nb)] = nb
        return table

    @cached_property
    def degree_lcm(self) -> int:
        return reduce(math.lcm, (int(d) for d in self.degrees), 1)

    def descriptor(self) -> dict:
        if self.is_cycle:
            return {"cycle": self.node_count}
        return {"n": self.node_count, "edges": [[u + 1, v + 1] for u, v in self.edges]}


def _validate(n, adjacency, kind):
    if kind not in ("cycle", "general"):
        raise TopologyError(f"unknown topology kind {kind!r}")
    if kind == "cycle" and n < 3:
        raise InvalidSizeError(f"a cycle needs at least 3 nodes, got {n}")
    if n < 2:
        raise InvalidSizeError(f"a graph needs at least 2 nodes, got {n}")
    if len(adjacency) != n:
        raise TopologyError(f"adjacency has {len(adjacency)} rows for {n} nodes")
    for v, nb in enumerate(adjacency):
        if list(nb) != sorted(set(nb)):
            raise DuplicateEdgeError(f"neighbour list of node {v} is not sorted and unique")
        for u in nb:
            if not 0 <= u < n:
                raise NodeIndexError(f"neighbour {u} of node {v} out of range")
            if u == v:
                raise SelfLoopError(f"self-loop at node {v}")
            if v not in adjacency[u]:
                raise TopologyError(f"adjacency not symmetric: {v}->{u}")
    if not _connected(n, adjacency):
        raise DisconnectedGraphError("graph is not connected")


def _connected(n, adjacency) -> bool:
    seen = {0}
    queue = deque([0])
    while queue:
        v = queue.popleft()
        for u in adjacency[v]:
            if u not in seen:
                seen.add(u)
                queue.append(u)
    return len(seen) == n


def cycle(n: int) -> Topology:
    if n < 3:
        raise InvalidSizeError(f"a cycle needs at least 3 nodes, got {n}")
    adjacency = tuple(tuple(sorted({(i - 1) % n, (i + 1) % n})) for i in range(n))
    return Topology(n, adjacency, "cycle")


def from_edge_list(n: int, edges) -> Topology:
    """Build a general graph from 0-based ``(u, v)`` pairs.

    Raises a distinct :class:`TopologyError` subclass for each kind of bad
    input: self-loop, duplicate edge, out-of-range index, disconnected graph.
    """
    if n < 2:
        raise InvalidSizeError(f"a graph needs at least 2 nodes, got {n}")
    nbrs: list[set[int]] = [set() for _ in range(n)]
    for u, v in edges:
        u, v = int(u), int(v)
        if not (0 <= u < n and 0 <= v < n):
            raise NodeIndexError(f"edge ({u}, {v}) out of range for n={n}")
        if u == v:
            raise SelfLoopError(f"self-loop at node {u}")
        if v in nbrs[u]:
            raise DuplicateEdgeError(f"duplicate edge ({u}, {v})")
        nbrs[u].add(v)
        nbrs[v].add(u)
    return Topology(n, tuple(tuple(sorted(s)) for s in nbrs), "general")


def counterexample_graph() -> Topology:
    """Six-node graph on which {0,1}-valued dynamics never absorb.

    Path v0-v1-v2-v3, plus v4 joined to v0 and v1, and v5 joined to v2 and v3.
    """
    return from_edge_list(6, [(0, 1), (1, 2), (2, 3), (4, 0), (4, 1), (5, 2), (5, 3)])


def neighbors(t: Topology, v: int) -> list[int]:
    if not 0 <= v < t.node_count:
        raise NodeIndexError(f"node {v} out of range for N={t.node_count}")
    return list(t.adjacency[v])


def read_edge_list(path) -> Topology:
    lines = [ln.split() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln and not ln[0].startswith("#")]
    if not lines or len(lines[0]) != 2:
        raise TopologyError(f"{path}: first line must be 'N E'")
    n, e = int(lines[0][0]), int(lines[0][1])
    body = lines[1:]
    if len(body) != e:
        raise TopologyError(f"{path}: header announces {e} edges, found {len(body)}")
    edges = []
    for row in body:
        if len(row) != 2:
            raise TopologyError(f"{path}: malformed edge line {' '.join(row)!r}")
        edges.append((int(row[0]) - 1, int(row[1]) - 1))
    return from_edge_list(n, edges)


def write_edge_list(t: Topology, path) -> None:
    rows = [f"{t.node_count} {len(t.edges)}"]
    rows += [f"{u + 1} {v + 1}" for u, v in t.edges]
    Path(path).write_text("\n".join(rows) + "\n")


def from_descriptor(desc: dict) -> Topology:
    """Inverse of :meth:`Topology.descriptor`."""
    if "cycle" in desc:
        return cycle(int(desc["cycle"]))
    try:
        n = int(desc["n"])
        edges = [(int(u) - 1, int(v) - 1) for u, v in desc["edges"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise TopologyError(f"bad topology descriptor {desc!r}") from exc
    return from_edge_list(n, edges)
