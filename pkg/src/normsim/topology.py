"""Population structure: well-mixed, grid and Watts-Strogatz small-world graphs.

Adjacency is stored CSR-style (``indptr``/``indices``) with each node's
neighbor list sorted ascending. Topologies are immutable once built.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

VON_NEUMANN = "von_neumann"
MOORE = "moore"

_OFFSETS = {
    VON_NEUMANN: [(0, -1), (-1, 0), (1, 0), (0, 1)],
    MOORE: [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)],
}


class TopologyError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Topology:
    node_count: int
    indptr: np.ndarray
    indices: np.ndarray
    kind: str
    params: dict = field(default_factory=dict)

    @classmethod
    def from_neighbor_sets(cls, neighbor_sets, kind: str, **params) -> "Topology":
        n = len(neighbor_sets)
        for u, nbrs in enumerate(neighbor_sets):
            if u in nbrs:
                raise TopologyError(f"self-loop at node {u}")
            for v in nbrs:
                if u not in neighbor_sets[v]:
                    raise TopologyError(f"edge {u}-{v} is not symmetric")
        degrees = np.array([len(s) for s in neighbor_sets], dtype=np.int64)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(degrees, out=indptr[1:])
        indices = np.fromiter(
            (v for nbrs in neighbor_sets for v in sorted(nbrs)), dtype=np.int64, count=int(indptr[-1])
        )
        indptr.setflags(write=False)
        indices.setflags(write=False)
        return cls(n, indptr, indices, kind, dict(params))

    @property
    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, node: int) -> np.ndarray:
        return self.indices[self.indptr[node] : self.indptr[node + 1]]

    @property
    def edges(self) -> np.ndarray:
        """Undirected edges as an ``(E, 2)`` array with u < v, sorted lexicographically."""
        src = np.repeat(np.arange(self.node_count), self.degree)
        keep = src < self.indices
        return np.column_stack([src[keep], self.indices[keep]])

    @property
    def edge_count(self) -> int:
        return int(self.indptr[-1]) // 2

    def closed_neighborhoods(self) -> np.ndarray:
        """``(n, 1 + d)`` array of each node followed by its neighbors; needs a regular graph."""
        deg = self.degree
        if np.any(deg != deg[0]):
            raise TopologyError("closed_neighborhoods needs every node to have the same degree")
        return np.column_stack([np.arange(self.node_count), self.indices.reshape(self.node_count, deg[0])])

    def random_neighbors(self, nodes: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """One uniformly chosen neighbor per entry of ``nodes``."""
        deg = self.degree[nodes]
        if np.any(deg == 0):
            raise TopologyError("cannot pick a neighbor of an isolated node")
        pick = (rng.random(len(nodes)) * deg).astype(np.int64)
        return self.indices[self.indptr[nodes] + pick]


def make_well_mixed(n: int) -> Topology:
    if n < 2:
        raise TopologyError(f"well-mixed population needs at least 2 nodes, got {n}")
    everyone = set(range(n))
    return Topology.from_neighbor_sets([everyone - {u} for u in range(n)], "well_mixed", n=n)


def make_grid(width: int, height: int, neighborhood: str = VON_NEUMANN, wraparound: bool = True) -> Topology:
    """Lattice on ``width * height`` nodes; node index is ``y * width + x``.

    With wraparound the grid is a torus. Tiny tori would produce the same
    neighbor twice (e.g. left == right on width 2); those collapse to one edge.
    """
    if width < 2 or height < 2:
        raise TopologyError(f"grid must be at least 2x2, got {width}x{height}")
    if neighborhood not in _OFFSETS:
        raise TopologyError(f"unknown neighborhood {neighborhood!r}; use {VON_NEUMANN!r} or {MOORE!r}")
    sets = [set() for _ in range(width * height)]
    for y in range(height):
        for x in range(width):
            u = y * width + x
            for dx, dy in _OFFSETS[neighborhood]:
                nx, ny = x + dx, y + dy
                if wraparound:
                    nx, ny = nx % width, ny % height
                elif not (0 <= nx < width and 0 <= ny < height):
                    continue
                v = ny * width + nx
                if v != u:
                    sets[u].add(v)
                    sets[v].add(u)
    return Topology.from_neighbor_sets(
        sets, "grid", width=width, height=height, neighborhood=neighborhood, wraparound=wraparound
    )


def make_small_world(n: int, mean_degree: int, rewire_prob: float, rng: np.random.Generator) -> Topology:
    """Watts-Strogatz graph.

    Ring lattice with ``mean_degree / 2`` neighbors per side, then each lattice
    edge (u, u + j) is rewired with probability ``rewire_prob`` to (u, w) where
    w is drawn uniformly, redrawing until w is neither u nor a current
    neighbor. Edges are visited for j = 1..k/2 outer, u = 0..n-1 inner.
    """
    if mean_degree < 2 or mean_degree % 2:
        raise TopologyError(f"mean_degree must be an even integer >= 2, got {mean_degree}")
    if n <= mean_degree:
        raise TopologyError(f"need n > mean_degree, got n={n}, mean_degree={mean_degree}")
    if not 0 <= rewire_prob <= 1:
        raise TopologyError(f"rewire_prob must lie in [0, 1], got {rewire_prob}")

    half = mean_degree // 2
    sets = [set() for _ in range(n)]
    for u in range(n):
        for j in range(1, half + 1):
            v = (u + j) % n
            sets[u].add(v)
            sets[v].add(u)

    for j in range(1, half + 1):
        coins = rng.random(n)
        for u in range(n):
            if coins[u] >= rewire_prob or len(sets[u]) >= n - 1:
                continue
            v = (u + j) % n
            w = int(rng.integers(n))
            while w == u or w in sets[u]:
                w = int(rng.integers(n))
            sets[u].discard(v)
            sets[v].discard(u)
            sets[u].add(w)
            sets[w].add(u)
    return Topology.from_neighbor_sets(sets, "small_world", n=n, mean_degree=mean_degree, rewire_prob=rewire_prob)


def strength_of_ties(topology: Topology, node: int) -> float:
    d = int(topology.degree[node])
    if d == 0:
        raise TopologyError(f"node {node} is isolated; strength-of-ties is undefined")
    return 1.0 / d


def mean_strength_of_ties(topology: Topology) -> float:
    deg = topology.degree
    if np.any(deg == 0):
        raise TopologyError("graph has isolated nodes")
    return float(np.mean(1.0 / deg))


@dataclass(frozen=True, eq=False)
class Placement:
    """``agent_at_node[v]`` is the agent living on node v."""

    agent_at_node: np.ndarray

    @classmethod
    def identity(cls, n: int) -> "Placement":
        return cls(np.arange(n, dtype=np.int64))

    @property
    def node_of_agent(self) -> np.ndarray:
        inv = np.empty_like(self.agent_at_node)
        inv[self.agent_at_node] = np.arange(self.agent_at_node.shape[0])
        return inv

    def is_bijection(self) -> bool:
        n = self.agent_at_node.shape[0]
        return bool(np.array_equal(np.sort(self.agent_at_node), np.arange(n)))


def mobility_shuffle(placement: Placement, mobility: float, rng: np.random.Generator) -> Placement:
    """Each agent, in ascending index order, swaps nodes with a random other agent with prob ``mobility``.

    Coins and partners are drawn for every agent up front (two blocks) so the
    number of draws does not depend on the outcome.
    """
    if not 0 <= mobility <= 1:
        raise ValueError(f"mobility must lie in [0, 1], got {mobility}")
    n = placement.agent_at_node.shape[0]
    coins = rng.random(n)
    partners = rng.integers(n - 1, size=n) if n > 1 else np.zeros(n, dtype=np.int64)
    partners = partners + (partners >= np.arange(n))
    movers = np.flatnonzero(coins < mobility)
    if movers.size == 0 or n < 2:
        return placement
    at_node = placement.agent_at_node.tolist()
    node_of = placement.node_of_agent.tolist()
    for a in movers.tolist():
        b = int(partners[a])
        na, nb = node_of[a], node_of[b]
        at_node[na], at_node[nb] = b, a
        node_of[a], node_of[b] = nb, na
    return Placement(np.array(at_node, dtype=np.int64))


def write_edge_list(topology: Topology, path: str | os.PathLike) -> None:
    """One ``u v`` pair per line, zero-indexed, u < v."""
    with open(path, "w") as fh:
        for u, v in topology.edges.tolist():
            fh.write(f"{u} {v}\n")
