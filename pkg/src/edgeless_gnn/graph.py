"""Immutable undirected graphs in compressed adjacency form.

Node ids are dense integers ``0..num_nodes-1``. Every edge is stored in both
directions and each neighbor list is sorted, so edge membership is a binary
search.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph


class _Unreachable:
    """Marker for a target that BFS cannot reach from the source."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "UNREACHABLE"

    def __reduce__(self):
        return (_Unreachable, ())


UNREACHABLE = _Unreachable()


@dataclass(frozen=True, eq=False)
class Graph:
    num_nodes: int
    offsets: np.ndarray
    neighbor_ids: np.ndarray

    def __post_init__(self) -> None:
        self.offsets.setflags(write=False)
        self.neighbor_ids.setflags(write=False)

    @property
    def num_edges(self) -> int:
        return int(self.neighbor_ids.shape[0] // 2)

    @cached_property
    def degrees(self) -> np.ndarray:
        deg = np.diff(self.offsets)
        deg.setflags(write=False)
        return deg

    def neighbors(self, v: int) -> np.ndarray:
        return self.neighbor_ids[self.offsets[v]:self.offsets[v + 1]]

    def has_edge(self, u: int, v: int) -> bool:
        nbrs = self.neighbors(u)
        pos = np.searchsorted(nbrs, v)
        return bool(pos < nbrs.shape[0] and nbrs[pos] == v)

    @cached_property
    def edge_keys(self) -> np.ndarray:
        """Sorted ``u * num_nodes + v`` keys of every directed edge slot."""
        rows = np.repeat(np.arange(self.num_nodes, dtype=np.int64), self.degrees)
        keys = rows * self.num_nodes + self.neighbor_ids
        keys.setflags(write=False)
        return keys

    def has_edges(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Vectorized edge membership for paired arrays of endpoints."""
        keys = np.asarray(u, dtype=np.int64) * self.num_nodes + np.asarray(v, dtype=np.int64)
        pos = np.searchsorted(self.edge_keys, keys)
        pos = np.minimum(pos, max(self.edge_keys.shape[0] - 1, 0))
        if self.edge_keys.shape[0] == 0:
            return np.zeros(keys.shape, dtype=bool)
        return self.edge_keys[pos] == keys

    def edges(self) -> np.ndarray:
        """Undirected edges as an ``(num_edges, 2)`` array with ``u < v``, sorted."""
        rows = np.repeat(np.arange(self.num_nodes, dtype=np.int64), self.degrees)
        mask = rows < self.neighbor_ids
        return np.stack([rows[mask], self.neighbor_ids[mask]], axis=1)

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        data = np.ones(self.neighbor_ids.shape[0], dtype=np.float64)
        return sp.csr_matrix(
            (data, self.neighbor_ids, self.offsets), shape=(self.num_nodes, self.num_nodes)
        )

    @cached_property
    def _two_hop(self) -> sp.csr_matrix:
        # entries of A @ A count common neighbors; keep only distance-2 pairs
        a = self.adjacency
        paths = (a @ a).tocsr()
        paths.setdiag(0)
        paths = paths - paths.multiply(a)
        paths.eliminate_zeros()
        paths.sort_indices()
        return paths

    def two_hop_table(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(offsets, ids, common_neighbor_counts)`` of every node's two-hop set."""
        t = self._two_hop
        return t.indptr, t.indices, t.data

    def induced_subgraph(self, nodes: Iterable[int]) -> Graph:
        """Subgraph on ``nodes``; new id ``i`` is ``nodes[i]``."""
        nodes = np.asarray(list(nodes) if not isinstance(nodes, np.ndarray) else nodes, dtype=np.int64)
        remap = np.full(self.num_nodes, -1, dtype=np.int64)
        remap[nodes] = np.arange(nodes.shape[0])
        e = self.edges()
        keep = (remap[e[:, 0]] >= 0) & (remap[e[:, 1]] >= 0)
        return build_graph(remap[e[keep]], nodes.shape[0])


def build_graph(edge_pairs, num_nodes: int) -> Graph:
    """Build a graph from endpoint pairs, dropping self-loops and duplicates."""
    pairs = np.asarray(edge_pairs, dtype=np.int64).reshape(-1, 2)
    if num_nodes < 0:
        raise ValueError("num_nodes must be nonnegative")
    if pairs.size and (pairs.min() < 0 or pairs.max() >= num_nodes):
        bad = pairs[(pairs < 0).any(axis=1) | (pairs >= num_nodes).any(axis=1)][0]
        raise ValueError(f"edge endpoint out of range for {num_nodes} nodes: {tuple(bad)}")
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    both = np.concatenate([pairs, pairs[:, ::-1]], axis=0)
    keys = np.unique(both[:, 0] * max(num_nodes, 1) + both[:, 1])
    src = keys // max(num_nodes, 1)
    dst = keys % max(num_nodes, 1)
    offsets = np.zeros(num_nodes + 1, dtype=np.int64)
    np.add.at(offsets, src + 1, 1)
    np.cumsum(offsets, out=offsets)
    return Graph(num_nodes=int(num_nodes), offsets=offsets, neighbor_ids=dst.astype(np.int64))


def largest_connected_component(g: Graph) -> tuple[Graph, dict[int, int]]:
    """Keep the largest component; ties go to the one holding the smallest node id."""
    if g.num_nodes == 0:
        raise ValueError("largest_connected_component of an empty graph")
    _, labels = csgraph.connected_components(g.adjacency, directed=False)
    sizes = np.bincount(labels)
    best = sizes.max()
    # labels are numbered in order of their smallest node, but do not rely on it
    candidates = np.flatnonzero(sizes == best)
    first_node = np.array([np.flatnonzero(labels == c)[0] for c in candidates])
    chosen = candidates[np.argmin(first_node)]
    kept = np.flatnonzero(labels == chosen)
    mapping = {int(old): new for new, old in enumerate(kept)}
    return g.induced_subgraph(kept), mapping


def bfs_distances(g: Graph, source: int, targets: Iterable[int]) -> dict:
    """Hop counts from ``source`` to each target, or ``UNREACHABLE``.

    Stops as soon as every target has been reached.
    """
    _check_node(g, source)
    pending = set(int(t) for t in targets)
    for t in pending:
        _check_node(g, t)
    result = {}
    if source in pending:
        result[source] = 0
        pending.discard(source)
    dist = {source: 0}
    queue = deque([source])
    offsets, nbr = g.offsets, g.neighbor_ids
    while queue and pending:
        u = queue.popleft()
        du = dist[u] + 1
        for w in nbr[offsets[u]:offsets[u + 1]].tolist():
            if w not in dist:
                dist[w] = du
                queue.append(w)
                if w in pending:
                    result[w] = du
                    pending.discard(w)
    for t in pending:
        result[t] = UNREACHABLE
    return result


def pair_distances(g: Graph, sources: np.ndarray, targets: np.ndarray, chunk: int = 512) -> np.ndarray:
    """Hop counts for many ``(source, target)`` pairs; ``-1`` marks unreachable.

    Runs one BFS per distinct source in compiled code, ``chunk`` sources at a time.
    """
    sources = np.asarray(sources, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    out = np.empty(sources.shape[0], dtype=np.int64)
    uniq, inverse = np.unique(sources, return_inverse=True)
    for start in range(0, uniq.shape[0], chunk):
        block = uniq[start:start + chunk]
        d = csgraph.shortest_path(g.adjacency, method="D", unweighted=True, directed=False, indices=block)
        sel = (inverse >= start) & (inverse < start + block.shape[0])
        vals = d[inverse[sel] - start, targets[sel]]
        out[sel] = np.where(np.isinf(vals), -1, vals).astype(np.int64)
    return out


def two_hop_neighbors(g: Graph, v: int) -> set[int]:
    """Nodes at shortest-path distance exactly 2 from ``v``."""
    _check_node(g, v)
    offsets, ids, _ = g.two_hop_table()
    return set(ids[offsets[v]:offsets[v + 1]].tolist())


def jaccard(g: Graph, u: int, v: int) -> float:
    """Jaccard similarity of the one-hop neighbor sets of ``u`` and ``v``."""
    _check_node(g, u)
    _check_node(g, v)
    nu, nv = g.neighbors(u), g.neighbors(v)
    common = np.intersect1d(nu, nv, assume_unique=True).shape[0]
    union = nu.shape[0] + nv.shape[0] - common
    return common / union if union else 0.0


def jaccard_from_common(g: Graph, u: np.ndarray, v: np.ndarray, common: np.ndarray) -> np.ndarray:
    """Vectorized Jaccard given precomputed common-neighbor counts."""
    deg = g.degrees
    union = deg[u] + deg[v] - common
    return np.divide(common, union, out=np.zeros(union.shape, dtype=np.float64), where=union > 0)


def is_connected(g: Graph) -> bool:
    if g.num_nodes == 0:
        return True
    n, _ = csgraph.connected_components(g.adjacency, directed=False)
    return n == 1


def _check_node(g: Graph, v: int) -> None:
    if not 0 <= v < g.num_nodes:
        raise IndexError(f"node {v} out of range for graph with {g.num_nodes} nodes")
