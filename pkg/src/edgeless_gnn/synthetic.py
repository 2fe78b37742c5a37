"""Seeded synthetic attributed graphs and forest-fire subgraph sampling."""
from __future__ import annotations

from collections import deque

import numpy as np

from .data_io import DatasetBundle
from .graph import Graph, build_graph
from .knn import AttributeMatrix


def planted_partition(num_nodes: int = 400, num_blocks: int = 4, avg_in_degree: float = 6.0,
                      avg_out_degree: float = 1.5, num_features: int = 200, words_per_node: int = 10,
                      topic_share: float = 0.5, seed: int = 0) -> DatasetBundle:
    """Homophilous block graph with bag-of-words attributes tied to the blocks.

    Each block owns an equal slice of the vocabulary. A node's words come from its
    block's slice with probability ``topic_share`` and from the whole vocabulary
    otherwise. Nodes are assigned to blocks round-robin.
    """
    rng = np.random.default_rng(seed)
    labels = np.arange(num_nodes) % num_blocks
    block_size = num_nodes / num_blocks
    p_in = min(avg_in_degree / max(block_size - 1, 1), 1.0)
    p_out = min(avg_out_degree / max(num_nodes - block_size, 1), 1.0)

    iu, ju = np.triu_indices(num_nodes, k=1)
    same = labels[iu] == labels[ju]
    keep = rng.random(iu.shape[0]) < np.where(same, p_in, p_out)
    pairs = np.stack([iu[keep], ju[keep]], axis=1)
    # a ring within each block guarantees no isolated node
    ring = []
    for c in range(num_blocks):
        members = np.flatnonzero(labels == c)
        ring += list(zip(members, np.roll(members, -1)))
    graph = build_graph(np.concatenate([pairs, np.array(ring, dtype=np.int64).reshape(-1, 2)]), num_nodes)

    vocab = num_features // num_blocks
    rows, cols = [], []
    for v in range(num_nodes):
        topical = rng.random(words_per_node) < topic_share
        words = np.where(topical,
                         labels[v] * vocab + rng.integers(0, vocab, size=words_per_node),
                         rng.integers(0, num_features, size=words_per_node))
        words = np.unique(words)
        rows += [v] * words.shape[0]
        cols += words.tolist()
    X = AttributeMatrix.from_triples(rows, cols, np.ones(len(rows)), num_nodes, num_features)
    names = tuple(str(i) for i in range(num_nodes))
    return DatasetBundle(graph, X, labels.astype(np.int64), names, tuple(str(c) for c in range(num_blocks)))


def forest_fire_sample(g: Graph, size: int, seed: int, forward_prob: float = 0.7) -> np.ndarray:
    """Node ids of a forest-fire sample of ``size`` nodes.

    From each burning node a geometric number of unburned neighbors (mean
    ``p / (1 - p)``) catches fire. When the fire dies out a new random seed node
    is ignited.
    """
    if not 0 < size <= g.num_nodes:
        raise ValueError(f"sample size must be in 1..{g.num_nodes}")
    if not 0.0 <= forward_prob < 1.0:
        raise ValueError("forward_prob must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    burned = np.zeros(g.num_nodes, dtype=bool)
    order: list[int] = []
    queue: deque[int] = deque()
    while len(order) < size:
        if not queue:
            candidates = np.flatnonzero(~burned)
            start = int(candidates[rng.integers(candidates.shape[0])])
            burned[start] = True
            order.append(start)
            queue.append(start)
            continue
        u = queue.popleft()
        nbrs = g.neighbors(u)
        nbrs = nbrs[~burned[nbrs]]
        if nbrs.shape[0] == 0:
            continue
        spread = min(int(rng.geometric(1.0 - forward_prob)) - 1, nbrs.shape[0])
        for w in rng.permutation(nbrs)[:spread].tolist():
            if len(order) >= size:
                break
            burned[w] = True
            order.append(w)
            queue.append(w)
    return np.array(sorted(order), dtype=np.int64)
