"""Quadruplet sampling, node splits that create edgeless nodes, attribute masking."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graph import Graph, jaccard_from_common, pair_distances
from .knn import AttributeMatrix

NONE = -1
MAX_NEGATIVE_ROUNDS = 64


@dataclass(frozen=True, eq=False)
class QuadrupletBatch:
    """Parallel arrays of ``(anchor, positive, negative, two_hop)`` tuples.

    ``two_hop`` is ``-1`` when the anchor has no two-hop neighbor; ``dsp`` is the
    anchor-negative hop count in the training graph (``-1`` if unreachable);
    ``jaccard`` is the anchor/two-hop Jaccard (0 when there is no two-hop node).
    """

    anchor: np.ndarray
    positive: np.ndarray
    negative: np.ndarray
    two_hop: np.ndarray
    dsp: np.ndarray
    jaccard: np.ndarray

    def __len__(self) -> int:
        return int(self.anchor.shape[0])

    def __getitem__(self, idx) -> QuadrupletBatch:
        return QuadrupletBatch(self.anchor[idx], self.positive[idx], self.negative[idx],
                               self.two_hop[idx], self.dsp[idx], self.jaccard[idx])

    def tuples(self) -> list[tuple[int, int, int, int | None]]:
        return [(int(a), int(p), int(n), None if t < 0 else int(t))
                for a, p, n, t in zip(self.anchor, self.positive, self.negative, self.two_hop)]

    def minibatches(self, size: int):
        """Contiguous chunks of at most ``size`` quadruplets."""
        if size < 1:
            raise ValueError("minibatch size must be >= 1")
        for start in range(0, len(self), size):
            yield self[start:start + size]


@dataclass(frozen=True)
class SplitSpec:
    train_ids: tuple[int, ...]
    val_ids: tuple[int, ...]
    test_ids: tuple[int, ...]
    seed: int = 0

    @property
    def num_nodes(self) -> int:
        return len(self.train_ids) + len(self.val_ids) + len(self.test_ids)

    @property
    def edgeless_ids(self) -> tuple[int, ...]:
        return self.val_ids + self.test_ids

    def validate(self, num_nodes: int | None = None) -> None:
        everything = self.train_ids + self.val_ids + self.test_ids
        if len(set(everything)) != len(everything):
            raise ValueError("split sets overlap")
        n = self.num_nodes if num_nodes is None else num_nodes
        if set(everything) != set(range(n)):
            raise ValueError(f"split does not cover nodes 0..{n - 1} exactly")


def split_nodes(num_nodes: int, ratios=(0.85, 0.05, 0.10), seed: int = 0) -> SplitSpec:
    """Random node split: floor sizes for train and validation, remainder to test."""
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError("ratios must be three positive numbers")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    n_train = math.floor(ratios[0] * num_nodes)
    n_val = math.floor(ratios[1] * num_nodes)
    n_test = num_nodes - n_train - n_val
    if min(n_train, n_val, n_test) <= 0:
        raise ValueError(f"split of {num_nodes} nodes by {ratios} leaves a set empty")
    perm = np.random.default_rng(seed).permutation(num_nodes)
    return SplitSpec(
        tuple(int(v) for v in perm[:n_train]),
        tuple(int(v) for v in perm[n_train:n_train + n_val]),
        tuple(int(v) for v in perm[n_train + n_val:]),
        seed,
    )


def make_edgeless_scenario(g: Graph, split: SplitSpec) -> tuple[Graph, np.ndarray]:
    """Training subgraph (ids remapped in ``train_ids`` order) and the hidden edges.

    Hidden edges are every edge of ``g`` touching a validation or test node, in
    original ids with ``u < v``.
    """
    train = np.asarray(split.train_ids, dtype=np.int64)
    g_train = g.induced_subgraph(train)
    in_train = np.zeros(g.num_nodes, dtype=bool)
    in_train[train] = True
    e = g.edges()
    hidden = e[~(in_train[e[:, 0]] & in_train[e[:, 1]])]
    return g_train, hidden


def sample_epoch_batch(g_train: Graph, seed: int) -> QuadrupletBatch:
    """One quadruplet per undirected edge of ``g_train``.

    The smaller endpoint is the anchor unless a fair coin swaps the roles. The
    negative is uniform over the anchor's non-neighbors; the two-hop node is
    uniform over the anchor's distance-2 set.
    """
    n = g_train.num_nodes
    edges = g_train.edges()
    if edges.shape[0] == 0:
        raise ValueError("training graph has no edges")
    rng = np.random.default_rng(seed)
    swap = rng.random(edges.shape[0]) < 0.5
    anchor = np.where(swap, edges[:, 1], edges[:, 0])
    positive = np.where(swap, edges[:, 0], edges[:, 1])

    deg = g_train.degrees
    if np.any(deg[anchor] >= n - 1):
        bad = int(anchor[deg[anchor] >= n - 1][0])
        raise ValueError(f"node {bad} is adjacent to every other node; no negative exists")
    negative = np.full(anchor.shape[0], -1, dtype=np.int64)
    todo = np.arange(anchor.shape[0])
    for _ in range(MAX_NEGATIVE_ROUNDS):
        cand = rng.integers(0, n, size=todo.shape[0])
        ok = (cand != anchor[todo]) & ~g_train.has_edges(anchor[todo], cand)
        negative[todo[ok]] = cand[ok]
        todo = todo[~ok]
        if todo.shape[0] == 0:
            break
    for q in todo:
        # dense anchors: draw from the explicit complement instead of rejecting forever
        allowed = np.setdiff1d(np.arange(n), np.append(g_train.neighbors(anchor[q]), anchor[q]))
        negative[q] = allowed[rng.integers(0, allowed.shape[0])]

    t_off, t_ids, t_common = g_train.two_hop_table()
    counts = np.diff(t_off)[anchor]
    pick = np.floor(rng.random(anchor.shape[0]) * np.maximum(counts, 1)).astype(np.int64)
    slot = t_off[anchor] + pick
    has_t = counts > 0
    two_hop = np.where(has_t, t_ids[np.where(has_t, slot, 0)] if t_ids.size else NONE, NONE)
    common = np.where(has_t, t_common[np.where(has_t, slot, 0)] if t_ids.size else 0, 0)
    jac = np.where(has_t, jaccard_from_common(g_train, anchor, np.where(has_t, two_hop, anchor), common), 0.0)

    dsp = pair_distances(g_train, anchor, negative)
    return QuadrupletBatch(anchor.astype(np.int64), positive.astype(np.int64), negative,
                           two_hop.astype(np.int64), dsp, jac.astype(np.float64))


def mask_attributes(X: AttributeMatrix, fraction: float, seed: int) -> AttributeMatrix:
    """Zero each stored attribute entry independently with probability ``fraction``."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("mask fraction must lie in [0, 1]")
    m = X.rows.copy()
    drop = np.random.default_rng(seed).random(m.data.shape[0]) < fraction
    m.data[drop] = 0.0
    return AttributeMatrix(sp.csr_matrix(m))
