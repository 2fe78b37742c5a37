"""Attribute storage and cosine k-nearest-neighbor computation graphs."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .graph import Graph, build_graph


@dataclass(frozen=True, eq=False)
class AttributeMatrix:
    """Row-major sparse node attributes with cached row norms."""

    rows: sp.csr_matrix
    row_norms: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        m = sp.csr_matrix(self.rows, dtype=np.float64, copy=True)
        m.sum_duplicates()
        m.eliminate_zeros()
        m.sort_indices()
        object.__setattr__(self, "rows", m)
        norms = np.sqrt(np.asarray(m.multiply(m).sum(axis=1)).ravel())
        norms.setflags(write=False)
        object.__setattr__(self, "row_norms", norms)

    @classmethod
    def from_dense(cls, values) -> AttributeMatrix:
        return cls(sp.csr_matrix(np.asarray(values, dtype=np.float64)))

    @classmethod
    def from_triples(cls, nodes, features, values, num_nodes: int, num_features: int) -> AttributeMatrix:
        nodes = np.asarray(nodes, dtype=np.int64)
        features = np.asarray(features, dtype=np.int64)
        if features.size and (features.min() < 0 or features.max() >= num_features):
            raise ValueError("feature index out of range")
        m = sp.coo_matrix((np.asarray(values, dtype=np.float64), (nodes, features)),
                          shape=(num_nodes, num_features))
        return cls(m.tocsr())

    @property
    def num_nodes(self) -> int:
        return self.rows.shape[0]

    @property
    def num_features(self) -> int:
        return self.rows.shape[1]

    def row(self, i: int) -> sp.csr_matrix:
        return self.rows[i]

    def take(self, ids) -> AttributeMatrix:
        return AttributeMatrix(self.rows[np.asarray(ids, dtype=np.int64)])

    def dense(self) -> np.ndarray:
        return self.rows.toarray()

    @staticmethod
    def stack(first: AttributeMatrix, second: AttributeMatrix) -> AttributeMatrix:
        if first.num_features != second.num_features:
            raise ValueError(
                f"feature dimension mismatch: {first.num_features} vs {second.num_features}"
            )
        return AttributeMatrix(sp.vstack([first.rows, second.rows], format="csr"))


def cosine_similarity(a, b) -> float:
    """Cosine of two vectors (dense or sparse); 0 when either has zero norm."""
    a = _as_dense_vector(a)
    b = _as_dense_vector(b)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def _as_dense_vector(v) -> np.ndarray:
    if sp.issparse(v):
        return np.asarray(v.toarray(), dtype=np.float64).ravel()
    return np.asarray(v, dtype=np.float64).ravel()


def _similarity_block(queries: AttributeMatrix, q_ids: slice, base: AttributeMatrix) -> np.ndarray:
    q = queries.rows[q_ids]
    dots = np.asarray((q @ base.rows.T).todense())
    qn = queries.row_norms[q_ids]
    denom = np.outer(qn, base.row_norms)
    return np.divide(dots, denom, out=np.zeros_like(dots), where=denom > 0)


def _top_k_rows(sim: np.ndarray, k: int) -> np.ndarray:
    """Per-row indices of the ``k`` largest entries, ties to the smaller index.

    Returned columns are ordered by descending similarity, then ascending index.
    """
    n_rows, n_cols = sim.shape
    kth = np.partition(sim, n_cols - k, axis=1)[:, n_cols - k][:, None]
    greater = sim > kth
    equal = sim == kth
    need = k - greater.sum(axis=1, keepdims=True)
    take = greater | (equal & (np.cumsum(equal, axis=1) <= need))
    rows, cols = np.nonzero(take)
    cols = cols.reshape(n_rows, k)
    vals = np.take_along_axis(sim, cols, axis=1)
    order = np.lexsort((cols, -vals), axis=1)
    return np.take_along_axis(cols, order, axis=1)


def knn_selections(X: AttributeMatrix, k: int, block: int = 1024) -> np.ndarray:
    """``(N, k)`` array of each node's top-k most similar other nodes."""
    n = X.num_nodes
    if n < 2:
        raise ValueError("kNN graph needs at least two nodes")
    if k < 1 or k >= n:
        raise ValueError(f"k must satisfy 1 <= k < num_nodes ({n}), got {k}")
    out = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, block):
        stop = min(start + block, n)
        sim = _similarity_block(X, slice(start, stop), X)
        sim[np.arange(stop - start), np.arange(start, stop)] = -np.inf
        out[start:stop] = _top_k_rows(sim, k)
    return out


def build_knng(X: AttributeMatrix, k: int = 3) -> Graph:
    """Undirected kNN graph: an edge wherever either endpoint selected the other."""
    sel = knn_selections(X, k)
    src = np.repeat(np.arange(X.num_nodes, dtype=np.int64), k)
    return build_graph(np.stack([src, sel.ravel()], axis=1), X.num_nodes)


def extension_selections(X: AttributeMatrix, X_new: AttributeMatrix, k: int, block: int = 1024) -> np.ndarray:
    """``(M, k)`` top-k base nodes (ids into ``X``) for each new node."""
    if X.num_features != X_new.num_features:
        raise ValueError(
            f"feature dimension mismatch: {X.num_features} vs {X_new.num_features}"
        )
    if k < 1 or k > X.num_nodes:
        raise ValueError(f"k must satisfy 1 <= k <= {X.num_nodes}, got {k}")
    m = X_new.num_nodes
    out = np.empty((m, k), dtype=np.int64)
    for start in range(0, m, block):
        stop = min(start + block, m)
        out[start:stop] = _top_k_rows(_similarity_block(X_new, slice(start, stop), X), k)
    return out


def extend_knng(g_knn: Graph, X: AttributeMatrix, X_new: AttributeMatrix, k: int = 3) -> Graph:
    """Add new nodes ``N..N+M-1``, each linked to its top-k nodes of the base set."""
    if g_knn.num_nodes != X.num_nodes:
        raise ValueError("g_knn and X disagree on the number of nodes")
    if X.num_features != X_new.num_features:
        raise ValueError(
            f"feature dimension mismatch: {X.num_features} vs {X_new.num_features}"
        )
    n, m = X.num_nodes, X_new.num_nodes
    old = g_knn.edges()
    if m == 0:
        return build_graph(old, n)
    sel = extension_selections(X, X_new, k)
    new_src = np.repeat(np.arange(n, n + m, dtype=np.int64), k)
    pairs = np.concatenate([old, np.stack([new_src, sel.ravel()], axis=1)], axis=0)
    return build_graph(pairs, n + m)
