import numpy as np
import pytest
import scipy.sparse as sp

from edgeless_gnn.knn import (AttributeMatrix, build_knng, cosine_similarity, extend_knng,
                              extension_selections, knn_selections)


def exhaustive_top_k(query, base, k, exclude_self=False):
    """Sort every candidate by (-cosine, index) with plain Python loops."""
    out = []
    for i, q in enumerate(query):
        scored = []
        for j, c in enumerate(base):
            if exclude_self and i == j:
                continue
            nq, nc = np.linalg.norm(q), np.linalg.norm(c)
            s = 0.0 if nq == 0 or nc == 0 else float(np.dot(q, c) / (nq * nc))
            scored.append((-s, j))
        out.append([j for _, j in sorted(scored)[:k]])
    return out


class TestAttributeMatrix:
    def test_norms_cached_exactly(self):
        rng = np.random.default_rng(0)
        dense = rng.normal(size=(8, 5)) * (rng.random((8, 5)) < 0.5)
        X = AttributeMatrix.from_dense(dense)
        np.testing.assert_allclose(X.row_norms, np.linalg.norm(dense, axis=1), rtol=1e-15)

    def test_duplicates_summed_sorted(self):
        X = AttributeMatrix.from_triples([0, 0, 0], [2, 1, 2], [1.0, 2.0, 3.0], 1, 3)
        assert X.rows.indices.tolist() == [1, 2]
        assert X.rows.data.tolist() == [2.0, 4.0]

    def test_feature_range(self):
        with pytest.raises(ValueError):
            AttributeMatrix.from_triples([0], [3], [1.0], 1, 3)


class TestCosine:
    def test_examples(self):
        assert cosine_similarity([1, 0], [1, 1]) == pytest.approx(1 / np.sqrt(2), abs=1e-12)
        assert cosine_similarity([3, 4], [3, 4]) == pytest.approx(1.0)
        assert cosine_similarity([0, 0], [1, 2]) == 0.0

    def test_sparse_input(self):
        a = sp.csr_matrix([[1.0, 0.0, 2.0]])
        assert cosine_similarity(a, np.array([1.0, 0.0, 2.0])) == pytest.approx(1.0)


class TestBuildKnng:
    def test_tie_break_example(self):
        X = AttributeMatrix.from_dense([[1, 0], [1, 0], [0, 1]])
        sel = knn_selections(X, 1)
        assert sel.ravel().tolist() == [1, 0, 0]
        g = build_knng(X, 1)
        assert g.edges().tolist() == [[0, 1], [0, 2]]

    def test_two_nodes(self):
        g = build_knng(AttributeMatrix.from_dense([[1, 2], [2, 1]]), 1)
        assert g.num_edges == 1

    def test_k_too_large(self):
        with pytest.raises(ValueError):
            build_knng(AttributeMatrix.from_dense(np.eye(3)), 3)

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_exhaustive_sort(self, seed):
        dense = np.random.default_rng(seed).normal(size=(50, 10))
        sel = knn_selections(AttributeMatrix.from_dense(dense), 3, block=16)
        assert sel.tolist() == exhaustive_top_k(dense, dense, 3, exclude_self=True)

    def test_zero_rows_still_select(self):
        X = AttributeMatrix.from_dense([[0, 0], [1, 0], [0, 1], [1, 1]])
        sel = knn_selections(X, 2)
        assert sel[0].tolist() == [1, 2]
        assert build_knng(X, 2).degrees.min() >= 2

    def test_deterministic(self):
        dense = np.random.default_rng(1).random((30, 6))
        a = build_knng(AttributeMatrix.from_dense(dense), 3)
        b = build_knng(AttributeMatrix.from_dense(dense), 3)
        assert np.array_equal(a.neighbor_ids, b.neighbor_ids)


class TestExtendKnng:
    def setup_method(self):
        rng = np.random.default_rng(7)
        self.base = rng.normal(size=(40, 8))
        self.new = rng.normal(size=(10, 8))
        self.X = AttributeMatrix.from_dense(self.base)
        self.g = build_knng(self.X, 3)

    def test_empty_extension(self):
        out = extend_knng(self.g, self.X, AttributeMatrix.from_dense(np.zeros((0, 8))), 3)
        assert np.array_equal(out.neighbor_ids, self.g.neighbor_ids)

    def test_identical_attributes(self):
        new = AttributeMatrix.from_dense(self.base[5:6])
        out = extend_knng(self.g, self.X, new, 1)
        assert out.neighbors(40).tolist() == [5]

    def test_matches_exhaustive(self):
        sel = extension_selections(self.X, AttributeMatrix.from_dense(self.new), 3)
        assert sel.tolist() == exhaustive_top_k(self.new, self.base, 3)
        out = extend_knng(self.g, self.X, AttributeMatrix.from_dense(self.new), 3)
        for m in range(10):
            assert set(out.neighbors(40 + m).tolist()) == set(sel[m].tolist())

    def test_restriction_and_no_new_new_edges(self):
        out = extend_knng(self.g, self.X, AttributeMatrix.from_dense(self.new), 3)
        assert np.array_equal(out.induced_subgraph(range(40)).neighbor_ids, self.g.neighbor_ids)
        e = out.edges()
        assert not np.any((e[:, 0] >= 40) & (e[:, 1] >= 40))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            extend_knng(self.g, self.X, AttributeMatrix.from_dense(np.ones((2, 5))), 3)
