import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_graph
from edgeless_gnn.metrics import (EvalData, ScoredPairs, att_only_baseline, auc, average_precision,
                                  build_lp_eval_set, evaluate_embeddings, f1_from_confusion, f1_scores,
                                  kmeans, kmeans_nmi, kmeans_single, logistic_classify, nmi,
                                  nmi_from_contingency, score_links)


def brute_ap(scores, labels):
    """Precision at each positive's rank, ranks found by counting, stable on ties."""
    n = len(scores)
    ranks = []
    for i in range(n):
        ahead = sum(1 for j in range(n) if scores[j] > scores[i] or (scores[j] == scores[i] and j < i))
        ranks.append(ahead + 1)
    pos = sorted(ranks[i] for i in range(n) if labels[i])
    return sum((m + 1) / r for m, r in enumerate(pos)) / len(pos)


def brute_auc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    won = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg)
    return won / (len(pos) * len(neg))


def entropy_nmi(table):
    t = np.asarray(table, dtype=float)
    n = t.sum()
    r, c = t.sum(1) / n, t.sum(0) / n
    mi = sum(t[i, j] / n * math.log(t[i, j] / n / (r[i] * c[j]))
             for i in range(t.shape[0]) for j in range(t.shape[1]) if t[i, j] > 0)
    h = lambda p: -sum(x * math.log(x) for x in p if x > 0)  # noqa: E731
    return mi / ((h(r) + h(c)) / 2)


class TestScores:
    def test_orthogonal(self):
        assert score_links(np.array([[1.0, 0], [0, 1.0]]), [(0, 1)])[0] == 0.5

    def test_log_three(self):
        z = np.array([[math.sqrt(math.log(3)), 0.0]] * 2)
        assert score_links(z, [(0, 1)])[0] == pytest.approx(0.75, abs=1e-12)

    def test_dense_oracle(self):
        z = np.random.default_rng(0).normal(size=(15, 4))
        pairs = np.array(list(itertools.combinations(range(15), 2)))
        full = 1 / (1 + np.exp(-z @ z.T))
        np.testing.assert_allclose(score_links(z, pairs), full[pairs[:, 0], pairs[:, 1]], atol=1e-14)


class TestRanking:
    def test_ap_example(self):
        assert average_precision([0.9, 0.8, 0.1], [1, 0, 1]) == pytest.approx(0.8333, abs=1e-4)

    def test_perfect(self):
        assert average_precision([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0
        assert auc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0

    def test_all_equal_auc(self):
        assert auc([0.3] * 6, [1, 0, 1, 0, 0, 1]) == 0.5

    def test_errors(self):
        with pytest.raises(ValueError):
            average_precision([0.1, 0.2], [0, 0])
        with pytest.raises(ValueError):
            auc([0.1, 0.2], [1, 1])

    def test_brute_force_oracles(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = rng.integers(2, 15)
            scores = np.round(rng.random(n), 1)  # coarse rounding forces ties
            labels = rng.random(n) < 0.5
            labels[0], labels[-1] = True, False
            assert average_precision(scores, labels) == pytest.approx(brute_ap(scores, labels), abs=1e-12)
            assert auc(scores, labels) == pytest.approx(brute_auc(scores, labels), abs=1e-12)

    @settings(max_examples=50)
    @given(st.lists(st.integers(-100, 100), min_size=4, max_size=20), st.integers(0, 1000))
    def test_monotone_invariance(self, raw, seed):
        # grid values keep the transform strictly monotone in floating point
        scores = np.array(raw) / 10.0
        labels = np.random.default_rng(seed).random(len(raw)) < 0.5
        labels[0], labels[1] = True, False
        moved = np.exp(scores / 3) * 2 + 1
        assert average_precision(moved, labels) == average_precision(scores, labels)
        assert auc(moved, labels) == pytest.approx(auc(scores, labels), abs=1e-12)


class TestLpEvalSet:
    @pytest.mark.parametrize("seed", range(5))
    def test_construction(self, seed):
        g = random_graph(25, 0.15, seed)
        edgeless = {20, 21, 22, 23, 24}
        e = g.edges()
        hidden = e[np.isin(e[:, 0], list(edgeless)) | np.isin(e[:, 1], list(edgeless))]
        s = build_lp_eval_set(hidden, g, edgeless, seed)
        neg = s.pairs[s.labels == 0]
        assert neg.shape[0] == hidden.shape[0] == int(s.labels.sum())
        assert not np.any(g.has_edges(neg[:, 0], neg[:, 1]))
        assert all(u in edgeless or v in edgeless for u, v in neg.tolist())
        assert len({tuple(p) for p in neg.tolist()}) == neg.shape[0]
        assert np.all(neg[:, 0] != neg[:, 1])

    def test_insufficient(self, triangle):
        with pytest.raises(ValueError, match="needed"):
            build_lp_eval_set([(0, 2), (1, 2)], triangle, {2}, 0)

    def test_empty(self, triangle):
        with pytest.raises(ValueError):
            build_lp_eval_set(np.zeros((0, 2)), triangle, {2}, 0)

    def test_deterministic(self):
        g = random_graph(25, 0.15, 1)
        a = build_lp_eval_set(g.edges()[:5], g, range(20, 25), 3)
        b = build_lp_eval_set(g.edges()[:5], g, range(20, 25), 3)
        assert np.array_equal(a.pairs, b.pairs)

    def test_length_check(self):
        with pytest.raises(ValueError):
            ScoredPairs(np.zeros((3, 2)), np.zeros(2))


class TestF1:
    def test_confusion_example(self):
        macro, micro = f1_from_confusion([[5, 1], [2, 4]])
        assert micro == pytest.approx(0.75)
        assert macro == pytest.approx(0.7483, abs=1e-4)
        assert macro == pytest.approx((10 / 13 + 8 / 11) / 2, abs=1e-12)

    def test_all_correct(self):
        assert f1_scores([0, 1, 2, 1], [0, 1, 2, 1]) == (1.0, 1.0)

    def test_class_missing_from_truth_skipped(self):
        # class 2 only predicted: precision terms change, but it is not averaged
        macro, micro = f1_scores([0, 0, 1, 1], [0, 2, 1, 1])
        assert macro == pytest.approx((2 / 3 + 1.0) / 2)
        assert micro == 0.75

    def test_class_never_predicted_counts_zero(self):
        macro, _ = f1_scores([0, 1, 2], [0, 1, 1])
        assert macro == pytest.approx((1 + 2 / 3 + 0) / 3)

    def test_micro_is_accuracy(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            t, p = rng.integers(0, 4, 30), rng.integers(0, 4, 30)
            assert f1_scores(t, p)[1] == pytest.approx(np.mean(t == p))


class TestLogistic:
    def test_separable_blobs(self):
        rng = np.random.default_rng(0)
        x = np.vstack([rng.normal(-3, 0.5, (40, 2)), rng.normal(3, 0.5, (40, 2))])
        y = np.repeat([0, 1], 40)
        idx = rng.permutation(80)
        tr, te = idx[:60], idx[60:]
        assert logistic_classify(x[tr], y[tr], x[te], y[te])[1] == 1.0

    def test_unseen_test_class(self):
        x = np.array([[0.0], [0.1], [5.0], [5.1], [10.0]])
        macro, micro = logistic_classify(x[:4], [0, 0, 1, 1], x[4:], [2])
        assert micro == 0.0 and macro == 0.0

    def test_one_hot_baseline(self):
        y = np.tile([0, 1, 2], 10)
        X = np.eye(3)[y]
        data = EvalData(None, np.arange(20), np.arange(20, 30), y, 3)
        assert att_only_baseline(X, data, tasks=("nc",))[("node_classification", "micro_f1")] == 1.0


class TestNmi:
    def test_tables(self):
        assert nmi_from_contingency([[3, 0], [0, 3]]) == pytest.approx(1.0)
        assert nmi_from_contingency([[2, 1], [1, 2]]) == pytest.approx(0.0817, abs=1e-4)
        assert nmi_from_contingency([[2, 1], [1, 2]]) == pytest.approx(entropy_nmi([[2, 1], [1, 2]]), abs=1e-12)

    def test_identical_and_constant(self):
        assert nmi([0, 0, 1, 1, 2], [0, 0, 1, 1, 2]) == pytest.approx(1.0)
        assert nmi([0, 0, 0, 0], [0, 1, 0, 1]) == 0.0

    def test_random_tables(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            t = rng.integers(1, 9, size=(3, 4))
            assert nmi_from_contingency(t) == pytest.approx(entropy_nmi(t), abs=1e-12)

    @settings(max_examples=40)
    @given(st.lists(st.integers(0, 3), min_size=6, max_size=30), st.integers(0, 1000))
    def test_symmetric_and_relabel_invariant(self, a, seed):
        a = np.array(a)
        b = np.random.default_rng(seed).integers(0, 3, len(a))
        assert nmi(a, b) == pytest.approx(nmi(b, a), abs=1e-12)
        perm = np.array([2, 0, 3, 1])
        assert nmi(perm[a], b) == pytest.approx(nmi(a, b), abs=1e-12)


class TestKMeans:
    def test_inertia_nonincreasing(self):
        x = np.random.default_rng(0).normal(size=(200, 3))
        for s in range(5):
            trace = kmeans_single(x, 5, np.random.default_rng(s)).inertia_trace
            assert np.all(np.diff(trace) <= 1e-9)

    def test_recovers_blobs(self):
        rng = np.random.default_rng(2)
        centers = np.array([[0, 0], [10, 0], [0, 10]])
        y = np.repeat([0, 1, 2], 30)
        x = centers[y] + rng.normal(scale=0.5, size=(90, 2))
        assert nmi(kmeans(x, 3, seed=0).labels, y) == pytest.approx(1.0)
        subset = np.arange(0, 90, 4)
        assert kmeans_nmi(x, 3, subset, y[subset]) == pytest.approx(1.0)

    def test_too_few_points(self):
        with pytest.raises(ValueError, match="distinct"):
            kmeans(np.ones((5, 2)), 2)

    def test_deterministic(self):
        x = np.random.default_rng(3).normal(size=(50, 2))
        assert np.array_equal(kmeans(x, 4, seed=1).labels, kmeans(x, 4, seed=1).labels)


class TestEvaluate:
    def test_identical_attributes_auc_half(self):
        X = np.ones((6, 3))
        lp = ScoredPairs(np.array([[0, 1], [2, 3], [4, 5], [0, 5]]), np.array([1, 1, 0, 0]))
        data = EvalData(lp, np.arange(3), np.arange(3, 6), None, None)
        assert att_only_baseline(X, data, tasks=("lp",))[("link_prediction", "auc")] == 0.5

    def test_baseline_is_substitution(self):
        rng = np.random.default_rng(4)
        X = rng.random((40, 5))
        y = rng.integers(0, 2, 40)
        lp = ScoredPairs(np.array([[0, 30], [1, 31], [2, 32], [3, 33]]), np.array([1, 0, 1, 0]))
        data = EvalData(lp, np.arange(30), np.arange(30, 40), y, 2)
        assert att_only_baseline(X, data, seed=1) == evaluate_embeddings(X, data, seed=1)

    def test_missing_labels(self):
        data = EvalData(None, np.arange(2), np.arange(2), None, None)
        with pytest.raises(ValueError, match="labels"):
            evaluate_embeddings(np.ones((2, 2)), data, tasks=("nc",))
