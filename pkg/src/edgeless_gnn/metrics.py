"""Downstream evaluation: link prediction, node classification, community detection."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logsumexp
from scipy.stats import rankdata

from .graph import Graph


@dataclass(frozen=True, eq=False)
class ScoredPairs:
    pairs: np.ndarray
    labels: np.ndarray
    scores: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.pairs.shape[0] != self.labels.shape[0]:
            raise ValueError("pairs and labels differ in length")
        if self.scores is not None and self.scores.shape[0] != self.labels.shape[0]:
            raise ValueError("pairs and scores differ in length")

    def with_scores(self, scores: np.ndarray) -> ScoredPairs:
        return ScoredPairs(self.pairs, self.labels, np.asarray(scores, dtype=np.float64))


# ---------------------------------------------------------------- link prediction


def score_links(Z: np.ndarray, pairs) -> np.ndarray:
    """``sigmoid(<z_u, z_v>)`` for each requested pair only."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    Z = np.asarray(Z, dtype=np.float64)
    return expit(np.einsum("ij,ij->i", Z[pairs[:, 0]], Z[pairs[:, 1]]))


def average_precision(scores, labels) -> float:
    """Mean precision at the rank of each positive, ranking by descending score.

    Equal scores keep their input order.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ValueError("average precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    hits = labels[order]
    ranks = np.flatnonzero(hits) + 1
    return float(np.mean(np.arange(1, n_pos + 1) / ranks))


def auc(scores, labels) -> float:
    """Probability a random positive outscores a random negative (ties count 1/2)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both positive and negative examples")
    ranks = rankdata(scores, method="average")
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def build_lp_eval_set(hidden_edges, g_full: Graph, edgeless_ids, seed: int) -> ScoredPairs:
    """Hidden edges as positives plus as many sampled non-edges touching an edgeless node."""
    pos = np.asarray(hidden_edges, dtype=np.int64).reshape(-1, 2)
    if pos.shape[0] == 0:
        raise ValueError("no hidden edges to evaluate")
    n = g_full.num_nodes
    edgeless = np.zeros(n, dtype=bool)
    edgeless[np.asarray(list(edgeless_ids), dtype=np.int64)] = True
    m = int(edgeless.sum())
    candidate_pairs = n * (n - 1) // 2 - (n - m) * (n - m - 1) // 2
    e = g_full.edges()
    incident = int(np.sum(edgeless[e[:, 0]] | edgeless[e[:, 1]]))
    need = pos.shape[0]
    if candidate_pairs - incident < need:
        raise ValueError(
            f"only {candidate_pairs - incident} non-edges touch an edgeless node; {need} needed"
        )
    rng = np.random.default_rng(seed)
    chosen: dict[int, None] = {}
    while len(chosen) < need:
        batch = max(2 * (need - len(chosen)), 64)
        u = rng.integers(0, n, size=batch)
        v = rng.integers(0, n, size=batch)
        ok = (u != v) & (edgeless[u] | edgeless[v])
        u, v = u[ok], v[ok]
        ok = ~g_full.has_edges(u, v)
        lo, hi = np.minimum(u[ok], v[ok]), np.maximum(u[ok], v[ok])
        for key in (lo * n + hi).tolist():
            if key not in chosen:
                chosen[key] = None
                if len(chosen) == need:
                    break
    keys = np.fromiter(chosen.keys(), dtype=np.int64, count=need)
    neg = np.stack([keys // n, keys % n], axis=1)
    pairs = np.concatenate([pos, neg], axis=0)
    labels = np.concatenate([np.ones(need, dtype=np.int64), np.zeros(need, dtype=np.int64)])
    return ScoredPairs(pairs, labels)


# ---------------------------------------------------------------- classification


def f1_scores(y_true, y_pred) -> tuple[float, float]:
    """``(macro_f1, micro_f1)`` for single-label predictions.

    Macro averages over the classes present in ``y_true``.
    """
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    classes = np.unique(y_true)
    f1 = []
    for c in classes:
        tp = np.sum((y_pred == c) & (y_true == c))
        fp = np.sum((y_pred == c) & (y_true != c))
        fn = np.sum((y_pred != c) & (y_true == c))
        denom = 2 * tp + fp + fn
        f1.append(2 * tp / denom if denom else 0.0)
    micro = float(np.mean(y_true == y_pred))
    return float(np.mean(f1)), micro


def f1_from_confusion(confusion) -> tuple[float, float]:
    """Macro/micro F1 from a confusion matrix with truth on rows."""
    c = np.asarray(confusion, dtype=np.int64)
    y_true = np.repeat(np.repeat(np.arange(c.shape[0]), c.shape[1]), c.ravel())
    y_pred = np.repeat(np.tile(np.arange(c.shape[1]), c.shape[0]), c.ravel())
    return f1_scores(y_true, y_pred)


class SoftmaxRegression:
    """Multinomial logistic regression with an L2 penalty on the weights."""

    def __init__(self, reg: float = 1e-4, tol: float = 1e-6, max_iter: int = 2000):
        self.reg = reg
        self.tol = tol
        self.max_iter = max_iter

    def _objective(self, theta, X, Y):
        n, f = X.shape
        c = Y.shape[1]
        W = theta[:f * c].reshape(f, c)
        bias = theta[f * c:]
        logits = X @ W + bias
        log_p = logits - logsumexp(logits, axis=1, keepdims=True)
        loss = -np.sum(Y * log_p) / n + 0.5 * self.reg * np.sum(W * W)
        err = (np.exp(log_p) - Y) / n
        gW = X.T @ err + self.reg * W
        gb = err.sum(axis=0)
        return loss, np.concatenate([gW.ravel(), gb])

    def fit(self, X, y, num_classes: int | None = None) -> SoftmaxRegression:
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        c = int(num_classes if num_classes is not None else y.max() + 1)
        if c < 2:
            raise ValueError("classification needs at least two classes")
        Y = np.eye(c)[y]
        theta0 = np.zeros(X.shape[1] * c + c)
        res = minimize(self._objective, theta0, args=(X, Y), jac=True, method="L-BFGS-B",
                       options={"gtol": self.tol, "maxiter": self.max_iter})
        f = X.shape[1]
        self.coef_ = res.x[:f * c].reshape(f, c)
        self.intercept_ = res.x[f * c:]
        self.n_iter_ = res.nit
        return self

    def predict(self, X) -> np.ndarray:
        return np.argmax(np.asarray(X, dtype=np.float64) @ self.coef_ + self.intercept_, axis=1)


def logistic_classify(train_Z, train_labels, test_Z, test_labels, reg: float = 1e-4,
                      seed: int = 0, max_iter: int = 2000) -> tuple[float, float]:
    """Fit on training rows, score on test rows; returns ``(macro_f1, micro_f1)``.

    The solver is deterministic, so ``seed`` only exists for interface symmetry.
    """
    train_labels = np.asarray(train_labels, dtype=np.int64)
    test_labels = np.asarray(test_labels, dtype=np.int64)
    num_classes = int(max(train_labels.max(), test_labels.max()) + 1)
    model = SoftmaxRegression(reg=reg, max_iter=max_iter).fit(train_Z, train_labels, num_classes)
    return f1_scores(test_labels, model.predict(test_Z))


# ---------------------------------------------------------------- clustering


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def contingency(a, b) -> np.ndarray:
    _, ia = np.unique(np.asarray(a), return_inverse=True)
    _, ib = np.unique(np.asarray(b), return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    return table


def nmi_from_contingency(table) -> float:
    """NMI normalized by the arithmetic mean of the two entropies."""
    table = np.asarray(table, dtype=np.float64)
    total = table.sum()
    h_a = _entropy(table.sum(axis=1))
    h_b = _entropy(table.sum(axis=0))
    if h_a == 0.0 or h_b == 0.0:
        return 0.0
    pij = table / total
    outer = np.outer(table.sum(axis=1), table.sum(axis=0)) / total**2
    nz = pij > 0
    mi = float(np.sum(pij[nz] * np.log(pij[nz] / outer[nz])))
    return float(np.clip(mi / (0.5 * (h_a + h_b)), 0.0, 1.0))


def nmi(labels_a, labels_b) -> float:
    return nmi_from_contingency(contingency(labels_a, labels_b))


@dataclass
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    inertia: float
    inertia_trace: list[float]


def _kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total == 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(X[idx])
        d2 = np.minimum(d2, np.sum((X - X[idx]) ** 2, axis=1))
    return np.array(centers)


def _sq_dists(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d = (X * X).sum(axis=1)[:, None] - 2.0 * X @ centers.T + (centers * centers).sum(axis=1)[None, :]
    return np.maximum(d, 0.0)


def kmeans_single(X: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 300) -> KMeansResult:
    """k-means++ seeding, then Lloyd steps until the assignment stops changing."""
    centers = _kmeans_pp(X, k, rng)
    labels = np.full(X.shape[0], -1)
    trace: list[float] = []
    for _ in range(max_iter):
        d = _sq_dists(X, centers)
        new = np.argmin(d, axis=1)
        trace.append(float(d[np.arange(X.shape[0]), new].sum()))
        if np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            members = labels == c
            if members.any():
                centers[c] = X[members].mean(axis=0)
            else:
                # refill an empty cluster with the point worst served by its center
                far = int(np.argmax(d[np.arange(X.shape[0]), labels]))
                centers[c] = X[far]
    d = _sq_dists(X, centers)
    labels = np.argmin(d, axis=1)
    inertia = float(d[np.arange(X.shape[0]), labels].sum())
    return KMeansResult(labels, centers, inertia, trace)


def kmeans(X, num_clusters: int, seed: int = 0, restarts: int = 10, max_iter: int = 300) -> KMeansResult:
    """Best-inertia run over ``restarts`` seeded k-means++ initializations."""
    X = np.asarray(X, dtype=np.float64)
    if num_clusters < 2:
        raise ValueError("num_clusters must be >= 2")
    if np.unique(X, axis=0).shape[0] < num_clusters:
        raise ValueError(f"fewer distinct points than {num_clusters} clusters")
    seeds = np.random.SeedSequence(seed).spawn(restarts)
    best = None
    for s in seeds:
        res = kmeans_single(X, num_clusters, np.random.default_rng(s), max_iter)
        if best is None or res.inertia < best.inertia:
            best = res
    return best


def kmeans_nmi(Z_all, num_clusters: int, edgeless_ids, true_labels, seed: int = 0,
               restarts: int = 10) -> float:
    """Cluster every row of ``Z_all``, then score NMI on the edgeless rows only.

    ``true_labels`` is aligned with ``edgeless_ids``.
    """
    res = kmeans(Z_all, num_clusters, seed=seed, restarts=restarts)
    ids = np.asarray(list(edgeless_ids), dtype=np.int64)
    return nmi(res.labels[ids], np.asarray(true_labels))


# ---------------------------------------------------------------- task bundle


@dataclass(frozen=True, eq=False)
class EvalData:
    """Row-aligned evaluation inputs; row ids index the embedding matrix."""

    lp_set: ScoredPairs | None
    train_rows: np.ndarray
    eval_rows: np.ndarray
    labels: np.ndarray | None
    num_classes: int | None


def evaluate_embeddings(Z: np.ndarray, data: EvalData, tasks=("lp", "nc", "cd"), seed: int = 0,
                        reg: float = 1e-4, restarts: int = 10) -> dict[tuple[str, str], float]:
    """Run the requested tasks; returns ``{(task, metric): value}``."""
    out: dict[tuple[str, str], float] = {}
    if "lp" in tasks:
        if data.lp_set is None:
            raise ValueError("link_prediction needs an evaluation pair set")
        scores = score_links(Z, data.lp_set.pairs)
        out[("link_prediction", "ap")] = average_precision(scores, data.lp_set.labels)
        out[("link_prediction", "auc")] = auc(scores, data.lp_set.labels)
    if "nc" in tasks:
        if data.labels is None:
            raise ValueError("node_classification needs node labels")
        macro, micro = logistic_classify(Z[data.train_rows], data.labels[data.train_rows],
                                         Z[data.eval_rows], data.labels[data.eval_rows], reg=reg, seed=seed)
        out[("node_classification", "macro_f1")] = macro
        out[("node_classification", "micro_f1")] = micro
    if "cd" in tasks:
        if data.labels is None or data.num_classes is None:
            raise ValueError("community_detection needs node labels")
        out[("community_detection", "nmi")] = kmeans_nmi(Z, data.num_classes, data.eval_rows,
                                                         data.labels[data.eval_rows], seed=seed,
                                                         restarts=restarts)
    return out


def att_only_baseline(X_all, data: EvalData, tasks=("lp", "nc", "cd"), seed: int = 0,
                      reg: float = 1e-4, restarts: int = 10) -> dict[tuple[str, str], float]:
    """Same tasks with the raw attribute rows standing in for embeddings."""
    rows = X_all.rows if hasattr(X_all, "rows") else X_all
    dense = rows.toarray() if hasattr(rows, "toarray") else np.asarray(rows, dtype=np.float64)
    return evaluate_embeddings(dense, data, tasks, seed=seed, reg=reg, restarts=restarts)
