"""End-to-end glue: split, edgeless scenario, kNN graphs, training, inference, evaluation.

Row conventions: training tensors are indexed in ``split.train_ids`` order;
``Z_all`` rows are ``train_ids`` then ``val_ids`` then ``test_ids``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data_io import DatasetBundle, RunConfig
from .graph import Graph
from .inference import infer_all
from .knn import AttributeMatrix, build_knng, extend_knng
from .metrics import EvalData, att_only_baseline, build_lp_eval_set, evaluate_embeddings
from .models import ModelParams, init_params
from .sampling import SplitSpec, make_edgeless_scenario, mask_attributes
from .trainer import LinkProbe, TrainResult, train


@dataclass(frozen=True, eq=False)
class Scenario:
    bundle: DatasetBundle
    split: SplitSpec
    X: AttributeMatrix
    g_train: Graph
    hidden_edges: np.ndarray
    X_train: AttributeMatrix
    g_knn: Graph
    k: int

    @property
    def train_ids(self) -> np.ndarray:
        return np.asarray(self.split.train_ids, dtype=np.int64)

    def row_ids(self, subset: str = "all") -> np.ndarray:
        """Original node ids of the ``Z_all`` rows for an edgeless subset."""
        parts = [self.split.train_ids]
        if subset in ("all", "val"):
            parts.append(self.split.val_ids)
        if subset in ("all", "test"):
            parts.append(self.split.test_ids)
        if subset not in ("all", "val", "test", "none"):
            raise ValueError(f"unknown edgeless subset {subset!r}")
        return np.asarray(sum(parts, ()), dtype=np.int64)


def prepare(bundle: DatasetBundle, split: SplitSpec, k: int = 3, mask_fraction: float = 0.0,
            mask_seed: int = 0) -> Scenario:
    split.validate(bundle.graph.num_nodes)
    X = bundle.attributes
    if mask_fraction > 0:
        X = mask_attributes(X, mask_fraction, mask_seed)
    g_train, hidden = make_edgeless_scenario(bundle.graph, split)
    X_train = X.take(split.train_ids)
    return Scenario(bundle, split, X, g_train, hidden, X_train, build_knng(X_train, k), k)


def extended_inputs(scn: Scenario, row_ids: np.ndarray) -> tuple[Graph, AttributeMatrix]:
    """Computation graph and attributes over ``row_ids`` (training nodes first)."""
    n = scn.g_train.num_nodes
    X_new = scn.X.take(row_ids[n:])
    return extend_knng(scn.g_knn, scn.X_train, X_new, scn.k), AttributeMatrix.stack(scn.X_train, X_new)


def _position(row_ids: np.ndarray, num_nodes: int) -> np.ndarray:
    pos = np.full(num_nodes, -1, dtype=np.int64)
    pos[row_ids] = np.arange(row_ids.shape[0])
    return pos


def lp_pairs(scn: Scenario, row_ids: np.ndarray, edgeless: tuple[int, ...], seed: int):
    """Link-prediction pairs in row space over the nodes listed in ``row_ids``."""
    pos = _position(row_ids, scn.bundle.graph.num_nodes)
    sub = scn.bundle.graph.induced_subgraph(row_ids)
    hidden = scn.hidden_edges
    is_target = np.zeros(scn.bundle.graph.num_nodes, dtype=bool)
    is_target[np.asarray(edgeless, dtype=np.int64)] = True
    keep = (is_target[hidden[:, 0]] | is_target[hidden[:, 1]]) & (pos[hidden[:, 0]] >= 0) & (pos[hidden[:, 1]] >= 0)
    return build_lp_eval_set(pos[hidden[keep]], sub, pos[np.asarray(edgeless, dtype=np.int64)], seed)


def validation_probe(scn: Scenario, seed: int) -> LinkProbe:
    rows = scn.row_ids("val")
    comp, X_all = extended_inputs(scn, rows)
    return LinkProbe(comp, X_all, lp_pairs(scn, rows, scn.split.val_ids, seed))


def initial_params(cfg: RunConfig, num_features: int) -> ModelParams:
    return init_params(cfg.variant, num_features, cfg.dim, seed=cfg.seed, num_layers=cfg.num_layers,
                       final_activation=cfg.final_activation)


def fit(scn: Scenario, cfg: RunConfig, progress=None) -> TrainResult:
    params = initial_params(cfg, scn.X.num_features)
    probe = validation_probe(scn, cfg.eval_seed) if cfg.early_stopping else None
    return train(cfg.train_config(), scn.g_train, scn.g_knn, scn.X_train, params, probe, progress)


def embed(params: ModelParams, scn: Scenario, subset: str = "all") -> tuple[np.ndarray, np.ndarray]:
    """``(row_ids, Z_all)`` from one forward pass over the extended kNN graph."""
    rows = scn.row_ids(subset)
    comp, X_all = extended_inputs(scn, rows)
    return rows, infer_all(params, comp, X_all)


def target_ids(scn: Scenario, targets: str = "test") -> tuple[int, ...]:
    """``test`` scores the test nodes only; ``edgeless`` scores validation and test nodes."""
    if targets == "test":
        return scn.split.test_ids
    if targets == "edgeless":
        return scn.split.edgeless_ids
    raise ValueError(f"unknown evaluation targets {targets!r}; choose test or edgeless")


def eval_data(scn: Scenario, row_ids: np.ndarray, tasks, seed: int, targets: str = "test") -> EvalData:
    """The classifier trains on training rows and is scored on the target rows."""
    pos = _position(row_ids, scn.bundle.graph.num_nodes)
    ids = target_ids(scn, targets)
    target = np.asarray(ids, dtype=np.int64)
    if np.any(pos[target] < 0):
        raise ValueError(f"embeddings do not cover every {targets} node")
    lp_set = lp_pairs(scn, row_ids, ids, seed) if "lp" in tasks else None
    labels = None
    if scn.bundle.labels is not None:
        labels = scn.bundle.labels[row_ids]
    train_rows = pos[scn.train_ids]
    return EvalData(lp_set, train_rows, pos[target], labels, scn.bundle.num_classes)


def evaluate(Z_all: np.ndarray, scn: Scenario, row_ids: np.ndarray, tasks=("lp", "nc", "cd"),
             seed: int = 0, reg: float = 1e-4, restarts: int = 10, baseline: bool = False,
             targets: str = "test"):
    _require_labels(scn, tasks)
    data = eval_data(scn, row_ids, tasks, seed, targets)
    if baseline:
        return att_only_baseline(scn.X.take(row_ids), data, tasks, seed=seed, reg=reg, restarts=restarts)
    return evaluate_embeddings(Z_all, data, tasks, seed=seed, reg=reg, restarts=restarts)


def _require_labels(scn: Scenario, tasks) -> None:
    if scn.bundle.labels is None:
        for t, name in (("nc", "node_classification"), ("cd", "community_detection")):
            if t in tasks:
                raise ValueError(f"task {name} needs a labels file")
