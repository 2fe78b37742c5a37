"""Inductive embedding of edgeless nodes with a trained encoder."""
from __future__ import annotations

import numpy as np

from .graph import Graph
from .knn import AttributeMatrix
from .models import ModelParams, forward


def infer_all(params: ModelParams, g_knn_all: Graph, X_all: AttributeMatrix) -> np.ndarray:
    """One forward pass over the extended kNN graph; training rows come first."""
    return forward(params, g_knn_all, X_all)


def select_edgeless(Z_all: np.ndarray, num_train: int) -> np.ndarray:
    if not 0 <= num_train <= Z_all.shape[0]:
        raise ValueError(f"num_train {num_train} outside 0..{Z_all.shape[0]}")
    return Z_all[num_train:]


def select_train(Z_all: np.ndarray, num_train: int) -> np.ndarray:
    return Z_all[:num_train]
