"""Single-layer (or stacked) message-passing encoders with manual gradients.

Every layer aggregates over ``N(i) ∪ {i}`` on the computation graph and then
applies a learned update:

* GCN:   ``h_i = act(W · Σ_j h_j / sqrt((deg_i+1)(deg_j+1)))``
* SAGE:  ``h_i = act(W · concat(h_i, mean_j h_j))``
* GIN:   ``h_i = act(relu((Σ_j h_j) W1 + b1) W2 + b2)``

Aggregation happens before the weight product, so the cost of a layer grows
with the number of computation-graph edges.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .graph import Graph
from .knn import AttributeMatrix


class Variant(str, enum.Enum):
    GCN = "gcn"
    SAGE_MEAN = "sage"
    GIN = "gin"

    @classmethod
    def parse(cls, value) -> Variant:
        if isinstance(value, Variant):
            return value
        key = str(value).strip().lower()
        aliases = {"sage_mean": "sage", "graphsage": "sage"}
        return cls(aliases.get(key, key))


ACTIVATIONS = ("identity", "relu")


@dataclass(eq=False)
class ModelParams:
    variant: Variant
    in_dim: int
    embedding_dim: int
    num_layers: int = 1
    hidden_dim: int | None = None
    final_activation: str = "identity"
    weights: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.variant = Variant.parse(self.variant)
        if self.hidden_dim is None:
            self.hidden_dim = self.embedding_dim
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        if self.final_activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.final_activation!r}")

    @property
    def per_layer(self) -> int:
        return 4 if self.variant is Variant.GIN else 1

    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.in_dim] + [self.hidden_dim] * (self.num_layers - 1) + [self.embedding_dim]
        return list(zip(dims[:-1], dims[1:]))

    def expected_shapes(self) -> list[tuple[int, ...]]:
        shapes: list[tuple[int, ...]] = []
        for fan_in, fan_out in self.layer_dims():
            if self.variant is Variant.GCN:
                shapes.append((fan_in, fan_out))
            elif self.variant is Variant.SAGE_MEAN:
                shapes.append((2 * fan_in, fan_out))
            else:
                # the GIN perceptron's inner width follows the layer output width
                shapes += [(fan_in, fan_out), (fan_out,), (fan_out, fan_out), (fan_out,)]
        return shapes

    def layer_weights(self, p: int) -> list[np.ndarray]:
        return self.weights[p * self.per_layer:(p + 1) * self.per_layer]

    def validate(self) -> None:
        shapes = [w.shape for w in self.weights]
        if shapes != self.expected_shapes():
            raise ValueError(f"weight shapes {shapes} do not match {self.expected_shapes()}")
        for w in self.weights:
            if not np.all(np.isfinite(w)):
                raise ValueError("non-finite weight entry")

    def copy(self) -> ModelParams:
        return ModelParams(self.variant, self.in_dim, self.embedding_dim, self.num_layers,
                           self.hidden_dim, self.final_activation, [w.copy() for w in self.weights])

    def num_parameters(self) -> int:
        return int(sum(w.size for w in self.weights))


def init_params(variant, f: int, d: int, seed: int, num_layers: int = 1,
                hidden_dim: int | None = None, final_activation: str = "identity") -> ModelParams:
    """Glorot-uniform weight matrices; biases start at zero."""
    if f < 1 or d < 1:
        raise ValueError("feature and embedding dimensions must be >= 1")
    params = ModelParams(variant, f, d, num_layers, hidden_dim, final_activation)
    rng = np.random.default_rng(seed)
    for shape in params.expected_shapes():
        if len(shape) == 1:
            params.weights.append(np.zeros(shape))
        else:
            bound = np.sqrt(6.0 / (shape[0] + shape[1]))
            params.weights.append(rng.uniform(-bound, bound, size=shape))
    return params


def propagation_matrix(variant: Variant, graph: Graph) -> sp.csr_matrix:
    """Sparse operator applying the variant's neighborhood aggregation (self included)."""
    a = graph.adjacency + sp.identity(graph.num_nodes, format="csr")
    deg1 = graph.degrees.astype(np.float64) + 1.0
    if variant is Variant.GCN:
        s = 1.0 / np.sqrt(deg1)
        a = sp.diags(s) @ a @ sp.diags(s)
    elif variant is Variant.SAGE_MEAN:
        a = sp.diags(1.0 / deg1) @ a
    return sp.csr_matrix(a)


def _act(x: np.ndarray, name: str) -> np.ndarray:
    return np.maximum(x, 0.0) if name == "relu" else x


def _act_grad(pre: np.ndarray, grad: np.ndarray, name: str) -> np.ndarray:
    return grad * (pre > 0) if name == "relu" else grad


class _Cache:
    def __init__(self, prop: sp.csr_matrix):
        self.prop = prop
        self.layers: list[dict] = []


def _check_inputs(params: ModelParams, graph: Graph, X: AttributeMatrix) -> None:
    if X.num_features != params.in_dim:
        raise ValueError(f"attribute dimension {X.num_features} != model input {params.in_dim}")
    if graph.num_nodes != X.num_nodes:
        raise ValueError(f"graph has {graph.num_nodes} nodes but X has {X.num_nodes} rows")


def _forward(params: ModelParams, graph: Graph, X: AttributeMatrix, keep: bool):
    _check_inputs(params, graph, X)
    prop = propagation_matrix(params.variant, graph)
    cache = _Cache(prop) if keep else None
    h = X.rows
    for p in range(params.num_layers):
        act = params.final_activation if p == params.num_layers - 1 else "relu"
        ws = params.layer_weights(p)
        m = prop @ h
        entry = {"h": h, "m": m, "act": act}
        if params.variant is Variant.GCN:
            pre = np.asarray(m @ ws[0])
        elif params.variant is Variant.SAGE_MEAN:
            fan_in = ws[0].shape[0] // 2
            pre = np.asarray(h @ ws[0][:fan_in] + m @ ws[0][fan_in:])
        else:
            w1, b1, w2, b2 = ws
            inner_pre = np.asarray(m @ w1) + b1
            inner = np.maximum(inner_pre, 0.0)
            pre = inner @ w2 + b2
            entry.update(inner_pre=inner_pre, inner=inner)
        entry["pre"] = pre
        h = _act(pre, act)
        if keep:
            cache.layers.append(entry)
    return h, cache


def forward(params: ModelParams, comp_graph: Graph, X: AttributeMatrix) -> np.ndarray:
    """Embeddings ``Z`` (num_nodes x embedding_dim) for every node of ``comp_graph``."""
    z, _ = _forward(params, comp_graph, X, keep=False)
    return z


def forward_with_cache(params: ModelParams, comp_graph: Graph, X: AttributeMatrix):
    return _forward(params, comp_graph, X, keep=True)


def backward_from_cache(params: ModelParams, cache: _Cache, grad_z: np.ndarray) -> list[np.ndarray]:
    """Gradient of ``sum(grad_z * Z)`` with respect to each weight array."""
    grads: list[np.ndarray] = [None] * len(params.weights)  # type: ignore[list-item]
    prop_t = cache.prop.T.tocsr()
    g = np.asarray(grad_z, dtype=np.float64)
    for p in reversed(range(params.num_layers)):
        entry = cache.layers[p]
        ws = params.layer_weights(p)
        base = p * params.per_layer
        g_pre = _act_grad(entry["pre"], g, entry["act"])
        h, m = entry["h"], entry["m"]
        if params.variant is Variant.GCN:
            grads[base] = np.asarray(m.T @ g_pre)
            g_m = g_pre @ ws[0].T
            g_h_direct = None
        elif params.variant is Variant.SAGE_MEAN:
            fan_in = ws[0].shape[0] // 2
            grads[base] = np.vstack([np.asarray(h.T @ g_pre), np.asarray(m.T @ g_pre)])
            g_m = g_pre @ ws[0][fan_in:].T
            g_h_direct = g_pre @ ws[0][:fan_in].T
        else:
            w1, _, w2, _ = ws
            grads[base + 3] = g_pre.sum(axis=0)
            grads[base + 2] = entry["inner"].T @ g_pre
            g_inner = (g_pre @ w2.T) * (entry["inner_pre"] > 0)
            grads[base + 1] = g_inner.sum(axis=0)
            grads[base] = np.asarray(m.T @ g_inner)
            g_m = g_inner @ w1.T
            g_h_direct = None
        if p > 0:
            g = np.asarray(prop_t @ g_m)
            if g_h_direct is not None:
                g = g + g_h_direct
    return grads


def backward(params: ModelParams, comp_graph: Graph, X: AttributeMatrix, grad_z: np.ndarray) -> list[np.ndarray]:
    """Weight gradients of ``Σ_i <grad_z[i], z_i>``, shaped like ``params.weights``."""
    grad_z = np.asarray(grad_z, dtype=np.float64)
    if grad_z.shape != (comp_graph.num_nodes, params.embedding_dim):
        raise ValueError(
            f"upstream gradient shape {grad_z.shape} != {(comp_graph.num_nodes, params.embedding_dim)}"
        )
    _, cache = forward_with_cache(params, comp_graph, X)
    return backward_from_cache(params, cache, grad_z)
