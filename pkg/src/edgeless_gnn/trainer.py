"""Adam training of an encoder against the quadruplet loss, plus gradient checks."""
from __future__ import annotations

import logging
import sys
from dataclasses import dataclass, field

import numpy as np

from .graph import Graph, build_graph
from .knn import AttributeMatrix, build_knng
from .loss import LossParams, loss_and_embedding_grad
from .metrics import ScoredPairs, average_precision, score_links
from .models import ModelParams, Variant, backward_from_cache, forward, forward_with_cache, init_params
from .sampling import sample_epoch_batch

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    def __init__(self, epoch: int, message: str = "non-finite training loss"):
        super().__init__(f"{message} at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-4
    weight_decay: float = 5e-4
    max_epochs: int = 500
    minibatch_size: int = 512
    patience: int = 30
    loss_params: LossParams = field(default_factory=LossParams)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.minibatch_size < 1:
            raise ValueError("minibatch_size must be >= 1")


@dataclass
class AdamState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros_like(cls, weights: list[np.ndarray], **kw) -> AdamState:
        return cls([np.zeros_like(w) for w in weights], [np.zeros_like(w) for w in weights], **kw)


def adam_step(params: ModelParams, grads: list[np.ndarray], state: AdamState, lr: float,
              weight_decay: float = 0.0) -> tuple[ModelParams, AdamState]:
    """One bias-corrected Adam update with the L2 term ``wd * W`` folded into the gradient."""
    if len(grads) != len(params.weights):
        raise ValueError("gradient list does not match the parameter list")
    for g, w in zip(grads, params.weights):
        if g.shape != w.shape:
            raise ValueError(f"gradient shape {g.shape} != weight shape {w.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient entry")
    t = state.step_count + 1
    b1, b2, eps = state.beta1, state.beta2, state.epsilon
    new_w, new_m, new_v = [], [], []
    for w, g, m, v in zip(params.weights, grads, state.first_moment, state.second_moment):
        g = g + weight_decay * w
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        new_w.append(w - lr * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m)
        new_v.append(v)
    out = params.copy()
    out.weights = new_w
    return out, AdamState(new_m, new_v, t, b1, b2, eps)


@dataclass(frozen=True, eq=False)
class LinkProbe:
    """Validation AP of embeddings computed on an extended computation graph."""

    comp_graph: Graph
    X: AttributeMatrix
    pairs: ScoredPairs

    def __call__(self, params: ModelParams) -> float:
        z = forward(params, self.comp_graph, self.X)
        return average_precision(score_links(z, self.pairs.pairs), self.pairs.labels)


@dataclass
class TrainResult:
    params: ModelParams
    losses: list[float]
    val_scores: list[float]
    best_epoch: int
    epochs_run: int

    @property
    def history(self) -> list[tuple[int, float, float | None]]:
        vals = self.val_scores or [None] * len(self.losses)
        return [(e + 1, l, v) for e, (l, v) in enumerate(zip(self.losses, vals))]


def epoch_seed(seed: int, epoch: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, epoch])


def train(config: TrainConfig, g_train: Graph, g_knn: Graph, X: AttributeMatrix,
          params: ModelParams, val_probe=None, progress=None) -> TrainResult:
    """Run the epoch/mini-batch loop and return the best (or final) parameters.

    ``progress`` receives ``(epoch, loss, val)`` after each epoch.
    """
    if not (g_knn.num_nodes == X.num_nodes == g_train.num_nodes):
        raise ValueError("g_train, g_knn and X must cover the same training nodes")
    lp = config.loss_params
    state = AdamState.zeros_like(params.weights)
    losses: list[float] = []
    val_scores: list[float] = []
    best_params, best_val, best_epoch, stale = params, -np.inf, 0, 0

    for epoch in range(config.max_epochs):
        ss = epoch_seed(config.seed, epoch)
        sample_ss, order_ss = ss.spawn(2)
        batch = sample_epoch_batch(g_train, int(sample_ss.generate_state(1)[0]))
        batch = batch[np.random.default_rng(order_ss).permutation(len(batch))]
        total, count = 0.0, 0
        for mb in batch.minibatches(config.minibatch_size):
            z, cache = forward_with_cache(params, g_knn, X)
            loss, gz = loss_and_embedding_grad(z, mb, lp)
            if not np.isfinite(loss):
                raise DivergenceError(epoch + 1)
            grads = backward_from_cache(params, cache, gz)
            try:
                params, state = adam_step(params, grads, state, config.learning_rate, config.weight_decay)
            except FloatingPointError as exc:
                raise DivergenceError(epoch + 1, str(exc)) from exc
            total += loss * len(mb)
            count += len(mb)
        epoch_loss = total / count
        losses.append(epoch_loss)

        val = None
        if val_probe is not None:
            val = float(val_probe(params))
            val_scores.append(val)
            if val > best_val:
                best_params, best_val, best_epoch, stale = params, val, epoch + 1, 0
            else:
                stale += 1
        if progress is not None:
            progress(epoch + 1, epoch_loss, val)
        if val_probe is not None and stale >= config.patience:
            break

    if val_probe is None:
        best_params, best_epoch = params, len(losses)
    return TrainResult(best_params, losses, val_scores, best_epoch, len(losses))


def stderr_progress(epoch: int, loss: float, val) -> None:
    val_txt = "-" if val is None else f"{val:.4f}"
    print(f"epoch {epoch}\tloss {loss:.6f}\tval_ap {val_txt}", file=sys.stderr)


# ---------------------------------------------------------------- gradient checking


def _random_instance(n: int, f: int, seed: int):
    rng = np.random.default_rng(seed)
    while True:
        dense = rng.normal(size=(n, f)) * (rng.random((n, f)) < 0.7)
        X = AttributeMatrix.from_dense(dense)
        comp = build_knng(X, k=min(2, n - 1))
        # data graph: a ring plus random chords keeps every node non-isolated and non-universal
        ring = [(i, (i + 1) % n) for i in range(n)]
        chords = [tuple(rng.choice(n, 2, replace=False)) for _ in range(n // 3)]
        g = build_graph(ring + chords, n)
        if np.all(g.degrees < n - 1):
            return X, comp, g


def end_to_end_loss(params: ModelParams, comp: Graph, X: AttributeMatrix, batch, lp: LossParams) -> float:
    return loss_and_embedding_grad(forward(params, comp, X), batch, lp)[0]


def end_to_end_grad(params: ModelParams, comp: Graph, X: AttributeMatrix, batch, lp: LossParams):
    z, cache = forward_with_cache(params, comp, X)
    loss, gz = loss_and_embedding_grad(z, batch, lp)
    return loss, backward_from_cache(params, cache, gz)


def check_gradients(variant, sizes=(10, 5, 3), loss_params: LossParams | None = None, seed: int = 0,
                    num_layers: int = 1, final_activation: str = "identity", step: float = 1e-5) -> float:
    """Worst relative error between backprop and central differences over all weights.

    Relative error per entry is ``|a - n| / max(|a|, |n|, 1e-6)``.
    """
    n, f, d = sizes
    lp = loss_params or LossParams()
    X, comp, g = _random_instance(n, f, seed)
    params = init_params(Variant.parse(variant), f, d, seed=seed, num_layers=num_layers,
                         final_activation=final_activation)
    rng = np.random.default_rng(seed + 1)
    # nonzero biases so the GIN bias paths are exercised
    params.weights = [w + (rng.normal(scale=0.1, size=w.shape) if w.ndim == 1 else 0.0)
                      for w in params.weights]
    batch = sample_epoch_batch(g, seed)
    _, analytic = end_to_end_grad(params, comp, X, batch, lp)
    worst = 0.0
    for wi, w in enumerate(params.weights):
        flat = w.reshape(-1)
        for idx in range(flat.shape[0]):
            orig = flat[idx]
            flat[idx] = orig + step
            up = end_to_end_loss(params, comp, X, batch, lp)
            flat[idx] = orig - step
            down = end_to_end_loss(params, comp, X, batch, lp)
            flat[idx] = orig
            numeric = (up - down) / (2 * step)
            a = analytic[wi].reshape(-1)[idx]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
            worst = max(worst, err)
    return worst
