"""Energy-based quadruplet loss over embedding rows.

For each quadruplet ``(i, j, n, t)``:

    E+_ij = phi(cos(z_i, z_j))          attraction of an observed edge
    E-_in = phi(-cos(z_i, z_n))         repulsion of a sampled non-edge
    D_in  = exp(beta / hops(i, n))      stronger repulsion for nearby negatives
    E+_it = phi(cos(z_i, z_t))          two-hop attraction, weighted by Jaccard

    loss = mean(E+_ij + D_in E-_in) + alpha * mean(J_it E+_it)

with ``phi(x) = log(1 + exp(-gamma x + b)) / gamma``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .graph import UNREACHABLE


@dataclass(frozen=True)
class LossParams:
    alpha: float = 3.0
    beta: float = 1.0
    gamma: float = 1.0
    b: float = 0.0

    def __post_init__(self) -> None:
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")
        if self.alpha < 0 or self.beta < 0 or self.b < 0:
            raise ValueError("alpha, beta and b must be >= 0")


def _softplus(u: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, u)


def phi(x, gamma: float = 1.0, b: float = 0.0):
    """Energy ``log(1 + exp(-gamma*x + b)) / gamma``; stable for large ``|x|``."""
    if not gamma > 0:
        raise ValueError("gamma must be > 0")
    val = _softplus(-gamma * np.asarray(x, dtype=np.float64) + b) / gamma
    return float(val) if np.ndim(val) == 0 else val


def phi_grad(x, gamma: float = 1.0, b: float = 0.0) -> np.ndarray:
    """Derivative of ``phi`` with respect to ``x``."""
    return -expit(-gamma * np.asarray(x, dtype=np.float64) + b)


def cosine_rows(a: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Row-wise cosine similarity; rows with zero norm give 0."""
    na = np.linalg.norm(a, axis=1)
    nc = np.linalg.norm(c, axis=1)
    denom = na * nc
    dots = np.einsum("ij,ij->i", a, c)
    return np.divide(dots, denom, out=np.zeros_like(dots), where=denom > 0)


def _cosine_row_grads(a: np.ndarray, c: np.ndarray, cos: np.ndarray):
    na = np.linalg.norm(a, axis=1, keepdims=True)
    nc = np.linalg.norm(c, axis=1, keepdims=True)
    ok = (na > 0) & (nc > 0)
    safe_a = np.where(ok, na, 1.0)
    safe_c = np.where(ok, nc, 1.0)
    cos = cos[:, None]
    ga = c / (safe_a * safe_c) - cos * a / safe_a**2
    gc = a / (safe_a * safe_c) - cos * c / safe_c**2
    return np.where(ok, ga, 0.0), np.where(ok, gc, 0.0)


def pair_energies(z_i, z_j, z_n, lp: LossParams) -> tuple[float, float]:
    """Positive-pair and negative-pair energies for single embedding rows."""
    rows = [np.atleast_2d(np.asarray(v, dtype=np.float64)) for v in (z_i, z_j, z_n)]
    if len({r.shape for r in rows}) != 1:
        raise ValueError("embedding rows must share one dimension")
    c_ij = cosine_rows(rows[0], rows[1])[0]
    c_in = cosine_rows(rows[0], rows[2])[0]
    return phi(c_ij, lp.gamma, lp.b), phi(-c_in, lp.gamma, lp.b)


def d_in(dsp, beta: float) -> float:
    """Negative-pair weight ``exp(beta / dsp)``; 1 for unreachable pairs."""
    if dsp is UNREACHABLE or dsp is None:
        return 1.0
    if dsp <= 0:
        raise ValueError("a negative pair must be two distinct nodes (dsp > 0)")
    return math.exp(beta / dsp)


def d_in_array(dsp: np.ndarray, beta: float) -> np.ndarray:
    """Vectorized ``d_in`` where ``-1`` encodes an unreachable pair."""
    dsp = np.asarray(dsp)
    if np.any(dsp == 0):
        raise ValueError("a negative pair must be two distinct nodes (dsp > 0)")
    safe = np.where(dsp > 0, dsp, 1).astype(np.float64)
    return np.where(dsp > 0, np.exp(beta / safe), 1.0)


def loss_and_embedding_grad(Z: np.ndarray, batch, lp: LossParams) -> tuple[float, np.ndarray]:
    """Quadruplet loss on ``batch`` and its exact gradient with respect to ``Z``.

    ``batch`` needs ``anchor``, ``positive``, ``negative``, ``two_hop`` (``-1`` when
    absent), ``dsp`` (``-1`` when unreachable) and ``jaccard`` arrays.
    """
    size = len(batch)
    if size == 0:
        raise ValueError("empty quadruplet batch")
    Z = np.asarray(Z, dtype=np.float64)
    i, j, n = batch.anchor, batch.positive, batch.negative
    t = batch.two_hop
    has_t = t >= 0

    zi, zj, zn = Z[i], Z[j], Z[n]
    c_ij = cosine_rows(zi, zj)
    c_in = cosine_rows(zi, zn)
    weight_n = d_in_array(batch.dsp, lp.beta)

    e_pos = phi(c_ij, lp.gamma, lp.b)
    e_neg = phi(-c_in, lp.gamma, lp.b)
    total = np.sum(e_pos + weight_n * e_neg)

    grad = np.zeros_like(Z)
    # d/dc phi(c) and d/dc phi(-c)
    g_ij = phi_grad(c_ij, lp.gamma, lp.b) / size
    g_in = -phi_grad(-c_in, lp.gamma, lp.b) * weight_n / size
    ga, gb = _cosine_row_grads(zi, zj, c_ij)
    np.add.at(grad, i, g_ij[:, None] * ga)
    np.add.at(grad, j, g_ij[:, None] * gb)
    ga, gb = _cosine_row_grads(zi, zn, c_in)
    np.add.at(grad, i, g_in[:, None] * ga)
    np.add.at(grad, n, g_in[:, None] * gb)

    second = 0.0
    if lp.alpha != 0.0 and np.any(has_t):
        it, tt = i[has_t], t[has_t]
        jac = np.asarray(batch.jaccard)[has_t]
        zi2, zt = Z[it], Z[tt]
        c_it = cosine_rows(zi2, zt)
        second = np.sum(jac * phi(c_it, lp.gamma, lp.b))
        g_it = lp.alpha * jac * phi_grad(c_it, lp.gamma, lp.b) / size
        ga, gb = _cosine_row_grads(zi2, zt, c_it)
        np.add.at(grad, it, g_it[:, None] * ga)
        np.add.at(grad, tt, g_it[:, None] * gb)

    loss = total / size + lp.alpha * second / size
    return float(loss), grad
