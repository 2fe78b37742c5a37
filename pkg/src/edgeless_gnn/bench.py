"""Forward-pass runtime against graph size and k."""
from __future__ import annotations

import gc
import time
from dataclasses import dataclass

import numpy as np

from .data_io import DatasetBundle
from .knn import build_knng
from .models import Variant, forward, init_params
from .synthetic import forest_fire_sample, planted_partition

DEFAULT_SIZES = (1000, 3000, 5000, 7000, 9000, 11000)
DEFAULT_KS = (2, 3, 4, 5, 6, 7, 8)


@dataclass(frozen=True)
class Timing:
    size: int
    k: int
    seconds: float


def _timed(params, comp, X, repeats: int) -> float:
    start = time.perf_counter()
    for _ in range(repeats):
        forward(params, comp, X)
    return (time.perf_counter() - start) / repeats


def time_points(bundle: DatasetBundle, points, variant=Variant.SAGE_MEAN, dim: int = 64, runs: int = 5,
                repeats: int = 10, seed: int = 0) -> list[float]:
    """Median over ``runs`` of the mean forward time across ``repeats`` passes, per ``(nodes, k)`` point.

    Runs are interleaved across points so a burst of machine load is spread over the
    grid instead of landing on one point. Garbage collection is paused while the clock runs.
    """
    cases = []
    for nodes, k in points:
        X = bundle.attributes.take(nodes)
        params = init_params(variant, X.num_features, dim, seed=seed)
        cases.append((params, build_knng(X, k), X))
    for params, comp, X in cases:
        forward(params, comp, X)
    samples = np.zeros((runs, len(cases)))
    was_enabled = gc.isenabled()
    gc.disable()
    try:
        for r in range(runs):
            for j, (params, comp, X) in enumerate(cases):
                samples[r, j] = _timed(params, comp, X, repeats)
    finally:
        if was_enabled:
            gc.enable()
    return np.median(samples, axis=0).tolist()


def time_forward(bundle: DatasetBundle, nodes: np.ndarray, k: int, variant=Variant.SAGE_MEAN,
                 dim: int = 64, runs: int = 5, repeats: int = 10, seed: int = 0) -> float:
    """Single-point version of :func:`time_points`."""
    return time_points(bundle, [(nodes, k)], variant, dim, runs, repeats, seed)[0]


def scaling_benchmark(bundle: DatasetBundle | None = None, sizes=DEFAULT_SIZES, ks=DEFAULT_KS,
                      fixed_size: int = 2500, fixed_k: int = 3, seed: int = 0, forward_prob: float = 0.7,
                      variant=Variant.SAGE_MEAN, dim: int = 64, runs: int = 5, repeats: int = 10,
                      progress=None) -> tuple[list[Timing], list[Timing]]:
    """Time the forward pass on forest-fire subgraphs.

    Returns ``(by_size, by_k)``: sizes at ``fixed_k`` and ks at ``fixed_size``.
    """
    if bundle is None:
        bundle = synthetic_base(max(max(sizes), fixed_size) + 1000, seed)
    size_nodes = [forest_fire_sample(bundle.graph, size, seed, forward_prob) for size in sizes]
    times = time_points(bundle, [(nodes, fixed_k) for nodes in size_nodes], variant, dim, runs, repeats, seed)
    by_size = [Timing(size, fixed_k, t) for size, t in zip(sizes, times)]
    nodes = forest_fire_sample(bundle.graph, fixed_size, seed, forward_prob)
    times = time_points(bundle, [(nodes, k) for k in ks], variant, dim, runs, repeats, seed)
    by_k = [Timing(fixed_size, k, t) for k, t in zip(ks, times)]
    if progress:
        for t in by_size + by_k:
            progress(t)
    return by_size, by_k


def synthetic_base(num_nodes: int, seed: int = 0) -> DatasetBundle:
    """Pubmed-like base graph: sparse 500-word attributes, three classes."""
    return planted_partition(num_nodes=num_nodes, num_blocks=3, avg_in_degree=4.0, avg_out_degree=0.5,
                             num_features=500, words_per_node=50, topic_share=0.5, seed=seed)


def linear_fit(x, y) -> tuple[float, float, float]:
    """Least-squares ``y = a x + c``; returns ``(a, c, r_squared)``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    a, c = np.polyfit(x, y, 1)
    resid = y - (a * x + c)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return float(a), float(c), float(r2)
