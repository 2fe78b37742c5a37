import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgeless_gnn.graph import UNREACHABLE
from edgeless_gnn.loss import LossParams, d_in, loss_and_embedding_grad, pair_energies, phi
from edgeless_gnn.sampling import QuadrupletBatch


def batch(rows):
    """rows: (i, j, n, t or -1, dsp or -1, jaccard)"""
    a = np.array(rows, dtype=np.float64)
    ints = a[:, :5].astype(np.int64)
    return QuadrupletBatch(ints[:, 0], ints[:, 1], ints[:, 2], ints[:, 3], ints[:, 4], a[:, 5])


def scalar_loss(Z, rows, alpha, beta, gamma, b):
    """Plain-Python loop over quadruplets, independent of the vectorized path."""
    def cos(u, v):
        nu, nv = math.sqrt(sum(x * x for x in u)), math.sqrt(sum(x * x for x in v))
        return 0.0 if nu == 0 or nv == 0 else sum(x * y for x, y in zip(u, v)) / (nu * nv)

    def ph(x):
        return math.log1p(math.exp(-gamma * x + b)) / gamma

    first = second = 0.0
    for i, j, n, t, dsp, jac in rows:
        w = 1.0 if dsp < 0 else math.exp(beta / dsp)
        first += ph(cos(Z[i], Z[j])) + w * ph(-cos(Z[i], Z[n]))
        if t >= 0:
            second += jac * ph(cos(Z[i], Z[t]))
    return first / len(rows) + alpha * second / len(rows)


class TestPhi:
    def test_values(self):
        assert phi(0.0, 1, 0) == pytest.approx(0.693147, abs=1e-6)
        assert phi(1.0, 1, 0) == pytest.approx(0.313262, abs=1e-6)

    def test_asymptote(self):
        v = phi(-50.0, 2, 0)
        assert math.isfinite(v) and v == pytest.approx(50.0, abs=1e-12)

    def test_no_overflow(self):
        assert math.isfinite(phi(-1e6, 1, 0))

    @given(st.floats(-5, 5), st.floats(-5, 5))
    def test_monotone(self, x, y):
        if x < y:
            assert phi(x) >= phi(y)


class TestEnergies:
    def test_equal_vectors(self):
        z = np.array([1.0, 2.0])
        e_pos, _ = pair_energies(z, z, -z, LossParams())
        assert e_pos == pytest.approx(0.313262, abs=1e-6)

    def test_d_in(self):
        assert d_in(2, 1.0) == pytest.approx(1.648721, abs=1e-6)
        assert d_in(UNREACHABLE, 5.0) == 1.0
        assert d_in(3, 0.0) == 1.0
        with pytest.raises(ValueError):
            d_in(0, 1.0)

    def test_params_validated(self):
        with pytest.raises(ValueError):
            LossParams(gamma=0.0)
        with pytest.raises(ValueError):
            LossParams(alpha=-1.0)


class TestQuadrupletLoss:
    def test_single_quadruplet_example(self):
        Z = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0], [5.0, 5.0]])
        loss, _ = loss_and_embedding_grad(Z, batch([(0, 1, 2, 3, 2, 0.0)]), LossParams(alpha=3.0))
        assert loss == pytest.approx(1.836, abs=1e-3)
        assert loss == pytest.approx(math.log(2) + math.exp(0.5) * math.log(2), abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_scalar_oracle(self, seed):
        rng = np.random.default_rng(seed)
        Z = rng.normal(size=(9, 4))
        rows = [(0, 1, 2, 3, 2, 0.5), (4, 5, 6, -1, -1, 0.0), (7, 8, 0, 1, 3, 0.25), (0, 4, 8, 6, 4, 1.0)]
        lp = LossParams(alpha=2.0, beta=1.5, gamma=0.7, b=0.3)
        loss, _ = loss_and_embedding_grad(Z, batch(rows), lp)
        assert loss == pytest.approx(scalar_loss(Z, rows, 2.0, 1.5, 0.7, 0.3), rel=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.01, 100))
    def test_scale_invariance(self, seed, c):
        Z = np.random.default_rng(seed).normal(size=(6, 3))
        b = batch([(0, 1, 2, 3, 2, 0.5), (3, 4, 5, 0, -1, 0.2)])
        lo, _ = loss_and_embedding_grad(Z, b, LossParams())
        hi, _ = loss_and_embedding_grad(c * Z, b, LossParams())
        assert abs(lo - hi) <= 1e-10

    def test_non_negative(self):
        Z = np.random.default_rng(0).normal(size=(6, 3))
        assert loss_and_embedding_grad(Z, batch([(0, 1, 2, 3, 2, 0.5)]), LossParams(b=2.0))[0] >= 0

    @pytest.mark.parametrize("seed", range(5))
    def test_gradient_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        Z = rng.normal(size=(9, 4))
        b = batch([(0, 1, 2, 3, 2, 0.5), (4, 5, 6, -1, -1, 0.0), (7, 8, 0, 1, 3, 0.25)])
        lp = LossParams(alpha=3.0, beta=1.0, gamma=1.3, b=0.2)
        _, grad = loss_and_embedding_grad(Z, b, lp)
        h = 1e-6
        for idx in np.ndindex(Z.shape):
            zp, zm = Z.copy(), Z.copy()
            zp[idx] += h
            zm[idx] -= h
            num = (loss_and_embedding_grad(zp, b, lp)[0] - loss_and_embedding_grad(zm, b, lp)[0]) / (2 * h)
            assert abs(grad[idx] - num) <= 1e-5 * max(abs(num), 1e-3)

    def test_absent_nodes_get_zero_rows(self):
        Z = np.random.default_rng(1).normal(size=(8, 3))
        _, grad = loss_and_embedding_grad(Z, batch([(0, 1, 2, 3, 2, 0.5)]), LossParams())
        assert np.all(grad[4:] == 0)
        assert np.all(np.any(grad[:4] != 0, axis=1))

    def test_alpha_zero_ignores_two_hop(self):
        Z = np.random.default_rng(2).normal(size=(5, 3))
        _, grad = loss_and_embedding_grad(Z, batch([(0, 1, 2, 3, 2, 0.9)]), LossParams(alpha=0.0))
        assert np.all(grad[3] == 0)

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            loss_and_embedding_grad(np.zeros((2, 2)), batch(np.zeros((0, 6))), LossParams())
