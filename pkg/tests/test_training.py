"""Tests for the contrastive losses and the training loop."""

import numpy as np
import pytest

from qubolearn.mlp import forward, init_params, build_arch
from qubolearn.problems import ProblemInstance
from qubolearn.qubo import QuboMatrix, assemble_qubo, dense_topology, free_parameter_index
from qubolearn.training import (
    TrainConfig,
    loss_gap,
    loss_mlp,
    loss_unique,
    matrix_to_output_grad,
    total_loss,
    train,
)


def dense_qubo(rng, n):
    M = rng.normal(size=(n, n))
    return QuboMatrix(0.5 * (M + M.T))


def quadratic_gap(M, x_hat, x_star):
    return float(x_hat @ M @ x_hat - x_star @ M @ x_star)


class TestLossGap:
    def test_zero_when_solver_agrees(self):
        A = dense_qubo(np.random.default_rng(0), 4)
        x = np.array([1, 0, 1, 0], dtype=np.uint8)
        value, grad = loss_gap(A, x, x)
        assert value == 0.0
        assert not grad.any()

    def test_hand_example(self):
        A = QuboMatrix(np.diag([1.0, -1.0]))
        value, _ = loss_gap(A, np.array([1, 0]), np.array([0, 1]))
        assert value == pytest.approx(2.0)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        A = dense_qubo(rng, 5)
        x_hat = rng.integers(0, 2, 5).astype(np.float64)
        x_star = rng.integers(0, 2, 5).astype(np.float64)
        _, grad = loss_gap(A, x_hat, x_star)
        h = 1e-6
        M = A.values.copy()
        for i in range(5):
            for j in range(5):
                M[i, j] += h
                up = quadratic_gap(M, x_hat, x_star)
                M[i, j] -= 2 * h
                down = quadratic_gap(M, x_hat, x_star)
                M[i, j] += h
                fd = (up - down) / (2 * h)
                assert grad[i, j] == pytest.approx(fd, abs=1e-7)

    def test_nonnegative_for_true_minimiser(self):
        from qubolearn.solvers import exhaustive_solve

        rng = np.random.default_rng(2)
        for _ in range(10):
            A = dense_qubo(rng, 6)
            x_hat = rng.integers(0, 2, 6).astype(np.uint8)
            res = exhaustive_solve(A)
            value, _ = loss_gap(A, x_hat, res.best)
            assert value >= -1e-12


class TestLossUnique:
    def test_equal_energies(self):
        A = QuboMatrix(np.zeros((3, 3)))
        value, grad = loss_unique(A, np.array([1, 0, 0]), np.array([0, 1, 0]))
        assert value == 0.0

    def test_hand_example(self):
        # x_hat at energy -2, runner-up at energy -1 -> value -1
        A = QuboMatrix(np.diag([-2.0, -1.0]))
        value, _ = loss_unique(A, np.array([1, 0]), np.array([0, 1]))
        assert value == pytest.approx(-1.0)

    def test_missing_runner_up_contributes_zero(self):
        A = QuboMatrix(np.eye(2))
        value, grad = loss_unique(A, np.array([1, 0]), None)
        assert value == 0.0 and not grad.any()

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        A = dense_qubo(rng, 5)
        x_hat = np.array([1, 0, 1, 1, 0], dtype=np.float64)
        x_plus = np.array([0, 1, 1, 0, 0], dtype=np.float64)
        _, grad = loss_unique(A, x_hat, x_plus)
        h = 1e-6
        M = A.values.copy()
        assert abs(quadratic_gap(M, x_hat, x_plus)) > 1e-3  # away from the kink
        for i in range(5):
            for j in range(5):
                M[i, j] += h
                up = -abs(quadratic_gap(M, x_hat, x_plus))
                M[i, j] -= 2 * h
                down = -abs(quadratic_gap(M, x_hat, x_plus))
                M[i, j] += h
                assert grad[i, j] == pytest.approx((up - down) / (2 * h), abs=1e-7)


class TestLossMlp:
    def _trace(self, features):
        class T:
            pass

        t = T()
        t.features = [np.asarray(f, dtype=np.float64) for f in features]
        return t

    def test_zero_features(self):
        value, grads = loss_mlp(self._trace([np.zeros(3), np.zeros(5)]))
        assert value == 0.0
        assert all(not g.any() for g in grads)

    def test_single_feature(self):
        value, grads = loss_mlp(self._trace([[1.0, -1.0, 2.0]]))
        assert value == pytest.approx(4.0 / 3.0)
        assert grads[0] == pytest.approx(np.array([1, -1, 1]) / 3.0)

    def test_two_features_sum_of_means(self):
        value, _ = loss_mlp(self._trace([[2.0, -2.0], [1.0, 1.0, -1.0, 1.0]]))
        assert value == pytest.approx(2.0 + 1.0)


class TestTotalLoss:
    def _setup(self, seed, n=4, m=6):
        rng = np.random.default_rng(seed)
        topo = dense_topology(n)
        free = free_parameter_index(topo)
        while True:
            params = init_params(build_arch(m, len(free), L=3, H=7), rng)
            for b in params.biases:
                b += rng.normal(scale=0.3, size=b.shape)
            p = rng.normal(size=m)
            trace = forward(params, p)
            x_hat = rng.integers(0, 2, n).astype(np.uint8)
            x_star = rng.integers(0, 2, n).astype(np.uint8)
            x_plus = rng.integers(0, 2, n).astype(np.uint8)
            A = assemble_qubo(trace.output, topo)
            diff = abs(quadratic_gap(A.values, x_hat.astype(float), x_plus.astype(float)))
            kink_ok = min(np.min(np.abs(z)) for z in trace.pre) > 1e-3
            feat_ok = all(np.all(np.abs(f[f != 0]) > 1e-3) if f.any() else True for f in trace.features)
            if diff > 1e-2 and kink_ok and feat_ok:
                return params, p, topo, free, x_hat, x_star, x_plus

    def test_perfect_prediction_is_zero(self):
        topo = dense_topology(3)
        free = free_parameter_index(topo)
        params = init_params(build_arch(4, len(free), L=2, H=5), np.random.default_rng(5))
        for w in params.weights:
            w[:] = 0.0
        trace = forward(params, np.ones(4))
        A = assemble_qubo(trace.output, topo)
        x = np.array([1, 0, 1], dtype=np.uint8)
        value, grads, _ = total_loss(params, trace, A, free, x, x, x)
        assert value == 0.0

    def test_zero_weights_reduce_to_gap(self):
        params, p, topo, free, x_hat, x_star, x_plus = self._setup(6)
        trace = forward(params, p)
        A = assemble_qubo(trace.output, topo)
        value, _, parts = total_loss(params, trace, A, free, x_hat, x_star, x_plus, 0.0, 0.0)
        gap_value, _ = loss_gap(A, x_hat, x_star)
        assert value == pytest.approx(gap_value)

    @pytest.mark.parametrize("seed", [7, 8])
    def test_end_to_end_gradient(self, seed):
        params, p, topo, free, x_hat, x_star, x_plus = self._setup(seed)

        def loss_of_params():
            trace = forward(params, p)
            A = assemble_qubo(trace.output, topo)
            value, _, _ = total_loss(params, trace, A, free, x_hat, x_star, x_plus)
            return value

        trace = forward(params, p)
        A = assemble_qubo(trace.output, topo)
        _, grads, _ = total_loss(params, trace, A, free, x_hat, x_star, x_plus)
        h = 1e-6
        worst = 0.0
        for l in range(params.L):
            W = params.weights[l]
            for idx in np.ndindex(*W.shape):
                orig = W[idx]
                W[idx] = orig + h
                up = loss_of_params()
                W[idx] = orig - h
                down = loss_of_params()
                W[idx] = orig
                fd = (up - down) / (2 * h)
                denom = max(abs(fd), 1e-3)
                worst = max(worst, abs(grads.weights[l][idx] - fd) / denom)
        assert worst < 1e-4

    def test_unique_clamp_reported(self):
        topo = dense_topology(2)
        free = free_parameter_index(topo)
        params = init_params(build_arch(3, len(free), L=2, H=4), np.random.default_rng(9))
        trace = forward(params, np.ones(3))
        # Hand-built A with a huge runner-up gap but tiny optimal energy.
        A = QuboMatrix(np.array([[-0.01, 0.0], [0.0, 100.0]]))
        x_hat = np.array([0, 1], dtype=np.uint8)
        x_star = np.array([1, 0], dtype=np.uint8)
        value, _, parts = total_loss(params, trace, A, free, x_hat, x_star, x_hat)
        assert not parts.clamped  # x_plus == x_hat -> diff 0
        _, _, parts = total_loss(params, trace, A, free, x_hat, x_star, np.array([0, 0], dtype=np.uint8))
        assert parts.clamped


class TestMatrixToOutputGrad:
    def test_off_diagonal_doubling(self):
        topo = dense_topology(3)
        free = free_parameter_index(topo)
        G = np.arange(9, dtype=float).reshape(3, 3)
        G = 0.5 * (G + G.T)
        out = matrix_to_output_grad(G, free)
        for val, (i, j) in zip(out, free):
            assert val == (G[i, j] if i == j else 2 * G[i, j])


def toy_dataset(rng, count, n=4, m=6):
    return [
        ProblemInstance("toy", p=rng.normal(size=m), x_hat=rng.integers(0, 2, n))
        for _ in range(count)
    ]


class TestTrain:
    def test_memorises_single_instance(self):
        rng = np.random.default_rng(10)
        data = toy_dataset(rng, 1)
        config = TrainConfig("toy", L=3, H=16, lr=1e-2, batch_size=1, epochs=150, solver="exhaustive", seed=1)
        params, report = train(data, config, topology=dense_topology(4))
        assert report.train_accuracy[-1] == 100.0

    def test_zero_learning_rate_changes_nothing(self):
        rng = np.random.default_rng(11)
        data = toy_dataset(rng, 4)
        config = TrainConfig("toy", L=2, H=8, lr=0.0, batch_size=2, epochs=3, solver="exhaustive", seed=2)
        params, report = train(data, config, topology=dense_topology(4))
        from qubolearn.seeding import substream
        from qubolearn.training import whitened_init

        fresh = whitened_init(
            build_arch(6, len(free_parameter_index(dense_topology(4))), 2, 8), data, substream(2, "init")
        )
        for a, b in zip(params.weights + params.biases, fresh.weights + fresh.biases):
            assert (a == b).all()
        assert report.loss_total[0] == report.loss_total[-1]

    def test_reproducible_bit_for_bit(self):
        rng = np.random.default_rng(12)
        data = toy_dataset(rng, 6)
        config = TrainConfig("toy", L=3, H=8, lr=1e-3, batch_size=3, epochs=4, solver="exhaustive", seed=3)
        p1, r1 = train(data, config, topology=dense_topology(4))
        p2, r2 = train(data, config, topology=dense_topology(4))
        for a, b in zip(p1.weights + p1.biases, p2.weights + p2.biases):
            assert (a == b).all()
        assert r1.loss_total == r2.loss_total

    def test_losses_finite_and_lengths_match(self):
        rng = np.random.default_rng(13)
        data = toy_dataset(rng, 5)
        config = TrainConfig("toy", L=2, H=6, lr=1e-3, batch_size=5, epochs=3, solver="exhaustive", seed=4)
        _, report = train(data, config, topology=dense_topology(4), test_dataset=toy_dataset(rng, 3))
        for series in (report.loss_total, report.loss_gap, report.loss_unique, report.loss_mlp):
            assert len(series) == 3
            assert np.isfinite(series).all()
        assert len(report.test_accuracy) == 3
        assert report.solver_calls > 0
