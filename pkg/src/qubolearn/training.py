"""Contrastive training of the coupling-regressing network.

Per instance the network output is assembled into a masked QUBO, a solver
produces the current minimiser x* (and runner-up x+), and three terms form
the loss:

    gap     = e(x_hat) - e(x*)            pushes the truth below the minimiser
    unique  = -|e(x_hat) - e(x+)|         separates the truth from the runner-up
    sparsity = mean |f| over hidden features

The solver itself is non-differentiable and its dependence on the matrix
is dropped: gradients treat x* and x+ as constants, which is exact almost
everywhere.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .mlp import AdamState, MlpGrads, MlpParams, adam_step, backward, build_arch, forward, init_params
from .qubo import QuboMatrix, Topology, assemble_qubo, energy, free_parameter_index
from .seeding import substream
from .solvers import SaParams, exhaustive_solve, simulated_anneal

EXHAUSTIVE_TRAINING_MAX_N = 15


@dataclass
class TrainConfig:
    problem_type: str
    L: int = 5
    H: int = 78
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 20
    solver: str = "auto"  # exhaustive | sa | auto (exhaustive up to n=15)
    sa_params: SaParams = field(default_factory=SaParams)
    lambda_unique: float = 1e-3
    lambda_mlp: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.lambda_unique < 0 or self.lambda_mlp < 0:
            raise ValueError("loss weights must be non-negative")
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")
        if self.solver not in ("exhaustive", "sa", "auto"):
            raise ValueError(f"unknown solver {self.solver!r}")


@dataclass
class TrainReport:
    """Per-epoch loss components and metrics plus global counters."""

    loss_total: list[float] = field(default_factory=list)
    loss_gap: list[float] = field(default_factory=list)
    loss_unique: list[float] = field(default_factory=list)
    loss_mlp: list[float] = field(default_factory=list)
    train_accuracy: list[float] = field(default_factory=list)
    test_accuracy: list[float] = field(default_factory=list)
    wall_time: list[float] = field(default_factory=list)
    solver_calls: int = 0
    unique_clamped: int = 0
    missing_second_best: int = 0

    def rows(self) -> list[dict]:
        return [
            {
                "epoch": e,
                "loss_total": self.loss_total[e],
                "loss_gap": self.loss_gap[e],
                "loss_unique": self.loss_unique[e],
                "loss_mlp": self.loss_mlp[e],
                "train_accuracy": self.train_accuracy[e],
                "test_accuracy": self.test_accuracy[e],
                "wall_time": self.wall_time[e],
            }
            for e in range(len(self.loss_total))
        ]


def _pair_grad(x_hat: np.ndarray, x_other: np.ndarray, mask: np.ndarray) -> np.ndarray:
    x_hat = x_hat.astype(np.float64)
    x_other = x_other.astype(np.float64)
    G = np.outer(x_hat, x_hat) - np.outer(x_other, x_other)
    G[~mask] = 0.0
    return G


def loss_gap(A: QuboMatrix, x_hat, x_star) -> tuple[float, np.ndarray]:
    """Energy gap e(x_hat) - e(x*) and its per-entry matrix gradient."""
    if x_star is None:
        raise ValueError("loss_gap needs the solver minimiser")
    value = energy(A, x_hat) - energy(A, x_star)
    return value, _pair_grad(np.asarray(x_hat), np.asarray(x_star), A.mask)


def loss_unique(A: QuboMatrix, x_hat, x_plus) -> tuple[float, np.ndarray]:
    """Negated absolute gap to the runner-up, with sign(0) fixed to +1.

    A missing runner-up contributes zero (callers count the occurrences).
    """
    if x_plus is None:
        return 0.0, np.zeros_like(A.values)
    diff = energy(A, x_hat) - energy(A, x_plus)
    sign = 1.0 if diff >= 0 else -1.0
    return -abs(diff), -sign * _pair_grad(np.asarray(x_hat), np.asarray(x_plus), A.mask)


def loss_mlp(trace) -> tuple[float, list[np.ndarray]]:
    """Width-normalised L1 of every hidden feature; gradient is sign/width."""
    value = 0.0
    grads = []
    for f in trace.features:
        value += float(np.abs(f).mean())
        grads.append(np.sign(f) / f.shape[0])
    return value, grads


def matrix_to_output_grad(G: np.ndarray, free_index: list[tuple[int, int]]) -> np.ndarray:
    """Chain rule from a symmetric-matrix gradient to the emitted vector.

    The network emits one value per (i, j) with i <= j; an off-diagonal
    emission feeds both A[i, j] and A[j, i], doubling its gradient.
    """
    return np.array([G[i, j] if i == j else G[i, j] + G[j, i] for i, j in free_index])


@dataclass
class LossParts:
    gap: float
    unique: float
    sparsity: float
    total: float
    clamped: bool
    missing_second: bool


def total_loss(
    params: MlpParams,
    trace,
    A: QuboMatrix,
    free_index: list[tuple[int, int]],
    x_hat,
    x_star,
    x_plus,
    lambda_unique: float = 1e-3,
    lambda_mlp: float = 1e-4,
) -> tuple[float, MlpGrads, LossParts]:
    """Weighted sum of the three terms and its network-parameter gradients.

    x* and x+ are frozen solver outputs. The unbounded unique term is
    clamped per instance at 10*|e(x*)| + 1 (gradient zeroed) so unattended
    runs cannot diverge; activations are reported in LossParts.
    """
    gap_v, gap_G = loss_gap(A, x_hat, x_star)
    uni_v, uni_G = loss_unique(A, x_hat, x_plus)
    clamped = False
    limit = 10.0 * abs(energy(A, x_star)) + 1.0
    if abs(uni_v) > limit:
        uni_v = -limit
        uni_G = np.zeros_like(uni_G)
        clamped = True
    mlp_v, feature_grads = loss_mlp(trace)
    value = gap_v + lambda_unique * uni_v + lambda_mlp * mlp_v
    G = gap_G + lambda_unique * uni_G
    d_out = matrix_to_output_grad(G, free_index)
    d_features = [lambda_mlp * g for g in feature_grads]
    grads = backward(params, trace, d_out, d_features)
    parts = LossParts(gap_v, uni_v, mlp_v, value, clamped, x_plus is None)
    return value, grads, parts


def whitened_init(specs, dataset, rng) -> MlpParams:
    """Glorot init with the dataset's per-feature scale folded into layer 1.

    Problem vectors built from point-cloud moments can be orders of
    magnitude smaller than unit scale, which starves the first layer.
    Absorbing the training set's feature mean and spread into the initial
    weights and biases is an initialisation detail only: the architecture,
    checkpoint format, and learned function space are unchanged.
    """
    params = init_params(specs, rng)
    P = np.stack([inst.p for inst in dataset])
    mu = P.mean(axis=0)
    sigma = P.std(axis=0)
    sigma[sigma == 0.0] = 1.0
    params.weights[0] = params.weights[0] / sigma[None, :]
    params.biases[0] = params.biases[0] - params.weights[0] @ mu
    return params


def _zero_grads(params: MlpParams) -> MlpGrads:
    return MlpGrads(
        [np.zeros_like(w) for w in params.weights],
        [np.zeros_like(b) for b in params.biases],
    )


def _accumulate(total: MlpGrads, grads: MlpGrads, scale: float) -> None:
    for t, g in zip(total.weights + total.biases, grads.weights + grads.biases):
        t += scale * g


class _Solver:
    """Training-time solver choice with per-call annealing substreams."""

    def __init__(self, config: TrainConfig, n: int):
        if config.solver == "exhaustive" or (
            config.solver == "auto" and n <= EXHAUSTIVE_TRAINING_MAX_N
        ):
            self.kind = "exhaustive"
        else:
            self.kind = "sa"
        self.config = config
        self.calls = 0

    def __call__(self, A: QuboMatrix):
        self.calls += 1
        if self.kind == "exhaustive":
            return exhaustive_solve(A)
        base = self.config.sa_params
        seed = int(substream(self.config.seed, "sa", self.calls).integers(2**63))
        return simulated_anneal(
            A, SaParams(base.num_reads, base.sweeps, base.beta_hot, base.beta_cold, seed)
        )


def _accuracy(params, dataset, topo, solve) -> float:
    if not dataset:
        return float("nan")
    hits = 0
    for inst in dataset:
        trace = forward(params, inst.p)
        A = assemble_qubo(trace.output, topo)
        if (solve(A).best == inst.x_hat).all():
            hits += 1
    return 100.0 * hits / len(dataset)


def train(
    dataset,
    config: TrainConfig,
    topology: Topology | None = None,
    test_dataset=None,
) -> tuple[MlpParams, TrainReport]:
    """Solver-in-the-loop training; deterministic for a fixed seed and the
    exhaustive solver.

    The topology defaults to the problem type's registered one; passing an
    explicit topology (e.g. diagonal-only) overrides it.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    n = dataset[0].x_hat.shape[0]
    m = dataset[0].p.shape[0]
    if topology is None:
        from .problems import topology_for

        topology = topology_for(config.problem_type, n)
    if topology.n != n:
        raise ValueError(f"topology size {topology.n} does not match solution width {n}")
    free_index = free_parameter_index(topology)
    params = whitened_init(
        build_arch(m, len(free_index), config.L, config.H), dataset, substream(config.seed, "init")
    )
    state = AdamState.zeros_like(params)
    order_rng = substream(config.seed, "batch-order")
    solve = _Solver(config, n)
    report = TrainReport()
    step = 0
    for _ in range(config.epochs):
        t0 = time.perf_counter()
        order = order_rng.permutation(len(dataset))
        sums = np.zeros(4)
        hits = 0
        for lo in range(0, len(order), config.batch_size):
            batch = order[lo : lo + config.batch_size]
            grad_sum = _zero_grads(params)
            for idx in batch:
                inst = dataset[idx]
                trace = forward(params, inst.p)
                A = assemble_qubo(trace.output, topology)
                result = solve(A)
                value, grads, parts = total_loss(
                    params,
                    trace,
                    A,
                    free_index,
                    inst.x_hat,
                    result.best,
                    result.second_best,
                    config.lambda_unique,
                    config.lambda_mlp,
                )
                _accumulate(grad_sum, grads, 1.0 / len(batch))
                sums += (value, parts.gap, parts.unique, parts.sparsity)
                hits += (result.best == inst.x_hat).all()
                report.unique_clamped += parts.clamped
                report.missing_second_best += parts.missing_second
            step += 1
            adam_step(params, grad_sum, state, config.lr, step)
        report.loss_total.append(sums[0] / len(dataset))
        report.loss_gap.append(sums[1] / len(dataset))
        report.loss_unique.append(sums[2] / len(dataset))
        report.loss_mlp.append(sums[3] / len(dataset))
        report.train_accuracy.append(100.0 * hits / len(dataset))
        report.test_accuracy.append(_accuracy(params, test_dataset, topology, solve))
        report.wall_time.append(time.perf_counter() - t0)
    report.solver_calls = solve.calls
    return params, report


def train_pure(
    dataset,
    config: TrainConfig,
    test_dataset=None,
) -> tuple[MlpParams, TrainReport]:
    """Raw-bit regression baseline: no final activation, elementwise L1 to
    the target bits, thresholded at zero for prediction."""
    if not dataset:
        raise ValueError("dataset is empty")
    n = dataset[0].x_hat.shape[0]
    m = dataset[0].p.shape[0]
    params = whitened_init(
        build_arch(m, n, config.L, config.H, final_activation="none"),
        dataset,
        substream(config.seed, "init"),
    )
    state = AdamState.zeros_like(params)
    order_rng = substream(config.seed, "batch-order")
    report = TrainReport()

    def bit_hits(ds):
        if not ds:
            return float("nan")
        good = 0
        for inst in ds:
            out = forward(params, inst.p).output
            good += ((out > 0.0).astype(np.uint8) == inst.x_hat).all()
        return 100.0 * good / len(ds)

    step = 0
    for _ in range(config.epochs):
        t0 = time.perf_counter()
        order = order_rng.permutation(len(dataset))
        total = 0.0
        for lo in range(0, len(order), config.batch_size):
            batch = order[lo : lo + config.batch_size]
            grad_sum = _zero_grads(params)
            for idx in batch:
                inst = dataset[idx]
                trace = forward(params, inst.p)
                resid = trace.output - inst.x_hat.astype(np.float64)
                total += float(np.abs(resid).sum())
                grads = backward(params, trace, np.sign(resid))
                _accumulate(grad_sum, grads, 1.0 / len(batch))
            step += 1
            adam_step(params, grad_sum, state, config.lr, step)
        report.loss_total.append(total / len(dataset))
        report.loss_gap.append(float("nan"))
        report.loss_unique.append(float("nan"))
        report.loss_mlp.append(float("nan"))
        report.train_accuracy.append(bit_hits(dataset))
        report.test_accuracy.append(bit_hits(test_dataset))
        report.wall_time.append(time.perf_counter() - t0)
    return params, report
