"""Exhaustive and simulated-annealing QUBO solvers.

Both solvers report the best state and the best *distinct* runner-up, which
the contrastive training losses consume. Ties are always broken towards the
lexicographically smallest bitstring (bit 0 most significant), so results
are deterministic regardless of internal chunking or thread count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bits import bits_to_int, index_matrix
from .qubo import QuboMatrix, energy
from .seeding import substream

EXHAUSTIVE_MAX_N = 26
_CHUNK_BITS = 18  # enumeration chunk size 2**18


def _max_threads() -> int:
    env = os.environ.get("QUANT_THREADS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


@dataclass
class SaParams:
    """Simulated-annealing settings.

    `beta_hot`/`beta_cold` may be "auto", in which case the inverse
    temperatures are derived from the coupling magnitudes of the problem.
    """

    num_reads: int = 100
    sweeps: int = 1000
    beta_hot: float | str = "auto"
    beta_cold: float | str = "auto"
    seed: int = 0

    def __post_init__(self):
        if self.num_reads < 1:
            raise ValueError("num_reads must be >= 1")
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        hot_auto = isinstance(self.beta_hot, str)
        cold_auto = isinstance(self.beta_cold, str)
        for val, auto in ((self.beta_hot, hot_auto), (self.beta_cold, cold_auto)):
            if auto:
                if val != "auto":
                    raise ValueError(f"bad beta value {val!r}")
            elif val <= 0:
                raise ValueError("explicit betas must be positive")
        if not hot_auto and not cold_auto and self.beta_hot >= self.beta_cold:
            raise ValueError("beta_hot must be smaller than beta_cold")


@dataclass
class SolverResult:
    """Ranked solver output.

    `samples` holds distinct states as (bitstring, energy, multiplicity),
    sorted ascending by (energy, bitstring). `second_best` is the best
    state different from `best`, if one was found.
    """

    samples: list[tuple[np.ndarray, float, int]]
    best: np.ndarray
    best_energy: float
    second_best: np.ndarray | None = None
    second_energy: float | None = None

    num_reads: int = field(default=0)

    def __post_init__(self):
        if self.second_best is not None:
            if self.second_energy < self.best_energy:
                raise ValueError("second_energy must not undercut best_energy")
            if (self.second_best == self.best).all():
                raise ValueError("second_best must differ from best")


def _chunk_scan(A: np.ndarray, n: int, start: int, stop: int):
    """Return up to two (energy, index) candidates for the range [start, stop)."""
    X = index_matrix(start, stop, n).astype(np.float64)
    energies = np.einsum("bi,bi->b", X @ A, X)
    if energies.shape[0] == 1:
        return [(float(energies[0]), start)]
    # argpartition does not preserve first-occurrence order on ties, so
    # resolve the top slice explicitly by (energy, index).
    k = min(4, energies.shape[0])
    cand = np.argpartition(energies, k - 1)[:k]
    cand = cand[np.lexsort((cand, energies[cand]))]
    return [(float(energies[c]), start + int(c)) for c in cand[:2]]


def exhaustive_solve(A: QuboMatrix) -> SolverResult:
    """Enumerate all 2^n states; exact best and second-best.

    Enumeration may be split over threads (capped by QUANT_THREADS); the
    merge is order-insensitive so the result never depends on scheduling.
    """
    n = A.n
    if n > EXHAUSTIVE_MAX_N:
        raise ValueError(f"n={n} exceeds the exhaustive enumeration budget ({EXHAUSTIVE_MAX_N})")
    total = 1 << n
    chunk = 1 << _CHUNK_BITS
    ranges = [(lo, min(lo + chunk, total)) for lo in range(0, total, chunk)]
    values = A.values
    if len(ranges) == 1:
        candidates = _chunk_scan(values, n, *ranges[0])
    else:
        workers = min(_max_threads(), len(ranges))
        candidates = []
        if workers == 1:
            for lo, hi in ranges:
                candidates.extend(_chunk_scan(values, n, lo, hi))
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                for part in pool.map(lambda r: _chunk_scan(values, n, *r), ranges):
                    candidates.extend(part)
    candidates.sort()
    (e0, i0), (e1, i1) = candidates[0], candidates[1]
    best = index_matrix(i0, i0 + 1, n)[0]
    second = index_matrix(i1, i1 + 1, n)[0]
    best_e = energy(A, best)
    second_e = energy(A, second)
    return SolverResult(
        samples=[(best, best_e, 1), (second, second_e, 1)],
        best=best,
        best_energy=best_e,
        second_best=second,
        second_energy=second_e,
        num_reads=2,
    )


def _auto_betas(values: np.ndarray) -> tuple[float, float]:
    # Single-flip energy magnitude per variable, estimated from row sums of
    # |A|: |dE_i| <= |A_ii| + 2 * sum_{j != i} |A_ij|.
    absA = np.abs(values)
    row = np.diag(absA) + 2.0 * (absA.sum(axis=1) - np.diag(absA))
    nonzero = row[row > 0]
    if nonzero.size == 0:
        return math.log(2.0), math.log(100.0)
    de_max = float(nonzero.max())
    de_min = float(nonzero.min())
    return math.log(2.0) / de_max, math.log(100.0) / de_min


def _beta_schedule(values: np.ndarray, beta_hot, beta_cold, sweeps: int) -> np.ndarray:
    auto_hot, auto_cold = _auto_betas(values)
    hot = auto_hot if isinstance(beta_hot, str) else float(beta_hot)
    cold = auto_cold if isinstance(beta_cold, str) else float(beta_cold)
    if hot >= cold:
        # Degenerate estimate (e.g. all rows equal); keep a valid ordering.
        cold = hot * 2.0
    if sweeps == 1:
        return np.array([cold])
    return hot * (cold / hot) ** (np.arange(sweeps) / (sweeps - 1))


def _run_reads(A: QuboMatrix, params: SaParams, num_reads: int, sweeps: int, read_base: int) -> np.ndarray:
    """Metropolis single-flip chains, vectorised across reads.

    Read r draws all of its randomness from its own substream, so results
    do not depend on how reads are batched or ordered.
    """
    n = A.n
    values = A.values
    diag = np.diag(values)
    schedule = _beta_schedule(values, params.beta_hot, params.beta_cold, sweeps)
    rngs = [substream(params.seed, "sa-read", read_base + r) for r in range(num_reads)]
    X = np.stack([(rng.random(n) < 0.5).astype(np.float64) for rng in rngs])
    # Uniform draws are produced per read in sweep blocks to bound memory.
    block = max(1, min(sweeps, 2_000_000 // max(1, num_reads * n)))
    sweep = 0
    while sweep < sweeps:
        nblk = min(block, sweeps - sweep)
        U = np.stack([rng.random((nblk, n)) for rng in rngs])
        for t in range(nblk):
            beta = schedule[sweep + t]
            for i in range(n):
                h = X @ values[:, i]
                delta = (1.0 - 2.0 * X[:, i]) * (diag[i] + 2.0 * (h - diag[i] * X[:, i]))
                accept = delta <= 0.0
                hot = ~accept
                if hot.any():
                    accept[hot] = U[hot, t, i] < np.exp(-beta * delta[hot])
                X[accept, i] = 1.0 - X[accept, i]
        sweep += nblk
    return X.astype(np.uint8)


def _collect(A: QuboMatrix, states: np.ndarray) -> list[tuple[np.ndarray, float, int]]:
    counts: dict[tuple, int] = {}
    for row in states:
        key = tuple(int(v) for v in row)
        counts[key] = counts.get(key, 0) + 1
    samples = []
    for key, count in counts.items():
        bits = np.array(key, dtype=np.uint8)
        samples.append((bits, energy(A, bits), count))
    samples.sort(key=lambda s: (s[1], bits_to_int(s[0])))
    return samples


def simulated_anneal(A: QuboMatrix, params: SaParams) -> SolverResult:
    """Run `num_reads` independent annealing restarts and rank the states.

    Each restart performs `sweeps` full single-bit-flip Metropolis passes
    under a geometric inverse-temperature schedule. If every read agrees,
    one extra read with doubled sweeps tries to produce a distinct
    runner-up before reporting it absent.
    """
    states = _run_reads(A, params, params.num_reads, params.sweeps, read_base=0)
    samples = _collect(A, states)
    if len(samples) == 1:
        extra = _run_reads(A, params, 1, 2 * params.sweeps, read_base=params.num_reads)
        if (extra[0] != samples[0][0]).any():
            samples = _collect(A, np.concatenate([states, extra]))
    best, best_e, _ = samples[0]
    second = second_e = None
    if len(samples) > 1:
        second, second_e, _ = samples[1]
    return SolverResult(
        samples=samples,
        best=best,
        best_energy=best_e,
        second_best=second,
        second_energy=second_e,
        num_reads=params.num_reads,
    )


def second_best_ratio(result_a: SolverResult, result_b: SolverResult) -> float:
    """Second-best energy of `a` relative to `b`, in percent.

    Both results must come from the same problem. With the negative
    optima typical of trained QUBOs, values below 100 mean `a` found a
    worse (less negative) runner-up than `b`.
    """
    if result_a.second_best is None or result_b.second_best is None:
        raise ValueError("both results need a second-best state")
    if result_a.best.shape != result_b.best.shape:
        raise ValueError("results are for problems of different size")
    return 100.0 * result_a.second_energy / result_b.second_energy


def success_probability(result: SolverResult, optimum_energy: float) -> float:
    """Fraction of reads whose energy matches the given optimum."""
    if not result.samples:
        raise ValueError("result has no samples")
    total = sum(count for _, _, count in result.samples)
    hits = sum(count for _, e, count in result.samples if abs(e - optimum_energy) <= 1e-9)
    return hits / total


def hamming_histogram(solutions, truths) -> np.ndarray:
    """histogram[d] = number of (solution, truth) pairs at Hamming distance d."""
    if len(solutions) != len(truths):
        raise ValueError("need one truth per solution")
    if not solutions:
        return np.zeros(1, dtype=np.int64)
    nbits = len(solutions[0])
    hist = np.zeros(nbits + 1, dtype=np.int64)
    for sol, truth in zip(solutions, truths):
        sol = np.asarray(sol)
        truth = np.asarray(truth)
        if sol.shape != truth.shape or sol.shape != (nbits,):
            raise ValueError("all bitstrings must share one length")
        hist[int(np.count_nonzero(sol != truth))] += 1
    return hist
