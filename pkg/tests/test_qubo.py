"""Tests for QUBO/Ising representations, masks, and tiling."""

import numpy as np
import pytest

from qubolearn.bits import index_matrix
from qubolearn.qubo import (
    IsingProblem,
    QuboMatrix,
    Topology,
    apply_mask,
    assemble_qubo,
    chimera_cell,
    dense_topology,
    diagonal_topology,
    energy,
    free_parameter_index,
    ising_to_qubo,
    load_qubo,
    load_topology,
    parallel_tile,
    pegasus_tile,
    save_qubo,
    save_topology,
)
from qubolearn.solvers import exhaustive_solve


def naive_energy(A, x):
    """Independent double-loop oracle for x^T A x."""
    total = 0.0
    for i in range(len(x)):
        for j in range(len(x)):
            total += A[i, j] * x[i] * x[j]
    return total


class TestEnergy:
    def test_all_zeros(self):
        A = QuboMatrix(np.array([[1.0, 2.0], [2.0, -3.0]]))
        assert energy(A, [0, 0]) == 0.0

    def test_identity_diagonal(self):
        A = QuboMatrix(np.eye(3))
        assert energy(A, [1, 1, 1]) == 3.0

    def test_matches_double_loop_oracle(self):
        rng = np.random.default_rng(42)
        M = rng.normal(size=(6, 6))
        A = QuboMatrix(0.5 * (M + M.T))
        for _ in range(20):
            x = rng.integers(0, 2, size=6)
            assert energy(A, x) == pytest.approx(naive_energy(A.values, x), abs=1e-12)

    def test_length_mismatch(self):
        A = QuboMatrix(np.eye(3))
        with pytest.raises(ValueError):
            energy(A, [1, 0])

    def test_non_binary_entries(self):
        A = QuboMatrix(np.eye(2))
        with pytest.raises(ValueError):
            energy(A, [1, 2])

    def test_invariant_under_symmetrisation(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            M = rng.normal(size=(5, 5))
            sym = 0.5 * (M + M.T)
            x = rng.integers(0, 2, size=5)
            assert naive_energy(M, x) == pytest.approx(naive_energy(sym, x), abs=1e-12)


class TestQuboMatrix:
    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            QuboMatrix(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_rejects_value_outside_mask(self):
        mask = np.eye(2, dtype=bool)
        with pytest.raises(ValueError):
            QuboMatrix(np.array([[1.0, 0.5], [0.5, 1.0]]), mask)

    def test_diagonal_always_allowed(self):
        A = QuboMatrix(np.eye(2), np.zeros((2, 2), dtype=bool))
        assert A.mask[0, 0] and A.mask[1, 1]


class TestIsingToQubo:
    def test_null_problem(self):
        A, offset = ising_to_qubo(IsingProblem(np.zeros((3, 3)), np.zeros(3)))
        assert offset == 0.0
        assert not A.values.any()

    def test_single_spin_bias(self):
        # s in {-1,+1} with energies {-1,+1} maps to A=[[2]], offset=-1.
        A, offset = ising_to_qubo(IsingProblem(np.array([[0.0]]), np.array([1.0])))
        assert A.values == pytest.approx(np.array([[2.0]]))
        assert offset == pytest.approx(-1.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_full_enumeration_n8(self, seed):
        rng = np.random.default_rng(seed)
        P = IsingProblem(rng.normal(size=(8, 8)), rng.normal(size=8))
        A, offset = ising_to_qubo(P)
        X = index_matrix(0, 256, 8)
        for x in X:
            s = 2.0 * x - 1.0
            assert energy(A, x) + offset == pytest.approx(P.evaluate(s), abs=1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            IsingProblem(np.zeros((3, 3)), np.zeros(2))


class TestTopology:
    def test_chimera_cell_pattern(self):
        topo = chimera_cell()
        adj = topo.adjacency
        for i in range(4):
            for j in range(4, 8):
                assert adj[i, j] and adj[j, i]
        assert not adj[0, 1] and not adj[4, 5]
        assert adj.diagonal().all()

    def test_adjacency_must_be_symmetric(self):
        adj = np.zeros((3, 3), dtype=bool)
        adj[0, 1] = True
        with pytest.raises(ValueError):
            Topology("custom", adj)


class TestApplyMask:
    def test_dense_is_symmetrisation(self):
        rng = np.random.default_rng(0)
        M = rng.normal(size=(5, 5))
        A = apply_mask(M, dense_topology(5))
        assert A.values == pytest.approx(0.5 * (M + M.T))

    def test_chimera_keeps_24_free_parameters(self):
        A = apply_mask(np.ones((8, 8)), chimera_cell())
        upper_nonzero = [(i, j) for i in range(8) for j in range(i, 8) if A.values[i, j] != 0]
        assert len(upper_nonzero) == 24  # 8 diagonal + 16 K4,4 couplings

    def test_diagonal_only_mask(self):
        rng = np.random.default_rng(1)
        M = rng.normal(size=(4, 4))
        A = apply_mask(M, diagonal_topology(4))
        assert A.values == pytest.approx(np.diag(np.diag(M)))

    def test_idempotent(self):
        rng = np.random.default_rng(2)
        M = rng.normal(size=(8, 8))
        topo = chimera_cell()
        once = apply_mask(M, topo)
        twice = apply_mask(once.values, topo)
        assert twice.values == pytest.approx(once.values)


class TestFreeParameterIndex:
    def test_chimera_width(self):
        assert len(free_parameter_index(chimera_cell())) == 24

    def test_dense_width(self):
        assert len(free_parameter_index(dense_topology(9))) == 45

    def test_diagonal_ordering(self):
        assert free_parameter_index(diagonal_topology(5)) == [(i, i) for i in range(5)]

    def test_assemble_round_trip(self):
        topo = chimera_cell()
        rng = np.random.default_rng(3)
        flat = rng.normal(size=24)
        A = assemble_qubo(flat, topo)
        recovered = [A.values[i, j] for (i, j) in free_parameter_index(topo)]
        assert recovered == pytest.approx(flat)


class TestParallelTile:
    def test_single_instance_unchanged(self):
        A = apply_mask(np.arange(64).reshape(8, 8).astype(float), chimera_cell())
        tiled, offsets = parallel_tile([A])
        assert offsets == [(0, 8)]
        assert tiled.values == pytest.approx(A.values)

    def test_two_copies_preserve_block_minima(self):
        rng = np.random.default_rng(4)
        A = apply_mask(rng.normal(size=(8, 8)), chimera_cell())
        single = exhaustive_solve(A)
        tiled, offsets = parallel_tile([A, A])
        joint = exhaustive_solve(tiled)
        for lo, hi in offsets:
            block_bits = joint.best[lo:hi]
            assert energy(A, block_bits) == pytest.approx(single.best_energy, abs=1e-12)

    def test_141_chimera_instances(self):
        rng = np.random.default_rng(5)
        instances = [apply_mask(rng.normal(size=(8, 8)), chimera_cell()) for _ in range(141)]
        tiled, offsets = parallel_tile(instances)
        assert tiled.n == 1128
        assert offsets[0] == (0, 8) and offsets[-1] == (1120, 1128)

    def test_heterogeneous_sizes_rejected(self):
        with pytest.raises(ValueError):
            parallel_tile([QuboMatrix(np.eye(2)), QuboMatrix(np.eye(3))])


class TestPegasusTile:
    def test_default_contains_intra_cell_edges(self):
        topo = pegasus_tile()
        assert topo.n == 32
        cell = chimera_cell().adjacency
        for c in range(4):
            lo = c * 8
            block = topo.adjacency[lo : lo + 8, lo : lo + 8]
            assert (block == cell).all()

    def test_default_chain_couplings(self):
        topo = pegasus_tile()
        for c in range(3):
            for q in range(8):
                assert topo.adjacency[c * 8 + q, (c + 1) * 8 + q]

    def test_empty_inter_cell_file(self, tmp_path):
        path = tmp_path / "inter.topo"
        path.write_text("topology n=32\n")
        topo = pegasus_tile(path)
        off_block = topo.adjacency.copy()
        for c in range(4):
            lo = c * 8
            off_block[lo : lo + 8, lo : lo + 8] = False
        assert not off_block.any()

    def test_round_trip(self, tmp_path):
        topo = pegasus_tile()
        path = tmp_path / "full.topo"
        save_topology(topo, path)
        loaded = load_topology(path)
        assert loaded.kind == topo.kind
        assert (loaded.adjacency == topo.adjacency).all()

    def test_malformed_file(self, tmp_path):
        path = tmp_path / "bad.topo"
        path.write_text("topology n=32\n5 not-an-int\n")
        with pytest.raises(ValueError):
            pegasus_tile(path)


class TestQuboTextFormat:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(6)
        M = rng.normal(size=(5, 5))
        A = QuboMatrix(0.5 * (M + M.T))
        path = tmp_path / "a.qubo"
        save_qubo(A, path)
        loaded = load_qubo(path)
        assert loaded.values == pytest.approx(A.values, abs=0.0)

    def test_comments_and_mirroring(self, tmp_path):
        path = tmp_path / "b.qubo"
        path.write_text("# example\nqubo n=2\n0 0 -1.0\n0 1 2.5  # coupling\n")
        A = load_qubo(path)
        assert A.values[0, 1] == 2.5 and A.values[1, 0] == 2.5

    def test_rejects_lower_triangle(self, tmp_path):
        path = tmp_path / "c.qubo"
        path.write_text("qubo n=2\n1 0 2.0\n")
        with pytest.raises(ValueError):
            load_qubo(path)
