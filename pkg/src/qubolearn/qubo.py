"""QUBO and Ising problem representations, topology masks, and tiling.

A QUBO is  min_{x in {0,1}^n} x^T A x  with a dense symmetric matrix A.
Annealer hardware only realises a sparse subset of couplings, which is
modelled here as a boolean mask attached to the matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CHIMERA_CELL_SIZE = 8


def _as_bits(x, n: int) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 1 or x.shape[0] != n:
        raise ValueError(f"bitstring length {x.shape} does not match n={n}")
    if not np.isin(x, (0, 1)).all():
        raise ValueError("bitstring entries must be 0 or 1")
    return x.astype(np.float64)


@dataclass(frozen=True)
class QuboMatrix:
    """Symmetric coupling matrix with a sparsity mask of allowed entries.

    Parameters
    ----------
    values : np.ndarray
        Dense symmetric (n, n) float matrix. Entries outside the mask
        must be zero.
    mask : np.ndarray, optional
        Boolean symmetric (n, n) matrix of allowed couplings. The
        diagonal is always allowed. Defaults to all-allowed.
    """

    values: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError(f"values must be square, got shape {values.shape}")
        if values.shape[0] < 1:
            raise ValueError("QUBO needs at least one variable")
        if not np.allclose(values, values.T, atol=0.0):
            raise ValueError("values must be exactly symmetric")
        mask = self.mask
        if mask is None:
            mask = np.ones(values.shape, dtype=bool)
        else:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != values.shape:
                raise ValueError("mask shape must match values")
            if not (mask == mask.T).all():
                raise ValueError("mask must be symmetric")
            mask = mask.copy()
            np.fill_diagonal(mask, True)
        if np.any(values[~mask] != 0.0):
            raise ValueError("values must be zero outside the mask")
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class IsingProblem:
    """Spin problem  min_{s in {-1,1}^n} s^T J s + b^T s."""

    J: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        J = np.asarray(self.J, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if J.ndim != 2 or J.shape[0] != J.shape[1]:
            raise ValueError(f"J must be square, got shape {J.shape}")
        if b.shape != (J.shape[0],):
            raise ValueError(f"b length {b.shape} does not match J of size {J.shape[0]}")
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.J.shape[0]

    def evaluate(self, spins) -> float:
        s = np.asarray(spins, dtype=np.float64)
        return float(s @ self.J @ s + self.b @ s)


@dataclass(frozen=True)
class Topology:
    """Connectivity pattern of allowed couplings between variables.

    `adjacency` is boolean, symmetric, and includes the diagonal (linear
    terms live there and are always realisable).
    """

    kind: str
    adjacency: np.ndarray
    cell_size: int = CHIMERA_CELL_SIZE

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=bool).copy()
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValueError("adjacency must be square")
        if not (adj == adj.T).all():
            raise ValueError("adjacency must be symmetric")
        np.fill_diagonal(adj, True)
        adj.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]


def dense_topology(n: int) -> Topology:
    return Topology("dense", np.ones((n, n), dtype=bool))


def diagonal_topology(n: int) -> Topology:
    """Diagonal-only couplings; QUBOs under this mask are trivially solvable."""
    return Topology("custom", np.eye(n, dtype=bool))


def chimera_cell() -> Topology:
    """One complete-bipartite K4,4 unit cell on 8 variables plus the diagonal."""
    adj = np.zeros((8, 8), dtype=bool)
    adj[:4, 4:] = True
    adj[4:, :4] = True
    np.fill_diagonal(adj, True)
    return Topology("chimera_cell", adj)


def pegasus_tile(adjacency_path=None) -> Topology:
    """Four K4,4 cells on 32 variables with configurable inter-cell couplings.

    The intra-cell pattern is fixed; inter-cell edges come from the given
    topology file (format: see `load_topology`). The shipped default couples
    variable q of cell c to variable q of cell c+1.
    """
    n = 4 * CHIMERA_CELL_SIZE
    adj = np.zeros((n, n), dtype=bool)
    cell = chimera_cell().adjacency
    for c in range(4):
        lo = c * CHIMERA_CELL_SIZE
        adj[lo : lo + 8, lo : lo + 8] = cell
    if adjacency_path is None:
        # Default chain pattern between consecutive cells.
        for c in range(3):
            for q in range(CHIMERA_CELL_SIZE):
                i, j = c * 8 + q, (c + 1) * 8 + q
                adj[i, j] = adj[j, i] = True
    else:
        inter = load_topology(adjacency_path)
        if inter.n != n:
            raise ValueError(f"inter-cell file is for n={inter.n}, expected {n}")
        adj |= inter.adjacency
    np.fill_diagonal(adj, True)
    return Topology("pegasus_tile", adj)


def energy(A: QuboMatrix, x) -> float:
    """Evaluate x^T A x for a binary assignment x."""
    xs = _as_bits(x, A.n)
    return float(xs @ A.values @ xs)


def ising_to_qubo(P: IsingProblem) -> tuple[QuboMatrix, float]:
    """Convert a spin problem to an equivalent QUBO plus a constant offset.

    Substituting s = 2x - 1 into s^T J s + b^T s and collecting the linear
    terms onto the diagonal (x_i^2 = x_i) gives, for every binary x,

        energy(A, x) + offset == s^T J s + b^T s.
    """
    J, b = P.J, P.b
    A = 2.0 * (J + J.T)
    row = J.sum(axis=1)
    col = J.sum(axis=0)
    A[np.diag_indices_from(A)] += -2.0 * (row + col) + 2.0 * b
    offset = float(J.sum() - b.sum())
    return QuboMatrix(A), offset


def apply_mask(A_dense, topo: Topology) -> QuboMatrix:
    """Symmetrise a dense matrix and zero the couplings the topology forbids."""
    A = np.asarray(A_dense, dtype=np.float64)
    if A.shape != (topo.n, topo.n):
        raise ValueError(f"matrix shape {A.shape} does not match topology n={topo.n}")
    sym = 0.5 * (A + A.T)
    sym[~topo.adjacency] = 0.0
    return QuboMatrix(sym, topo.adjacency)


def free_parameter_index(topo: Topology) -> list[tuple[int, int]]:
    """Row-major ordering of the allowed upper-triangular (i, j) positions.

    Its length is the output width of a network that regresses this
    topology's free couplings.
    """
    adj = topo.adjacency
    return [(i, j) for i in range(topo.n) for j in range(i, topo.n) if adj[i, j]]


def assemble_qubo(flat_values, topo: Topology) -> QuboMatrix:
    """Build a masked QUBO from one value per free parameter position."""
    index = free_parameter_index(topo)
    flat = np.asarray(flat_values, dtype=np.float64)
    if flat.shape != (len(index),):
        raise ValueError(f"expected {len(index)} values, got {flat.shape}")
    A = np.zeros((topo.n, topo.n))
    for v, (i, j) in zip(flat, index):
        A[i, j] = v
        A[j, i] = v
    return QuboMatrix(A, topo.adjacency)


def parallel_tile(instances: list[QuboMatrix]) -> tuple[QuboMatrix, list[tuple[int, int]]]:
    """Stack instances of one topology into a block-diagonal QUBO.

    Solving the tiled problem and slicing the solution by the returned
    (start, stop) ranges is equivalent to solving every block alone,
    because no coupling crosses block boundaries.
    """
    if not instances:
        raise ValueError("need at least one instance")
    n = instances[0].n
    for inst in instances:
        if inst.n != n:
            raise ValueError("all instances must share the same size")
        if not (inst.mask == instances[0].mask).all():
            raise ValueError("all instances must share the same topology")
    m = len(instances)
    values = np.zeros((m * n, m * n))
    mask = np.zeros((m * n, m * n), dtype=bool)
    offsets = []
    for k, inst in enumerate(instances):
        lo = k * n
        values[lo : lo + n, lo : lo + n] = inst.values
        mask[lo : lo + n, lo : lo + n] = inst.mask
        offsets.append((lo, lo + n))
    return QuboMatrix(values, mask), offsets


# ---------------------------------------------------------------------------
# Text formats
# ---------------------------------------------------------------------------
#
# QUBO file:      header "qubo n=<n>", then lines "i j value" with i <= j;
#                 off-diagonal entries are implicitly mirrored.
# Topology file:  header "topology n=<n> [kind=<kind>]", then lines "i j".
# '#' starts a comment in both formats.


def _data_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def _parse_header(line: str, expected: str) -> dict:
    parts = line.split()
    if not parts or parts[0] != expected:
        raise ValueError(f"expected '{expected}' header, got {line!r}")
    fields = {}
    for tok in parts[1:]:
        if "=" not in tok:
            raise ValueError(f"malformed header token {tok!r}")
        key, val = tok.split("=", 1)
        fields[key] = val
    if "n" not in fields:
        raise ValueError(f"{expected} header is missing n=<n>")
    return fields


def dumps_qubo(A: QuboMatrix) -> str:
    lines = [f"qubo n={A.n}"]
    for i in range(A.n):
        for j in range(i, A.n):
            if A.values[i, j] != 0.0:
                lines.append(f"{i} {j} {float(A.values[i, j])!r}")
    return "\n".join(lines) + "\n"


def loads_qubo(text: str) -> QuboMatrix:
    it = _data_lines(text)
    try:
        _, header = next(it)
    except StopIteration:
        raise ValueError("empty QUBO file") from None
    n = int(_parse_header(header, "qubo")["n"])
    A = np.zeros((n, n))
    for lineno, line in it:
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"line {lineno}: expected 'i j value', got {line!r}")
        i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        if not (0 <= i <= j < n):
            raise ValueError(f"line {lineno}: indices ({i}, {j}) out of range for n={n}")
        A[i, j] = v
        A[j, i] = v
    return QuboMatrix(A)


def save_qubo(A: QuboMatrix, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_qubo(A))


def load_qubo(path) -> QuboMatrix:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_qubo(fh.read())


def save_topology(topo: Topology, path) -> None:
    lines = [f"topology n={topo.n} kind={topo.kind}"]
    for i in range(topo.n):
        for j in range(i + 1, topo.n):
            if topo.adjacency[i, j]:
                lines.append(f"{i} {j}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_topology(path) -> Topology:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    it = _data_lines(text)
    try:
        _, header = next(it)
    except StopIteration:
        raise ValueError("empty topology file") from None
    fields = _parse_header(header, "topology")
    n = int(fields["n"])
    adj = np.zeros((n, n), dtype=bool)
    for lineno, line in it:
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected 'i j', got {line!r}")
        i, j = int(parts[0]), int(parts[1])
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"line {lineno}: indices ({i}, {j}) out of range for n={n}")
        adj[i, j] = adj[j, i] = True
    np.fill_diagonal(adj, True)
    return Topology(fields.get("kind", "custom"), adj)
