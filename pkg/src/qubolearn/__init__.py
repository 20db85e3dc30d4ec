"""Learned-QUBO toolkit: representations, solvers, network, training, problems."""

from .qubo import (
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
    parallel_tile,
    pegasus_tile,
)
from .solvers import (
    SaParams,
    SolverResult,
    exhaustive_solve,
    hamming_histogram,
    second_best_ratio,
    simulated_anneal,
    success_probability,
)

__version__ = "0.1.0"
