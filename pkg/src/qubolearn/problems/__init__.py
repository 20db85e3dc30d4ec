"""Problem-type encoders, generators, and dataset plumbing."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..qubo import Topology, chimera_cell, dense_topology


@dataclass
class ProblemInstance:
    """One supervised example: problem vector p and ground-truth bits."""

    problem_type: str
    p: np.ndarray
    x_hat: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=np.float64)
        self.x_hat = np.asarray(self.x_hat, dtype=np.uint8)


PROBLEM_TYPES = ("randgraph", "willow", "psr2d", "rot3d", "rot3d_alpha", "rot3d_beta", "rot3d_gamma")


def topology_for(problem_type: str, n_bits: int) -> Topology:
    """Default solution-space topology for a problem type.

    Graph matching at n=8 fits one unit cell; everything else regresses a
    dense matrix.
    """
    if problem_type not in PROBLEM_TYPES:
        raise ValueError(f"unknown problem type {problem_type!r}")
    if problem_type in ("randgraph", "willow") and n_bits == 8:
        return chimera_cell()
    return dense_topology(n_bits)


from .permutation import (  # noqa: E402
    PermutationEncoding,
    decode_permutation,
    encode_permutation,
    project_to_permutation,
)
from .graphs import (  # noqa: E402
    direct_solve,
    gen_randgraph,
    load_keypoint_features,
    qap_objective,
    willow_affinity,
    willow_instance,
)
from .geometry import (  # noqa: E402
    PointCloudPair,
    add_uniform_noise2d,
    corrupt_matches,
    cross_covariance,
    decode_angle2d,
    decode_euler,
    encode_angle2d,
    encode_euler,
    euler_zyx,
    gen_clouds3d,
    gen_shapes2d,
    psr2d_encode,
    rot3d_encode,
    rotation2d,
    three_stage_infer,
)
from .datasets import (  # noqa: E402
    build_psr2d_dataset,
    build_randgraph_dataset,
    build_rot3d_dataset,
    load_dataset,
    save_dataset,
)
