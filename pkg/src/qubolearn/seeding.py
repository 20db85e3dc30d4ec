"""Named random substreams derived from a single experiment seed.

Every consumer (data generation, weight init, annealing, noise) pulls its
own generator so that adding draws to one concern never perturbs another.
"""

from __future__ import annotations

import hashlib

import numpy as np

#: Substream names used across the package.
STREAM_DATA = "data"
STREAM_INIT = "init"
STREAM_SA = "sa"
STREAM_NOISE = "noise"


def _name_key(name: str) -> int:
    # Stable 32-bit key independent of PYTHONHASHSEED.
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:4], "little")


def substream(seed: int, name: str, index: int | None = None) -> np.random.Generator:
    """Return the generator for substream `name` of the given root seed.

    An optional `index` derives per-item streams (e.g. one per annealing
    read) that are independent of how many siblings exist.
    """
    key: tuple[int, ...] = (_name_key(name),)
    if index is not None:
        key = key + (int(index),)
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=key))
