"""Compact binary encoding of permutations and Hamming projection.

A permutation of {0..k-1} is written as k fields of ceil(log2 k) bits,
each holding one image value big-endian. Arbitrary bitstrings may decode
to a non-bijective index list; `project_to_permutation` maps them to the
Hamming-nearest valid permutation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..bits import bits_to_int, int_to_bits


def bits_per_entry(k: int) -> int:
    if k < 2:
        raise ValueError("need at least two elements")
    return math.ceil(math.log2(k))


@dataclass(frozen=True)
class PermutationEncoding:
    k: int
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.shape != (self.k * bits_per_entry(self.k),):
            raise ValueError(f"expected {self.k * bits_per_entry(self.k)} bits")
        object.__setattr__(self, "bits", bits)

    @property
    def width(self) -> int:
        return bits_per_entry(self.k)

    def indices(self) -> np.ndarray:
        return decode_permutation(self.bits, self.k)

    def is_valid(self) -> bool:
        idx = self.indices()
        return bool((idx < self.k).all() and len(set(idx.tolist())) == self.k)


def encode_permutation(perm) -> PermutationEncoding:
    perm = np.asarray(perm, dtype=int)
    k = perm.shape[0]
    if sorted(perm.tolist()) != list(range(k)):
        raise ValueError(f"not a permutation of 0..{k - 1}: {perm}")
    width = bits_per_entry(k)
    bits = np.concatenate([int_to_bits(int(v), width) for v in perm])
    return PermutationEncoding(k, bits)


def decode_permutation(bits, k: int) -> np.ndarray:
    """Field-wise decode; the result may not be a bijection."""
    width = bits_per_entry(k)
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.shape != (k * width,):
        raise ValueError(f"expected {k * width} bits for k={k}")
    return np.array([bits_to_int(bits[i * width : (i + 1) * width]) for i in range(k)])


def _field_costs(bits: np.ndarray, k: int) -> np.ndarray:
    """cost[i, v] = Hamming distance between field i and the code of v."""
    width = bits_per_entry(k)
    codes = np.stack([int_to_bits(v, width) for v in range(k)])
    fields = bits.reshape(k, width)
    return (fields[:, None, :] != codes[None, :, :]).sum(axis=2)


def _assignment_cost(cost: np.ndarray) -> int:
    rows, cols = linear_sum_assignment(cost)
    return int(cost[rows, cols].sum())


def project_to_permutation(bits, k: int) -> PermutationEncoding:
    """Hamming-nearest valid permutation; ties go to the lexicographically
    smallest image sequence.

    Minimising total field-wise Hamming distance over bijections is an
    assignment problem; the tie rule is realised by fixing images
    greedily in ascending order whenever doing so preserves optimality.
    """
    bits = np.asarray(bits, dtype=np.uint8)
    cost = _field_costs(bits, k)
    optimum = _assignment_cost(cost)
    chosen: list[int] = []
    available = list(range(k))
    fixed = 0
    for i in range(k):
        for v in available:
            rest = [w for w in available if w != v]
            if rest:
                sub = cost[np.ix_(range(i + 1, k), rest)]
                completion = _assignment_cost(sub)
            else:
                completion = 0
            if fixed + cost[i, v] + completion == optimum:
                chosen.append(v)
                available = rest
                fixed += int(cost[i, v])
                break
    return encode_permutation(np.array(chosen))
