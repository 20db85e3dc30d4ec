"""Bitstring helpers. Bit 0 is the most significant everywhere."""

from __future__ import annotations

import numpy as np


def int_to_bits(value: int, width: int) -> np.ndarray:
    if not 0 <= value < (1 << width):
        raise ValueError(f"value {value} does not fit in {width} bits")
    return np.array([(value >> (width - 1 - i)) & 1 for i in range(width)], dtype=np.uint8)


def bits_to_int(bits) -> int:
    out = 0
    for b in np.asarray(bits).astype(int):
        out = (out << 1) | b
    return out


def bits_to_str(bits) -> str:
    return "".join(str(int(b)) for b in np.asarray(bits))


def str_to_bits(s: str) -> np.ndarray:
    if not s or any(c not in "01" for c in s):
        raise ValueError(f"not a bitstring: {s!r}")
    return np.array([int(c) for c in s], dtype=np.uint8)


def hamming(a, b) -> int:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("bitstrings must have equal length")
    return int(np.count_nonzero(a != b))


def index_matrix(start: int, stop: int, n: int) -> np.ndarray:
    """Rows are the bitstrings of the integers in [start, stop)."""
    idx = np.arange(start, stop, dtype=np.uint64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.uint64)
    return ((idx[:, None] >> shifts[None, :]) & 1).astype(np.uint8)
