"""Graph-matching problems: synthetic RandGraph instances and keypoint
affinity assembly from ingested feature files.

Matching k keypoints is a quadratic assignment problem over a k^2 x k^2
weight matrix W: assigning i->a and j->b costs W[k*i+a, k*j+b], and a
permutation P scores  sum_{i,j} W[k*i+P(i), k*j+P(j)].
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from . import ProblemInstance
from .permutation import encode_permutation

DIRECT_SOLVE_MAX_K = 8


def gen_randgraph(k: int, seed, penalty: float = 1.0) -> ProblemInstance:
    """Synthetic matching instance built from random pairwise distances.

    The target graph is the source graph relabelled by a random ground
    truth permutation P, so on the support of P the distance discrepancy
    |D_src(i,j) - D_tgt(P(i),P(j))| vanishes and P scores a QAP objective
    of exactly zero. All off-support entries receive a constant positive
    penalty, making P the unique minimiser.
    """
    if k < 2:
        raise ValueError("need k >= 2")
    if penalty <= 0:
        raise ValueError("penalty must be positive")
    rng = np.random.default_rng(seed)
    D = rng.random((k, k))
    perm = rng.permutation(k)
    D_tgt = np.empty_like(D)
    D_tgt[np.ix_(perm, perm)] = D
    W = np.full((k * k, k * k), penalty)
    for i in range(k):
        for j in range(k):
            W[k * i + perm[i], k * j + perm[j]] = abs(D[i, j] - D_tgt[perm[i], perm[j]])
    enc = encode_permutation(perm)
    return ProblemInstance(
        "randgraph",
        p=W.ravel(),
        x_hat=enc.bits,
        meta={"k": k, "perm": perm.tolist(), "distances": D.tolist()},
    )


def qap_objective(W, perm) -> float:
    perm = np.asarray(perm, dtype=int)
    k = perm.shape[0]
    W = np.asarray(W, dtype=np.float64)
    if W.shape != (k * k, k * k):
        raise ValueError(f"W must be {k * k}x{k * k} for k={k}")
    idx = k * np.arange(k) + perm
    return float(W[np.ix_(idx, idx)].sum())


def direct_solve(W, k: int) -> np.ndarray:
    """Exhaustive QAP baseline over all k! permutations (lexicographic ties)."""
    if k > DIRECT_SOLVE_MAX_K:
        raise ValueError(f"k={k} exceeds the {DIRECT_SOLVE_MAX_K}! enumeration budget")
    best_perm = None
    best_obj = np.inf
    for cand in permutations(range(k)):
        obj = qap_objective(W, cand)
        if obj < best_obj:
            best_obj = obj
            best_perm = cand
    return np.array(best_perm)


# ---------------------------------------------------------------------------
# Keypoint affinity from ingested features (Willow-style data)
# ---------------------------------------------------------------------------


@dataclass
class KeypointRecord:
    name: str
    coords: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.coords.ndim != 2 or self.coords.shape[1] != 2:
            raise ValueError("coords must be (k, 2)")
        if self.features.shape[0] != self.coords.shape[0]:
            raise ValueError("one feature vector per keypoint required")


def load_keypoint_features(path) -> list[KeypointRecord]:
    """Read the keypoint ingestion file: JSON with per-image coordinates
    and precomputed feature arrays."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if "images" not in payload:
        raise ValueError("keypoint file must contain an 'images' list")
    records = []
    for img in payload["images"]:
        records.append(KeypointRecord(img["name"], img["keypoints"], img["features"]))
    return records


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    if denom == 0.0:
        return 0.0
    return float(a @ b / denom)


def _default_kernel(delta: np.ndarray, sigma: float) -> np.ndarray:
    return -np.exp(-(delta**2) / sigma**2)


def willow_affinity(
    features_a,
    features_b,
    coords_a,
    coords_b,
    tau: float = 0.81,
    eta: float = 0.98,
    kernel=None,
) -> np.ndarray:
    """Assemble the matching weight matrix from appearance and geometry.

    The diagonal entry of assignment (i -> a) holds the cosine similarity
    of the two feature vectors; the off-diagonal entry of a pair of
    assignments holds a negated-exponential consistency kernel of the
    pairwise-distance discrepancy (sigma = mean pairwise distance). The
    two parts are combined as  tau * appearance + (1 - tau) * eta * geometry.
    """
    fa = np.asarray(features_a, dtype=np.float64)
    fb = np.asarray(features_b, dtype=np.float64)
    ca = np.asarray(coords_a, dtype=np.float64)
    cb = np.asarray(coords_b, dtype=np.float64)
    k = fa.shape[0]
    if fb.shape[0] != k or ca.shape[0] != k or cb.shape[0] != k:
        raise ValueError("both sides need the same number of keypoints")
    if fa.shape[1] != fb.shape[1]:
        raise ValueError(f"feature dimensions differ: {fa.shape[1]} vs {fb.shape[1]}")
    if kernel is None:
        kernel = _default_kernel

    W_alex = np.zeros((k * k, k * k))
    for i in range(k):
        for a in range(k):
            W_alex[k * i + a, k * i + a] = _cosine(fa[i], fb[a])

    dist_a = np.linalg.norm(ca[:, None, :] - ca[None, :, :], axis=2)
    dist_b = np.linalg.norm(cb[:, None, :] - cb[None, :, :], axis=2)
    off_diag = ~np.eye(k, dtype=bool)
    sigma = float(np.concatenate([dist_a[off_diag], dist_b[off_diag]]).mean())
    if sigma == 0.0:
        sigma = 1.0
    W_geom = np.zeros((k * k, k * k))
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            for a in range(k):
                for b in range(k):
                    if a == b:
                        continue
                    delta = dist_a[i, j] - dist_b[a, b]
                    W_geom[k * i + a, k * j + b] = kernel(delta, sigma)
    return tau * W_alex + (1.0 - tau) * eta * W_geom


def willow_instance(rec_a: KeypointRecord, rec_b: KeypointRecord, seed, tau=0.81, eta=0.98) -> ProblemInstance:
    """Matching instance for an image pair whose keypoints share labels.

    The second image's keypoints are shuffled so the ground truth is a
    non-trivial permutation.
    """
    k = rec_a.coords.shape[0]
    if rec_b.coords.shape[0] != k:
        raise ValueError("images have different keypoint counts")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(k)
    coords_b = np.empty_like(rec_b.coords)
    feats_b = np.empty_like(rec_b.features)
    coords_b[perm] = rec_b.coords
    feats_b[perm] = rec_b.features
    W = willow_affinity(rec_a.features, feats_b, rec_a.coords, coords_b, tau, eta)
    enc = encode_permutation(perm)
    return ProblemInstance(
        "willow",
        p=W.ravel(),
        x_hat=enc.bits,
        meta={"k": k, "perm": perm.tolist(), "pair": [rec_a.name, rec_b.name]},
    )
