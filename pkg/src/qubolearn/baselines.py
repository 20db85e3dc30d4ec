"""Closed-form baselines and evaluation metrics.

Diag solves diagonal-only QUBOs by sign inspection; Pure thresholds a
raw-regression network; Procrustes aligns matched 3D clouds optimally.
Rotation errors are geodesic distances on SO(2)/SO(3) in degrees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mlp import MlpParams, forward
from .qubo import QuboMatrix
from .problems.permutation import project_to_permutation


@dataclass
class EvalReport:
    """Per-instance metric values with recomputable aggregates."""

    per_instance: np.ndarray

    def __post_init__(self):
        self.per_instance = np.asarray(self.per_instance, dtype=np.float64)

    @property
    def mean(self) -> float:
        return float(self.per_instance.mean())

    @property
    def median(self) -> float:
        return float(np.median(self.per_instance))

    @property
    def std(self) -> float:
        return float(self.per_instance.std())

    @property
    def accuracy_pct(self) -> float:
        """Mean of 0/1 indicator values, as a percentage."""
        return 100.0 * float(self.per_instance.mean())


def diag_solve(A: QuboMatrix) -> np.ndarray:
    """Exact minimiser of a diagonal-only QUBO: take every negative bias.

    Zero diagonal entries resolve to 0, matching the global lexicographic
    tie rule of the exhaustive solver.
    """
    off_mask = A.mask & ~np.eye(A.n, dtype=bool)
    if off_mask.any():
        raise ValueError("diag_solve requires a diagonal-only mask")
    return (np.diag(A.values) < 0.0).astype(np.uint8)


def pure_infer(params: MlpParams, p) -> np.ndarray:
    """Threshold the raw network output strictly above zero."""
    return (forward(params, p).output > 0.0).astype(np.uint8)


# ---------------------------------------------------------------------------
# Procrustes via 3x3 Jacobi diagonalisation (no linear-algebra dependency)
# ---------------------------------------------------------------------------

_JACOBI_TOL = 1e-12


def _jacobi_svd3(H: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """SVD of a 3x3 by one-sided Jacobi column orthogonalisation.

    Working on H directly (never H^T H) keeps small singular values
    accurate, which matters for thin point clouds.
    """
    U = H.astype(np.float64).copy()
    V = np.eye(3)
    for _ in range(60):
        converged = True
        for p, q in ((0, 1), (0, 2), (1, 2)):
            a = U[:, p] @ U[:, p]
            b = U[:, q] @ U[:, q]
            c = U[:, p] @ U[:, q]
            if abs(c) <= _JACOBI_TOL * math.sqrt(max(a * b, 1e-300)):
                continue
            converged = False
            theta = 0.5 * math.atan2(2.0 * c, a - b)
            cs, sn = math.cos(theta), math.sin(theta)
            for M in (U, V):
                col_p = M[:, p].copy()
                M[:, p] = cs * col_p + sn * M[:, q]
                M[:, q] = -sn * col_p + cs * M[:, q]
        if converged:
            break
    sigma = np.linalg.norm(U, axis=0)
    order = np.argsort(sigma)[::-1]
    sigma = sigma[order]
    U = U[:, order]
    V = V[:, order]
    with np.errstate(invalid="ignore", divide="ignore"):
        U = np.where(sigma > 0.0, U / sigma, U)
    return U, sigma, V


def procrustes3d(source, target, matches) -> np.ndarray:
    """Optimal rotation R with target ~ R @ source over matched points.

    Builds the mean-centered cross-covariance H and aligns its singular
    frames; det(R) = +1 is enforced via right-handed frame completion.
    """
    source = np.asarray(source, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    matches = np.asarray(matches, dtype=int)
    if matches.shape[0] < 3:
        raise ValueError("need at least three matched points")
    s = source - source.mean(axis=0)
    t = target[matches] - target[matches].mean(axis=0)
    H = s.T @ t
    U, sigma, V = _jacobi_svd3(H)
    if sigma[1] <= _JACOBI_TOL * max(sigma[0], 1.0):
        raise ValueError("degenerate configuration: matched points are collinear")
    v1, v2 = V[:, 0], V[:, 1]
    v3 = np.cross(v1, v2)
    u1, u2 = U[:, 0], U[:, 1]
    u3 = np.cross(u1, u2)
    return np.outer(v1, u1) + np.outer(v2, u2) + np.outer(v3, u3)


# ---------------------------------------------------------------------------
# Rotation metrics
# ---------------------------------------------------------------------------


def geodesic_so2(theta1: float, theta2: float) -> float:
    """Wrapped absolute angle difference, in degrees within [0, 180]."""
    delta = (theta1 - theta2 + math.pi) % (2.0 * math.pi) - math.pi
    return abs(math.degrees(delta))


def _check_rotation(R: np.ndarray) -> None:
    if R.shape != (3, 3):
        raise ValueError("rotations must be 3x3")
    if np.abs(R.T @ R - np.eye(3)).max() > 1e-6:
        raise ValueError("matrix is not orthogonal")


def geodesic_so3(R1, R2) -> float:
    """Rotation-group angle between two rotations, in degrees.

    The arccos argument is clamped to [-1, 1]; rounding can push the raw
    trace slightly outside.
    """
    R1 = np.asarray(R1, dtype=np.float64)
    R2 = np.asarray(R2, dtype=np.float64)
    _check_rotation(R1)
    _check_rotation(R2)
    arg = (np.trace(R1.T @ R2) - 1.0) / 2.0
    return math.degrees(math.acos(min(1.0, max(-1.0, arg))))


def matching_accuracy(predictions, truths, k: int, project: bool = False) -> float:
    """Exact-recovery rate of encoded permutations, in percent."""
    if len(predictions) != len(truths):
        raise ValueError("need one truth per prediction")
    hits = 0
    for pred, truth in zip(predictions, truths):
        pred = np.asarray(pred, dtype=np.uint8)
        if project:
            pred = project_to_permutation(pred, k).bits
        hits += (pred == np.asarray(truth, dtype=np.uint8)).all()
    return 100.0 * hits / len(predictions) if predictions else 0.0


def interval_report(errors, true_angles, interval_edges) -> list[dict]:
    """Bucket errors by true angle; empty buckets are flagged, not zeroed.

    Returns one record per interval [edge_i, edge_i+1) with mean/median or
    None when no instance fell inside.
    """
    errors = np.asarray(errors, dtype=np.float64)
    angles = np.asarray(true_angles, dtype=np.float64)
    if errors.shape != angles.shape:
        raise ValueError("need one true angle per error")
    edges = np.asarray(interval_edges, dtype=np.float64)
    out = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (angles >= lo) & (angles < hi)
        if sel.any():
            out.append(
                {
                    "lo": float(lo),
                    "hi": float(hi),
                    "count": int(sel.sum()),
                    "mean": float(errors[sel].mean()),
                    "median": float(np.median(errors[sel])),
                }
            )
        else:
            out.append({"lo": float(lo), "hi": float(hi), "count": 0, "mean": None, "median": None})
    return out
