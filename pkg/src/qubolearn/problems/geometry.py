"""Point-set registration problems: planar rotation search and 3D rotation
estimation with staged Euler-angle inference.

Solution encodings
------------------
2D: the angle range [0, pi/3] is split into 2^9 equal bins, indexed by a
big-endian 9-bit integer; decoding returns bin centers.
3D: each Euler angle gets 2^5 equal bins over its range (alpha, gamma in
[-pi/9, pi/9], beta in [-pi/18, pi/18]); the 15-bit code is the 5/5/5
concatenation. The rotation convention is intrinsic Z-Y-X: R(alpha, beta,
gamma) = Rz(alpha) @ Ry(beta) @ Rx(gamma), alpha about Z first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ProblemInstance
from ..bits import bits_to_int, int_to_bits
from ..mlp import MlpParams, forward
from ..qubo import assemble_qubo, dense_topology
from ..solvers import exhaustive_solve

ANGLE2D_BITS = 9
ANGLE2D_MAX = math.pi / 3.0

EULER_BITS = 5
EULER_RANGES = (
    (-math.pi / 9.0, math.pi / 9.0),   # alpha, about Z
    (-math.pi / 18.0, math.pi / 18.0), # beta, about Y
    (-math.pi / 9.0, math.pi / 9.0),   # gamma, about X
)


@dataclass
class PointCloudPair:
    """Two clouds with optional per-source-point correspondence indices."""

    source: np.ndarray
    target: np.ndarray
    matches: np.ndarray | None = None

    def __post_init__(self):
        self.source = np.asarray(self.source, dtype=np.float64)
        self.target = np.asarray(self.target, dtype=np.float64)
        if self.matches is not None:
            self.matches = np.asarray(self.matches, dtype=int)
            if self.matches.shape != (self.source.shape[0],):
                raise ValueError("need one correspondence per source point")


def rotation2d(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def _rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=float)


def _rot_y(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=float)


def _rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=float)


_STAGE_AXES = (_rot_z, _rot_y, _rot_x)


def euler_zyx(alpha: float, beta: float, gamma: float) -> np.ndarray:
    return _rot_z(alpha) @ _rot_y(beta) @ _rot_x(gamma)


# ---------------------------------------------------------------------------
# Bin codecs
# ---------------------------------------------------------------------------


def _encode_bin(theta: float, lo: float, hi: float, bits: int) -> np.ndarray:
    width = (hi - lo) / (1 << bits)
    idx = int(np.clip(math.floor((theta - lo) / width), 0, (1 << bits) - 1))
    return int_to_bits(idx, bits)


def _decode_bin(code, lo: float, hi: float, bits: int) -> float:
    width = (hi - lo) / (1 << bits)
    return lo + (bits_to_int(code) + 0.5) * width


def encode_angle2d(theta: float) -> np.ndarray:
    return _encode_bin(theta, 0.0, ANGLE2D_MAX, ANGLE2D_BITS)


def decode_angle2d(code) -> float:
    code = np.asarray(code)
    if code.shape != (ANGLE2D_BITS,):
        raise ValueError(f"expected {ANGLE2D_BITS} bits")
    return _decode_bin(code, 0.0, ANGLE2D_MAX, ANGLE2D_BITS)


def encode_stage_angle(theta: float, stage: int) -> np.ndarray:
    lo, hi = EULER_RANGES[stage]
    return _encode_bin(theta, lo, hi, EULER_BITS)


def decode_stage_angle(code, stage: int) -> float:
    lo, hi = EULER_RANGES[stage]
    return _decode_bin(code, lo, hi, EULER_BITS)


def encode_euler(alpha: float, beta: float, gamma: float) -> np.ndarray:
    return np.concatenate([encode_stage_angle(t, s) for s, t in enumerate((alpha, beta, gamma))])


def decode_euler(code) -> tuple[float, float, float]:
    code = np.asarray(code)
    if code.shape != (3 * EULER_BITS,):
        raise ValueError(f"expected {3 * EULER_BITS} bits")
    return tuple(
        decode_stage_angle(code[s * EULER_BITS : (s + 1) * EULER_BITS], s) for s in range(3)
    )


# ---------------------------------------------------------------------------
# Problem vectors
# ---------------------------------------------------------------------------


def cross_covariance(pair: PointCloudPair) -> np.ndarray:
    """Mean-centered cross-covariance over the pair's correspondences."""
    if pair.matches is None:
        raise ValueError("pair has no correspondences")
    s = pair.source
    t = pair.target[pair.matches]
    sc = s - s.mean(axis=0)
    tc = t - t.mean(axis=0)
    return sc.T @ tc / s.shape[0]


def _putative_matches_3nn(source: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """All (source, target) pairs from three nearest neighbours per source point."""
    if target.shape[0] < 3:
        raise ValueError("need at least three target points")
    d2 = ((source[:, None, :] - target[None, :, :]) ** 2).sum(axis=2)
    nn = np.argsort(d2, axis=1)[:, :3]
    src_idx = np.repeat(np.arange(source.shape[0]), 3)
    return src_idx, nn.ravel()


def psr2d_encode(pair: PointCloudPair, true_angle: float) -> ProblemInstance:
    """Planar registration instance from putative 3-NN correspondences.

    p packs the 2x2 cross-covariance of the putative matches and the 2x2
    second-moment matrix of the participating source points, both divided
    by the match count (length 8, row-major).
    """
    src_idx, tgt_idx = _putative_matches_3nn(pair.source, pair.target)
    s = pair.source[src_idx]
    t = pair.target[tgt_idx]
    m = s.shape[0]
    cross = s.T @ t / m
    second = s.T @ s / m
    p = np.concatenate([cross.ravel(), second.ravel()])
    return ProblemInstance(
        "psr2d", p=p, x_hat=encode_angle2d(true_angle), meta={"angle": float(true_angle)}
    )


def rot3d_encode(pair: PointCloudPair, true_euler) -> ProblemInstance:
    """3D rotation instance: p is the vectorised 3x3 cross-covariance."""
    alpha, beta, gamma = true_euler
    p = cross_covariance(pair).ravel()
    return ProblemInstance(
        "rot3d",
        p=p,
        x_hat=encode_euler(alpha, beta, gamma),
        meta={"euler": [float(alpha), float(beta), float(gamma)]},
    )


# ---------------------------------------------------------------------------
# Staged inference
# ---------------------------------------------------------------------------


def _predict_stage_bits(net, p: np.ndarray, solve) -> np.ndarray:
    if isinstance(net, MlpParams):
        trace = forward(net, p)
        A = assemble_qubo(trace.output, dense_topology(EULER_BITS))
        return solve(A).best
    return np.asarray(net(p), dtype=np.uint8)


def three_stage_infer(nets, pair: PointCloudPair, solve=exhaustive_solve, with_stages: bool = False):
    """Sequential per-angle regression with re-encoding between stages.

    Stage s regresses one Euler angle from the current pair's covariance;
    the estimate is then unrotated out of the target so the next stage
    sees an aligned-so-far pair. Nets may be MlpParams (coupling
    regressors solved per stage) or callables p -> bits.
    """
    if len(nets) != 3:
        raise ValueError("need one net per Euler angle")
    target = pair.target
    angles = []
    stage_pairs = []
    for s in range(3):
        current = PointCloudPair(pair.source, target, pair.matches)
        stage_pairs.append(current)
        p = cross_covariance(current).ravel()
        bits = _predict_stage_bits(nets[s], p, solve)
        theta = decode_stage_angle(bits, s)
        angles.append(theta)
        target = target @ _STAGE_AXES[s](theta)  # rows: R_s^T applied per point
    R = euler_zyx(*angles)
    if with_stages:
        return R, angles, stage_pairs
    return R


# ---------------------------------------------------------------------------
# Test-time corruption and synthetic data
# ---------------------------------------------------------------------------


def corrupt_matches(pair: PointCloudPair, fraction: float, seed) -> PointCloudPair:
    """Permute the correspondence targets of a random subset among themselves.

    The shuffle is fixed-point free, so every chosen correspondence moves;
    subsets smaller than two cannot move and are left unchanged. The
    multiset of correspondence targets is always preserved.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must be in [0, 1]")
    if pair.matches is None:
        raise ValueError("pair has no correspondences")
    count = math.ceil(fraction * pair.matches.shape[0])
    if count < 2:
        return PointCloudPair(pair.source, pair.target, pair.matches.copy())
    rng = np.random.default_rng(seed)
    chosen = rng.choice(pair.matches.shape[0], size=count, replace=False)
    while True:
        shuffle = rng.permutation(count)
        if not (shuffle == np.arange(count)).any():
            break
    matches = pair.matches.copy()
    matches[chosen] = pair.matches[chosen][shuffle]
    return PointCloudPair(pair.source, pair.target, matches)


def add_uniform_noise2d(cloud, pct: float, seed) -> np.ndarray:
    """Per-coordinate uniform offsets within +- pct% of the maximum extent."""
    if pct < 0:
        raise ValueError("pct must be non-negative")
    cloud = np.asarray(cloud, dtype=np.float64)
    extent = float((cloud.max(axis=0) - cloud.min(axis=0)).max())
    radius = pct / 100.0 * extent
    rng = np.random.default_rng(seed)
    return cloud + rng.uniform(-radius, radius, size=cloud.shape)


def _normalise_extent(points: np.ndarray) -> np.ndarray:
    points = points - points.mean(axis=0)
    extent = float((points.max(axis=0) - points.min(axis=0)).max())
    return points / extent


def gen_shapes2d(count: int, seed, points: int = 128) -> list[np.ndarray]:
    """Random smooth closed outlines from low-order Fourier contours,
    normalised to unit extent."""
    if points < 64:
        raise ValueError("outlines need at least 64 points")
    rng = np.random.default_rng(seed)
    shapes = []
    t = np.linspace(0.0, 2.0 * math.pi, points)
    for _ in range(count):
        rho = np.ones_like(t)
        for h in range(2, 6):
            rho += rng.normal(scale=0.35 / h) * np.cos(h * t)
            rho += rng.normal(scale=0.35 / h) * np.sin(h * t)
        rho = np.maximum(rho, 0.2)
        outline = np.stack([rho * np.cos(t), rho * np.sin(t)], axis=1)
        shapes.append(_normalise_extent(outline))
    return shapes


def gen_clouds3d(count: int, seed, points: int = 128) -> list[np.ndarray]:
    """Random blob, box, and ellipsoid-shell clouds with anisotropic axis
    scales, normalised to unit extent."""
    rng = np.random.default_rng(seed)
    clouds = []
    for c in range(count):
        scales = np.array([1.0, rng.uniform(0.35, 1.0), rng.uniform(0.02, 0.25)])
        kind = c % 3
        if kind == 0:
            pts = rng.normal(size=(points, 3)) * scales
        elif kind == 1:
            pts = rng.uniform(-1.0, 1.0, size=(points, 3)) * scales
        else:
            raw = rng.normal(size=(points, 3))
            raw /= np.linalg.norm(raw, axis=1, keepdims=True)
            pts = raw * scales
        clouds.append(_normalise_extent(pts))
    return clouds
