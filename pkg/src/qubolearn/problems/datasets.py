"""Dataset builders and JSON-lines persistence.

File format: one instance per line,
{"type": ..., "p": [...], "x_hat": "0101...", "meta": {...}}; lines
starting with '#' carry provenance (seed, config hash) and are skipped.
"""

from __future__ import annotations

import json
import math

import numpy as np

from . import ProblemInstance
from ..bits import bits_to_str, str_to_bits
from ..seeding import substream
from .geometry import (
    EULER_RANGES,
    PointCloudPair,
    add_uniform_noise2d,
    corrupt_matches,
    encode_stage_angle,
    euler_zyx,
    gen_clouds3d,
    gen_shapes2d,
    psr2d_encode,
    rot3d_encode,
    rotation2d,
)
from .graphs import gen_randgraph

ROT3D_STAGES = {"rot3d_alpha": 0, "rot3d_beta": 1, "rot3d_gamma": 2}


def build_randgraph_dataset(k: int, count: int, seed: int, penalty: float = 1.0) -> list[ProblemInstance]:
    rng = substream(seed, "data")
    return [gen_randgraph(k, rng, penalty) for _ in range(count)]


def build_psr2d_dataset(
    count: int,
    seed: int,
    shape_pool: int = 40,
    noise_pct: float = 0.0,
    angle_range: tuple[float, float] = (0.0, math.pi / 3.0),
) -> list[ProblemInstance]:
    """Rotated-outline pairs with putative-correspondence encoding."""
    rng = substream(seed, "data")
    shapes = gen_shapes2d(shape_pool, rng)
    instances = []
    for i in range(count):
        shape = shapes[int(rng.integers(len(shapes)))]
        theta = float(rng.uniform(*angle_range))
        target = shape @ rotation2d(theta).T
        if noise_pct > 0.0:
            target = add_uniform_noise2d(target, noise_pct, substream(seed, "noise", i))
        instances.append(psr2d_encode(PointCloudPair(shape, target), theta))
    return instances


def _sample_euler(rng, stage: int | None) -> tuple[float, float, float]:
    angles = [float(rng.uniform(lo, hi)) for lo, hi in EULER_RANGES]
    if stage is not None:
        for earlier in range(stage):
            angles[earlier] = 0.0
    return tuple(angles)


def build_rot3d_dataset(
    count: int,
    seed: int,
    stage: int | None = None,
    cloud_pool: int = 30,
    corrupt_fraction: float = 0.0,
    keep_clouds: bool = True,
) -> list[ProblemInstance]:
    """Matched-cloud rotation instances.

    `stage` selects staged training data: stage s zeroes the earlier
    Euler angles and supervises only angle s (5-bit target); None yields
    the full 15-bit encoding.
    """
    rng = substream(seed, "data")
    clouds = gen_clouds3d(cloud_pool, rng)
    instances = []
    for i in range(count):
        cloud = clouds[int(rng.integers(len(clouds)))]
        alpha, beta, gamma = _sample_euler(rng, stage)
        R = euler_zyx(alpha, beta, gamma)
        pair = PointCloudPair(cloud, cloud @ R.T, np.arange(cloud.shape[0]))
        if corrupt_fraction > 0.0:
            pair = corrupt_matches(pair, corrupt_fraction, substream(seed, "noise", i))
        inst = rot3d_encode(pair, (alpha, beta, gamma))
        if stage is not None:
            inst = ProblemInstance(
                list(ROT3D_STAGES)[stage],
                p=inst.p,
                x_hat=encode_stage_angle((alpha, beta, gamma)[stage], stage),
                meta=inst.meta,
            )
        if keep_clouds:
            inst.meta = dict(
                inst.meta,
                source=pair.source.tolist(),
                target=pair.target.tolist(),
                matches=pair.matches.tolist(),
            )
        instances.append(inst)
    return instances


def pair_from_meta(meta: dict) -> PointCloudPair:
    return PointCloudPair(
        np.array(meta["source"]), np.array(meta["target"]), np.array(meta["matches"])
    )


def save_dataset(instances: list[ProblemInstance], path, header: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            tokens = " ".join(f"{k}={v}" for k, v in sorted(header.items()))
            fh.write(f"# {tokens}\n")
        for inst in instances:
            fh.write(
                json.dumps(
                    {
                        "type": inst.problem_type,
                        "p": inst.p.tolist(),
                        "x_hat": bits_to_str(inst.x_hat),
                        "meta": inst.meta,
                    }
                )
                + "\n"
            )


def load_dataset(path) -> tuple[list[ProblemInstance], dict]:
    """Returns (instances, header) where header holds any provenance tokens."""
    instances = []
    header: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    if "=" in tok:
                        key, val = tok.split("=", 1)
                        header[key] = val
                continue
            obj = json.loads(line)
            instances.append(
                ProblemInstance(
                    obj["type"],
                    p=np.array(obj["p"], dtype=np.float64),
                    x_hat=str_to_bits(obj["x_hat"]),
                    meta=obj.get("meta", {}),
                )
            )
    return instances, header
