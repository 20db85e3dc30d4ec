"""The coupling-regressing perceptron: forward, exact backward, Adam, checkpoints.

The network maps a problem vector p to one value per free coupling
position. Hidden layers use ReLU; the last layer uses sin (so couplings
land in [-1, 1]); the raw-regression baseline uses no final activation.
Skip connections concatenate p in front of the odd-numbered interior
layers (1-based).
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

CHECKPOINT_MAGIC = b"QANT"
CHECKPOINT_VERSION = 1

_ACTIVATIONS = ("relu", "sin", "none")


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str = "relu"
    takes_skip: bool = False

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError("layer dimensions must be positive")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class MlpParams:
    """Weights and biases matching a list of LayerSpecs."""

    specs: list[LayerSpec]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if not (len(self.specs) == len(self.weights) == len(self.biases)):
            raise ValueError("specs, weights, and biases must align")
        for spec, W, b in zip(self.specs, self.weights, self.biases):
            if W.shape != (spec.out_dim, spec.in_dim):
                raise ValueError(f"weight shape {W.shape} does not match {spec}")
            if b.shape != (spec.out_dim,):
                raise ValueError(f"bias shape {b.shape} does not match {spec}")
            if not (np.isfinite(W).all() and np.isfinite(b).all()):
                raise ValueError("parameters must be finite")

    @property
    def L(self) -> int:
        return len(self.specs)

    @property
    def input_dim(self) -> int:
        return self.specs[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.specs[-1].out_dim

    @property
    def hidden_dim(self) -> int:
        return self.specs[0].out_dim if self.L > 1 else 0


@dataclass
class ForwardTrace:
    """Captured activations of one forward pass.

    `features` holds the post-activation output of every layer except the
    last; `inputs` and `pre` keep what the backward pass needs.
    """

    inputs: list[np.ndarray]
    pre: list[np.ndarray]
    features: list[np.ndarray]
    output: np.ndarray


@dataclass
class MlpGrads:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


def build_arch(m: int, out: int, L: int, H: int, final_activation: str = "sin") -> list[LayerSpec]:
    """Layer plan: m -> H -> ... -> out with input skips into odd interior layers.

    Layers are numbered 1-based; layer l takes a skip concatenation of the
    input iff l is odd and neither first nor last.
    """
    if L < 2:
        raise ValueError("need at least two layers")
    specs = []
    for l in range(1, L + 1):
        skip = l % 2 == 1 and 1 < l < L
        in_dim = m if l == 1 else H + (m if skip else 0)
        out_dim = out if l == L else H
        activation = final_activation if l == L else "relu"
        specs.append(LayerSpec(in_dim, out_dim, activation, skip))
    return specs


def init_params(specs: list[LayerSpec], rng: np.random.Generator) -> MlpParams:
    """Glorot-uniform weights, zero biases."""
    weights, biases = [], []
    for spec in specs:
        limit = math.sqrt(6.0 / (spec.in_dim + spec.out_dim))
        weights.append(rng.uniform(-limit, limit, size=(spec.out_dim, spec.in_dim)))
        biases.append(np.zeros(spec.out_dim))
    return MlpParams(specs, weights, biases)


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "sin":
        return np.sin(z)
    return z


def _activate_grad(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    if kind == "sin":
        return np.cos(z)
    return np.ones_like(z)


def forward(params: MlpParams, p) -> ForwardTrace:
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (params.input_dim,):
        raise ValueError(f"input length {p.shape} does not match m={params.input_dim}")
    if not np.isfinite(p).all():
        raise ValueError("input contains non-finite values")
    inputs, pre, features = [], [], []
    h = p
    for l, spec in enumerate(params.specs):
        x = np.concatenate([h, p]) if spec.takes_skip else h
        inputs.append(x)
        z = params.weights[l] @ x + params.biases[l]
        pre.append(z)
        h = _activate(z, spec.activation)
        if l < params.L - 1:
            features.append(h)
    return ForwardTrace(inputs, pre, features, h)


def backward(
    params: MlpParams,
    trace: ForwardTrace,
    d_output,
    d_features: list[np.ndarray] | None = None,
) -> MlpGrads:
    """Exact reverse-mode gradients of the parameters.

    `d_output` is the loss gradient at the final post-activation output;
    `d_features`, when given, adds per-feature gradient contributions
    (one array per captured feature) along the backward sweep.
    """
    if len(trace.pre) != params.L:
        raise ValueError("trace does not match the network depth")
    d = np.asarray(d_output, dtype=np.float64)
    if d.shape != (params.output_dim,):
        raise ValueError("d_output has the wrong width")
    if d_features is not None and len(d_features) != len(trace.features):
        raise ValueError("need one gradient per captured feature")
    dW = [None] * params.L
    db = [None] * params.L
    for l in range(params.L - 1, -1, -1):
        spec = params.specs[l]
        dz = d * _activate_grad(trace.pre[l], spec.activation)
        dW[l] = np.outer(dz, trace.inputs[l])
        db[l] = dz
        if l == 0:
            break
        d_in = params.weights[l].T @ dz
        if spec.takes_skip:
            # The concatenated input slot carries data, not activations;
            # only the leading block flows back to the previous layer.
            d_in = d_in[: params.specs[l - 1].out_dim]
        d = d_in
        if d_features is not None:
            d = d + d_features[l - 1]
    return MlpGrads(dW, db)


@dataclass
class AdamState:
    m_w: list[np.ndarray] = field(default_factory=list)
    v_w: list[np.ndarray] = field(default_factory=list)
    m_b: list[np.ndarray] = field(default_factory=list)
    v_b: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def zeros_like(cls, params: MlpParams) -> "AdamState":
        return cls(
            [np.zeros_like(w) for w in params.weights],
            [np.zeros_like(w) for w in params.weights],
            [np.zeros_like(b) for b in params.biases],
            [np.zeros_like(b) for b in params.biases],
        )


def adam_step(
    params: MlpParams,
    grads: MlpGrads,
    state: AdamState,
    lr: float,
    t: int,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update, in place."""
    if t < 1:
        raise ValueError("step counter starts at 1")
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for l in range(params.L):
        for p, g, m, v in (
            (params.weights[l], grads.weights[l], state.m_w[l], state.v_w[l]),
            (params.biases[l], grads.biases[l], state.m_b[l], state.v_b[l]),
        ):
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------
#
# Little-endian binary: magic "QANT", version u32, then the architecture
# descriptor (L, H, m, out as u32; per layer in_dim u32, out_dim u32, and a
# flags byte: bit 0 = takes_skip, bits 1-2 = activation), then per layer the
# row-major float64 weight matrix followed by the bias vector. A structured
# sidecar (<path>.meta.json) can carry run metadata.

_ACT_CODE = {name: i for i, name in enumerate(_ACTIVATIONS)}


def save_checkpoint(params: MlpParams, path, meta: dict | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(
            struct.pack(
                "<5I",
                CHECKPOINT_VERSION,
                params.L,
                params.hidden_dim,
                params.input_dim,
                params.output_dim,
            )
        )
        for spec in params.specs:
            flags = (1 if spec.takes_skip else 0) | (_ACT_CODE[spec.activation] << 1)
            fh.write(struct.pack("<IIB", spec.in_dim, spec.out_dim, flags))
        for W, b in zip(params.weights, params.biases):
            fh.write(np.ascontiguousarray(W, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
    if meta is not None:
        with open(str(path) + ".meta.json", "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.blob):
            raise ValueError("truncated checkpoint")
        out = self.blob[self.pos : self.pos + count]
        self.pos += count
        return out


def load_checkpoint(path, expect_arch: tuple[int, int, int, int] | None = None) -> MlpParams:
    """Read a checkpoint; `expect_arch` = (L, H, m, out) validates the shape."""
    with open(path, "rb") as fh:
        reader = _Reader(fh.read())
    if reader.take(4) != CHECKPOINT_MAGIC:
        raise ValueError("not a checkpoint file (bad magic)")
    version, L, H, m, out = struct.unpack("<5I", reader.take(20))
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    if expect_arch is not None and (L, H, m, out) != tuple(expect_arch):
        raise ValueError(f"checkpoint architecture {(L, H, m, out)} does not match expected {tuple(expect_arch)}")
    specs = []
    for _ in range(L):
        in_dim, out_dim, flags = struct.unpack("<IIB", reader.take(9))
        activation = _ACTIVATIONS[(flags >> 1) & 0x3]
        specs.append(LayerSpec(in_dim, out_dim, activation, bool(flags & 1)))
    weights, biases = [], []
    for spec in specs:
        W = np.frombuffer(reader.take(8 * spec.out_dim * spec.in_dim), dtype="<f8")
        weights.append(W.reshape(spec.out_dim, spec.in_dim).copy())
        biases.append(np.frombuffer(reader.take(8 * spec.out_dim), dtype="<f8").copy())
    if reader.pos != len(reader.blob):
        raise ValueError("trailing bytes after checkpoint payload")
    return MlpParams(specs, weights, biases)
