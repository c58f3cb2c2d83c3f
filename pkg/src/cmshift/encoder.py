"""Trainable projection head over frozen base features.

The head is num_blocks (linear, GeLU) pairs followed by a final linear
layer and row-wise L2 normalization; only these parameters train, the base
features are fixed inputs. Forward keeps a tape of activations so backward
can produce exact gradients, including the normalization Jacobian
(I - v v^T)/||y|| and the exact (erf-based) GeLU derivative.

Checkpoint layout (little-endian): magic "CMSH", uint32 version, uint32
in/hidden/out dims, uint32 num_blocks, int64 init seed, uint32 stored
estimated K (0 = unset), then float64 parameters in layer order (weights
row-major, then bias, per layer).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .errors import CheckpointFormatError, DegenerateOutputError, NumericError

CMSH_MAGIC = b"CMSH"
CMSH_VERSION = 1
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class HeadConfig:
    in_dim: int
    hidden_dim: int = 2048
    out_dim: int = 768
    num_blocks: int = 3
    init_seed: int = 0
    init_scale_rule: str = "fan-in-uniform"

    def __post_init__(self):
        if min(self.in_dim, self.hidden_dim, self.out_dim) < 1:
            raise ValueError("all dimensions must be positive")
        if self.num_blocks < 1:
            raise ValueError("num_blocks must be >= 1")
        if self.init_scale_rule != "fan-in-uniform":
            raise ValueError(f"unknown init rule {self.init_scale_rule!r}")

    def layer_shapes(self) -> list[tuple[int, int]]:
        """(fan_out, fan_in) per layer: num_blocks hidden layers + output layer."""
        shapes = [(self.hidden_dim, self.in_dim)]
        shapes += [(self.hidden_dim, self.hidden_dim)] * (self.num_blocks - 1)
        shapes.append((self.out_dim, self.hidden_dim))
        return shapes

    def param_count(self) -> int:
        return sum(rows * cols + rows for rows, cols in self.layer_shapes())


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.01
    weight_decay: float = 5e-5
    momentum: float = 0.9
    batch_size: int = 128

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass(frozen=True)
class ProjectionHead:
    config: HeadConfig
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def param_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


@dataclass(frozen=True)
class ForwardTape:
    """Activations recorded by forward; consumed by backward."""

    inputs: tuple[np.ndarray, ...]    # input to each layer
    preacts: tuple[np.ndarray, ...]   # pre-activation of each hidden layer
    output_raw: np.ndarray            # final linear output before normalization
    norms: np.ndarray                 # per-row L2 norms of output_raw
    embeddings: np.ndarray            # normalized output


def init_head(cfg: HeadConfig) -> ProjectionHead:
    """Fan-in uniform weights in [-1/sqrt(fan_in), 1/sqrt(fan_in)], zero biases."""
    rng = np.random.Generator(np.random.PCG64(cfg.init_seed))
    weights, biases = [], []
    for rows, cols in cfg.layer_shapes():
        bound = 1.0 / math.sqrt(cols)
        weights.append(rng.uniform(-bound, bound, size=(rows, cols)))
        biases.append(np.zeros(rows))
    return ProjectionHead(config=cfg, weights=tuple(weights), biases=tuple(biases))


def _gelu(x: np.ndarray) -> np.ndarray:
    return x * 0.5 * (1.0 + erf(x * _INV_SQRT2))


def _gelu_grad(x: np.ndarray) -> np.ndarray:
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return cdf + x * pdf


def forward(head: ProjectionHead, base: np.ndarray) -> tuple[np.ndarray, ForwardTape]:
    """Map a batch of base features to unit-norm embeddings, keeping a tape."""
    h = np.atleast_2d(np.asarray(base, dtype=np.float64))
    if h.shape[1] != head.config.in_dim:
        raise ValueError(f"input dim {h.shape[1]} != head in_dim {head.config.in_dim}")
    inputs, preacts = [], []
    n_hidden = head.config.num_blocks
    for layer in range(n_hidden):
        inputs.append(h)
        a = h @ head.weights[layer].T + head.biases[layer]
        preacts.append(a)
        h = _gelu(a)
    inputs.append(h)
    y = h @ head.weights[n_hidden].T + head.biases[n_hidden]
    norms = np.linalg.norm(y, axis=1)
    if np.any(norms < 1e-12):
        bad = int(np.argmin(norms))
        raise DegenerateOutputError(
            f"row {bad}: pre-normalization output norm {norms[bad]:.3g}"
        )
    v = y / norms[:, None]
    tape = ForwardTape(
        inputs=tuple(inputs),
        preacts=tuple(preacts),
        output_raw=y,
        norms=norms,
        embeddings=v,
    )
    return v, tape


def backward(
    head: ProjectionHead,
    tape: ForwardTape,
    grad_wrt_embeddings: np.ndarray,
) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
    """Exact parameter gradients; returns ((dW, db), ...) in layer order."""
    g_v = np.atleast_2d(np.asarray(grad_wrt_embeddings, dtype=np.float64))
    if g_v.shape != tape.embeddings.shape:
        raise ValueError(
            f"gradient shape {g_v.shape} does not match tape batch {tape.embeddings.shape}"
        )
    v = tape.embeddings
    # normalization Jacobian: g_y = (g_v - (g_v . v) v) / ||y||
    radial = np.sum(g_v * v, axis=1, keepdims=True)
    g = (g_v - radial * v) / tape.norms[:, None]

    n_hidden = head.config.num_blocks
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * (n_hidden + 1)  # type: ignore[list-item]
    grads[n_hidden] = (g.T @ tape.inputs[n_hidden], g.sum(axis=0))
    g = g @ head.weights[n_hidden]
    for layer in range(n_hidden - 1, -1, -1):
        g = g * _gelu_grad(tape.preacts[layer])
        grads[layer] = (g.T @ tape.inputs[layer], g.sum(axis=0))
        if layer > 0:
            g = g @ head.weights[layer]
    return tuple(grads)


def zero_momentum(head: ProjectionHead) -> list[tuple[np.ndarray, np.ndarray]]:
    return [(np.zeros_like(w), np.zeros_like(b)) for w, b in zip(head.weights, head.biases)]


def sgd_step(
    head: ProjectionHead,
    grads,
    opt: OptimizerConfig,
    momentum_state=None,
):
    """theta <- theta - lr * m,  m = momentum * m_prev + grad + weight_decay * theta."""
    if momentum_state is None:
        momentum_state = zero_momentum(head)
    new_w, new_b, new_state = [], [], []
    for (w, b), (gw, gb), (mw, mb) in zip(
        zip(head.weights, head.biases), grads, momentum_state
    ):
        if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))):
            raise NumericError("non-finite gradient; aborting update")
        mw = opt.momentum * mw + gw + opt.weight_decay * w
        mb = opt.momentum * mb + gb + opt.weight_decay * b
        new_w.append(w - opt.learning_rate * mw)
        new_b.append(b - opt.learning_rate * mb)
        new_state.append((mw, mb))
    updated = ProjectionHead(config=head.config, weights=tuple(new_w), biases=tuple(new_b))
    return updated, new_state


def make_views(
    base_vector: np.ndarray,
    noise_scale: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Two independent tangent-Gaussian perturbations of a unit vector.

    Embedding-space surrogate for paired image augmentations; noise_scale=0
    returns the base twice.
    """
    base = np.asarray(base_vector, dtype=np.float64)
    if noise_scale == 0.0:
        return base.copy(), base.copy()
    views = []
    for _ in range(2):
        g = rng.standard_normal(base.shape[0])
        tangent = g - (g @ base) * base
        view = base + noise_scale * tangent
        views.append(view / np.linalg.norm(view))
    return views[0], views[1]


def flatten_params(head: ProjectionHead) -> np.ndarray:
    parts = []
    for w, b in zip(head.weights, head.biases):
        parts.append(w.ravel())
        parts.append(b.ravel())
    return np.concatenate(parts)


def with_params(head: ProjectionHead, flat: np.ndarray) -> ProjectionHead:
    flat = np.asarray(flat, dtype=np.float64)
    if flat.size != head.param_count():
        raise ValueError(f"expected {head.param_count()} parameters, got {flat.size}")
    weights, biases, pos = [], [], 0
    for w, b in zip(head.weights, head.biases):
        weights.append(flat[pos : pos + w.size].reshape(w.shape).copy())
        pos += w.size
        biases.append(flat[pos : pos + b.size].copy())
        pos += b.size
    return ProjectionHead(config=head.config, weights=tuple(weights), biases=tuple(biases))


def save_head(head: ProjectionHead, path, estimated_k: int = 0) -> None:
    cfg = head.config
    header = CMSH_MAGIC + struct.pack(
        "<IIIIIqI",
        CMSH_VERSION,
        cfg.in_dim,
        cfg.hidden_dim,
        cfg.out_dim,
        cfg.num_blocks,
        cfg.init_seed,
        estimated_k,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(flatten_params(head).astype("<f8").tobytes())


def load_head(path) -> tuple[ProjectionHead, int]:
    """Returns the head and the stored estimated K (0 when unset)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    header_size = 4 + struct.calcsize("<IIIIIqI")
    if len(blob) < header_size or blob[:4] != CMSH_MAGIC:
        raise CheckpointFormatError(f"{path}: not a CMSH checkpoint")
    version, in_dim, hidden, out_dim, blocks, seed, est_k = struct.unpack_from(
        "<IIIIIqI", blob, 4
    )
    if version != CMSH_VERSION:
        raise CheckpointFormatError(f"{path}: unsupported version {version}")
    cfg = HeadConfig(
        in_dim=in_dim, hidden_dim=hidden, out_dim=out_dim, num_blocks=blocks, init_seed=seed
    )
    expected = cfg.param_count() * 8
    payload = blob[header_size:]
    if len(payload) != expected:
        raise CheckpointFormatError(
            f"{path}: payload holds {len(payload)} bytes, header implies {expected}"
        )
    flat = np.frombuffer(payload, dtype="<f8")
    template = init_head(cfg)
    return with_params(template, flat), est_k
