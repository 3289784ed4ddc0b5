"""Minimal dense feed-forward network engine with exact gradients.

All math is done in float64 so gradient checks against finite differences
stay tight. Networks are immutable value objects: an update step returns a
new ``DenseNet`` instead of mutating in place, which makes trained nets safe
to share read-only across threads.

Weight matrices are stored with shape (out_dim, in_dim); a layer computes
``act(W @ a + b)`` for a single input, or ``act(A @ W.T + b)`` for a batch
of row vectors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ._validation import as_float_matrix, as_float_vector, readonly
from .exceptions import (
    CacheMismatchError,
    CheckpointError,
    DimensionMismatchError,
    TrainingDivergedError,
)

ACTIVATIONS = ("relu", "identity")
CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class DenseNet:
    """A fully connected net; ``weights[k]`` has shape (dims[k+1], dims[k])."""

    layer_dims: tuple[int, ...]
    activations: tuple[str, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise DimensionMismatchError(f"invalid layer dims {dims}")
        n_layers = len(dims) - 1
        acts = tuple(self.activations)
        for act in acts:
            if act not in ACTIVATIONS:
                raise DimensionMismatchError(f"unknown activation {act!r}")
        weights = tuple(readonly(w) for w in self.weights)
        biases = tuple(readonly(b) for b in self.biases)
        if not (len(acts) == len(weights) == len(biases) == n_layers):
            raise DimensionMismatchError(
                f"expected {n_layers} layers, got {len(weights)} weight matrices, "
                f"{len(biases)} bias vectors, {len(acts)} activations"
            )
        for k, (w, b) in enumerate(zip(weights, biases)):
            if w.shape != (dims[k + 1], dims[k]):
                raise DimensionMismatchError(
                    f"layer {k}: weight shape {w.shape} != {(dims[k + 1], dims[k])}"
                )
            if b.shape != (dims[k + 1],):
                raise DimensionMismatchError(
                    f"layer {k}: bias shape {b.shape} != {(dims[k + 1],)}"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise DimensionMismatchError(f"layer {k}: non-finite parameters")
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "activations", acts)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    @property
    def n_layers(self) -> int:
        return len(self.layer_dims) - 1


@dataclass(frozen=True)
class Gradients:
    """Per-layer parameter gradients, shape-congruent with a DenseNet."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(g)) for g in self.weights) and all(
            np.all(np.isfinite(g)) for g in self.biases
        )


@dataclass
class ForwardCache:
    """Activations remembered by a forward pass, consumed by backward()."""

    net: DenseNet
    inputs: np.ndarray
    pre_activations: list[np.ndarray]
    post_activations: list[np.ndarray]


def default_activations(layer_dims) -> tuple[str, ...]:
    """relu on hidden layers, identity on the output layer."""
    n_layers = len(layer_dims) - 1
    return ("relu",) * (n_layers - 1) + ("identity",)


def init_net(layer_dims, activations=None, seed=0) -> DenseNet:
    """Seeded Glorot-uniform weights (limit sqrt(6/(fan_in+fan_out))), zero biases."""
    dims = tuple(int(d) for d in layer_dims)
    if activations is None:
        activations = default_activations(dims)
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return DenseNet(dims, tuple(activations), tuple(weights), tuple(biases))


def _apply_activation(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    return z


def _activation_grad(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    return np.ones_like(z)


def forward_cached(net: DenseNet, X) -> tuple[np.ndarray, ForwardCache]:
    """Batched forward pass over row vectors, remembering activations."""
    A = as_float_matrix(X, name="input batch")
    if A.shape[1] != net.input_dim:
        raise DimensionMismatchError(
            f"input width {A.shape[1]} != net input dim {net.input_dim}"
        )
    cache = ForwardCache(net=net, inputs=A, pre_activations=[], post_activations=[])
    for w, b, act in zip(net.weights, net.biases, net.activations):
        Z = A @ w.T + b
        A = _apply_activation(act, Z)
        cache.pre_activations.append(Z)
        cache.post_activations.append(A)
    return A, cache


def forward_batch(net: DenseNet, X) -> np.ndarray:
    """Batched forward pass; (n, input_dim) -> (n, output_dim)."""
    out, _ = forward_cached(net, X)
    return out


def forward(net: DenseNet, x) -> np.ndarray:
    """Single-vector forward pass; pure function of (net, x)."""
    vec = as_float_vector(x, name="input", length=net.input_dim)
    return forward_batch(net, vec[None, :])[0]


def backward(net: DenseNet, grad_output, cache: ForwardCache) -> Gradients:
    """Exact reverse-mode gradients of a scalar loss w.r.t. all parameters.

    ``grad_output`` holds dLoss/dOutput for every row of the cached batch;
    the returned gradients are summed over the batch.
    """
    if cache.net is not net:
        raise CacheMismatchError("cache does not belong to this net")
    G = np.asarray(grad_output, dtype=np.float64)
    expected = cache.post_activations[-1].shape
    if G.shape != expected:
        raise DimensionMismatchError(
            f"grad_output shape {G.shape} != output shape {expected}"
        )
    grad_w = [None] * net.n_layers
    grad_b = [None] * net.n_layers
    for k in range(net.n_layers - 1, -1, -1):
        dZ = G * _activation_grad(net.activations[k], cache.pre_activations[k])
        prev = cache.inputs if k == 0 else cache.post_activations[k - 1]
        grad_w[k] = dZ.T @ prev
        grad_b[k] = dZ.sum(axis=0)
        if k > 0:
            G = dZ @ net.weights[k]
    return Gradients(tuple(grad_w), tuple(grad_b))


def _check_congruent(net: DenseNet, grads: Gradients):
    if len(grads.weights) != net.n_layers or len(grads.biases) != net.n_layers:
        raise DimensionMismatchError("gradient layer count mismatch")
    for k in range(net.n_layers):
        if grads.weights[k].shape != net.weights[k].shape:
            raise DimensionMismatchError(f"layer {k}: weight gradient shape mismatch")
        if grads.biases[k].shape != net.biases[k].shape:
            raise DimensionMismatchError(f"layer {k}: bias gradient shape mismatch")


def sgd_step(net: DenseNet, grads: Gradients, lr: float) -> DenseNet:
    """One step of w <- w - lr*g; returns the updated net."""
    if not (np.isfinite(lr) and lr >= 0.0):
        raise DimensionMismatchError(f"invalid learning rate {lr}")
    _check_congruent(net, grads)
    if not grads.is_finite():
        raise TrainingDivergedError("non-finite gradients")
    weights = tuple(w - lr * g for w, g in zip(net.weights, grads.weights))
    biases = tuple(b - lr * g for b, g in zip(net.biases, grads.biases))
    return DenseNet(net.layer_dims, net.activations, weights, biases)


class SgdOptimizer:
    """Plain SGD with optional momentum; holds the velocity state."""

    def __init__(self, lr: float, momentum: float = 0.0):
        if not (np.isfinite(lr) and lr >= 0.0):
            raise DimensionMismatchError(f"invalid learning rate {lr}")
        if not (0.0 <= momentum < 1.0):
            raise DimensionMismatchError(f"invalid momentum {momentum}")
        self.lr = lr
        self.momentum = momentum
        self._velocity = None

    def step(self, net: DenseNet, grads: Gradients) -> DenseNet:
        if self.momentum == 0.0:
            return sgd_step(net, grads, self.lr)
        _check_congruent(net, grads)
        if not grads.is_finite():
            raise TrainingDivergedError("non-finite gradients")
        if self._velocity is None:
            self._velocity = [np.zeros_like(g) for g in grads.weights] + [
                np.zeros_like(g) for g in grads.biases
            ]
        flat_grads = list(grads.weights) + list(grads.biases)
        for v, g in zip(self._velocity, flat_grads):
            v *= self.momentum
            v += g
        n = net.n_layers
        weights = tuple(
            w - self.lr * v for w, v in zip(net.weights, self._velocity[:n])
        )
        biases = tuple(b - self.lr * v for b, v in zip(net.biases, self._velocity[n:]))
        return DenseNet(net.layer_dims, net.activations, weights, biases)


def checkpoint_document(net: DenseNet, extra: dict | None = None) -> dict:
    """The checkpoint as a plain dict; weights are row-major nested lists."""
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "layer_dims": list(net.layer_dims),
        "activations": list(net.activations),
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }
    if extra:
        for key in extra:
            if key in doc:
                raise CheckpointError(f"extra block collides with field {key!r}")
        doc.update(extra)
    return doc


def save_checkpoint(net: DenseNet, path, extra: dict | None = None):
    """Write a JSON checkpoint; floats round-trip bit-faithfully via repr."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(checkpoint_document(net, extra), fh, indent=2, sort_keys=True)
        fh.write("\n")


def parse_checkpoint(doc: dict) -> tuple[DenseNet, dict]:
    """Rebuild a net from a checkpoint dict; returns (net, leftover fields)."""
    try:
        version = doc["format_version"]
        if version != CHECKPOINT_FORMAT_VERSION:
            raise CheckpointError(f"unsupported format_version {version}")
        net = DenseNet(
            layer_dims=tuple(doc["layer_dims"]),
            activations=tuple(doc["activations"]),
            weights=tuple(np.array(w, dtype=np.float64) for w in doc["weights"]),
            biases=tuple(np.array(b, dtype=np.float64) for b in doc["biases"]),
        )
    except KeyError as exc:
        raise CheckpointError(f"checkpoint missing field {exc}") from exc
    known = {"format_version", "layer_dims", "activations", "weights", "biases"}
    extra = {k: v for k, v in doc.items() if k not in known}
    return net, extra


def load_checkpoint(path) -> tuple[DenseNet, dict]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return parse_checkpoint(doc)
