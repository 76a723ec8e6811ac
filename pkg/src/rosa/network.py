"""Column-batched MLP on adapter layers, with hand-written gradients.

Inputs are d x batch matrices (one sample per column). forward returns the
output together with a cache of layer inputs and pre-activations; backward
consumes that cache and produces gradients for trainable parameters only.
The cache carries the network's version counter, and any parameter mutation
is expected to bump it, so gradients can never be computed from stale
activations.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .adapters import (Adapter, FullyTrainable, Ia3Adapter, LoraAdapter,
                       RosaAdapter, full_init)
from .errors import ContractViolationError, InvalidInputError, ShapeError
from .linalg import Array


class Activation(Enum):
    IDENTITY = "identity"
    RELU = "relu"

    def apply(self, z: Array) -> Array:
        if self is Activation.RELU:
            return np.maximum(z, 0.0)
        return z


@dataclass
class DenseLayer:
    adapter: Adapter
    bias: Array
    activation: Activation

    @property
    def out_dim(self) -> int:
        return self.adapter.shape[0]

    @property
    def in_dim(self) -> int:
        return self.adapter.shape[1]


@dataclass
class Mlp:
    layers: list[DenseLayer]
    version: int = 0

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def bump(self) -> None:
        """Mark parameters as changed, invalidating outstanding caches."""
        self.version += 1

    def copy(self) -> "Mlp":
        return copy.deepcopy(self)


@dataclass
class ForwardCache:
    version: int
    records: list[dict[str, Array]]


@dataclass
class GradientSet:
    """Per-layer gradients, keyed like each adapter's trainable_arrays plus 'bias'."""

    layers: list[dict[str, Array]]


def build_mlp(dims: list[int], rng: np.random.Generator,
              hidden_activation: Activation = Activation.RELU) -> Mlp:
    """Fully-trainable MLP with He-scaled Gaussian weights and zero biases.

    Hidden layers use hidden_activation; the last layer is always linear.
    """
    if len(dims) < 2:
        raise InvalidInputError(f"need at least input and output dims, got {dims}")
    layers = []
    for i in range(len(dims) - 1):
        fan_in, fan_out = dims[i], dims[i + 1]
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in))
        act = hidden_activation if i < len(dims) - 2 else Activation.IDENTITY
        layers.append(DenseLayer(adapter=full_init(w), bias=np.zeros(fan_out),
                                 activation=act))
    return Mlp(layers=layers)


def forward(net: Mlp, x) -> tuple[Array, ForwardCache]:
    """Run the network on a d x batch input; also return the backward cache."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise InvalidInputError(f"input must be 2-D (features x batch), got ndim={x.ndim}")
    if x.shape[0] != net.in_dim:
        raise ShapeError("input rows do not match network input dim",
                         (net.in_dim, -1), x.shape)
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("input contains non-finite entries")
    records = []
    h = x
    for layer in net.layers:
        ad = layer.adapter
        rec: dict[str, Array] = {"x": h}
        if isinstance(ad, Ia3Adapter):
            lin = ad.w_frozen @ h
            rec["lin"] = lin
            z = ad.scale[:, None] * lin + layer.bias[:, None]
        else:
            z = ad.forward(h) + layer.bias[:, None]
        rec["z"] = z
        records.append(rec)
        h = layer.activation.apply(z)
    return h, ForwardCache(version=net.version, records=records)


def predict(net: Mlp, x) -> Array:
    out, _ = forward(net, x)
    return out


def mse_loss(pred, target) -> float:
    """Mean squared error over all entries of the batch."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError("prediction and target shapes differ",
                         pred.shape, target.shape)
    diff = pred - target
    return float(np.mean(diff * diff))


def mse_loss_gradient(pred, target) -> Array:
    """Gradient of mse_loss with respect to pred: 2 (pred - target) / size."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError("prediction and target shapes differ",
                         pred.shape, target.shape)
    return 2.0 * (pred - target) / pred.size


def backward(net: Mlp, cache: ForwardCache, output_grad) -> GradientSet:
    """Reverse-mode gradients for every trainable parameter.

    output_grad is the loss gradient with respect to the network output,
    shaped like that output. Frozen arrays (w_fixed, w_frozen) get no
    gradient entry at all.
    """
    if cache.version != net.version:
        raise ContractViolationError(
            f"forward cache is stale: cache version {cache.version}, "
            f"network version {net.version}"
        )
    if len(cache.records) != len(net.layers):
        raise ContractViolationError(
            f"cache has {len(cache.records)} layer records for "
            f"{len(net.layers)} layers"
        )
    g = np.asarray(output_grad, dtype=np.float64)
    last_z = cache.records[-1]["z"]
    if g.shape != last_z.shape:
        raise ShapeError("output gradient does not match network output",
                         last_z.shape, g.shape)
    per_layer: list[dict[str, Array] | None] = [None] * len(net.layers)
    for i in reversed(range(len(net.layers))):
        layer = net.layers[i]
        rec = cache.records[i]
        z = rec["z"]
        if layer.activation is Activation.RELU:
            dz = g * (z > 0.0)
        else:
            dz = g
        grads: dict[str, Array] = {}
        ad = layer.adapter
        if isinstance(ad, (RosaAdapter, LoraAdapter)):
            x_in = rec["x"]
            at_dz = ad.a.T @ dz
            grads["a"] = dz @ (ad.b @ x_in).T
            grads["b"] = at_dz @ x_in.T
            w_host = ad.w_fixed if isinstance(ad, RosaAdapter) else ad.w_frozen
            g = w_host.T @ dz + ad.b.T @ at_dz
        elif isinstance(ad, Ia3Adapter):
            grads["scale"] = (dz * rec["lin"]).sum(axis=1)
            g = ad.w_frozen.T @ (ad.scale[:, None] * dz)
        elif isinstance(ad, FullyTrainable):
            grads["w"] = dz @ rec["x"].T
            g = ad.w.T @ dz
        else:
            raise ContractViolationError(f"unknown adapter type {type(ad)!r}")
        grads["bias"] = dz.sum(axis=1)
        per_layer[i] = grads
    return GradientSet(layers=per_layer)  # type: ignore[arg-type]
