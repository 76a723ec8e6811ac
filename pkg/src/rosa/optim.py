"""First-order optimizers over a network's trainable parameters.

Both optimizers walk the GradientSet produced by backward, update the
matching adapter arrays in place, and bump the network version so stale
caches are rejected. AdamW keeps per-parameter moment state keyed by
(layer index, parameter name); that state can be dropped selectively when
a layer's trainable subspace is re-sampled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolationError, InvalidInputError
from .linalg import Array
from .network import GradientSet, Mlp


def _trainable(net: Mlp, layer_index: int) -> dict[str, Array]:
    params = dict(net.layers[layer_index].adapter.trainable_arrays())
    params["bias"] = net.layers[layer_index].bias
    return params


def _aligned_items(net: Mlp, grads: GradientSet):
    """Yield (key, param, grad) triples, checking alignment as we go."""
    if len(grads.layers) != len(net.layers):
        raise ContractViolationError(
            f"gradient set covers {len(grads.layers)} layers, "
            f"network has {len(net.layers)}"
        )
    for i, layer_grads in enumerate(grads.layers):
        params = _trainable(net, i)
        if set(layer_grads) != set(params):
            raise ContractViolationError(
                f"layer {i}: gradient keys {sorted(layer_grads)} do not match "
                f"trainable keys {sorted(params)}"
            )
        for name, g in layer_grads.items():
            p = params[name]
            if p.shape != g.shape:
                raise ContractViolationError(
                    f"layer {i} parameter '{name}': shape {p.shape} "
                    f"vs gradient {g.shape}"
                )
            yield (i, name), p, g


@dataclass
class Sgd:
    learning_rate: float

    def __post_init__(self):
        if not self.learning_rate > 0.0:
            raise InvalidInputError(f"learning_rate must be > 0, got {self.learning_rate}")

    def step(self, net: Mlp, grads: GradientSet) -> None:
        for _, p, g in _aligned_items(net, grads):
            p -= self.learning_rate * g
        net.bump()


@dataclass
class AdamW:
    """Adam with decoupled weight decay and bias-corrected moments.

    Decay is applied directly to the parameter (p *= 1 - lr * wd) before
    the Adam update, so it never enters the moment estimates. With
    beta1 = beta2 = 0 and weight_decay = 0 a step reduces to plain SGD
    scaled by g / (|g| + epsilon).
    """

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.98
    epsilon: float = 1e-6
    weight_decay: float = 0.0
    _state: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.learning_rate > 0.0:
            raise InvalidInputError(f"learning_rate must be > 0, got {self.learning_rate}")
        for name in ("beta1", "beta2"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise InvalidInputError(f"{name} must be in [0, 1), got {value}")
        if not self.epsilon > 0.0:
            raise InvalidInputError(f"epsilon must be > 0, got {self.epsilon}")
        if self.weight_decay < 0.0:
            raise InvalidInputError(f"weight_decay must be >= 0, got {self.weight_decay}")

    def step(self, net: Mlp, grads: GradientSet) -> None:
        for key, p, g in _aligned_items(net, grads):
            m, v, t = self._state.get(key) or (np.zeros_like(p), np.zeros_like(p), 0)
            t += 1
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * (g * g)
            self._state[key] = (m, v, t)
            m_hat = m / (1.0 - self.beta1 ** t)
            v_hat = v / (1.0 - self.beta2 ** t)
            if self.weight_decay > 0.0:
                p *= 1.0 - self.learning_rate * self.weight_decay
            p -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)
        net.bump()

    def reset_moments(self, layer_index: int, names: tuple[str, ...]) -> None:
        """Drop moment state for the named parameters of one layer.

        Used when a subspace re-sample makes the accumulated statistics
        meaningless. Unknown keys are ignored (nothing accumulated yet).
        """
        for name in names:
            self._state.pop((layer_index, name), None)
