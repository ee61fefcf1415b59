"""
Minimal dense-network engine.

Networks are stacks of affine layers, each followed by one elementwise
activation. forward() returns the output together with a cache, and
backward() consumes that cache to produce exact parameter gradients plus
the gradient with respect to the input (the generator needs it to train
through a discriminator). All arithmetic is float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .errors import MissingCacheError, NonFiniteError, ShapeError

ACTIVATIONS = ("leaky_relu", "tanh", "sigmoid", "identity")
DEFAULT_SLOPE = 0.2


def sigmoid(x):
    # expit keeps the left tail positive (the tanh form rounds to 0 near x = -40)
    return expit(x)


def _activate(kind, z, slope):
    if kind == "leaky_relu":
        return np.where(z > 0, z, slope * z)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "sigmoid":
        return sigmoid(z)
    if kind == "identity":
        return z
    raise ValueError(f"unknown activation {kind!r}")


def _activation_grad(kind, z, a, slope):
    if kind == "leaky_relu":
        return np.where(z > 0, 1.0, slope)
    if kind == "tanh":
        return 1.0 - a * a
    if kind == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(z)


@dataclass
class Layer:
    weight: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray  # (1, fan_out)
    activation: str = "leaky_relu"
    slope: float = DEFAULT_SLOPE

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(1, -1)
        if self.weight.ndim != 2 or self.bias.shape[1] != self.weight.shape[1]:
            raise ShapeError(
                f"weight {self.weight.shape} and bias {self.bias.shape} do not match"
            )

    @property
    def fan_in(self):
        return self.weight.shape[0]

    @property
    def fan_out(self):
        return self.weight.shape[1]


@dataclass
class ForwardCache:
    inputs: list
    preacts: list
    outputs: list


class Network:
    """Feed-forward stack of dense layers."""

    def __init__(self, layers: Sequence[Layer]):
        if not layers:
            raise ValueError("a network needs at least one layer")
        for k in range(1, len(layers)):
            if layers[k - 1].fan_out != layers[k].fan_in:
                raise ShapeError(
                    f"layer {k - 1} emits {layers[k - 1].fan_out} columns but "
                    f"layer {k} expects {layers[k].fan_in}"
                )
        self.layers = list(layers)

    @classmethod
    def build(
        cls,
        sizes: Sequence[int],
        activations: Sequence[str] | str,
        rng: np.random.Generator,
        slope: float = DEFAULT_SLOPE,
    ) -> "Network":
        """Glorot-uniform weights, zero biases.

        ``sizes`` lists every width including input and output; a single
        activation string applies to all layers.
        """
        n_layers = len(sizes) - 1
        if n_layers < 1:
            raise ValueError("sizes must name at least input and output widths")
        if isinstance(activations, str):
            activations = [activations] * n_layers
        if len(activations) != n_layers:
            raise ValueError(f"{n_layers} layers but {len(activations)} activations")
        layers = []
        for fan_in, fan_out, act in zip(sizes[:-1], sizes[1:], activations):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            layers.append(Layer(w, np.zeros((1, fan_out)), act, slope))
        return cls(layers)

    @property
    def in_dim(self):
        return self.layers[0].fan_in

    @property
    def out_dim(self):
        return self.layers[-1].fan_out

    @property
    def param_count(self):
        return sum(l.weight.size + l.bias.size for l in self.layers)

    def params(self):
        """Parameter arrays in a fixed order: W0, b0, W1, b1, ..."""
        out = []
        for l in self.layers:
            out.extend((l.weight, l.bias))
        return out

    def copy(self):
        return Network(
            [Layer(l.weight.copy(), l.bias.copy(), l.activation, l.slope) for l in self.layers]
        )

    def forward(self, x):
        """Returns (output, cache)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(
                f"batch has shape {x.shape}; network expects (n, {self.in_dim})"
            )
        cache = ForwardCache([], [], [])
        a = x
        for layer in self.layers:
            z = a @ layer.weight + layer.bias
            cache.inputs.append(a)
            a = _activate(layer.activation, z, layer.slope)
            cache.preacts.append(z)
            cache.outputs.append(a)
        return a, cache

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, upstream):
        """Backpropagate ``upstream`` = dL/d(output).

        Returns (grads, input_grad) where grads is aligned with params().
        """
        if cache is None or not cache.inputs:
            raise MissingCacheError("backward() needs the cache returned by forward()")
        g = np.asarray(upstream, dtype=np.float64)
        expected = cache.outputs[-1].shape
        if g.shape != expected:
            raise ShapeError(f"upstream gradient {g.shape} does not match output {expected}")
        grads = [None] * (2 * len(self.layers))
        for k in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[k]
            dz = g * _activation_grad(
                layer.activation, cache.preacts[k], cache.outputs[k], layer.slope
            )
            grads[2 * k] = cache.inputs[k].T @ dz
            grads[2 * k + 1] = dz.sum(axis=0, keepdims=True)
            g = dz @ layer.weight.T
        return grads, g


# ---- losses: each returns (value, dvalue/doutput) --------------------------


def quadratic_loss(out, target):
    diff = out - target
    n = out.shape[0]
    return 0.5 * float(np.sum(diff * diff)) / n, diff / n


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    value = float(np.mean(logsum - z[np.arange(n), labels]))
    grad = softmax(logits)
    grad[np.arange(n), labels] -= 1.0
    return value, grad / n


PROB_FLOOR = 1e-7


def bce_loss(prob, target):
    """Binary cross-entropy on probabilities (sigmoid outputs).

    ``target`` may be a scalar (e.g. 1.0, or 0.9 with label smoothing).
    """
    p = np.clip(prob, PROB_FLOOR, 1.0 - PROB_FLOOR)
    n = p.shape[0]
    value = -float(np.mean(target * np.log(p) + (1.0 - target) * np.log1p(-p)))
    grad = -(target / p - (1.0 - target) / (1.0 - p)) / n
    return value, grad


# ---- Adam -------------------------------------------------------------------


@dataclass
class AdamState:
    first_moment: list
    second_moment: list
    learning_rate: float = 0.0002
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0

    @classmethod
    def for_network(cls, net: Network, learning_rate=0.0002, beta1=0.9, beta2=0.999, epsilon=1e-8):
        params = net.params()
        return cls(
            [np.zeros_like(p) for p in params],
            [np.zeros_like(p) for p in params],
            learning_rate,
            beta1,
            beta2,
            epsilon,
        )


def adam_step(net: Network, grads, state: AdamState):
    """One bias-corrected Adam update, applied in place.

    Returns (net, state) for convenience.
    """
    params = net.params()
    if len(grads) != len(params):
        raise ShapeError(f"{len(grads)} gradients for {len(params)} parameters")
    for i, (p, g) in enumerate(zip(params, grads)):
        if g.shape != p.shape:
            raise ShapeError(f"gradient {i} has shape {g.shape}, parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            bad = int(np.count_nonzero(~np.isfinite(g)))
            raise NonFiniteError(
                f"non-finite gradient in parameter {i} ({bad} entries) at step {state.step + 1}",
                {"parameter": i, "bad_entries": bad, "step": state.step + 1},
            )
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
    return net, state


# ---- finite-difference verification ----------------------------------------

LossFn = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


def gradient_check(net: Network, loss: LossFn, batch, fd_step: float = 1e-5) -> float:
    """Max relative error between backprop and central differences.

    Error per entry is |a - n| / max(1e-8, |a| + |n|). Parameters are restored
    exactly afterwards.
    """
    if fd_step <= 0:
        raise ValueError("fd_step must be positive")
    out, cache = net.forward(batch)
    _, upstream = loss(out)
    analytic, _ = net.backward(cache, upstream)
    worst = 0.0
    for p, a in zip(net.params(), analytic):
        flat = p.reshape(-1)
        a_flat = a.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + fd_step
            lp = loss(net(batch))[0]
            flat[i] = saved - fd_step
            lm = loss(net(batch))[0]
            flat[i] = saved
            numeric = (lp - lm) / (2.0 * fd_step)
            err = abs(a_flat[i] - numeric) / max(1e-8, abs(a_flat[i]) + abs(numeric))
            worst = max(worst, err)
    return worst


def random_architecture(rng: np.random.Generator):
    """Draw (sizes, activations) from the supported grid."""
    depth = int(rng.integers(1, 4))
    sizes = [int(rng.integers(1, 5))]
    sizes += [int(rng.choice([2, 3, 5, 8])) for _ in range(depth - 1)]
    sizes.append(int(rng.integers(1, 4)))
    acts = [str(rng.choice(ACTIVATIONS)) for _ in range(depth)]
    return sizes, acts
