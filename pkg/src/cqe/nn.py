"""Dense feed-forward network with hand-written backprop.

Weights are stored as ``(fan_out, fan_in)`` matrices and every hidden layer
uses ReLU; the last layer is linear. Inputs may be a single vector or a
``(batch, features)`` matrix; gradients from a batch are summed, so callers
that want a mean loss scale ``grad_output`` themselves.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .errors import InvalidArgument, InvalidState, NumericFailure


@dataclass
class MLPParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_params(self) -> int:
        return sum(a.size for a in self.arrays())

    def arrays(self) -> Iterator[np.ndarray]:
        """Yield every parameter array, layer by layer (weight then bias)."""
        for w, b in zip(self.weights, self.biases):
            yield w
            yield b

    def copy(self) -> "MLPParams":
        return MLPParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self) -> "MLPParams":
        return MLPParams([np.zeros_like(w) for w in self.weights],
                         [np.zeros_like(b) for b in self.biases])


@dataclass
class ForwardCache:
    # inputs[l] is what layer l consumed, preacts[l] what it produced before activation
    inputs: list[np.ndarray]
    preacts: list[np.ndarray]
    single: bool


@dataclass
class OptState:
    algorithm: str = "sgd"
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def relu(z):
    return np.maximum(z, 0.0)


def init_mlp(layer_sizes, seed) -> MLPParams:
    """Glorot-uniform weights, zero biases, fully determined by ``seed``."""
    sizes = list(layer_sizes)
    if len(sizes) < 2:
        raise InvalidArgument(f"need at least an input and an output layer, got {sizes}")
    if any(int(s) != s or s < 1 for s in sizes):
        raise InvalidArgument(f"layer sizes must be positive integers, got {sizes}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MLPParams(weights, biases)


def forward(params: MLPParams, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    a = x[None, :] if single else x
    if a.ndim != 2 or a.shape[1] != params.weights[0].shape[1]:
        raise InvalidArgument(
            f"input has shape {x.shape}, network expects {params.weights[0].shape[1]} features")
    inputs, preacts = [], []
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(a)
        z = a @ w.T + b
        preacts.append(z)
        a = z if i == last else relu(z)
    out = a[0] if single else a
    return ForwardCache(inputs, preacts, single), out


def backward(params: MLPParams, cache: ForwardCache, grad_output, return_input_grad=False):
    """Gradient of ``sum(output * grad_output)`` w.r.t. every parameter."""
    g = np.asarray(grad_output, dtype=np.float64)
    if cache.single:
        g = g[None, :]
    if len(cache.inputs) != len(params.weights):
        raise InvalidState("cache was produced by a network with a different depth")
    for w, a, z in zip(params.weights, cache.inputs, cache.preacts):
        if a.shape[1] != w.shape[1] or z.shape[1] != w.shape[0]:
            raise InvalidState("cache shapes do not match the parameters")
    if g.shape != cache.preacts[-1].shape:
        raise InvalidState(
            f"grad_output shape {g.shape} does not match output {cache.preacts[-1].shape}")

    grads = params.zeros_like()
    last = len(params.weights) - 1
    for i in range(last, -1, -1):
        if i != last:
            g = g * (cache.preacts[i] > 0)  # relu'(0) = 0
        grads.weights[i] = g.T @ cache.inputs[i]
        grads.biases[i] = g.sum(axis=0)
        g = g @ params.weights[i]
    if return_input_grad:
        return grads, (g[0] if cache.single else g)
    return grads


def grad_check(params: MLPParams, loss_closure: Callable, eps=1e-5) -> float:
    """Largest relative gap between analytic and central-difference gradients.

    ``loss_closure(params)`` must return ``(loss, grads)`` where ``grads`` is
    shaped like ``params``.
    """
    if not eps > 0:
        raise InvalidArgument(f"eps must be positive, got {eps}")
    loss, analytic = loss_closure(params)
    if not np.isfinite(loss):
        raise NumericFailure(f"loss closure returned {loss}")
    probe = params.copy()
    worst = 0.0
    for p, a in zip(probe.arrays(), analytic.arrays()):
        flat, aflat = p.reshape(-1), a.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            up = loss_closure(probe)[0]
            flat[j] = orig - eps
            down = loss_closure(probe)[0]
            flat[j] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NumericFailure("loss closure went non-finite under perturbation")
            numeric = (up - down) / (2 * eps)
            denom = max(abs(aflat[j]), abs(numeric), 1e-12)
            worst = max(worst, abs(aflat[j] - numeric) / denom)
    return float(worst)


def init_opt_state(params: MLPParams, algorithm="sgd", **hyper) -> OptState:
    if algorithm not in ("sgd", "adam"):
        raise InvalidArgument(f"unknown optimizer {algorithm!r}")
    if algorithm == "sgd":
        return OptState("sgd", **hyper)
    zeros = [np.zeros_like(a) for a in params.arrays()]
    return OptState("adam", m=zeros, v=[z.copy() for z in zeros], **hyper)


def step(params: MLPParams, grads: MLPParams, state: OptState, lr: float):
    """One optimizer update. Returns ``(new_params, new_state)``; inputs are untouched."""
    if not lr > 0:
        raise InvalidArgument(f"learning rate must be positive, got {lr}")
    gs = list(grads.arrays())
    ps = list(params.arrays())
    if len(gs) != len(ps) or any(g.shape != p.shape for g, p in zip(gs, ps)):
        raise InvalidArgument("gradient shapes do not match parameters")
    if not all(np.isfinite(g).all() for g in gs):
        raise NumericFailure("non-finite gradient")

    if state.algorithm == "sgd":
        new = [p - lr * g for p, g in zip(ps, gs)]
        new_state = OptState("sgd", t=state.t + 1, beta1=state.beta1,
                             beta2=state.beta2, eps=state.eps)
    elif state.algorithm == "adam":
        t = state.t + 1
        b1, b2 = state.beta1, state.beta2
        m = [b1 * m_ + (1 - b1) * g for m_, g in zip(state.m, gs)]
        v = [b2 * v_ + (1 - b2) * g * g for v_, g in zip(state.v, gs)]
        c1, c2 = 1 - b1 ** t, 1 - b2 ** t
        new = [p - lr * (m_ / c1) / (np.sqrt(v_ / c2) + state.eps)
               for p, m_, v_ in zip(ps, m, v)]
        new_state = OptState("adam", m=m, v=v, t=t, beta1=b1, beta2=b2, eps=state.eps)
    else:
        raise InvalidArgument(f"unknown optimizer {state.algorithm!r}")
    return MLPParams(new[0::2], new[1::2]), new_state
