"""Fully connected feed-forward networks and a from-scratch Adam optimizer.

Hidden layers use tanh (the residual needs second derivatives, so the
activation must be smooth); the output layer is linear. All arithmetic is
float64: second derivatives amplify round-off and the finite-difference
acceptance checks do not pass in float32.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TrainingError, ValidationError


@dataclass(frozen=True)
class NetworkParams:
    """Immutable value type holding one network's weights and biases.

    ``weights[i]`` has shape ``(layer_sizes[i], layer_sizes[i+1])`` so the
    forward pass is ``h @ W + b``. The flat parameter order is
    ``W0.ravel(), b0, W1.ravel(), b1, ...`` and every consumer of flat
    vectors (Adam, gradients, checkpoints) relies on it.
    """

    layer_sizes: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        sizes = self.layer_sizes
        if len(sizes) < 2 or any(int(w) < 1 for w in sizes):
            raise ValidationError(f"layer_sizes must be >= 2 positive widths, got {sizes}")
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ValidationError("one weight matrix and bias vector per layer transition")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[i], sizes[i + 1]) or b.shape != (sizes[i + 1],):
                raise ValidationError(
                    f"layer {i}: expected shapes {(sizes[i], sizes[i+1])} / "
                    f"{(sizes[i+1],)}, got {w.shape} / {b.shape}"
                )
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValidationError(f"layer {i}: non-finite parameter entries")

    @property
    def input_width(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def to_flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def with_flat(self, flat: np.ndarray) -> NetworkParams:
        """Rebuild the same architecture from a flat parameter vector."""
        if flat.shape != (self.n_params,):
            raise ValidationError(f"expected flat vector of length {self.n_params}, got {flat.shape}")
        weights, biases, pos = [], [], 0
        for w, b in zip(self.weights, self.biases):
            weights.append(flat[pos : pos + w.size].reshape(w.shape).copy())
            pos += w.size
            biases.append(flat[pos : pos + b.size].copy())
            pos += b.size
        return NetworkParams(self.layer_sizes, tuple(weights), tuple(biases))


def from_flat(layer_sizes: tuple[int, ...] | list[int], flat: np.ndarray) -> NetworkParams:
    """Build params of the given architecture from a flat vector."""
    sizes = tuple(int(w) for w in layer_sizes)
    expected = sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))
    if len(flat) != expected:
        raise ValidationError(f"flat vector length {len(flat)} does not match {sizes}")
    weights, biases, pos = [], [], 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(flat[pos : pos + fan_in * fan_out].reshape(fan_in, fan_out).copy())
        pos += fan_in * fan_out
        biases.append(flat[pos : pos + fan_out].copy())
        pos += fan_out
    return NetworkParams(sizes, tuple(weights), tuple(biases))


def init_glorot(layer_sizes: tuple[int, ...] | list[int], seed: int) -> NetworkParams:
    """Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases."""
    sizes = tuple(int(w) for w in layer_sizes)
    if len(sizes) < 2 or any(w < 1 for w in sizes):
        raise ValidationError(f"layer_sizes must be >= 2 positive widths, got {sizes}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return NetworkParams(sizes, tuple(weights), tuple(biases))


def forward(params: NetworkParams, features: np.ndarray) -> float:
    """Evaluate the network on a single feature vector."""
    x = np.asarray(features, dtype=np.float64)
    if x.shape != (params.input_width,):
        raise ValidationError(f"expected {params.input_width} features, got shape {x.shape}")
    return float(_forward_array(params, x))


def forward_batch(params: NetworkParams, features: np.ndarray) -> np.ndarray:
    """Evaluate the network on a batch of feature rows, returning shape (n,)."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_width:
        raise ValidationError(f"expected (n, {params.input_width}) features, got shape {x.shape}")
    return _forward_array(params, x)


def _forward_array(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    h = x
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        h = np.tanh(h @ w + b)
    out = h @ params.weights[-1] + params.biases[-1]
    return out[..., 0]


@dataclass(frozen=True)
class AdamState:
    """Optimizer state over one flat parameter vector (possibly several nets)."""

    step_count: int
    first_moment: np.ndarray
    second_moment: np.ndarray
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self) -> None:
        if self.step_count < 0:
            raise ValidationError("step_count must be >= 0")
        if self.first_moment.shape != self.second_moment.shape:
            raise ValidationError("moment vectors must share one shape")
        if np.any(self.second_moment < 0):
            raise ValidationError("second_moment entries must be >= 0")


def init_adam(n_params: int, beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8) -> AdamState:
    return AdamState(0, np.zeros(n_params), np.zeros(n_params), beta1, beta2, epsilon)


def adam_step(
    params: np.ndarray, grad: np.ndarray, state: AdamState, lr: float
) -> tuple[np.ndarray, AdamState]:
    """One Adam update with bias correction; returns new params and state."""
    if grad.shape != params.shape or grad.shape != state.first_moment.shape:
        raise ValidationError(
            f"gradient shape {grad.shape} does not match parameters {params.shape}"
        )
    if not np.isfinite(grad).all():
        bad = int(np.flatnonzero(~np.isfinite(grad))[0])
        raise TrainingError(f"non-finite gradient entry at index {bad}")
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return new_params, AdamState(t, m, v, state.beta1, state.beta2, state.epsilon)
