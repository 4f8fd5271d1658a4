"""Differentiation engine for the twin networks.

Two jobs, both exact (no finite differences):

* first/second derivatives of a network output with respect to selected
  feature slots (``input_derivatives``), and
* gradients of a scalar loss with respect to all parameters of one or more
  networks, where the loss itself may contain input derivatives of a
  network (``loss_parameter_gradient``).

Both are backed by torch autograd in float64; nested input derivatives are
obtained with ``create_graph=True`` so the parameter gradient propagates
through them. Everything here is a pure function of its inputs and safe to
call concurrently. Networks are tanh throughout, so derivatives of any
order exist and are finite for finite inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch

from .errors import TrainingError, ValidationError
from .networks import NetworkParams, forward as _numpy_forward


@dataclass(frozen=True)
class DiffRequest:
    """Which feature slots to differentiate against.

    ``second`` should name coordinate-like slots only (the model layer
    requests x/t, never sensor-value or parameter slots).
    """

    first: tuple[int, ...] = ()
    second: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        for name, idx in (("first", self.first), ("second", self.second)):
            if len(set(idx)) != len(idx) or any(i < 0 for i in idx):
                raise ValidationError(f"{name} indices must be distinct and >= 0, got {idx}")

    def validate_width(self, width: int) -> None:
        for i in (*self.first, *self.second):
            if i >= width:
                raise ValidationError(f"derivative index {i} exceeds feature width {width}")


@dataclass(frozen=True)
class DerivativeBundle:
    value: float
    first: dict[int, float] = field(default_factory=dict)
    second: dict[int, float] = field(default_factory=dict)


class DifferentiableNetwork:
    """Torch view of a :class:`NetworkParams` whose parameters are autograd leaves.

    The leaf order (W0, b0, W1, b1, ...) matches ``NetworkParams.to_flat``,
    so flattened gradients line up with flat parameter vectors.
    """

    def __init__(self, params: NetworkParams):
        self.layer_sizes = params.layer_sizes
        self.weights = [
            torch.tensor(w, dtype=torch.float64, requires_grad=True) for w in params.weights
        ]
        self.biases = [
            torch.tensor(b, dtype=torch.float64, requires_grad=True) for b in params.biases
        ]

    @property
    def leaves(self) -> list[torch.Tensor]:
        out: list[torch.Tensor] = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    @property
    def n_params(self) -> int:
        return sum(t.numel() for t in self.leaves)

    def __call__(self, features: torch.Tensor) -> torch.Tensor:
        """Forward pass; features shape (..., input_width) -> (..., 1)."""
        if features.shape[-1] != self.layer_sizes[0]:
            raise ValidationError(
                f"expected {self.layer_sizes[0]} features, got {features.shape[-1]}"
            )
        h = features
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = torch.tanh(h @ w + b)
        return h @ self.weights[-1] + self.biases[-1]

    def load_flat(self, flat: np.ndarray) -> None:
        """Overwrite leaf values in place from a flat vector (no grad)."""
        pos = 0
        with torch.no_grad():
            for leaf in self.leaves:
                n = leaf.numel()
                leaf.copy_(torch.from_numpy(flat[pos : pos + n].reshape(leaf.shape)))
                pos += n
        if pos != len(flat):
            raise ValidationError(f"flat vector length {len(flat)} != parameter count {pos}")

    def to_params(self) -> NetworkParams:
        weights = tuple(w.detach().numpy().copy() for w in self.weights)
        biases = tuple(b.detach().numpy().copy() for b in self.biases)
        return NetworkParams(self.layer_sizes, weights, biases)


def evaluate(network: NetworkParams, features: np.ndarray) -> float:
    """Network output for one feature vector (plain forward pass)."""
    return _numpy_forward(network, features)


def input_derivatives(
    network: NetworkParams, features: np.ndarray, request: DiffRequest
) -> DerivativeBundle:
    """Exact first/second derivatives of the output w.r.t. requested slots."""
    x = np.asarray(features, dtype=np.float64)
    if x.shape != (network.input_width,):
        raise ValidationError(f"expected {network.input_width} features, got shape {x.shape}")
    request.validate_width(x.shape[0])

    feats = torch.tensor(x, dtype=torch.float64, requires_grad=True)
    h = feats
    for w, b in zip(network.weights[:-1], network.biases[:-1]):
        h = torch.tanh(h @ torch.from_numpy(w) + torch.from_numpy(b))
    y = h @ torch.from_numpy(network.weights[-1]) + torch.from_numpy(network.biases[-1])
    y = y[0]

    first: dict[int, float] = {}
    second: dict[int, float] = {}
    if request.first or request.second:
        (g1,) = torch.autograd.grad(y, feats, create_graph=bool(request.second))
        first = {i: g1[i].item() for i in request.first}
        for i in request.second:
            if not g1.requires_grad:
                # linear output: first derivatives are constants
                second[i] = 0.0
                continue
            (g2,) = torch.autograd.grad(g1[i], feats, retain_graph=True, allow_unused=True)
            second[i] = 0.0 if g2 is None else g2[i].item()
    return DerivativeBundle(value=y.item(), first=first, second=second)


LossFn = Callable[..., torch.Tensor]


def loss_parameter_gradient(
    loss_fn: LossFn, networks: Sequence[NetworkParams | DifferentiableNetwork]
) -> np.ndarray:
    """Gradient of a composite scalar loss w.r.t. all networks' parameters.

    ``loss_fn`` receives one :class:`DifferentiableNetwork` per entry of
    ``networks`` and must return a torch scalar built from them (forward
    passes and/or input derivatives taken with ``create_graph=True``). The
    result is the concatenation of each network's flat gradient, in order.
    Networks a loss does not touch contribute zero blocks.
    """
    dnets = [
        n if isinstance(n, DifferentiableNetwork) else DifferentiableNetwork(n) for n in networks
    ]
    loss = loss_fn(*dnets)
    value = float(loss.detach())
    if not math.isfinite(value):
        raise TrainingError(f"non-finite loss value {value}")
    leaves = [leaf for dn in dnets for leaf in dn.leaves]
    grads = torch.autograd.grad(loss, leaves, allow_unused=True)
    parts = []
    for leaf, g in zip(leaves, grads):
        parts.append(np.zeros(leaf.numel()) if g is None else g.detach().numpy().ravel())
    return np.concatenate(parts)
