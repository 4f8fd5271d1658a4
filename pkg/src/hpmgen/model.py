"""The twin-network model: feature layout, state prediction, residual, losses.

One network predicts the state u from ``[sensors | x | t | extras]``; a
second network ingests the 5 candidate terms ``(x, t, u, u_x, u_xx)`` and
learns the unknown right-hand side of the governing equation. The residual
is ``g = u_t - hidden(x, t, u, u_x, u_xx)``, i.e. the hidden network
approximates the positive right-hand side D*u_xx + K*u^2. Derivatives of u
come from nested autodiff through the solution network, taken only with
respect to the x and t feature slots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
import torch

from .autodiff import DifferentiableNetwork
from .datasets import SENSOR_COUNT, CollocationBatch, DatasetRecord, SensorVector
from .errors import ValidationError
from .networks import NetworkParams, forward_batch, init_glorot
from .seeding import TAG_MODEL_HIDDEN, TAG_MODEL_SOLUTION, child_seed

HIDDEN_INPUT_WIDTH = 5  # candidate terms (x, t, u, u_x, u_xx)
DEFAULT_HIDDEN_LAYERS = (100, 100, 100)

X_SLOT = SENSOR_COUNT
T_SLOT = SENSOR_COUNT + 1


class Scenario(str, Enum):
    """What the solution network generalizes over, and its feature layout."""

    INPUT_GEN = "inputgen"  # [sensors(50) | x | t]
    PARAM_GEN = "paramgen"  # [sensors(50) | x | t | D | K]
    DOMAIN_GEN = "domaingen"  # [sensors(50) | x | t | L]

    @property
    def sol_input_width(self) -> int:
        return {"inputgen": 52, "paramgen": 54, "domaingen": 53}[self.value]

    @property
    def extra_features(self) -> tuple[str, ...]:
        return {
            "inputgen": (),
            "paramgen": ("diffusion", "reaction"),
            "domaingen": ("length",),
        }[self.value]


@dataclass(frozen=True)
class HiddenPhysicsModel:
    """The pair (solution network, hidden-dynamics network) for one scenario."""

    scenario: Scenario
    solution_net: NetworkParams
    hidden_net: NetworkParams

    def __post_init__(self) -> None:
        if self.solution_net.input_width != self.scenario.sol_input_width:
            raise ValidationError(
                f"solution net input width {self.solution_net.input_width} != "
                f"{self.scenario.sol_input_width} required by {self.scenario.value}"
            )
        if self.hidden_net.input_width != HIDDEN_INPUT_WIDTH:
            raise ValidationError(
                f"hidden net input width must be {HIDDEN_INPUT_WIDTH}, "
                f"got {self.hidden_net.input_width}"
            )


def new_model(
    scenario: Scenario,
    seed: int,
    hidden_layers: tuple[int, ...] = DEFAULT_HIDDEN_LAYERS,
) -> HiddenPhysicsModel:
    """Glorot-initialized twin model; both nets seeded from ``seed``."""
    sol_sizes = (scenario.sol_input_width, *hidden_layers, 1)
    hid_sizes = (HIDDEN_INPUT_WIDTH, *hidden_layers, 1)
    return HiddenPhysicsModel(
        scenario=scenario,
        solution_net=init_glorot(sol_sizes, child_seed(seed, TAG_MODEL_SOLUTION)),
        hidden_net=init_glorot(hid_sizes, child_seed(seed, TAG_MODEL_HIDDEN)),
    )


@dataclass(frozen=True)
class FunctionContext:
    """Per-input-function context the residual and losses evaluate under."""

    sensors: SensorVector
    diffusion: float | None = None
    reaction: float | None = None
    length: float | None = None

    @classmethod
    def for_record(cls, scenario: Scenario, record: DatasetRecord) -> FunctionContext:
        extras = {}
        if scenario is Scenario.PARAM_GEN:
            extras = {"diffusion": record.params.diffusion, "reaction": record.params.reaction}
        elif scenario is Scenario.DOMAIN_GEN:
            extras = {"length": record.length}
        return cls(sensors=record.sensors, **extras)

    def extras_for(self, scenario: Scenario) -> tuple[float, ...]:
        given = {
            "diffusion": self.diffusion,
            "reaction": self.reaction,
            "length": self.length,
        }
        wanted = scenario.extra_features
        missing = [name for name in wanted if given[name] is None]
        extra = [name for name, v in given.items() if v is not None and name not in wanted]
        if missing or extra:
            raise ValidationError(
                f"scenario {scenario.value} expects extras {wanted}; "
                f"missing {missing}, unexpected {extra}"
            )
        return tuple(given[name] for name in wanted)


def assemble_features(
    scenario: Scenario,
    x: float,
    t: float,
    sensors: SensorVector,
    diffusion: float | None = None,
    reaction: float | None = None,
    length: float | None = None,
) -> np.ndarray:
    """Feature vector ``[sensors | x | t | extras]`` for one point."""
    context = FunctionContext(sensors, diffusion=diffusion, reaction=reaction, length=length)
    extras = context.extras_for(scenario)
    return np.concatenate([sensors.values, [x, t], extras])


def assemble_features_batch(
    scenario: Scenario, xs: np.ndarray, ts: np.ndarray, context: FunctionContext
) -> np.ndarray:
    """Feature matrix for a batch of (x, t) points sharing one context."""
    xs = np.asarray(xs, dtype=np.float64).ravel()
    ts = np.asarray(ts, dtype=np.float64).ravel()
    if xs.shape != ts.shape:
        raise ValidationError(f"x/t batches must match, got {xs.shape} vs {ts.shape}")
    extras = context.extras_for(scenario)
    n = len(xs)
    cols = [np.broadcast_to(context.sensors.values, (n, SENSOR_COUNT)), xs[:, None], ts[:, None]]
    for value in extras:
        cols.append(np.full((n, 1), value))
    return np.concatenate(cols, axis=1)


def predict_state(model: HiddenPhysicsModel, features: np.ndarray) -> float:
    """Solution-network output for one assembled feature vector."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.shape != (model.scenario.sol_input_width,):
        raise ValidationError(
            f"expected {model.scenario.sol_input_width} features, got shape {feats.shape}"
        )
    return float(forward_batch(model.solution_net, feats[None, :])[0])


# --- differentiable batched core --------------------------------------------


def residual_batch_torch(
    sol: DifferentiableNetwork,
    hid: DifferentiableNetwork,
    scenario: Scenario,
    sensors: np.ndarray,
    xs: np.ndarray,
    ts: np.ndarray,
    extras: tuple[float, ...],
) -> torch.Tensor:
    """Residuals g at a batch of points, differentiable w.r.t. both nets.

    x and t are autograd leaves so u_x, u_xx, u_t are taken exactly; the
    graph is kept (create_graph) so parameter gradients flow through them.
    """
    n = len(xs)
    x = torch.tensor(np.asarray(xs, dtype=np.float64).reshape(n, 1), requires_grad=True)
    t = torch.tensor(np.asarray(ts, dtype=np.float64).reshape(n, 1), requires_grad=True)
    sens = torch.from_numpy(np.ascontiguousarray(sensors, dtype=np.float64)).expand(n, SENSOR_COUNT)
    cols = [sens, x, t]
    for value in extras:
        cols.append(torch.full((n, 1), float(value), dtype=torch.float64))
    feats = torch.cat(cols, dim=1)

    u = sol(feats)
    ones = torch.ones_like(u)
    u_x, u_t = torch.autograd.grad(u, [x, t], grad_outputs=ones, create_graph=True)
    u_xx = _second_x_derivative(u_x, x, ones)
    hidden_in = torch.cat([x, t, u, u_x, u_xx], dim=1)
    return (u_t - hid(hidden_in))[:, 0]


def _second_x_derivative(u_x: torch.Tensor, x: torch.Tensor, ones: torch.Tensor) -> torch.Tensor:
    """d(u_x)/dx, handling nets whose u_x is constant in x (then u_xx == 0)."""
    if not u_x.requires_grad:
        return torch.zeros_like(u_x)
    (u_xx,) = torch.autograd.grad(u_x, x, grad_outputs=ones, create_graph=True, allow_unused=True)
    return torch.zeros_like(u_x) if u_xx is None else u_xx


def hidden_features(
    model: HiddenPhysicsModel, x: float, t: float, context: FunctionContext
) -> np.ndarray:
    """The exact 5-vector (x, t, u, u_x, u_xx) fed to the hidden network."""
    sol = DifferentiableNetwork(model.solution_net)
    extras = context.extras_for(model.scenario)
    xs, ts = np.array([x]), np.array([t])
    xt = torch.tensor(np.column_stack([xs, ts]), requires_grad=True)
    sens = torch.from_numpy(np.ascontiguousarray(context.sensors.values)).expand(1, SENSOR_COUNT)
    cols = [sens, xt[:, 0:1], xt[:, 1:2]]
    for value in extras:
        cols.append(torch.full((1, 1), float(value), dtype=torch.float64))
    u = sol(torch.cat(cols, dim=1))
    (g1,) = torch.autograd.grad(u, xt, grad_outputs=torch.ones_like(u), create_graph=True)
    if g1.requires_grad:
        (g2,) = torch.autograd.grad(g1[:, 0].sum(), xt, allow_unused=True)
        u_xx = 0.0 if g2 is None else g2[0, 0].item()
    else:
        u_xx = 0.0
    return np.array([x, t, u.item(), g1[0, 0].item(), u_xx])


def residual(model: HiddenPhysicsModel, x: float, t: float, context: FunctionContext) -> float:
    """PDE residual g = u_t - hidden(x, t, u, u_x, u_xx) at one point."""
    sol = DifferentiableNetwork(model.solution_net)
    hid = DifferentiableNetwork(model.hidden_net)
    g = residual_batch_torch(
        sol,
        hid,
        model.scenario,
        context.sensors.values,
        np.array([x]),
        np.array([t]),
        context.extras_for(model.scenario),
    )
    return g[0].item()


# --- losses ------------------------------------------------------------------


@dataclass(frozen=True)
class LossBreakdown:
    data_loss: float
    equation_loss: float
    total: float


def mean_of_squares(values: np.ndarray) -> float:
    """Correctly rounded mean of squares: exactly permutation-invariant, and
    duplicating every entry leaves it unchanged."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValidationError("empty batch")
    return math.fsum(v * v for v in values) / values.size


def data_loss(model: HiddenPhysicsModel, record: DatasetRecord) -> float:
    """Mean squared error of the state over one record's measurements."""
    if len(record.measurements) == 0:
        raise ValidationError("empty measurement batch")
    context = FunctionContext.for_record(model.scenario, record)
    grid = record.field.grid
    feats = assemble_features_batch(
        model.scenario,
        grid.x_coords[record.measurements.x_indices],
        grid.t_coords[record.measurements.t_indices],
        context,
    )
    errors = forward_batch(model.solution_net, feats) - record.measurements.values
    return mean_of_squares(errors)


def equation_loss(model: HiddenPhysicsModel, colloc: CollocationBatch) -> float:
    """Mean squared residual over a collocation batch.

    Reduced with ``math.fsum`` (correctly rounded), so the result is exactly
    invariant under permutations of the collocation points.
    """
    context = FunctionContext.for_record(model.scenario, colloc.record)
    sol = DifferentiableNetwork(model.solution_net)
    hid = DifferentiableNetwork(model.hidden_net)
    g = residual_batch_torch(
        sol,
        hid,
        model.scenario,
        context.sensors.values,
        colloc.points[:, 0],
        colloc.points[:, 1],
        context.extras_for(model.scenario),
    )
    return mean_of_squares(g.detach().numpy())


def total_loss(
    model: HiddenPhysicsModel, record: DatasetRecord, colloc: CollocationBatch
) -> LossBreakdown:
    d = data_loss(model, record)
    e = equation_loss(model, colloc)
    return LossBreakdown(data_loss=d, equation_loss=e, total=d + e)
