"""Metrics and analyses for trained models.

The accuracy metric throughout is the relative L2 error
``||u_ref - u_pred||_2 / ||u_ref||_2`` over all flattened grid entries.
The hidden-dynamics check follows the same recipe everywhere: predict u
with the solution network, form the actual right-hand side
``D*u_xx + K*u^2`` from its autodiff derivatives, and compare against the
hidden network's output at the same nodes.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import torch

from .autodiff import DifferentiableNetwork
from .datasets import SENSOR_COUNT, DatasetRecord, sensor_vector
from .errors import ValidationError
from .model import (
    FunctionContext,
    HiddenPhysicsModel,
    Scenario,
    _second_x_derivative,
    assemble_features_batch,
)
from .networks import forward_batch
from .oracle import (
    InputFunctionSpec,
    PdeParams,
    SolutionField,
    default_grid,
    ftcs_solve,
)


def relative_l2_error(reference: np.ndarray, predicted: np.ndarray) -> float:
    """||ref - pred||_2 / ||ref||_2 over all entries, flattened."""
    ref = np.asarray(reference, dtype=np.float64).ravel()
    pred = np.asarray(predicted, dtype=np.float64).ravel()
    if ref.shape != pred.shape:
        raise ValidationError(f"shape mismatch {ref.shape} vs {pred.shape}")
    denom = np.linalg.norm(ref)
    if denom == 0.0:
        raise ValidationError("reference field has zero norm")
    return float(np.linalg.norm(ref - pred) / denom)


@dataclass(frozen=True)
class EvalCase:
    """One evaluation task: an input function and the PDE parameters."""

    spec: InputFunctionSpec
    params: PdeParams

    @classmethod
    def from_record(cls, record: DatasetRecord) -> EvalCase:
        return cls(spec=record.spec, params=record.params)


def _context(model: HiddenPhysicsModel, case: EvalCase) -> FunctionContext:
    sensors = sensor_vector(case.spec)
    if model.scenario is Scenario.PARAM_GEN:
        return FunctionContext(
            sensors, diffusion=case.params.diffusion, reaction=case.params.reaction
        )
    if model.scenario is Scenario.DOMAIN_GEN:
        return FunctionContext(sensors, length=case.spec.length)
    return FunctionContext(sensors)


def _grid_points(length: float) -> tuple[np.ndarray, np.ndarray]:
    grid = default_grid(length)
    xs = np.repeat(grid.x_coords, grid.nt)
    ts = np.tile(grid.t_coords, grid.nx)
    return xs, ts


def predict_field(model: HiddenPhysicsModel, case: EvalCase) -> SolutionField:
    """Solution-network prediction at every node of the stored grid."""
    grid = default_grid(case.spec.length)
    xs, ts = _grid_points(case.spec.length)
    feats = assemble_features_batch(model.scenario, xs, ts, _context(model, case))
    values = forward_batch(model.solution_net, feats).reshape(grid.nx, grid.nt)
    return SolutionField(grid=grid, values=values)


def evaluate_on_function(
    model: HiddenPhysicsModel, case: EvalCase
) -> tuple[SolutionField, float]:
    """Predicted field plus its relative L2 error against a fresh solve."""
    reference = ftcs_solve(case.params, case.spec)
    predicted = predict_field(model, case)
    return predicted, relative_l2_error(reference.values, predicted.values)


@dataclass(frozen=True)
class HiddenFieldComparison:
    """Actual vs learned hidden dynamics over the grid, with their error."""

    true_field: SolutionField
    learned_field: SolutionField
    error: float


def hidden_field_comparison(
    model: HiddenPhysicsModel, case: EvalCase, batch_size: int = 4096
) -> HiddenFieldComparison:
    """Compare D*u_xx + K*u^2 (from the solution net) with the hidden net.

    Both fields are evaluated at every grid node; derivatives come from
    autodiff through the solution network, exactly as during training.
    """
    grid = default_grid(case.spec.length)
    context = _context(model, case)
    extras = context.extras_for(model.scenario)
    sol = DifferentiableNetwork(model.solution_net)
    hid = DifferentiableNetwork(model.hidden_net)
    sensors = torch.from_numpy(np.ascontiguousarray(context.sensors.values))

    xs_all, ts_all = _grid_points(case.spec.length)
    true_parts, learned_parts = [], []
    for lo in range(0, len(xs_all), batch_size):
        xs = xs_all[lo : lo + batch_size]
        ts = ts_all[lo : lo + batch_size]
        n = len(xs)
        x = torch.tensor(xs.reshape(n, 1), requires_grad=True)
        t = torch.tensor(ts.reshape(n, 1), requires_grad=True)
        cols = [sensors.expand(n, SENSOR_COUNT), x, t]
        for value in extras:
            cols.append(torch.full((n, 1), float(value), dtype=torch.float64))
        u = sol(torch.cat(cols, dim=1))
        ones = torch.ones_like(u)
        u_x, _u_t = torch.autograd.grad(u, [x, t], grad_outputs=ones, create_graph=True)
        u_xx = _second_x_derivative(u_x, x, ones)
        with torch.no_grad():
            true = case.params.diffusion * u_xx + case.params.reaction * u * u
            learned = hid(torch.cat([x, t, u, u_x, u_xx], dim=1))
        true_parts.append(true[:, 0].numpy())
        learned_parts.append(learned[:, 0].numpy())

    shape = (grid.nx, grid.nt)
    true_field = SolutionField(grid=grid, values=np.concatenate(true_parts).reshape(shape))
    learned_field = SolutionField(grid=grid, values=np.concatenate(learned_parts).reshape(shape))
    return HiddenFieldComparison(
        true_field=true_field,
        learned_field=learned_field,
        error=relative_l2_error(true_field.values, learned_field.values),
    )


@dataclass(frozen=True)
class EvalReport:
    """Per-function errors with summary statistics (population std)."""

    per_function: tuple[tuple[int, float], ...]
    mean: float
    std: float
    hidden_field_error: float | None = None

    def to_dict(self) -> dict:
        return {
            "per_function": [[i, e] for i, e in self.per_function],
            "mean": self.mean,
            "std": self.std,
            "hidden_field_error": self.hidden_field_error,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_errors(
        cls, errors: Sequence[tuple[int, float]], hidden_field_error: float | None = None
    ) -> EvalReport:
        if not errors:
            raise ValidationError("no errors to report")
        values = np.array([e for _, e in errors])
        return cls(
            per_function=tuple((int(i), float(e)) for i, e in errors),
            mean=float(values.mean()),
            std=float(values.std()),
            hidden_field_error=hidden_field_error,
        )


def error_distribution(
    model: HiddenPhysicsModel,
    cases: Sequence[EvalCase],
    with_hidden_field: bool = False,
) -> EvalReport:
    """Relative L2 error per case plus mean/std (and optionally the mean
    hidden-field comparison error over the same cases)."""
    if not cases:
        raise ValidationError("no evaluation cases")
    errors = []
    for i, case in enumerate(cases):
        _, err = evaluate_on_function(model, case)
        errors.append((i, err))
    hidden_err = None
    if with_hidden_field:
        hidden_err = float(
            np.mean([hidden_field_comparison(model, case).error for case in cases])
        )
    return EvalReport.from_errors(errors, hidden_field_error=hidden_err)


# --- parameter sweep ----------------------------------------------------------


def default_sweep_d_values() -> np.ndarray:
    """21 equispaced diffusion values from 1e-3 to 5e-3."""
    return np.linspace(1e-3, 5e-3, 21)


@dataclass(frozen=True)
class SweepTable:
    """Mean error per (D, K) cell over a set of input functions."""

    d_values: tuple[float, ...]
    k_values: tuple[float, ...]
    mean_errors: np.ndarray  # shape (len(d_values), len(k_values))
    extrapolation: np.ndarray  # same shape, True where (D, K) leaves the trained box

    def to_csv_text(self) -> str:
        lines = ["diffusion,reaction,mean_error,extrapolation"]
        for i, d in enumerate(self.d_values):
            for j, k in enumerate(self.k_values):
                lines.append(
                    f"{d!r},{k!r},{self.mean_errors[i, j]!r},{int(self.extrapolation[i, j])}"
                )
        return "\n".join(lines) + "\n"

    def write_csv(self, path: Path | str) -> None:
        Path(path).write_text(self.to_csv_text())


def parameter_sweep(
    model: HiddenPhysicsModel,
    d_values: Iterable[float],
    k_values: Iterable[float],
    specs: Sequence[InputFunctionSpec],
    trained_d_range: tuple[float, float] | None = None,
    trained_k_range: tuple[float, float] | None = None,
) -> SweepTable:
    """Mean error per (D, K) cell; cells outside the trained ranges are
    flagged as extrapolation rather than rejected."""
    if model.scenario is not Scenario.PARAM_GEN:
        raise ValidationError("parameter sweep requires a paramgen model")
    if not specs:
        raise ValidationError("no input functions for the sweep")
    d_tuple = tuple(float(d) for d in d_values)
    k_tuple = tuple(float(k) for k in k_values)
    errors = np.empty((len(d_tuple), len(k_tuple)))
    extrapolation = np.zeros_like(errors, dtype=bool)
    for i, d in enumerate(d_tuple):
        for j, k in enumerate(k_tuple):
            params = PdeParams(diffusion=d, reaction=k)
            cell = [
                evaluate_on_function(model, EvalCase(spec=s, params=params))[1] for s in specs
            ]
            errors[i, j] = float(np.mean(cell))
            out_d = trained_d_range is not None and not (
                trained_d_range[0] <= d <= trained_d_range[1]
            )
            out_k = trained_k_range is not None and not (
                trained_k_range[0] <= k <= trained_k_range[1]
            )
            extrapolation[i, j] = out_d or out_k
    return SweepTable(d_tuple, k_tuple, errors, extrapolation)


def export_contours(field: SolutionField, path: Path | str) -> None:
    """Write (x, t, value) CSV triplets for external plotting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "t", "value"])
        for i, x in enumerate(field.grid.x_coords):
            for j, t in enumerate(field.grid.t_coords):
                writer.writerow([repr(float(x)), repr(float(t)), repr(float(field.values[i, j]))])
