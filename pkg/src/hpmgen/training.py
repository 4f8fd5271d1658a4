"""Training loop: per-epoch sweep over input-function minibatches.

Each gradient step takes one record's measurement set as the data
minibatch, draws a fresh Latin-Hypercube collocation batch inside that
record's domain, and applies a single joint Adam update to the
concatenated parameters of both networks. Record order is reshuffled each
epoch and collocation draws are seeded by (master seed, epoch, step), so a
checkpointed run resumes bit-identically to an uninterrupted one.
"""

from __future__ import annotations

import base64
import hashlib
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from .autodiff import DifferentiableNetwork
from .datasets import DatasetRecord, lhs_sample
from .errors import TrainingError, ValidationError
from .model import FunctionContext, HiddenPhysicsModel, Scenario, assemble_features_batch, residual_batch_torch
from .networks import AdamState, adam_step, from_flat, init_adam
from .oracle import GRID_NT, GRID_NX, TIME_HORIZON
from .seeding import TAG_COLLOCATION, TAG_EPOCH_SHUFFLE, child_seed

CHECKPOINT_FORMAT = "hpmgen-checkpoint-1"


@dataclass(frozen=True)
class TrainConfig:
    """Everything that determines a corpus and a training run.

    ``n_fun`` counts input functions per (D, K) combination (ParamGen) or
    per domain length (DomainGen); for InputGen it is the total count.
    ``schedule`` is a sequence of (epochs, learning_rate) segments.
    """

    scenario: Scenario
    n_fun: int
    n_data: int
    n_colloc: int
    schedule: tuple[tuple[int, float], ...]
    seed: int
    diffusion: float = 1e-3
    reaction: float = 1e-3
    length: float = 1.0
    d_values: tuple[float, ...] | None = None
    k_values: tuple[float, ...] | None = None
    lengths: tuple[float, ...] | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self) -> None:
        if self.n_fun < 1:
            raise ValidationError(f"n_fun must be >= 1, got {self.n_fun}")
        if not 1 <= self.n_data <= GRID_NX * GRID_NT:
            raise ValidationError(f"n_data must be in [1, {GRID_NX * GRID_NT}], got {self.n_data}")
        if self.n_colloc < 1:
            raise ValidationError(f"n_colloc must be >= 1, got {self.n_colloc}")
        if not self.schedule:
            raise ValidationError("schedule must be nonempty")
        for epochs, lr in self.schedule:
            if epochs < 1 or not lr > 0:
                raise ValidationError(f"bad schedule segment ({epochs}, {lr})")
        if self.scenario is Scenario.PARAM_GEN:
            if not self.d_values or not self.k_values:
                raise ValidationError("paramgen requires d_values and k_values")
            if self.lengths is not None:
                raise ValidationError("paramgen does not take lengths")
        elif self.scenario is Scenario.DOMAIN_GEN:
            if not self.lengths:
                raise ValidationError("domaingen requires lengths")
            if self.d_values is not None or self.k_values is not None:
                raise ValidationError("domaingen does not take d_values/k_values")
        else:
            if self.d_values is not None or self.k_values is not None or self.lengths is not None:
                raise ValidationError("inputgen takes no parameter/length grids")

    @property
    def combo_count(self) -> int:
        if self.scenario is Scenario.PARAM_GEN:
            return len(self.d_values) * len(self.k_values)
        if self.scenario is Scenario.DOMAIN_GEN:
            return len(self.lengths)
        return 1

    @property
    def record_count(self) -> int:
        return self.n_fun * self.combo_count

    @property
    def total_epochs(self) -> int:
        return sum(epochs for epochs, _ in self.schedule)

    def lr_for_epoch(self, epoch: int) -> float:
        if not 0 <= epoch < self.total_epochs:
            raise ValidationError(f"epoch {epoch} outside schedule of {self.total_epochs}")
        passed = 0
        for epochs, lr in self.schedule:
            passed += epochs
            if epoch < passed:
                return lr
        raise AssertionError("unreachable")

    _FIELDS = (
        "scenario",
        "n_fun",
        "n_data",
        "n_colloc",
        "schedule",
        "seed",
        "diffusion",
        "reaction",
        "length",
        "d_values",
        "k_values",
        "lengths",
        "beta1",
        "beta2",
        "epsilon",
    )

    def to_dict(self) -> dict:
        out: dict = {}
        for name in self._FIELDS:
            value = getattr(self, name)
            if isinstance(value, Scenario):
                value = value.value
            elif isinstance(value, tuple):
                value = [list(v) if isinstance(v, tuple) else v for v in value]
            out[name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> TrainConfig:
        unknown = set(data) - set(cls._FIELDS)
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        missing = {"scenario", "n_fun", "n_data", "n_colloc", "schedule", "seed"} - set(data)
        if missing:
            raise ValidationError(f"missing config keys: {sorted(missing)}")
        kwargs = dict(data)
        try:
            kwargs["scenario"] = Scenario(kwargs["scenario"])
        except ValueError as exc:
            raise ValidationError(str(exc)) from None
        kwargs["schedule"] = tuple((int(e), float(lr)) for e, lr in kwargs["schedule"])
        for name in ("d_values", "k_values", "lengths"):
            if kwargs.get(name) is not None:
                kwargs[name] = tuple(float(v) for v in kwargs[name])
        return cls(**kwargs)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def with_seed(self, seed: int) -> TrainConfig:
        return replace(self, seed=seed)


@dataclass(frozen=True)
class TrainLogEntry:
    step: int
    epoch: int
    batch: int
    data_loss: float
    equation_loss: float
    total_loss: float
    wall_time: float


@dataclass
class TrainLog:
    entries: list[TrainLogEntry] = field(default_factory=list)

    def append(self, entry: TrainLogEntry) -> None:
        if self.entries and entry.step != self.entries[-1].step + 1:
            raise ValidationError("log steps must be contiguous")
        self.entries.append(entry)

    def totals(self) -> np.ndarray:
        return np.array([e.total_loss for e in self.entries])

    def to_csv_text(self) -> str:
        lines = ["step,epoch,batch,data_loss,equation_loss,total_loss"]
        for e in self.entries:
            lines.append(
                f"{e.step},{e.epoch},{e.batch},{e.data_loss!r},{e.equation_loss!r},{e.total_loss!r}"
            )
        return "\n".join(lines) + "\n"

    def write_csv(self, path: Path | str) -> None:
        Path(path).write_text(self.to_csv_text())


@dataclass
class TrainResult:
    model: HiddenPhysicsModel
    log: TrainLog
    adam_state: AdamState
    epochs_completed: int


def _validate_dataset(config: TrainConfig, records: Sequence[DatasetRecord]) -> None:
    if not records:
        raise ValidationError("dataset is empty")
    if len(records) != config.record_count:
        raise ValidationError(
            f"dataset has {len(records)} records, config expects {config.record_count}"
        )
    for record in records:
        if len(record.measurements) != config.n_data:
            raise ValidationError(
                f"record {record.index} has {len(record.measurements)} measurements, "
                f"config expects {config.n_data}"
            )


def train(
    model: HiddenPhysicsModel,
    records: Sequence[DatasetRecord],
    config: TrainConfig,
    *,
    start_epoch: int = 0,
    adam_state: AdamState | None = None,
    log: TrainLog | None = None,
    checkpoint_every: int | None = None,
    checkpoint_dir: Path | str | None = None,
    progress: Callable[[int, int, TrainLogEntry], None] | None = None,
) -> TrainResult:
    """Run the training loop from ``start_epoch`` to the end of the schedule."""
    if model.scenario is not config.scenario:
        raise ValidationError(
            f"model scenario {model.scenario.value} != config scenario {config.scenario.value}"
        )
    _validate_dataset(config, records)
    if checkpoint_every is not None and checkpoint_every < 1:
        raise ValidationError("checkpoint_every must be >= 1")

    sol = DifferentiableNetwork(model.solution_net)
    hid = DifferentiableNetwork(model.hidden_net)
    leaves = sol.leaves + hid.leaves
    n_sol = sol.n_params
    flat = np.concatenate([model.solution_net.to_flat(), model.hidden_net.to_flat()])
    if adam_state is None:
        adam_state = init_adam(len(flat), config.beta1, config.beta2, config.epsilon)
    elif adam_state.first_moment.shape != flat.shape:
        raise ValidationError("adam state does not match parameter count")
    log = log if log is not None else TrainLog()

    # Per-record data minibatches are fixed; cache their assembled features.
    cache: dict[int, tuple[torch.Tensor, torch.Tensor, FunctionContext]] = {}

    def _cached(i: int) -> tuple[torch.Tensor, torch.Tensor, FunctionContext]:
        if i not in cache:
            record = records[i]
            context = FunctionContext.for_record(config.scenario, record)
            grid = record.field.grid
            feats = assemble_features_batch(
                config.scenario,
                grid.x_coords[record.measurements.x_indices],
                grid.t_coords[record.measurements.t_indices],
                context,
            )
            cache[i] = (
                torch.from_numpy(feats),
                torch.from_numpy(record.measurements.values),
                context,
            )
        return cache[i]

    t_start = time.perf_counter()
    step = start_epoch * len(records)
    epochs_completed = start_epoch
    for epoch in range(start_epoch, config.total_epochs):
        lr = config.lr_for_epoch(epoch)
        order = np.random.default_rng(
            child_seed(config.seed, TAG_EPOCH_SHUFFLE, epoch)
        ).permutation(len(records))
        for batch_i, rec_i in enumerate(order):
            record = records[rec_i]
            feats_data, targets, context = _cached(int(rec_i))
            points = lhs_sample(
                config.n_colloc,
                [(0.0, record.length), (0.0, TIME_HORIZON)],
                child_seed(config.seed, TAG_COLLOCATION, epoch, batch_i),
            )
            g = residual_batch_torch(
                sol,
                hid,
                config.scenario,
                record.sensors.values,
                points[:, 0],
                points[:, 1],
                context.extras_for(config.scenario),
            )
            eq_t = (g * g).mean()
            pred = sol(feats_data)[:, 0]
            diff = pred - targets
            data_t = (diff * diff).mean()
            total_t = data_t + eq_t

            d_val, e_val = data_t.item(), eq_t.item()
            if not (np.isfinite(d_val) and np.isfinite(e_val)):
                raise TrainingError(
                    f"non-finite loss (data={d_val}, equation={e_val}) "
                    f"at epoch {epoch} batch {batch_i} step {step}"
                )
            grads = torch.autograd.grad(total_t, leaves)
            flat_grad = np.concatenate([t.numpy().ravel() for t in grads])
            flat, adam_state = adam_step(flat, flat_grad, adam_state, lr)
            sol.load_flat(flat[:n_sol])
            hid.load_flat(flat[n_sol:])

            entry = TrainLogEntry(
                step=step,
                epoch=epoch,
                batch=batch_i,
                data_loss=d_val,
                equation_loss=e_val,
                total_loss=d_val + e_val,
                wall_time=time.perf_counter() - t_start,
            )
            log.append(entry)
            if progress is not None:
                progress(epoch, batch_i, entry)
            step += 1
        epochs_completed = epoch + 1
        if (
            checkpoint_every is not None
            and checkpoint_dir is not None
            and epochs_completed % checkpoint_every == 0
        ):
            snapshot = HiddenPhysicsModel(config.scenario, sol.to_params(), hid.to_params())
            save_checkpoint(
                Path(checkpoint_dir) / f"checkpoint_epoch_{epochs_completed:05d}.json",
                snapshot,
                config,
                adam_state,
                epochs_completed,
            )

    final = HiddenPhysicsModel(config.scenario, sol.to_params(), hid.to_params())
    return TrainResult(model=final, log=log, adam_state=adam_state, epochs_completed=epochs_completed)


# --- checkpoints -------------------------------------------------------------


@dataclass(frozen=True)
class Checkpoint:
    model: HiddenPhysicsModel
    config: TrainConfig
    adam_state: AdamState | None
    epochs_completed: int


def _b64(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode("ascii")


def _from_b64(text: str) -> np.ndarray:
    return np.frombuffer(base64.b64decode(text), dtype="<f8").copy()


def checkpoint_to_json(
    model: HiddenPhysicsModel,
    config: TrainConfig,
    adam_state: AdamState | None,
    epochs_completed: int,
) -> str:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "scenario": model.scenario.value,
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "epochs_completed": epochs_completed,
        "solution_net": {
            "layer_sizes": list(model.solution_net.layer_sizes),
            "params": _b64(model.solution_net.to_flat()),
        },
        "hidden_net": {
            "layer_sizes": list(model.hidden_net.layer_sizes),
            "params": _b64(model.hidden_net.to_flat()),
        },
        "adam": None
        if adam_state is None
        else {
            "step_count": adam_state.step_count,
            "first_moment": _b64(adam_state.first_moment),
            "second_moment": _b64(adam_state.second_moment),
            "beta1": adam_state.beta1,
            "beta2": adam_state.beta2,
            "epsilon": adam_state.epsilon,
        },
    }
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def save_checkpoint(
    path: Path | str,
    model: HiddenPhysicsModel,
    config: TrainConfig,
    adam_state: AdamState | None,
    epochs_completed: int,
) -> None:
    Path(path).write_text(checkpoint_to_json(model, config, adam_state, epochs_completed))


def load_checkpoint(path: Path | str) -> Checkpoint:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValidationError(f"unsupported checkpoint format {doc.get('format')!r}")
    config = TrainConfig.from_dict(doc["config"])
    if doc["config_hash"] != config.config_hash():
        raise ValidationError("checkpoint config hash mismatch (corrupted file?)")
    sol = from_flat(doc["solution_net"]["layer_sizes"], _from_b64(doc["solution_net"]["params"]))
    hid = from_flat(doc["hidden_net"]["layer_sizes"], _from_b64(doc["hidden_net"]["params"]))
    model = HiddenPhysicsModel(Scenario(doc["scenario"]), sol, hid)
    adam = None
    if doc["adam"] is not None:
        a = doc["adam"]
        adam = AdamState(
            step_count=a["step_count"],
            first_moment=_from_b64(a["first_moment"]),
            second_moment=_from_b64(a["second_moment"]),
            beta1=a["beta1"],
            beta2=a["beta2"],
            epsilon=a["epsilon"],
        )
    return Checkpoint(
        model=model, config=config, adam_state=adam, epochs_completed=doc["epochs_completed"]
    )


def resume(
    checkpoint: Checkpoint | Path | str,
    records: Sequence[DatasetRecord],
    config: TrainConfig,
    **train_kwargs,
) -> TrainResult:
    """Continue a checkpointed run; bit-identical to an uninterrupted one."""
    ckpt = checkpoint if isinstance(checkpoint, Checkpoint) else load_checkpoint(checkpoint)
    if ckpt.config.config_hash() != config.config_hash():
        raise ValidationError("resume config differs from checkpoint config")
    if ckpt.epochs_completed >= config.total_epochs:
        raise ValidationError(
            f"checkpoint already completed {ckpt.epochs_completed}/{config.total_epochs} epochs"
        )
    if ckpt.adam_state is None:
        raise ValidationError("checkpoint carries no optimizer state; cannot resume")
    return train(
        ckpt.model,
        records,
        config,
        start_epoch=ckpt.epochs_completed,
        adam_state=ckpt.adam_state,
        **train_kwargs,
    )
