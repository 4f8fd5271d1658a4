"""Corpus assembly: sensor discretization, LHS, measurement subsampling.

Per-record file format (``RDFIELD1``, binary, little-endian):

* line 1: magic ``b"RDFIELD1\\n"``
* line 2: one JSON header line with keys ``length``, ``diffusion``,
  ``reaction``, ``input_function`` (kind / length / coefficients),
  ``function_seed``, ``measurement_seed``, ``nx``, ``nt``, ``n_data``
* ``nx * nt`` float64: the field, row-major x-then-t (index = ix*nt + it)
* ``n_data`` pairs of uint32: measurement indices (x_index, t_index)
* ``n_data`` float64: measured values

The loader re-derives the input function from the header and validates the
stored invariants exactly (zero boundary rows, first column equal to f,
measurement values equal to the field at their indices).
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Iterable

import numpy as np

from .errors import ValidationError
from .oracle import (
    GRID_NT,
    GRID_NX,
    InputFunctionSpec,
    PdeParams,
    SolutionField,
    default_grid,
    eval_input_function,
    ftcs_solve,
    random_periodic,
)
from .seeding import TAG_FUNCTION, TAG_MEASUREMENT, child_seed

if TYPE_CHECKING:
    from .training import TrainConfig

SENSOR_COUNT = 50

RECORD_MAGIC = b"RDFIELD1\n"


@dataclass(frozen=True)
class SensorVector:
    """An input function discretized at 50 equispaced sensor points on [0, L]."""

    coords: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.coords.shape != (SENSOR_COUNT,) or self.values.shape != (SENSOR_COUNT,):
            raise ValidationError(f"sensor vector must have exactly {SENSOR_COUNT} entries")


def sensor_vector(spec: InputFunctionSpec) -> SensorVector:
    coords = np.linspace(0.0, spec.length, SENSOR_COUNT)
    return SensorVector(coords=coords, values=np.asarray(spec(coords)))


def lhs_sample(n: int, bounds: list[tuple[float, float]], seed: int) -> np.ndarray:
    """Latin-Hypercube sample: n points, one per stratum per dimension.

    Each dimension is cut into n equal strata; a random permutation assigns
    one stratum per point and the point sits uniformly inside it.
    """
    if n < 1:
        raise ValidationError(f"sample count must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    columns = []
    for lo, hi in bounds:
        if not lo < hi:
            raise ValidationError(f"degenerate bounds ({lo}, {hi})")
        strata = rng.permutation(n)
        columns.append(lo + (hi - lo) * (strata + rng.random(n)) / n)
    return np.column_stack(columns)


@dataclass(frozen=True)
class MeasurementSet:
    """n_data distinct grid samples of one solution field."""

    x_indices: np.ndarray
    t_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.values)
        if self.x_indices.shape != (n,) or self.t_indices.shape != (n,):
            raise ValidationError("measurement index arrays must match value count")
        flat = self.x_indices.astype(np.int64) * GRID_NT + self.t_indices.astype(np.int64)
        if len(np.unique(flat)) != n:
            raise ValidationError("measurement indices must be distinct")

    def __len__(self) -> int:
        return len(self.values)


def sample_measurements(field: SolutionField, n_data: int, seed: int) -> MeasurementSet:
    """Draw n_data distinct grid indices uniformly without replacement."""
    total = field.grid.nx * field.grid.nt
    if not 1 <= n_data <= total:
        raise ValidationError(f"n_data must be in [1, {total}], got {n_data}")
    rng = np.random.default_rng(seed)
    flat = rng.choice(total, size=n_data, replace=False)
    x_idx, t_idx = np.divmod(flat, field.grid.nt)
    return MeasurementSet(x_idx, t_idx, field.values[x_idx, t_idx].copy())


@dataclass(frozen=True)
class DatasetRecord:
    """One input function with its solved field and measurement subsample."""

    index: int
    spec: InputFunctionSpec
    params: PdeParams
    field: SolutionField
    measurements: MeasurementSet
    sensors: SensorVector
    function_seed: int | None
    measurement_seed: int

    @property
    def length(self) -> float:
        return self.spec.length


@dataclass(frozen=True)
class CollocationBatch:
    """Residual-penalty points inside one record's domain, with its context."""

    points: np.ndarray  # (M, 2) columns x, t
    record: DatasetRecord

    def __post_init__(self) -> None:
        if self.points.ndim != 2 or self.points.shape[1] != 2 or self.points.shape[0] < 1:
            raise ValidationError(f"collocation points must be (M, 2), got {self.points.shape}")


def _record_cases(config: TrainConfig) -> list[tuple[float, float, float]]:
    """Per-record (diffusion, reaction, length) tuples in corpus order."""
    scenario = config.scenario.value
    if scenario == "inputgen":
        combos = [(config.diffusion, config.reaction, config.length)]
    elif scenario == "paramgen":
        combos = [
            (d, k, config.length) for d in config.d_values for k in config.k_values
        ]
    else:
        combos = [(config.diffusion, config.reaction, L) for L in config.lengths]
    return [case for case in combos for _ in range(config.n_fun)]


def build_record(
    index: int, diffusion: float, reaction: float, length: float, n_data: int, master_seed: int
) -> DatasetRecord:
    function_seed = child_seed(master_seed, TAG_FUNCTION, index)
    measurement_seed = child_seed(master_seed, TAG_MEASUREMENT, index)
    spec = random_periodic(function_seed, length=length)
    params = PdeParams(diffusion=diffusion, reaction=reaction)
    field = ftcs_solve(params, spec)
    measurements = sample_measurements(field, n_data, measurement_seed)
    return DatasetRecord(
        index=index,
        spec=spec,
        params=params,
        field=field,
        measurements=measurements,
        sensors=sensor_vector(spec),
        function_seed=function_seed,
        measurement_seed=measurement_seed,
    )


def build_dataset(config: TrainConfig, max_workers: int = 1) -> list[DatasetRecord]:
    """Build the full training corpus for a scenario.

    Records are independent and derive their seeds from (master seed,
    record index), so parallel and serial builds produce identical corpora.
    """
    cases = _record_cases(config)

    def _one(item: tuple[int, tuple[float, float, float]]) -> DatasetRecord:
        index, (d, k, length) = item
        return build_record(index, d, k, length, config.n_data, config.seed)

    items = list(enumerate(cases))
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(_one, items))
    return [_one(item) for item in items]


# --- record file round trip ------------------------------------------------


def record_to_bytes(record: DatasetRecord) -> bytes:
    header = {
        "length": record.spec.length,
        "diffusion": record.params.diffusion,
        "reaction": record.params.reaction,
        "input_function": {
            "kind": record.spec.kind,
            "length": record.spec.length,
            "coefficients": list(record.spec.coefficients)
            if record.spec.coefficients is not None
            else None,
        },
        "function_seed": record.function_seed,
        "measurement_seed": record.measurement_seed,
        "nx": record.field.grid.nx,
        "nt": record.field.grid.nt,
        "n_data": len(record.measurements),
    }
    blocks = [
        RECORD_MAGIC,
        json.dumps(header, sort_keys=True).encode() + b"\n",
        np.ascontiguousarray(record.field.values, dtype="<f8").tobytes(),
        np.ascontiguousarray(
            np.column_stack([record.measurements.x_indices, record.measurements.t_indices]),
            dtype="<u4",
        ).tobytes(),
        np.ascontiguousarray(record.measurements.values, dtype="<f8").tobytes(),
    ]
    return b"".join(blocks)


def record_from_bytes(raw: bytes, index: int = 0) -> DatasetRecord:
    if not raw.startswith(RECORD_MAGIC):
        raise ValidationError("not a RDFIELD1 record file")
    header_end = raw.index(b"\n", len(RECORD_MAGIC))
    header = json.loads(raw[len(RECORD_MAGIC) : header_end])
    nx, nt, n_data = header["nx"], header["nt"], header["n_data"]
    if (nx, nt) != (GRID_NX, GRID_NT):
        raise ValidationError(f"unsupported grid {nx} x {nt}")

    fn = header["input_function"]
    coeffs = tuple(fn["coefficients"]) if fn["coefficients"] is not None else None
    spec = InputFunctionSpec(kind=fn["kind"], length=fn["length"], coefficients=coeffs)
    params = PdeParams(diffusion=header["diffusion"], reaction=header["reaction"])

    pos = header_end + 1
    field_bytes = nx * nt * 8
    values = np.frombuffer(raw, dtype="<f8", count=nx * nt, offset=pos).reshape(nx, nt).copy()
    pos += field_bytes
    idx = np.frombuffer(raw, dtype="<u4", count=2 * n_data, offset=pos).reshape(n_data, 2)
    pos += 8 * n_data
    measured = np.frombuffer(raw, dtype="<f8", count=n_data, offset=pos).copy()
    if pos + 8 * n_data != len(raw):
        raise ValidationError("record file has trailing or missing bytes")

    grid = default_grid(spec.length)
    field = SolutionField(grid=grid, values=values)
    measurements = MeasurementSet(
        idx[:, 0].astype(np.int64), idx[:, 1].astype(np.int64), measured
    )
    _validate_record_invariants(spec, field, measurements)
    return DatasetRecord(
        index=index,
        spec=spec,
        params=params,
        field=field,
        measurements=measurements,
        sensors=sensor_vector(spec),
        function_seed=header["function_seed"],
        measurement_seed=header["measurement_seed"],
    )


def _validate_record_invariants(
    spec: InputFunctionSpec, field: SolutionField, measurements: MeasurementSet
) -> None:
    if np.any(field.values[0, :] != 0.0) or np.any(field.values[-1, :] != 0.0):
        raise ValidationError("boundary rows of the field must be identically zero")
    expected_ic = np.asarray(eval_input_function(spec, field.grid.x_coords))
    if not np.array_equal(field.values[:, 0], expected_ic):
        raise ValidationError("first field column must equal the input function")
    if not np.isfinite(field.values).all():
        raise ValidationError("field contains non-finite values")
    gathered = field.values[measurements.x_indices, measurements.t_indices]
    if not np.array_equal(gathered, measurements.values):
        raise ValidationError("measurement values drifted from the stored field")


def save_record(record: DatasetRecord, path: Path | str) -> None:
    Path(path).write_bytes(record_to_bytes(record))


def load_record(path: Path | str, index: int = 0) -> DatasetRecord:
    return record_from_bytes(Path(path).read_bytes(), index=index)


# --- dataset directory (manifest + record files) ----------------------------

MANIFEST_NAME = "manifest.json"


def dataset_manifest(config: TrainConfig, record_paths: Iterable[str]) -> dict:
    return {
        "format": "hpmgen-dataset-1",
        "config": config.to_dict(),
        "records": list(record_paths),
    }


def save_dataset(records: list[DatasetRecord], config: TrainConfig, out_dir: Path | str) -> None:
    out = Path(out_dir)
    (out / "records").mkdir(parents=True, exist_ok=True)
    width = max(4, int(math.log10(max(len(records), 1))) + 1)
    paths = []
    for record in records:
        rel = f"records/record_{record.index:0{width}d}.bin"
        save_record(record, out / rel)
        paths.append(rel)
    manifest = dataset_manifest(config, paths)
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_dataset(dataset_dir: Path | str) -> tuple[TrainConfig, list[DatasetRecord]]:
    from .training import TrainConfig as _TrainConfig

    root = Path(dataset_dir)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise ValidationError(f"no {MANIFEST_NAME} in {root}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != "hpmgen-dataset-1":
        raise ValidationError(f"unsupported dataset format {manifest.get('format')!r}")
    config = _TrainConfig.from_dict(manifest["config"])
    records = [load_record(root / rel, index=i) for i, rel in enumerate(manifest["records"])]
    if not records:
        raise ValidationError("dataset has no records")
    return config, records
