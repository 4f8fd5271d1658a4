"""Command-line entry point wiring the pipeline.

Subcommands: ``generate`` (build a dataset), ``train``, ``evaluate``,
``predict``, ``export-contours``. Exit codes: 0 ok, 1 usage, 2 validation,
3 runtime failure. Every run writes a ``run.json`` manifest into the output
directory before doing any work; all other outputs are timestamp-free so
identical runs produce byte-identical files.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .datasets import build_dataset, dataset_manifest, load_dataset, record_to_bytes
from .errors import OracleError, TrainingError, ValidationError
from .evaluation import (
    EvalCase,
    error_distribution,
    evaluate_on_function,
    export_contours,
    hidden_field_comparison,
    parameter_sweep,
    predict_field,
)
from .model import Scenario, new_model
from .oracle import InputFunctionSpec, PdeParams, ftcs_solve, random_periodic
from .presets import get_preset
from .seeding import TAG_TEST_FUNCTION, child_seed
from .training import TrainConfig, load_checkpoint, resume, save_checkpoint, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

OUT_DIR_ENV = "HPMGEN_OUT_DIR"


class _Parser(argparse.ArgumentParser):
    """Help exits 0; usage errors exit 1 (instead of argparse's default 2)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--out",
        type=Path,
        default=None,
        help=f"output directory (default: ${OUT_DIR_ENV} or ./runs/<command>)",
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help="worker threads; 1 guarantees fully serial, bit-stable execution",
    )
    parser.add_argument("--force", action="store_true", help="overwrite differing outputs")


def _add_config_source(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--preset", help="named configuration (e.g. desk-small)")
    parser.add_argument("--config", type=Path, help="JSON configuration file")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")


def _add_function_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--function",
        default="periodic",
        choices=["periodic", "quadratic", "cubic", "trigonometric"],
        help="input-function family",
    )
    parser.add_argument(
        "--coefficients", help="comma-separated periodic coefficients (5 values)"
    )
    parser.add_argument(
        "--function-seed", type=int, default=None, help="draw random periodic coefficients"
    )
    parser.add_argument("--length", "--L", type=float, default=None, help="domain length L")
    parser.add_argument(
        "--diffusion", "--D", type=float, default=None, help="diffusion coefficient"
    )
    parser.add_argument("--reaction", "--K", type=float, default=None, help="reaction rate")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hpmgen", description=__doc__)
    parser.add_argument("--version", action="version", version=f"hpmgen {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_gen = sub.add_parser("generate", help="build a training dataset")
    _add_config_source(p_gen)
    p_gen.add_argument("--scenario", help="must match the configuration's scenario")
    _add_common(p_gen)

    p_train = sub.add_parser("train", help="train a model on a generated dataset")
    p_train.add_argument("--dataset", type=Path, required=True, help="dataset directory")
    _add_config_source(p_train)
    p_train.add_argument("--resume", type=Path, help="checkpoint to continue from")
    p_train.add_argument("--checkpoint-every", type=int, default=None, help="epochs between snapshots")
    p_train.add_argument("--quiet", action="store_true", help="suppress progress lines")
    _add_common(p_train)

    p_eval = sub.add_parser("evaluate", help="error distribution for a trained model")
    p_eval.add_argument("--checkpoint", type=Path, required=True)
    p_eval.add_argument("--dataset", type=Path, help="evaluate on this dataset's functions")
    p_eval.add_argument("--n-test", type=int, default=20, help="fresh random test functions")
    p_eval.add_argument("--test-seed", type=int, default=1234)
    p_eval.add_argument("--hidden-field", action="store_true", help="also compare hidden dynamics")
    p_eval.add_argument("--diffusion", type=float, default=None, help="test diffusion coefficient")
    p_eval.add_argument("--reaction", type=float, default=None, help="test reaction rate")
    p_eval.add_argument("--length", type=float, default=None, help="test domain length")
    p_eval.add_argument("--sweep-d", help="diffusion sweep 'lo:hi:n' (e.g. 1e-3:5e-3:21)")
    p_eval.add_argument("--sweep-k", help="comma-separated reaction rates for the sweep")
    p_eval.add_argument("--sweep-functions", type=int, default=10, help="functions per sweep cell")
    _add_common(p_eval)

    p_pred = sub.add_parser("predict", help="predict the field for one input function")
    p_pred.add_argument("--checkpoint", type=Path, required=True)
    _add_function_flags(p_pred)
    _add_common(p_pred)

    p_cont = sub.add_parser("export-contours", help="write (x,t,value) CSV fields")
    p_cont.add_argument("--checkpoint", type=Path, required=True)
    _add_function_flags(p_cont)
    _add_common(p_cont)

    return parser


# --- shared helpers ----------------------------------------------------------


def _resolve_out(args, command: str) -> Path:
    if args.out is not None:
        return args.out
    env = os.environ.get(OUT_DIR_ENV)
    base = Path(env) if env else Path("runs")
    return base / command


def _resolve_config(args) -> TrainConfig:
    if args.preset and args.config:
        raise ValidationError("give either --preset or --config, not both")
    if args.preset:
        config = get_preset(args.preset)
    elif args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ValidationError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}") from None
        config = TrainConfig.from_dict(data)
    else:
        raise ValidationError("a configuration is required (--preset or --config)")
    if args.seed is not None:
        config = config.with_seed(args.seed)
    return config


def _write_output(path: Path, data: bytes, force: bool) -> None:
    """Idempotent write: identical existing files are left alone, differing
    ones are refused unless --force."""
    if path.exists() and not force:
        if path.read_bytes() == data:
            return
        raise ValidationError(f"{path} exists with different contents (use --force)")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)


def _write_run_manifest(out_dir: Path, command: str, args, parameters: dict) -> None:
    blob = json.dumps(parameters, sort_keys=True).encode()
    manifest = {
        "command": command,
        "argv": list(getattr(args, "_argv", [])),
        "parameters": parameters,
        "parameters_hash": hashlib.sha256(blob).hexdigest(),
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "version": __version__,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "run.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")


def _apply_threads(threads: int | None) -> None:
    if threads is None:
        return
    if threads < 1:
        raise ValidationError(f"--threads must be >= 1, got {threads}")
    torch.set_num_threads(threads)


def _build_case(args, config: TrainConfig) -> EvalCase:
    length = args.length if args.length is not None else config.length
    diffusion = args.diffusion if args.diffusion is not None else config.diffusion
    reaction = args.reaction if args.reaction is not None else config.reaction
    if args.function == "periodic":
        if args.coefficients:
            coeffs = tuple(float(v) for v in args.coefficients.split(","))
            spec = InputFunctionSpec("periodic", length=length, coefficients=coeffs)
        elif args.function_seed is not None:
            spec = random_periodic(args.function_seed, length=length)
        else:
            raise ValidationError("periodic needs --coefficients or --function-seed")
    else:
        if args.coefficients:
            raise ValidationError("--coefficients only applies to periodic functions")
        spec = InputFunctionSpec(args.function, length=length)
    return EvalCase(spec=spec, params=PdeParams(diffusion=diffusion, reaction=reaction))


def _case_descriptor(case: EvalCase) -> dict:
    return {
        "kind": case.spec.kind,
        "length": case.spec.length,
        "coefficients": list(case.spec.coefficients) if case.spec.coefficients else None,
        "diffusion": case.params.diffusion,
        "reaction": case.params.reaction,
    }


# --- subcommands --------------------------------------------------------------


def _cmd_generate(args) -> int:
    config = _resolve_config(args)
    if args.scenario is not None and args.scenario != config.scenario.value:
        raise ValidationError(
            f"--scenario {args.scenario} does not match config scenario {config.scenario.value}"
        )
    out = _resolve_out(args, "generate")
    _write_run_manifest(out, "generate", args, {"config": config.to_dict()})
    records = build_dataset(config, max_workers=args.threads or 1)
    width = max(4, len(str(len(records) - 1)))
    paths = [f"records/record_{r.index:0{width}d}.bin" for r in records]
    for record, rel in zip(records, paths):
        _write_output(out / rel, record_to_bytes(record), args.force)
    manifest = dataset_manifest(config, paths)
    _write_output(
        out / "manifest.json",
        (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode(),
        args.force,
    )
    print(f"wrote {len(records)} records to {out}")
    return EXIT_OK


def _check_dataset_compat(config: TrainConfig, data_config: TrainConfig) -> None:
    pinned = (
        "scenario",
        "n_fun",
        "n_data",
        "diffusion",
        "reaction",
        "length",
        "d_values",
        "k_values",
        "lengths",
        "seed",
    )
    for name in pinned:
        if getattr(config, name) != getattr(data_config, name):
            raise ValidationError(
                f"config field {name!r} differs from the dataset's "
                f"({getattr(config, name)!r} vs {getattr(data_config, name)!r})"
            )


def _cmd_train(args) -> int:
    data_config, records = load_dataset(args.dataset)
    if args.preset or args.config:
        config = _resolve_config(args)
        _check_dataset_compat(config, data_config)
    else:
        config = data_config if args.seed is None else data_config.with_seed(args.seed)
    out = _resolve_out(args, "train")
    _write_run_manifest(
        out,
        "train",
        args,
        {"config": config.to_dict(), "dataset": str(args.dataset)},
    )

    progress = None
    if not args.quiet:
        steps_per_epoch = len(records)

        def progress(epoch, batch, entry):
            if entry.step % steps_per_epoch == 0:
                print(
                    f"epoch {epoch:5d}  total {entry.total_loss:.3e}  "
                    f"data {entry.data_loss:.3e}  equation {entry.equation_loss:.3e}",
                    flush=True,
                )

    if args.resume:
        result = resume(
            args.resume,
            records,
            config,
            checkpoint_every=args.checkpoint_every,
            checkpoint_dir=out,
            progress=progress,
        )
    else:
        model = new_model(config.scenario, config.seed)
        result = train(
            model,
            records,
            config,
            checkpoint_every=args.checkpoint_every,
            checkpoint_dir=out,
            progress=progress,
        )
    from .training import checkpoint_to_json

    _write_output(
        out / "checkpoint.json",
        checkpoint_to_json(
            result.model, config, result.adam_state, result.epochs_completed
        ).encode(),
        args.force,
    )
    _write_output(out / "trainlog.csv", result.log.to_csv_text().encode(), args.force)
    print(f"trained {result.epochs_completed} epochs; wrote {out / 'checkpoint.json'}")
    return EXIT_OK


def _test_cases(args, config: TrainConfig) -> list[EvalCase]:
    length = args.length if args.length is not None else config.length
    diffusion = args.diffusion if args.diffusion is not None else config.diffusion
    reaction = args.reaction if args.reaction is not None else config.reaction
    params = PdeParams(diffusion=diffusion, reaction=reaction)
    cases = []
    for i in range(args.n_test):
        seed = child_seed(args.test_seed, TAG_TEST_FUNCTION, i)
        cases.append(EvalCase(spec=random_periodic(seed, length=length), params=params))
    return cases


def _cmd_evaluate(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    config = ckpt.config
    out = _resolve_out(args, "evaluate")
    _write_run_manifest(
        out,
        "evaluate",
        args,
        {
            "checkpoint": str(args.checkpoint),
            "config": config.to_dict(),
            "dataset": str(args.dataset) if args.dataset else None,
            "n_test": args.n_test,
            "test_seed": args.test_seed,
        },
    )
    if args.dataset:
        _, records = load_dataset(args.dataset)
        cases = [EvalCase.from_record(r) for r in records]
    else:
        cases = _test_cases(args, config)
    report = error_distribution(ckpt.model, cases, with_hidden_field=args.hidden_field)
    doc = {
        "scenario": config.scenario.value,
        "checkpoint": str(args.checkpoint),
        "cases": [_case_descriptor(c) for c in cases],
        "report": report.to_dict(),
    }
    _write_output(out / "report.json", (json.dumps(doc, sort_keys=True, indent=1) + "\n").encode(), args.force)

    if args.sweep_k:
        if config.scenario is not Scenario.PARAM_GEN:
            raise ValidationError("--sweep-k requires a paramgen checkpoint")
        k_values = [float(v) for v in args.sweep_k.split(",")]
        if args.sweep_d:
            lo, hi, n = args.sweep_d.split(":")
            d_values = np.linspace(float(lo), float(hi), int(n))
        else:
            from .evaluation import default_sweep_d_values

            d_values = default_sweep_d_values()
        specs = [
            random_periodic(child_seed(args.test_seed, TAG_TEST_FUNCTION, 1000 + i))
            for i in range(args.sweep_functions)
        ]
        table = parameter_sweep(
            ckpt.model,
            d_values,
            k_values,
            specs,
            trained_d_range=(min(config.d_values), max(config.d_values)),
            trained_k_range=(min(config.k_values), max(config.k_values)),
        )
        _write_output(out / "sweep.csv", table.to_csv_text().encode(), args.force)

    hidden = f", hidden-field {report.hidden_field_error:.3e}" if args.hidden_field else ""
    print(f"mean error {report.mean:.3e} (std {report.std:.3e}) over {len(cases)} functions{hidden}")
    return EXIT_OK


def _cmd_predict(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    case = _build_case(args, ckpt.config)
    out = _resolve_out(args, "predict")
    _write_run_manifest(
        out,
        "predict",
        args,
        {"checkpoint": str(args.checkpoint), "case": _case_descriptor(case)},
    )
    field = predict_field(ckpt.model, case)
    export_contours(field, out / "prediction.csv")
    print(f"wrote {field.grid.nx}x{field.grid.nt} field to {out / 'prediction.csv'}")
    return EXIT_OK


def _cmd_export_contours(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    case = _build_case(args, ckpt.config)
    out = _resolve_out(args, "export-contours")
    _write_run_manifest(
        out,
        "export-contours",
        args,
        {"checkpoint": str(args.checkpoint), "case": _case_descriptor(case)},
    )
    reference = ftcs_solve(case.params, case.spec)
    predicted, error = evaluate_on_function(ckpt.model, case)
    comparison = hidden_field_comparison(ckpt.model, case)
    export_contours(reference, out / "state_reference.csv")
    export_contours(predicted, out / "state_predicted.csv")
    export_contours(comparison.true_field, out / "hidden_true.csv")
    export_contours(comparison.learned_field, out / "hidden_learned.csv")
    print(f"state error {error:.3e}, hidden-field error {comparison.error:.3e}; wrote 4 fields to {out}")
    return EXIT_OK


_COMMANDS = {
    "generate": _cmd_generate,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "predict": _cmd_predict,
    "export-contours": _cmd_export_contours,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    args._argv = list(argv) if argv is not None else sys.argv[1:]
    try:
        _apply_threads(args.threads)
        return _COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"hpmgen: validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OracleError, TrainingError, OSError) as exc:
        print(f"hpmgen: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
