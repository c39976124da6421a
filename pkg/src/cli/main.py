"""Command-line entry point: ``gen``, ``train``, ``sweep`` and ``verify``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from src import __version__
from src.cli.commands import SWEEP_KINDS, CommandOutcome, cmd_gen, cmd_sweep, cmd_train, cmd_verify
from src.cli.settings import RunConfig, WorkbenchConfig, load_workbench_config
from src.config import DISTANCE_PRESETS, ConfigError, default_output_dir, ensure_output_dir
from src.dataset.storage import DatasetFormatError
from src.dataset.windows import DatasetSizeError
from src.harness.models import ModelKind, SpecError
from src.harness.results import RunManifest, read_manifest, write_manifest
from src.harness.training import DivergenceError

LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="INI config file (default: configs/default.ini).")
    parser.add_argument(
        "--output-dir",
        type=Path,
        default=None,
        help="Directory for artifacts and the manifest (default: $ROF_OUTPUT_DIR, then [output] directory).",
    )
    parser.add_argument("--seed", type=int, default=None, help="Global seed (default: [output] seed).")
    parser.add_argument("--log-level", default="INFO", help="Logging level (default: INFO).")
    parser.add_argument("--log-file", type=Path, default=None, help="Also write logs to this file.")
    parser.add_argument("--no-progress", action="store_true", help="Disable progress bars.")


def _add_channel(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--distance", choices=DISTANCE_PRESETS, default=None, help="Channel preset.")
    parser.add_argument("--symbols", type=int, default=None, help="Symbols per (distance, power) cell.")
    parser.add_argument("--eval-symbols", type=int, default=None, help="Symbols per evaluation set.")


def _add_training(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--max-iterations", type=int, default=None)
    parser.add_argument("--batch-size", type=int, default=None)
    parser.add_argument("--lr", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rof-workbench", description="Neural symbol decision on a simulated radio-over-fiber link."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="Generate windowed dataset files per distance and power.")
    _add_common(gen)
    _add_channel(gen)

    train = sub.add_parser("train", help="Train one model on stored dataset files.")
    _add_common(train)
    _add_training(train)
    train.add_argument(
        "--model", choices=[kind.value for kind in ModelKind], default=ModelKind.CNN.value, help="Model preset."
    )
    train.add_argument(
        "--dataset", action="append", default=[], help="Dataset file or directory of .rwds files (repeatable)."
    )

    sweep = sub.add_parser("sweep", help="Run an experiment sweep and emit its CSVs.")
    _add_common(sweep)
    _add_channel(sweep)
    _add_training(sweep)
    sweep.add_argument("kind", nargs="?", choices=SWEEP_KINDS, help="Sweep to run.")
    sweep.add_argument("--models", default=None, help="Comma-separated model presets (default: [sweep] models).")
    sweep.add_argument("--workers", type=int, default=None, help="Concurrent sweep cells.")
    sweep.add_argument("--from-manifest", type=Path, default=None, help="Replay the configuration of a manifest.")

    verify = sub.add_parser("verify", help="Run the gradient, kernel and channel property suite.")
    _add_common(verify)
    return parser


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    return build_parser().parse_args(argv)


def configure_logging(level: str = "INFO", log_file: Optional[Path] = None) -> None:
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if log_file is not None:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file, mode="w", encoding="utf-8"))
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(message)s",
        handlers=handlers,
        force=True,
    )


def _parse_models(raw: Optional[str], fallback: Sequence[str]) -> List[str]:
    names = [item.strip() for item in raw.split(",") if item.strip()] if raw else list(fallback)
    valid = {kind.value for kind in ModelKind}
    unknown = [name for name in names if name not in valid]
    if unknown or not names:
        raise ConfigError(f"unknown model preset(s): {', '.join(unknown) or '(none)'}", section="sweep")
    return names


def _override(workbench: WorkbenchConfig, args: argparse.Namespace, seed: int) -> WorkbenchConfig:
    """Apply flag values on top of the file values; flags left unset keep the file's."""

    def _pick(pairs: Dict[str, str]) -> Dict[str, object]:
        return {field: getattr(args, flag) for field, flag in pairs.items() if getattr(args, flag, None) is not None}

    dataset = _pick({"symbols_per_cell": "symbols", "eval_symbols": "eval_symbols"})
    training = _pick({"max_iterations": "max_iterations", "batch_size": "batch_size", "lr": "lr"})
    sweep = _pick({"workers": "workers"})
    try:
        return WorkbenchConfig.model_validate(
            {
                **workbench.model_dump(),
                "dataset": {**workbench.dataset.model_dump(), **dataset},
                "train": {**workbench.train.model_dump(), **training, "seed": seed},
                "sweep": {**workbench.sweep.model_dump(), **sweep},
            }
        )
    except ValueError as exc:
        raise ConfigError(f"invalid flag value: {exc}") from exc


def resolve_run_config(args: argparse.Namespace) -> RunConfig:
    if getattr(args, "from_manifest", None):
        manifest = read_manifest(args.from_manifest)
        run = RunConfig.model_validate(manifest.run_config)
        if run.command != "sweep":
            raise ConfigError(f"manifest records a {run.command!r} run; only sweeps replay")
        LOGGER.info("Replaying %s sweep from %s", run.sweep_kind, args.from_manifest)
        return run

    workbench = load_workbench_config(args.config)
    seed = args.seed if args.seed is not None else workbench.output.seed
    workbench = _override(workbench, args, seed)
    distances = [args.distance] if getattr(args, "distance", None) else []
    if args.command == "train":
        models = [args.model]
    elif args.command == "sweep":
        if args.kind is None:
            raise ConfigError("sweep needs a kind or --from-manifest")
        models = _parse_models(args.models, workbench.sweep.models)
    else:
        models = []
    options = {"dataset": ",".join(args.dataset)} if args.command == "train" else {}
    return RunConfig(
        command=args.command,
        sweep_kind=getattr(args, "kind", None),
        distances=distances,
        models=models,
        seed=seed,
        options=options,
        workbench=workbench,
    )


def resolve_output_dir(args: argparse.Namespace, run: RunConfig) -> Path:
    if args.output_dir is not None:
        return ensure_output_dir(args.output_dir)
    return ensure_output_dir(default_output_dir(run.workbench.output.directory))


def execute(run: RunConfig, output_dir: Path, *, progress: bool = False) -> CommandOutcome:
    if run.command == "gen":
        return cmd_gen(run, output_dir)
    if run.command == "train":
        return cmd_train(run, output_dir, progress=progress)
    if run.command == "sweep":
        return cmd_sweep(run, output_dir, progress=progress)
    return cmd_verify(run, output_dir)


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    configure_logging(args.log_level, args.log_file)

    try:
        run = resolve_run_config(args)
        output_dir = resolve_output_dir(args, run)
        outcome = execute(run, output_dir, progress=not args.no_progress)
    except DivergenceError as exc:
        LOGGER.error("Training diverged at iteration %s: %s", exc.iteration, exc)
        return EXIT_DIVERGED
    except (ConfigError, SpecError, DatasetFormatError, DatasetSizeError, FileNotFoundError) as exc:
        LOGGER.error("%s", exc)
        return EXIT_USAGE

    manifest = RunManifest(
        command=run.command,
        argv=argv,
        run_config=run.model_dump(mode="json"),
        seed=run.seed,
        version=__version__,
        summary=outcome.summary,
    )
    write_manifest(output_dir, manifest, outcome.artifacts)
    LOGGER.info("%s finished with exit code %s", run.command, outcome.exit_code)
    return outcome.exit_code


def run() -> None:
    raise SystemExit(main())


if __name__ == "__main__":  # pragma: no cover
    run()
