"""
Command-line entry point: ``dgdata synth|train|eval|baseline|report|replicate``.

Exit codes: 0 ok, 1 checkpoint or report failure, 2 configuration error,
3 data error, 4 training divergence.
"""
import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Callable, Dict, List, Optional

from dgdata.checkpoint import load_checkpoint, save_checkpoint
from dgdata.components.base import configure_logging
from dgdata.data.loaders import load_dataset
from dgdata.data.storage import SPLIT_META, load_split, save_split
from dgdata.data.synth import synth_crossuser
from dgdata.data.windows import prepare_split
from dgdata.evaluation import (
    REFERENCE_ACCURACY,
    build_manifest,
    dump_features,
    evaluate,
    report,
    source_only_baseline,
)
from dgdata.exceptions import ConfigurationError, DataError, DGDATAError, ReportError
from dgdata.models.config import RunConfig, load_run_config
from dgdata.models.data import DatasetSplit
from dgdata.trainer import DGDATATrainer

logger = logging.getLogger("dgdata.cli")

CHECKPOINT_NAME = "model.ckpt"
BASELINE_DIR = "baseline"
FEATURES_NAME = "features.npz"


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dgdata", description="Cross-user activity recognition with DGDATA")
    parser.add_argument("--quiet", action="store_true", help="Only log warnings and errors")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name: str, help_text: str, data: bool = True) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="JSON run configuration")
        p.add_argument("--out", type=Path, required=True, help="Output directory")
        p.add_argument("--seed", type=int, help="Override the run and training seed")
        if data:
            p.add_argument("--data", type=Path, required=True,
                           help="Split directory written by 'synth', or a raw dataset directory")
            p.add_argument("--source-user", dest="source_user")
            p.add_argument("--target-user", dest="target_user")
        return p

    command("synth", "Generate a synthetic cross-user split", data=False)
    train = command("train", "Train DGDATA and save the final checkpoint")
    train.add_argument("--resume", type=Path, help="Continue from a checkpoint")
    evaluate_cmd = command("eval", "Evaluate a checkpoint on target_test")
    evaluate_cmd.add_argument("--checkpoint", type=Path, help=f"Checkpoint (default: <out>/{CHECKPOINT_NAME})")
    command("baseline", "Train and evaluate the source-only baseline")
    command("report", "Train, evaluate and write every report file including the baseline")
    command("replicate", "Run the report pipeline on a real-dataset user pair")
    return parser


def _run_config(args: argparse.Namespace) -> RunConfig:
    run = load_run_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigurationError("seed must be >= 0", details={"seed": args.seed})
        run = run.with_seed(args.seed)
    users = {k: getattr(args, k, None) for k in ("source_user", "target_user")}
    users = {k: v for k, v in users.items() if v is not None}
    if users:
        run = run.model_copy(update={"data": run.data.model_copy(update=users)})
    return run


def _raw_split(run: RunConfig, path: Path) -> DatasetSplit:
    data = run.data
    if data.source_user is None or data.target_user is None:
        raise ConfigurationError("a raw dataset needs --source-user and --target-user")
    recordings = load_dataset(path, data.schema_name, data.sample_rate_hz)
    return prepare_split(recordings, data.source_user, data.target_user, window_seconds=data.window_seconds,
                         overlap=data.overlap, val_fraction=data.val_fraction, seed=run.seed)


def _load_data(run: RunConfig, path: Path) -> DatasetSplit:
    if (path / SPLIT_META).exists():
        return load_split(path)
    return _raw_split(run, path)


def _seeds(run: RunConfig) -> Dict[str, int]:
    return {"run": run.seed, "train": run.train.seed}


def _cmd_synth(args: argparse.Namespace, run: RunConfig, quiet: bool) -> None:
    split = synth_crossuser(run.synth, run.seed)
    save_split(split, args.out)


def _cmd_train(args: argparse.Namespace, run: RunConfig, quiet: bool) -> None:
    started = time.perf_counter()
    split = _load_data(run, args.data)
    state = DGDATATrainer(run.train, logging_enabled=not quiet).fit(split, resume_from=args.resume)
    save_checkpoint(args.out / CHECKPOINT_NAME, state)
    metrics = evaluate(state.model, split.target_val) if split.target_val else None
    manifest = build_manifest("train", run.model_dump(mode="json"), split, _seeds(run),
                              time.perf_counter() - started)
    if metrics is not None:
        report(metrics, state.history, args.out, manifest)
    else:
        logger.warning("No target_val windows; skipping the validation report")


def _cmd_eval(args: argparse.Namespace, run: RunConfig, quiet: bool) -> None:
    started = time.perf_counter()
    split = _load_data(run, args.data)
    state = load_checkpoint(args.checkpoint or args.out / CHECKPOINT_NAME)
    metrics = evaluate(state.model, split.target_test)
    manifest = build_manifest("eval", run.model_dump(mode="json"), split, _seeds(run),
                              time.perf_counter() - started)
    report(metrics, state.history, args.out, manifest)


def _cmd_baseline(args: argparse.Namespace, run: RunConfig, quiet: bool) -> None:
    started = time.perf_counter()
    split = _load_data(run, args.data)
    metrics = source_only_baseline(run.train, split, logging_enabled=not quiet)
    manifest = build_manifest("baseline", run.model_dump(mode="json"), split, _seeds(run),
                              time.perf_counter() - started)
    report(metrics, None, args.out, manifest)


def _full_report(command: str, args: argparse.Namespace, run: RunConfig, split: DatasetSplit,
                 quiet: bool, reference: Optional[float] = None) -> None:
    started = time.perf_counter()
    state = DGDATATrainer(run.train, logging_enabled=not quiet).fit(split)
    save_checkpoint(args.out / CHECKPOINT_NAME, state)
    metrics = evaluate(state.model, split.target_test, reference_accuracy=reference)
    baseline = source_only_baseline(run.train, split, logging_enabled=not quiet)
    try:
        dump_features(state.model, split, args.out / FEATURES_NAME)
    except OSError as e:
        raise ReportError(f"cannot write features: {e}", details={"out_dir": str(args.out)}) from e
    manifest = build_manifest(command, run.model_dump(mode="json"), split, _seeds(run),
                              time.perf_counter() - started)
    report(metrics, state.history, args.out, manifest)
    report(baseline, None, args.out / BASELINE_DIR)
    logger.info("Target accuracy %.4f (source-only %.4f)", metrics.accuracy, baseline.accuracy)


def _cmd_report(args: argparse.Namespace, run: RunConfig, quiet: bool) -> None:
    _full_report("report", args, run, _load_data(run, args.data), quiet)


def _cmd_replicate(args: argparse.Namespace, run: RunConfig, quiet: bool) -> None:
    if not args.data.exists():
        raise DataError("replication data not found", details={"path": str(args.data)})
    split = _raw_split(run, args.data)
    _full_report("replicate", args, run, split, quiet, reference=REFERENCE_ACCURACY.get(run.data.schema_name))


COMMANDS: Dict[str, Callable[[argparse.Namespace, RunConfig, bool], None]] = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "baseline": _cmd_baseline,
    "report": _cmd_report,
    "replicate": _cmd_replicate,
}


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run one subcommand.

    Returns:
        The process exit code
    """
    args = _parser().parse_args(argv)
    configure_logging(True)
    logging.getLogger("dgdata").setLevel(logging.WARNING if args.quiet else logging.INFO)
    logger.info("Starting %s", args.command)
    try:
        run = _run_config(args)
        COMMANDS[args.command](args, run, args.quiet)
    except DGDATAError as e:
        logger.error("%s failed: %s", args.command, e)
        return e.exit_code
    except OSError as e:
        logger.error("%s failed writing output: %s", args.command, e)
        return 1
    logger.info("Finished %s; outputs in %s", args.command, args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
