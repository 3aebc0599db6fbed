"""
Command-line entry point: synth | train | eval | locate | gradcheck.

Exit codes: 0 success, 1 failed check or aborted training, 2 usage,
configuration or data error.
"""
from pathlib import Path
from typing import Any, Callable, Dict, Optional

import click
from pydantic import ValidationError

from .core.config import settings
from .core.exceptions import ConfigurationError, GraphError, HARError, NonFiniteError, TrainingError
from .core.logging import bind_run_context, get_logger
from .models.config_models import RunConfig
from .services import pipeline
from .utils.io import read_config_file
from .utils.validators import parse_indices

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2

# flag name -> dotted RunConfig path
FLAG_PATHS = {
    "dataset": "dataset.kind",
    "data_dir": "dataset.data_dir",
    "split": "dataset.split",
    "subset": "dataset.subset",
    "num_sequences": "dataset.synth.num_sequences",
    "variant": "model.variant",
    "compat": "model.compat_mode",
    "norm": "model.norm_mode",
    "epochs": "train.epochs",
    "batch": "train.batch_size",
    "lr": "train.learning_rate",
    "seed": "train.seed",
    "w": "density_window",
    "out": "output_dir",
    "checkpoint": "checkpoint",
    "limit": "locate_limit",
    "indices": "locate_indices",
}


def _set_path(data: Dict[str, Any], dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = data
    for key in keys[:-1]:
        child = node.get(key)
        if not isinstance(child, dict):
            child = {}
            node[key] = child
        node = child
    node[keys[-1]] = value


def build_run_config(command: str, flags: Dict[str, Any], config_path: Optional[Path] = None) -> RunConfig:
    """Flags override the config file, which overrides settings defaults."""
    data: Dict[str, Any] = read_config_file(config_path) if config_path else {}
    data.pop("command", None)
    for name, value in flags.items():
        if value is None or name not in FLAG_PATHS:
            continue
        if name == "indices":
            value = parse_indices(value)
        _set_path(data, FLAG_PATHS[name], value)
    try:
        return RunConfig.model_validate({"command": command, **data})
    except ValidationError as e:
        details = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()
        )
        raise ConfigurationError(f"invalid configuration: {details}", "invalid_config")


def exit_code_for(exc: Exception) -> int:
    if isinstance(exc, (TrainingError, NonFiniteError, GraphError)):
        return EXIT_CHECK_FAILED
    return EXIT_USAGE


def _fail(exc: Exception, message: str) -> None:
    code = exit_code_for(exc)
    logger.error("Command failed", error_type=type(exc).__name__, error=message, exit_code=code)
    click.echo(f"error: {message}", err=True)
    click.get_current_context().exit(code)


def _execute(command: str, flags: Dict[str, Any], runner: Callable[[RunConfig], Any]) -> Any:
    run_id = bind_run_context(command)
    logger.info("Command started", app=settings.APP_NAME, version=settings.APP_VERSION, run_id=run_id)
    config_path = flags.pop("config", None)
    try:
        run = build_run_config(command, flags, config_path)
        return runner(run)
    except HARError as e:
        _fail(e, e.message)
    except OSError as e:
        _fail(e, f"I/O failure: {e}")


# ------------------------------------------------------------------ options
def _options(*decorators):
    def apply(f):
        for decorator in reversed(decorators):
            f = decorator(f)
        return f

    return apply


config_option = click.option(
    "--config", type=click.Path(dir_okay=False, path_type=Path), help="JSON or YAML run configuration."
)
out_option = click.option("--out", type=click.Path(file_okay=False, path_type=Path), help="Output directory.")
seed_option = click.option("--seed", type=int, help="Master seed (data split, init, shuffling).")

dataset_options = _options(
    click.option("--dataset", type=click.Choice(["ucihar", "synthetic"]), help="Dataset kind."),
    click.option("--data-dir", type=click.Path(file_okay=False, path_type=Path), help="Dataset root directory."),
    click.option("--subset", type=int, help="Keep only the first N windows of each split."),
)
model_options = _options(
    click.option("--variant", type=click.Choice(["none", "att", "att2", "att3"]), help="Attention levels."),
    click.option("--compat", type=click.Choice(["dot", "pc"]), help="Compatibility function."),
    click.option("--norm", type=click.Choice(["sm", "softmax", "tanh"]), help="Score normalization."),
)
train_options = _options(
    click.option("--epochs", type=int, help="Training epochs."),
    click.option("--batch", type=int, help="Mini-batch size."),
    click.option("--lr", type=float, help="Adam learning rate."),
)


@click.group()
@click.version_option(settings.APP_VERSION, prog_name=settings.APP_NAME)
def cli():
    """Attention-based 1D CNN for weakly labeled activity recognition."""


@cli.command()
@out_option
@seed_option
@click.option("--num-sequences", type=int, help="Number of windows to generate.")
@config_option
def synth(**flags):
    """Generate the synthetic weakly labeled dataset."""
    summary = _execute("synth", flags, pipeline.run_synthesis)
    click.echo(
        f"synthesized {summary.num_sequences} windows of {summary.channels}x{summary.seq_len} "
        f"(seed {summary.seed}): {summary.class_counts}"
    )


@cli.command()
@dataset_options
@model_options
@train_options
@seed_option
@out_option
@config_option
def train(**flags):
    """Train the fundamental CNN or an attention variant."""
    document = _execute("train", flags, pipeline.run_training)
    best = f", best epoch {document.best_epoch}" if document.best_epoch else ""
    click.echo(
        f"{document.model}: test accuracy {document.test_accuracy:.4f} after "
        f"{document.epochs_completed} epochs{best}"
    )


@cli.command(name="eval")
@click.option("--checkpoint", type=click.Path(dir_okay=False, path_type=Path), help="Checkpoint JSON.")
@dataset_options
@click.option("--split", type=click.Choice(["train", "val", "test"]), help="Split to evaluate.")
@out_option
@config_option
def eval_command(**flags):
    """Evaluate a checkpoint: accuracy, confusion matrix, throughput."""
    document = _execute("eval", flags, pipeline.run_evaluation)
    report = document.report
    click.echo(
        f"{document.model} on {document.split}: accuracy {report.accuracy:.4f}, "
        f"{report.throughput_seqs_per_s:.1f} seqs/s"
    )


@cli.command()
@click.option("--checkpoint", type=click.Path(dir_okay=False, path_type=Path), help="Attention checkpoint JSON.")
@dataset_options
@click.option("--split", type=click.Choice(["train", "val", "test"]), help="Split to localize in.")
@click.option("--w", "w", type=int, help="Density window width (even).")
@click.option("--limit", type=int, help="Number of leading sequences to process.")
@click.option("--indices", type=str, help='Explicit sequence indices, e.g. "0,5,10-12".')
@out_option
@config_option
def locate(**flags):
    """Compatibility-density localization of the labeled activity."""
    report = _execute("locate", flags, pipeline.run_localization)
    summary = f"{len(report.sequences)} sequences, w={report.window_w}"
    if report.density is not None:
        summary += (
            f", hit_rate {report.density.hit_rate:.3f}, mean_best_iou {report.density.mean_best_iou:.3f}"
            f" (score curve: {report.score_curve.hit_rate:.3f} / {report.score_curve.mean_best_iou:.3f})"
        )
    click.echo(summary)


@cli.command()
@click.option("--seeds", type=click.IntRange(min=1), help="Random seeds per operation.")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), help="Write the report as JSON.")
def gradcheck(seeds, out):
    """Finite-difference check of every differentiable operation."""
    bind_run_context("gradcheck")
    try:
        report = pipeline.run_gradcheck(out=out, seeds=seeds)
    except OSError as e:
        _fail(e, f"I/O failure: {e}")

    width = max(len(r.op) for r in report.results)
    for r in report.results:
        error = "n/a" if r.max_rel_error is None else f"{r.max_rel_error:.3e}"
        status = "ok" if r.passed else "FAIL"
        click.echo(f"{r.op:<{width}}  {error:>10}  {status}")
    if not report.passed:
        click.echo(f"gradient check failed: {', '.join(report.failing_ops)}", err=True)
        click.get_current_context().exit(EXIT_CHECK_FAILED)


def main():
    cli()


if __name__ == "__main__":
    main()
