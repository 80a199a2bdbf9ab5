"""Command-line entry point.

Exit codes: 0 success, 1 validation failure (bad config, digest mismatch,
quality gate), 2 runtime failure.
"""

from __future__ import annotations

import sys
import traceback
from pathlib import Path

import click

from ..codec import CheckpointMismatchError, TrainingDivergedError
from ..dataset_io import DatasetFormatError
from . import pipeline
from .config import ConfigError, list_presets, load_experiment, load_preset
from .store import ArtifactError, ArtifactStore

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

_VALIDATION_ERRORS = (
    ConfigError,
    ArtifactError,
    CheckpointMismatchError,
    DatasetFormatError,
    pipeline.GateFailure,
    ValueError,
)


def _load(config_path: str, seed: int | None) -> "ExperimentConfig":
    overrides = {}
    if seed is not None:
        overrides = {"seeds": {"split": seed, "train": seed, "eval": seed}}
    path = Path(config_path)
    if path.exists():
        return load_experiment(path, overrides)
    return load_preset(config_path, overrides)  # fall back to packaged presets


def _run(stage, config_path: str, seed: int | None, out: str | None, force: bool) -> int:
    try:
        config = _load(config_path, seed)
        store = ArtifactStore(out)
        artifact = stage(config, store, force)
        click.echo(str(artifact))
        return EXIT_OK
    except _VALIDATION_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_VALIDATION
    except TrainingDivergedError as exc:
        click.echo(f"training diverged: {exc}", err=True)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        traceback.print_exc()
        click.echo(f"runtime failure: {exc}", err=True)
        return EXIT_RUNTIME


def _common(fn):
    fn = click.option("--force", is_flag=True, help="rebuild even if the artifact exists")(fn)
    fn = click.option("--out", default=None, help="artifact root (default: $OTIB_ARTIFACT_ROOT or ./artifacts)")(fn)
    fn = click.option("--seed", type=int, default=None, help="override split/train/eval seeds")(fn)
    fn = click.option("--config", required=True, help="path to a YAML config, or a packaged preset name")(fn)
    return fn


@click.group()
def main() -> None:
    """Benchmark data generation, training, evaluation, and reporting."""


@main.command("gen-data")
@_common
def gen_data(config, seed, out, force):
    """Build the split and materialize train/eval datasets."""
    sys.exit(_run(pipeline.cmd_gen_data, config, seed, out, force))


@main.command("pretrain")
@_common
def pretrain(config, seed, out, force):
    """Pretrain the state codec and enforce its reconstruction gate."""
    sys.exit(_run(pipeline.cmd_pretrain, config, seed, out, force))


@main.command("train")
@_common
def train(config, seed, out, force):
    """Train the configured method against the frozen codec."""
    sys.exit(_run(pipeline.cmd_train, config, seed, out, force))


@main.command("eval")
@_common
def eval_cmd(config, seed, out, force):
    """Greedy evaluation plus alignment, primitiveness, and length metrics."""
    sys.exit(_run(pipeline.cmd_eval, config, seed, out, force))


@main.command("scale")
@_common
@click.option("--budgets", default=None, help="comma-separated budget override, e.g. 1,4,16,64")
@click.option("--temperatures", default=None, help="comma-separated temperature override")
def scale(config, seed, out, force, budgets, temperatures):
    """Sampling-budget sweeps with majority voting (theory model only)."""

    def stage(cfg, store, frc):
        if budgets or temperatures:
            if cfg.scale is None:
                raise ConfigError("config has no scale section to override")
            if budgets:
                cfg.scale.budgets = [int(b) for b in budgets.split(",")]
            if temperatures:
                cfg.scale.temperatures = [float(t) for t in temperatures.split(",")]
        return pipeline.cmd_scale(cfg, store, frc)

    sys.exit(_run(stage, config, seed, out, force))


@main.command("report")
@click.option("--out", default=None, help="artifact root to aggregate")
@click.option("--report-dir", default=None, help="directory for tables and figures")
@click.option("--evals", default=None, help="comma-separated eval digests (default: all)")
def report(out, report_dir, evals):
    """Merge completed evaluations into tables and figures."""
    try:
        store = ArtifactStore(out)
        target = Path(report_dir) if report_dir else store.root / "reports" / "latest"
        digests = evals.split(",") if evals else None
        pipeline.cmd_report(store, target, digests)
        click.echo(str(target))
        sys.exit(EXIT_OK)
    except _VALIDATION_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    except Exception as exc:  # noqa: BLE001
        traceback.print_exc()
        click.echo(f"runtime failure: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)


@main.command("presets")
def presets() -> None:
    """List packaged replication and scaled presets."""
    for name in list_presets():
        click.echo(name)


if __name__ == "__main__":
    main()
