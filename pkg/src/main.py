#!/usr/bin/env python3
"""
Privileged time-series harness - command line entry point
Runs synthetic sweeps and CSV evaluations of LuPTS-style estimators.
"""

import json
import logging
import os
import sys
from logging.handlers import RotatingFileHandler
from typing import Any, Dict, List, Optional

import click
from pydantic import ValidationError

from analytics.results import ResultTable
from config.experiment import ExperimentConfig, IngestConfig
from config.presets import describe_presets, preset
from config.settings import Settings
from controllers.experiment_controller import ExperimentController
from controllers.ingest_controller import IngestController
from interfaces.dataio import TrajectorySchema
from safety.guards import ConfigError, PrivilegedTSError


def setup_logging(settings: Settings, debug: bool = False) -> logging.Logger:
    """Configure root logging from the logging settings section."""
    level = logging.DEBUG if debug or settings.debug else getattr(logging, settings.log_level.upper(), logging.INFO)
    handlers: List[logging.Handler] = []
    if settings.logging.enable_console:
        handlers.append(logging.StreamHandler(sys.stderr))
    if settings.logging.enable_file:
        os.makedirs(os.path.dirname(settings.log_file) or ".", exist_ok=True)
        handlers.append(RotatingFileHandler(
            settings.log_file,
            maxBytes=settings.logging.max_file_size,
            backupCount=settings.logging.backup_count,
        ))
    if not handlers:
        handlers.append(logging.NullHandler())

    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )
    return logging.getLogger(__name__)


def _error_payload(error: Exception) -> Dict[str, Any]:
    if isinstance(error, PrivilegedTSError):
        return error.to_dict()
    if isinstance(error, ValidationError):
        return ConfigError(f"invalid configuration: {error.errors()[0]['msg']}",
                           errors=[str(item["loc"]) for item in error.errors()]).to_dict()
    return {"error": "internal", "message": str(error), "context": {"type": type(error).__name__}}


def fail(ctx: click.Context, error: Exception) -> None:
    """Write the machine-readable error to stderr and exit 1."""
    logging.getLogger(__name__).error(f"❌ {error}")
    click.echo(json.dumps(_error_payload(error), sort_keys=True), err=True)
    ctx.exit(1)


def _summary(table: ResultTable, output: Optional[str], status: Dict[str, Any]) -> Dict[str, Any]:
    files = None
    if output:
        files = {kind: f"{output}.{kind}" for kind in ("rows.csv", "agg.csv", "config.json")}
    return {
        "records": len(table.records),
        "failed": len(table.failures()),
        "files": files,
        "elapsed": status.get("elapsed"),
    }


def _split_list(value: str, name: str) -> List[str]:
    items = [item.strip() for item in value.split(",") if item.strip()]
    if not items:
        raise ConfigError(f"--{name} needs at least one value")
    return items


@click.group()
@click.option("--settings", "settings_path", type=click.Path(dir_okay=False), default=None,
              help="Path to config.yaml with logging/runtime settings")
@click.option("--debug", is_flag=True, help="Enable debug logging")
@click.pass_context
def cli(ctx: click.Context, settings_path: Optional[str], debug: bool) -> None:
    """Privileged time-series experiments."""
    try:
        settings = Settings(settings_path)
    except ConfigError as e:
        fail(ctx, e)
        return
    logger = setup_logging(settings, debug)
    problems = settings.validate_config()
    if problems:
        fail(ctx, ConfigError(f"invalid settings: {'; '.join(problems)}",
                              path=settings.config_path, errors=problems))
        return
    logger.debug(f"Settings: {json.dumps(settings.get_config_summary(), sort_keys=True)}")
    ctx.obj = settings


@cli.command()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="Experiment config file (JSON or YAML)")
@click.option("--preset", "preset_name", type=str, default=None, help="Named preset, see list-presets")
@click.option("--seed", type=int, default=None, help="Master seed override")
@click.option("--out", "output", type=str, default=None, help="Output path prefix")
@click.option("--replicates", type=int, default=None, help="Replicates per sweep value")
@click.option("--workers", type=int, default=None, help="Worker threads")
@click.pass_context
def run(ctx: click.Context, config_path: Optional[str], preset_name: Optional[str], seed: Optional[int],
        output: Optional[str], replicates: Optional[int], workers: Optional[int]) -> None:
    """Run a sweep from a config file or a preset."""
    settings: Settings = ctx.obj
    logger = logging.getLogger(__name__)
    try:
        if (config_path is None) == (preset_name is None):
            raise ConfigError("give exactly one of --config or --preset")
        overrides = {"master_seed": seed, "output": output, "replicates": replicates, "workers": workers}
        if preset_name is not None:
            config = preset(preset_name, **overrides)
        else:
            config = ExperimentConfig.from_file(config_path)
            changes = {key: value for key, value in overrides.items() if value is not None}
            if changes:
                config = ExperimentConfig.from_dict({**config.to_dict(), **changes})
        if config.output is None:
            config = config.model_copy(
                update={"output": os.path.join(settings.runtime.output_directory, config.name)})

        logger.info(f"🧪 Experiment {config.name} ({config.fingerprint()})")
        controller = ExperimentController(config, settings)
        table = controller.run()
    except (PrivilegedTSError, ValidationError) as e:
        fail(ctx, e)
        return
    click.echo(json.dumps(_summary(table, config.output, controller.get_status()), sort_keys=True))


@cli.command()
@click.option("--csv", "csv_path", type=str, required=True, help="Trajectory CSV file")
@click.option("--schema", "schema_path", type=str, required=True, help="Schema JSON (T, d, outcome_column, ...)")
@click.option("--estimators", type=str, default="baseline,lupts", help="Comma-separated estimator labels")
@click.option("--train-sizes", type=str, required=True, help="Comma-separated training sizes")
@click.option("--replicates", type=int, default=20, help="Subsamples per training size")
@click.option("--seed", type=int, default=None, help="Master seed")
@click.option("--test-fraction", type=float, default=None, help="Held-out share of rows")
@click.option("--out", "output", type=str, default=None, help="Output path prefix")
@click.pass_context
def ingest(ctx: click.Context, csv_path: str, schema_path: str, estimators: str, train_sizes: str,
           replicates: int, seed: Optional[int], test_fraction: Optional[float], output: Optional[str]) -> None:
    """Evaluate estimators on an external trajectory CSV."""
    settings: Settings = ctx.obj
    try:
        try:
            sizes = [int(item) for item in _split_list(train_sizes, "train-sizes")]
        except ValueError as e:
            raise ConfigError(f"--train-sizes must be integers: {train_sizes}") from e
        config = IngestConfig.from_dict({
            "csv_path": csv_path,
            "schema": TrajectorySchema.from_file(schema_path).model_dump(),
            "estimators": _split_list(estimators, "estimators"),
            "train_sizes": sizes,
            "replicates": replicates,
            "master_seed": settings.runtime.default_seed if seed is None else seed,
            "test_fraction": settings.runtime.test_fraction if test_fraction is None else test_fraction,
            "output": output or os.path.join(settings.runtime.output_directory, "ingest"),
        })
        controller = IngestController(config)
        table = controller.run()
    except (PrivilegedTSError, ValidationError) as e:
        fail(ctx, e)
        return
    status = controller.get_status()
    summary = _summary(table, config.output, status)
    summary["rows"] = {
        "loaded": status["rows_loaded"], "train_pool": status["train_pool"], "test": status["test_rows"],
    }
    summary["files"]["schema.json"] = f"{config.output}.schema.json"
    click.echo(json.dumps(summary, sort_keys=True))


@cli.command("list-presets")
def list_presets() -> None:
    """List the named experiment presets."""
    for name, description in describe_presets().items():
        click.echo(f"{name}\t{description or ''}")


def main():
    """Main entry point."""
    cli(obj=None)


if __name__ == "__main__":
    main()
