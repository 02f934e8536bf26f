import logging
import os
import sys
from pathlib import Path
from typing import Optional

import click

from app.config import get_settings
from app.exceptions.lab import ConfigError
from app.schemas.experiment import EXPERIMENTS
from app.services.experiments import EXIT_CONFIG, ExperimentServices

logger = logging.getLogger(__name__)


def _setup_logging() -> None:
    logging.basicConfig(
        level=get_settings().log_level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[logging.StreamHandler(sys.stdout)],
    )


@click.group()
def cli():
    """Numerical laboratory for the low Mach number limit of 2D compressible Euler."""


def _experiment_command(experiment: str) -> click.Command:
    @click.command(name=experiment, help=f"Run the {experiment} experiment and write its run directory.")
    @click.option("--config", "config_path", type=click.Path(path_type=Path), default=None,
                  help="key=value experiment configuration")
    @click.option("--out", "out_dir", type=click.Path(path_type=Path), default=None,
                  help="output root (default: output_dir of the config)")
    @click.option("--threads", type=click.IntRange(min=1), default=None,
                  help="FFT workers and sweep pool size (default: MACHLAB_THREADS)")
    def command(config_path: Optional[Path], out_dir: Optional[Path], threads: Optional[int]):
        if threads is not None:
            os.environ["MACHLAB_THREADS"] = str(threads)
            get_settings.cache_clear()
        _setup_logging()
        try:
            config = ExperimentServices.load_config(config_path, experiment)
        except ConfigError as e:
            logger.error(e.message)
            click.echo(e.message, err=True)
            sys.exit(EXIT_CONFIG)

        outcome = ExperimentServices.run_experiment(config, out_dir)
        for report in outcome.reports:
            click.echo(report.summary_line())
        click.echo(f"run directory: {outcome.run_dir}")
        sys.exit(outcome.exit_code)

    return command


for _name in EXPERIMENTS:
    cli.add_command(_experiment_command(_name))


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=None,
              help="output root to browse (default: MACHLAB_OUTPUT_DIR)")
def serve(host: str, port: int, out_dir: Optional[Path]):
    """Serve the read-only results API."""
    import uvicorn

    if out_dir is not None:
        os.environ["MACHLAB_OUTPUT_DIR"] = str(out_dir)
        get_settings.cache_clear()
    uvicorn.run("app.main:app", host=host, port=port)


if __name__ == "__main__":
    cli()
