"""
gen-data: write the synthetic two-domain benchmark.
"""

import json
import logging
from pathlib import Path
from typing import Optional

import click
from pydantic import ValidationError

from app.commands.common import emit, json_option, threads_option
from app.core.config import resolve_output_dir
from app.core.exceptions import ConfigError, DataIOError
from app.middleware.logging import log_duration
from app.schemas.dataset import BenchmarkConfig
from app.services.datagen import DatasetService

logger = logging.getLogger(__name__)


def load_benchmark_config(path: Optional[Path], overrides: dict) -> BenchmarkConfig:
    data: dict = {}
    if path is not None:
        if not Path(path).is_file():
            raise DataIOError(f"Config file not found: {path}")
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise DataIOError(f"Config file {path} is not valid JSON: {e}")
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return BenchmarkConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid benchmark config: {e}")


@click.command("gen-data")
@click.option("--out-dir", type=click.Path(path_type=Path), default=None,
              help="Output directory (default: $UDA_OUTPUT_DIR, then ./runs).")
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None,
              help="JSON benchmark config; flags override it.")
@click.option("--seed", type=int, default=None, help="Master seed  [default: 0]")
@click.option("--num-source", type=click.IntRange(min=1), default=None, help="Source images  [default: 200]")
@click.option("--num-target-train", type=click.IntRange(min=1), default=None,
              help="Unlabelled target training images  [default: 100]")
@click.option("--num-target-eval", type=click.IntRange(min=1), default=None,
              help="Labelled target evaluation images  [default: 50]")
@click.option("--size", type=(int, int), default=None, help="Training image height width  [default: 32 32]")
@click.option("--eval-size", type=(int, int), default=None, help="Evaluation image height width  [default: 64 64]")
@threads_option
@click.option("--paired-layouts", is_flag=True, default=None,
              help="Reuse the source scene layouts in every split.")
@json_option
def gen_data(out_dir, config_path, seed, num_source, num_target_train, num_target_eval, size, eval_size,
             paired_layouts, threads, as_json):
    """Generate source, target-train and target-eval splits with manifests."""
    config = load_benchmark_config(config_path, {
        "seed": seed,
        "num_source": num_source,
        "num_target_train": num_target_train,
        "num_target_eval": num_target_eval,
        "image_size": size,
        "eval_image_size": eval_size,
        "paired_layouts": paired_layouts or None,
    })
    out_dir = resolve_output_dir(out_dir)
    with log_duration("gen-data", logger):
        manifests = DatasetService(out_dir, threads).generate_benchmark(config)

    emit(
        {
            "manifests": {name: str(path) for name, path in manifests.items()},
            "counts": {
                "source": config.num_source,
                "target_train": config.num_target_train,
                "target_eval": config.num_target_eval,
            },
            "seed": config.seed,
        },
        as_json,
        f"Wrote benchmark to {out_dir}",
    )
