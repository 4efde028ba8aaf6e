"""
train: run the adaptation pipeline and write checkpoints and step reports.
"""

import json
import logging
from pathlib import Path

import click

from app.commands.common import data_dir_options, emit, json_option, resolve_manifests
from app.core.config import load_training_config, resolve_output_dir
from app.schemas.training import TrainingConfig
from app.services.training import checkpoint_name, load_domain_data, run_pipeline

logger = logging.getLogger(__name__)


@click.command("train")
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None,
              help="JSON TrainingConfig; flags override it.")
@click.option("--print-schema", is_flag=True, default=False, help="Print the TrainingConfig JSON schema and exit.")
@data_dir_options
@click.option("--out-dir", type=click.Path(path_type=Path), default=None,
              help="Checkpoint/report directory (default: $UDA_OUTPUT_DIR, then ./runs).")
@click.option("--seed", type=int, default=None, help="Master seed  [default: 0]")
@click.option("--steps", "K", type=click.IntRange(min=1), default=None,
              help="Outer steps K, stage 0 included  [default: 3]")
@click.option("--iters", "U", type=click.IntRange(min=1), default=None, help="SGD iterations per step U  [default: 2000]")
@click.option("--resume", is_flag=True, default=False, help="Reuse checkpoints and reports already in --out-dir.")
@click.option("--export-pseudo", is_flag=True, default=False,
              help="Write each step's pseudo labels under <out-dir>/pseudo/.")
@click.option("--threads", type=click.IntRange(min=1), default=None, help="Worker threads  [default: 1]")
@json_option
def train(config_path, print_schema, data_dir, source_manifest, target_manifest, eval_manifest, out_dir, seed, K, U,
          resume, export_pseudo, threads, as_json):
    """Train T_0 by coarse alignment, then K-1 self-training steps."""
    if print_schema:
        click.echo(json.dumps(TrainingConfig.model_json_schema(), indent=2))
        return

    config = load_training_config(config_path, {"seed": seed, "K": K, "U": U, "threads": threads})
    source, target, evaluation = resolve_manifests(data_dir, source_manifest, target_manifest, eval_manifest)
    out_dir = resolve_output_dir(out_dir)
    data = load_domain_data(source, target, evaluation)

    _, reports = run_pipeline(config, data, out_dir, resume=resume, export_pseudo=export_pseudo)
    final = reports[-1]
    payload = {
        "output_dir": str(out_dir),
        "checkpoint": str(out_dir / checkpoint_name(final.step)),
        "config": config.model_dump(mode="json"),
        "reports": [r.model_dump(mode="json") for r in reports],
    }
    human = f"Trained {config.K} step(s); checkpoint {payload['checkpoint']}"
    if final.eval is not None:
        human += f"; target mIoU {final.eval.miou:.4f}"
    emit(payload, as_json, human)
