"""
eval: score a checkpoint on a labelled manifest.
"""

from pathlib import Path

import click

from app.commands.common import emit, json_option
from app.models.segmodel import load_checkpoint
from app.repositories.manifest import ManifestRepository
from app.services.evaluation import evaluate


@click.command("eval")
@click.option("--checkpoint", type=click.Path(path_type=Path), required=True, help="Model checkpoint.")
@click.option("--manifest", "manifest_path", type=click.Path(path_type=Path), required=True,
              help="Labelled manifest, usually target_eval.json.")
@json_option
def eval_command(checkpoint, manifest_path, as_json):
    """Per-class IoU and mIoU of a checkpoint."""
    model = load_checkpoint(checkpoint)
    split = ManifestRepository().load_split(manifest_path)
    if split.labels is None:
        raise click.UsageError(f"{manifest_path} lists no labels to evaluate against")
    if split.manifest.num_categories != model.config.num_classes:
        raise click.UsageError(
            f"checkpoint predicts {model.config.num_classes} classes, manifest has {split.manifest.num_categories}"
        )
    result = evaluate(model.freeze(), split)
    emit(result.model_dump(mode="json"), as_json, f"mIoU {result.miou:.4f} over {result.num_images} images")
