"""
ablate: the component ablation over several seeds.
"""

import logging
from pathlib import Path

import click

from app.commands.common import data_dir_options, emit, json_option, resolve_manifests
from app.core.config import load_training_config, resolve_output_dir
from app.repositories.reports import ReportRepository
from app.services.ablation import ABLATION_SUITES, ablate
from app.services.training import load_domain_data

logger = logging.getLogger(__name__)


@click.command("ablate")
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None,
              help="JSON TrainingConfig shared by every variant; flags override it.")
@data_dir_options
@click.option("--out-dir", type=click.Path(path_type=Path), default=None,
              help="Where ablation.csv/ablation.json go (default: $UDA_OUTPUT_DIR, then ./runs).")
@click.option("--seeds", type=click.IntRange(min=1), default=3, show_default=True,
              help="Run seeds 0..N-1 for every variant.")
@click.option("--steps", "K", type=click.IntRange(min=1), default=None, help="Outer steps K  [default: 3]")
@click.option("--iters", "U", type=click.IntRange(min=1), default=None, help="SGD iterations per step U  [default: 2000]")
@click.option("--threads", type=click.IntRange(min=1), default=None, help="Worker threads  [default: 1]")
@click.option("--suite", "suites", type=click.Choice(sorted(ABLATION_SUITES)), multiple=True,
              help="Variant suite to run; repeatable  [default: components]")
@json_option
def ablate_command(config_path, data_dir, source_manifest, target_manifest, eval_manifest, out_dir, seeds, K, U,
                   threads, suites, as_json):
    """
    Source-only, GPA-only, GPA+TCR, GPA+CTL, full, and CTL+TCR over N seeds.

    --suite schemes compares the alignment schemes on the coarse stage;
    --suite pseudo_labels compares the triplet loss with and without target
    pseudo labels.
    """
    config = load_training_config(config_path, {"K": K, "U": U, "threads": threads})
    source, target, evaluation = resolve_manifests(
        data_dir, source_manifest, target_manifest, eval_manifest, need_eval=True
    )
    out_dir = resolve_output_dir(out_dir)
    data = load_domain_data(source, target, evaluation)

    variants = [v for name in (suites or ("components",)) for v in ABLATION_SUITES[name]]
    table = ablate(config, data, list(range(seeds)), output_dir=out_dir, variants=variants)
    emit(
        {
            "rows": [r.model_dump(mode="json") for r in table.rows],
            "mean_miou": table.mean_by_variant(),
            "csv": str(out_dir / "ablation.csv"),
        },
        as_json,
        ReportRepository().ablation_csv(table).rstrip("\n"),
    )
