"""
Ablation Ordering Check

Runs the component ablation on a reduced benchmark and checks the expected
ordering of seed-averaged mIoU: full above GPA+CTL and GPA+TCR, GPA+TCR
above GPA only, GPA only above source only. Exits 1 when it does not hold.
Run with: python scripts/verify_ablation.py [output_dir] [seeds] [iters]
"""

import logging
import sys
from pathlib import Path

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from app.core.config import resolve_output_dir, settings
from app.schemas.dataset import BenchmarkConfig
from app.schemas.training import TrainingConfig
from app.services.ablation import ABLATION_VARIANTS, ablate, ordering_holds
from app.services.datagen import DatasetService
from app.services.training import load_domain_data

REDUCED_BENCHMARK = BenchmarkConfig(
    num_source=60,
    num_target_train=30,
    num_target_eval=20,
    image_size=(32, 32),
    eval_image_size=(32, 32),
)


def verify_ablation(output_dir: Path, seeds: int = 3, iters: int = 400) -> bool:
    """Generate the reduced benchmark, run the ablation, and print the mean table."""
    manifests = DatasetService(output_dir / "data", settings.DEFAULT_THREADS).generate_benchmark(REDUCED_BENCHMARK)
    data = load_domain_data(manifests["source"], manifests["target_train"], manifests["target_eval"])
    config = TrainingConfig(K=3, U=iters, log_interval=iters, threads=settings.DEFAULT_THREADS)
    table = ablate(config, data, list(range(seeds)), output_dir=output_dir, variants=ABLATION_VARIANTS)

    means = table.mean_by_variant()
    for name, miou in means.items():
        print(f"   {name:<12} {miou:.4f}")
    holds = ordering_holds(means)
    print(f"{'✅' if holds else '❌'} ordering {'holds' if holds else 'does not hold'} over {seeds} seeds, U={iters}")
    return holds


if __name__ == "__main__":
    logging.basicConfig(level=settings.LOG_LEVEL, format=settings.LOG_FORMAT)
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else resolve_output_dir(None) / "ablation_check"
    seeds = int(sys.argv[2]) if len(sys.argv) > 2 else 3
    iters = int(sys.argv[3]) if len(sys.argv) > 3 else 400
    sys.exit(0 if verify_ablation(out, seeds, iters) else 1)
