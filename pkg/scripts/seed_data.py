"""
Benchmark Seeding Script

Generates the default synthetic two-domain benchmark for development and
testing.
Run with: python scripts/seed_data.py [output_dir] [seed]
"""

import logging
import sys
from pathlib import Path

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from app.core.config import resolve_output_dir, settings
from app.schemas.dataset import BenchmarkConfig
from app.services.datagen import DatasetService, categories_overlap, default_source_profile


def seed_benchmark(output_dir: Path, seed: int = 0) -> dict:
    """Write the default benchmark and return the manifest paths."""
    config = BenchmarkConfig(seed=seed)
    manifests = DatasetService(output_dir, settings.DEFAULT_THREADS).generate_benchmark(config)

    print(f"✅ Benchmark written to {output_dir}")
    for name, path in manifests.items():
        print(f"   {name}: {path}")
    source = default_source_profile()
    print(f"   categories 3 and 4 overlap in the source palette: {categories_overlap(source, 3, 4)}")
    return manifests


if __name__ == "__main__":
    logging.basicConfig(level=settings.LOG_LEVEL, format=settings.LOG_FORMAT)
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else resolve_output_dir(None) / "data"
    seed_benchmark(out, int(sys.argv[2]) if len(sys.argv) > 2 else 0)
